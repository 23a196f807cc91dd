"""Synthesis of scalar and vector certificates through SOS programs.

Every driver follows the same pattern: fix the certificate matrices and
S-procedure constants, allocate polynomial templates, add one Putinar
constraint per condition instance, solve, extract polynomials, then audit
the result by sampling before reporting it as a certificate.

Templates are indexed by ``(i, tag)``: ``i`` is the 1-based function index
and ``tag`` is ``None`` (plain systems), an automaton state (VCBRF over a
product) or a pair of automaton states (VCC over a product).
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .poly import Polynomial, VariableSpace
from .sdpcore import SdpSizeError, SolverOptions, Status
from .semialg import RegionUnion, SemiAlgebraicSet, block_space, box_complement, product_set, rebase
from .sosprog import AffinePolyExpr, SosProgram, TemplateId, argument_cache, s_procedure_expr
from .sysmodel import BuchiAutomaton, DynamicalSystem, LabelingPartition, \
    product_constraint_instances

log = logging.getLogger(__name__)

KINDS = ("BC", "VBC", "CC_safety", "CC_persistence", "CC_LTL", "VCBRF_persistence", "VCBRF_LTL",
         "VCC_safety", "VCC_persistence", "VCC_LTL")


class SpecError(ValueError):
    """Malformed synthesis request (matrix shape or sign, assignment, ...)."""


# ---------------------------------------------------------------------------
# problem specifications


@dataclass(frozen=True)
class SafetySpec:
    system: DynamicalSystem
    unsafe: RegionUnion


@dataclass(frozen=True)
class PersistenceSpec:
    system: DynamicalSystem
    vf: RegionUnion


@dataclass(frozen=True)
class LtlSpec:
    system: DynamicalSystem
    labeling: LabelingPartition
    automaton: BuchiAutomaton


# ---------------------------------------------------------------------------
# results


@dataclass
class GramRecord:
    """Putinar data of one solved constraint, kept for reconstruction audits."""
    label: str
    target: Polynomial
    grams: list[np.ndarray]
    principal_basis: tuple
    multiplier_bases: tuple
    multipliers: tuple


@dataclass
class VectorCertificate:
    kind: str
    k: int
    n: int
    polynomials: dict[tuple, Polynomial]
    matrices: dict[str, np.ndarray]
    eta: dict[str, float]
    gamma: tuple[float, ...] = ()
    rho: tuple[float, ...] = ()
    assignment: dict[str, int] = field(default_factory=dict)
    lam: float | None = None
    degree: int = 0
    grams: list[GramRecord] = field(default_factory=list)
    note: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown certificate kind {self.kind!r}")
        for name, M in self.matrices.items():
            M = np.asarray(M, dtype=float)
            if np.any(M < 0):
                raise SpecError(f"matrix {name} has negative entries")
            self.matrices[name] = M

    @property
    def is_pair(self) -> bool:
        return self.kind.startswith(("VCC", "CC"))

    def poly(self, i: int, tag=None) -> Polynomial:
        return self.polynomials[(i, tag)]

    @property
    def tags(self) -> list:
        seen = []
        for (_, t) in self.polynomials:
            if t not in seen:
                seen.append(t)
        return seen

    def scale(self) -> float:
        return max((p.max_abs_coef() for p in self.polynomials.values()), default=0.0)


@dataclass
class SynthesisResult:
    outcome: str                      # "Certificate" | "NotFound" | "SolverFailure" | "AuditFailed"
    kind: str
    degree: int
    k: int
    certificate: VectorCertificate | None = None
    reason: str = ""
    solver_status: str = ""
    iterations: int = 0
    solve_time: float = 0.0
    wall_time: float = 0.0
    sizes: dict = field(default_factory=dict)
    audit: Any = None
    params: dict = field(default_factory=dict)

    @property
    def found(self) -> bool:
        return self.outcome == "Certificate"


@dataclass
class SynthOptions:
    eta_lb: float = 1e-3
    boost: int = 0                    # extra multiplier degree (in units of 2)
    tol: float = 1e-8
    max_iter: int = 200
    audit: bool = True
    audit_samples: int = 10_000
    audit_seed: int = 0
    audit_rel_tol: float | None = None
    audit_disjunction: str = "assigned"
    compile_only: bool = False
    max_rows: int = 4000

    def solver(self) -> SolverOptions:
        return SolverOptions(tol=self.tol, max_iter=self.max_iter, max_rows=self.max_rows)


# ---------------------------------------------------------------------------
# helpers


def _matrix(M, k: int, name: str) -> np.ndarray:
    A = np.asarray(M, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.shape != (k, k):
        raise SpecError(f"matrix {name} must be {k}x{k}, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise SpecError(f"matrix {name} has non-finite entries")
    if np.any(A < 0):
        raise SpecError(f"matrix {name} must be entrywise nonnegative (nonnegative k x k required)")
    return A


def _consts(v, k: int, name: str) -> tuple[float, ...]:
    if v is None:
        v = 1.0
    arr = np.broadcast_to(np.asarray(v, dtype=float), (k,))
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise SpecError(f"{name} must be finite and nonnegative")
    return tuple(float(x) for x in arr)


def default_assignment(m: int, k: int) -> list[int]:
    """Piece ``j`` (1-based) goes to function ``((j - 1) mod k) + 1``."""
    return [(j % k) + 1 for j in range(m)]


def _assignment(assign: Sequence[int] | None, m: int, k: int) -> list[int]:
    if assign is None:
        return default_assignment(m, k)
    assign = [int(a) for a in assign]
    if len(assign) != m:
        raise SpecError(f"assignment lists {len(assign)} entries for {m} pieces")
    if any(not 1 <= a <= k for a in assign):
        raise SpecError(f"assignment entries must lie in 1..{k}")
    return assign


class _StateView:
    """System data re-expressed over canonical block spaces x / (x,y) / (x,y,z)."""

    def __init__(self, sys: DynamicalSystem):
        n = sys.n
        self.n = n
        self.S = block_space(n, 1)
        self.P = block_space(n, 2)
        self.R = block_space(n, 3)
        self.f = [Polynomial(self.S, dict(p.items())) for p in sys.f]
        self.X = rebase(sys.X, self.S)
        self.X0 = rebase(sys.X0, self.S)
        self.sys = sys

    def set(self, S: SemiAlgebraicSet) -> SemiAlgebraicSet:
        return rebase(S, self.S)

    def union(self, U: RegionUnion) -> list[SemiAlgebraicSet]:
        return [rebase(p, self.S) for p in U.pieces]

    def coords(self, space: VariableSpace, block: int) -> list[Polynomial]:
        return [Polynomial.variable(space, block * self.n + i) for i in range(self.n)]

    def f_in(self, space: VariableSpace, block: int = 0) -> list[Polynomial]:
        """Dynamics applied to variable block ``block`` of ``space``."""
        pos = list(range(block * self.n, (block + 1) * self.n))
        return [p.embed(space, pos) for p in self.f]

    def args(self, space: VariableSpace, *blocks) -> list[Polynomial]:
        """Argument list built from block specs: an int is a coordinate block, ``("f", b)`` is f of block b."""
        out: list[Polynomial] = []
        for b in blocks:
            if isinstance(b, tuple):
                out.extend(self.f_in(space, b[1]))
            else:
                out.extend(self.coords(space, b))
        return out


class _Builder:
    """Collects templates, constraints and decision scalars for one synthesis run."""

    def __init__(self, kind: str, view: _StateView, opts: SynthOptions, name: str = ""):
        self.kind = kind
        self.view = view
        self.opts = opts
        self.prog = SosProgram(name or kind)
        self.templates: dict[tuple, TemplateId] = {}
        self.eta: dict[str, int] = {}
        self._caches: dict[tuple, Any] = {}

    def template(self, key: tuple, space: VariableSpace, degree: int) -> TemplateId:
        i, tag = key
        label = f"T{i}" if tag is None else f"T{i}[{tag if isinstance(tag, str) else ','.join(tag)}]"
        tid = self.prog.declare_template(space, degree, label)
        self.templates[key] = tid
        return tid

    def eta_var(self, label: str) -> int:
        v = self.prog.new_scalar(f"eta[{label}]", lb=self.opts.eta_lb, cost=1.0)
        self.eta[label] = v
        return v

    def call(self, key: tuple, space: VariableSpace, *blocks) -> AffinePolyExpr:
        """Template ``key`` evaluated at the argument blocks, as an expression over ``space``."""
        ck = (space.names, blocks)
        cache = self._caches.get(ck)
        if cache is None:
            cache = argument_cache(self.view.args(space, *blocks), space)
            self._caches[ck] = cache
        return self.templates[key].at(self.view.args(space, *blocks), space, cache)

    def const(self, space: VariableSpace, var: int) -> AffinePolyExpr:
        return AffinePolyExpr.scalar(space, var)

    def sos(self, expr: AffinePolyExpr, domain: SemiAlgebraicSet, label: str):
        self.prog.add_sos_on_set(expr, domain, boost=self.opts.boost, label=label)


def _lin_comb(builder: _Builder, coeffs: Sequence[float], keys: Sequence[tuple],
              space: VariableSpace, *blocks) -> AffinePolyExpr:
    out = AffinePolyExpr(space)
    for c, key in zip(coeffs, keys):
        if c != 0.0:
            out = out + builder.call(key, space, *blocks).scale(float(c))
    return out


def _finish(builder: _Builder, spec, params: dict, k: int, degree: int,
            make_cert: Callable[[np.ndarray], VectorCertificate], t0: float) -> SynthesisResult:
    opts = builder.opts
    kind = builder.kind
    prog = builder.prog
    sizes = prog.size_report()
    res = SynthesisResult("NotFound", kind, degree, k, sizes=sizes, params=params)
    if opts.compile_only:
        compiled = prog.compile()
        res.sizes = compiled.size_report()
        res.reason = "compile only"
        res.wall_time = time.perf_counter() - t0
        return res
    if sizes["equalities"] > opts.max_rows:
        res.reason = (f"skipped: {sizes['equalities']} equality rows exceed the dense-solver "
                      f"guardrail of {opts.max_rows}")
        res.solver_status = "Skipped"
        res.wall_time = time.perf_counter() - t0
        return res
    compiled = prog.compile()
    res.sizes = compiled.size_report()
    try:
        sol = compiled.solve(opts.solver())
    except SdpSizeError as exc:
        res.reason = f"skipped: {exc}"
        res.solver_status = "Skipped"
        res.wall_time = time.perf_counter() - t0
        return res
    sdp = sol.sdp_solution
    res.solver_status = sdp.status.value
    res.iterations = sdp.iterations
    res.solve_time = sdp.solve_time
    if sdp.status != Status.OPTIMAL:
        res.outcome = "SolverFailure" if sdp.status == Status.NUMERICAL_FAILURE else "NotFound"
        res.reason = f"solver returned {sdp.status.value}: {sdp.message}"
        res.wall_time = time.perf_counter() - t0
        return res
    cert = make_cert(sol.values)
    cert.grams = [GramRecord(c.label, sol.constraint_polynomial(c.id), sol.grams(c.id),
                             c.principal_basis, c.multiplier_bases, c.multipliers)
                  for c in prog.constraints]
    res.certificate = cert
    if opts.audit:
        from .audit import AuditOptions, check_certificate
        rep = check_certificate(cert, spec, AuditOptions(samples=opts.audit_samples,
                                                         seed=opts.audit_seed,
                                                         rel_tol=opts.audit_rel_tol,
                                                         disjunction=opts.audit_disjunction))
        res.audit = rep
        if rep.verdict != "Pass":
            # never reported as a certificate; kept for inspection
            res.outcome = "AuditFailed"
            res.reason = f"solver solution failed self-audit: {rep.summary()}"
            res.wall_time = time.perf_counter() - t0
            return res
    res.outcome = "Certificate"
    res.wall_time = time.perf_counter() - t0
    return res


def _extract(builder: _Builder, values: np.ndarray) -> dict[tuple, Polynomial]:
    return {key: tid.polynomial(values) for key, tid in builder.templates.items()}


def _eta_values(builder: _Builder, values: np.ndarray) -> dict[str, float]:
    return {lab: float(values[v]) for lab, v in builder.eta.items()}


# ---------------------------------------------------------------------------
# VCC: safety


def build_vcc_safety(spec: SafetySpec, A, degree: int, opts: SynthOptions,
                     assignment: Sequence[int] | None = None, kind: str = "VCC_safety"):
    v = _StateView(spec.system)
    A = np.asarray(A, dtype=float)
    k = A.shape[0] if A.ndim == 2 else 1
    A = _matrix(A, k, "A")
    pieces = v.union(spec.unsafe)
    assign = _assignment(assignment, len(pieces), k)
    b = _Builder(kind, v, opts)
    keys = [(i + 1, None) for i in range(k)]
    for key in keys:
        b.template(key, v.P, degree)
    XX = product_set(v.X, v.X, space=v.P)
    # T_i(x, f(x)) >= 0 on X
    for key in keys:
        b.sos(b.call(key, v.S, 0, ("f", 0)), v.X, f"closure[{key[0]}]")
    # T_i(x, y) - sum_j A_ij T_j(f(x), y) >= 0 on X x X
    for i, key in enumerate(keys):
        expr = b.call(key, v.P, 0, 1) - _lin_comb(b, A[i], keys, v.P, ("f", 0), 1)
        b.sos(expr, XX, f"induct[{key[0]}]")
    # -eta_j - T_{a(j)}(x0, xu) >= 0 on X0 x Xu_j
    if not pieces:
        warnings.warn("empty unsafe set: safety holds vacuously", stacklevel=3)
    for j, (piece, fi) in enumerate(zip(pieces, assign)):
        eta = b.eta_var(f"u{j + 1}")
        dom = product_set(v.X0, piece, space=v.P)
        expr = -b.const(v.P, eta) - b.call((fi, None), v.P, 0, 1)
        b.sos(expr, dom, f"exclude[{j + 1}->{fi}]")
    return b, k, A, assign


def synth_vcc_safety(spec: SafetySpec, A, degree: int, opts: SynthOptions | None = None,
                     assignment: Sequence[int] | None = None) -> SynthesisResult:
    opts = opts or SynthOptions()
    t0 = time.perf_counter()
    b, k, A, assign = build_vcc_safety(spec, A, degree, opts, assignment)

    def make(vals):
        return VectorCertificate("VCC_safety", k, b.view.n, _extract(b, vals), {"A": A},
                                 _eta_values(b, vals),
                                 assignment={f"u{j + 1}": a for j, a in enumerate(assign)},
                                 degree=degree)
    return _finish(b, spec, {"A": A.tolist(), "assignment": assign}, k, degree, make, t0)


# ---------------------------------------------------------------------------
# VCC: persistence


def build_vcc_persistence(spec: PersistenceSpec, A, degree: int, opts: SynthOptions,
                          gamma=None, rho=None, assignment: Sequence[int] | None = None,
                          kind: str = "VCC_persistence"):
    v = _StateView(spec.system)
    A = np.asarray(A, dtype=float)
    k = A.shape[0] if A.ndim == 2 else 1
    A = _matrix(A, k, "A")
    gamma = _consts(gamma, k, "gamma")
    rho = _consts(rho, k, "rho")
    pieces = v.union(spec.vf)
    assign = _assignment(assignment, len(pieces), k)
    b = _Builder(kind, v, opts)
    keys = [(i + 1, None) for i in range(k)]
    for key in keys:
        b.template(key, v.P, degree)
    XX = product_set(v.X, v.X, space=v.P)
    for key in keys:
        b.sos(b.call(key, v.S, 0, ("f", 0)), v.X, f"closure[{key[0]}]")
    for i, key in enumerate(keys):
        expr = b.call(key, v.P, 0, 1) - _lin_comb(b, A[i], keys, v.P, ("f", 0), 1)
        b.sos(expr, XX, f"induct[{key[0]}]")
    # over (x0, y, y') in X0 x VF_j x VF_j
    for j, (piece, fi) in enumerate(zip(pieces, assign)):
        eta = b.eta_var(f"vf{j + 1}")
        dom = product_set(v.X0, piece, piece, space=v.R)
        key = (fi, None)
        head = b.call(key, v.R, 0, 1) - b.const(v.R, eta) - b.call(key, v.R, 0, 2)
        ante = [(gamma[i], b.call(keys[i], v.R, 0, 1)) for i in range(k)] + \
               [(rho[i], b.call(keys[i], v.R, 1, 2)) for i in range(k)]
        b.sos(s_procedure_expr(head, ante), dom, f"decrease[{j + 1}->{fi}]")
    return b, k, A, assign, gamma, rho


def synth_vcc_persistence(spec: PersistenceSpec, A, degree: int, opts: SynthOptions | None = None,
                          gamma=None, rho=None,
                          assignment: Sequence[int] | None = None) -> SynthesisResult:
    opts = opts or SynthOptions()
    t0 = time.perf_counter()
    b, k, A, assign, gamma, rho = build_vcc_persistence(spec, A, degree, opts, gamma, rho,
                                                        assignment)

    def make(vals):
        return VectorCertificate("VCC_persistence", k, b.view.n, _extract(b, vals), {"A": A},
                                 _eta_values(b, vals), gamma, rho,
                                 {f"vf{j + 1}": a for j, a in enumerate(assign)}, degree=degree)
    return _finish(b, spec, {"A": A.tolist(), "gamma": list(gamma), "rho": list(rho),
                             "assignment": assign}, k, degree, make, t0)


# ---------------------------------------------------------------------------
# VCBRF: persistence


def build_vcbrf_persistence(spec: PersistenceSpec, A1, A2, A3, degree: int, opts: SynthOptions,
                            kind: str = "VCBRF_persistence"):
    v = _StateView(spec.system)
    A1 = np.asarray(A1, dtype=float)
    k = A1.shape[0] if A1.ndim == 2 else 1
    A1, A2, A3 = (_matrix(M, k, nm) for M, nm in ((A1, "A1"), (A2, "A2"), (A3, "A3")))
    vf = v.union(spec.vf)
    if spec.vf.is_empty:
        warnings.warn("empty finitely-visited set: the decrease family is empty", stacklevel=3)
        outside = [v.X]
    else:
        outside = list(box_complement(v.X, RegionUnion(v.S, tuple(vf)), "X\\VF").pieces)
    b = _Builder(kind, v, opts)
    keys = [(i + 1, None) for i in range(k)]
    for key in keys:
        b.template(key, v.S, degree)
    eta = b.eta_var("vf") if vf else None
    for key in keys:
        b.sos(b.call(key, v.S, 0), v.X0, f"init[{key[0]}]")
    for i, key in enumerate(keys):
        expr = b.call(key, v.S, ("f", 0)) - _lin_comb(b, A1[i], keys, v.S, 0)
        b.sos(expr, v.X, f"invariant[{key[0]}]")
    for p, piece in enumerate(outside):
        for i, key in enumerate(keys):
            expr = b.call(key, v.S, 0) - b.call(key, v.S, ("f", 0)) - _lin_comb(b, A2[i], keys, v.S, 0)
            b.sos(expr, piece, f"nonincrease[{key[0]}@out{p + 1}]")
    for p, piece in enumerate(vf):
        for i, key in enumerate(keys):
            expr = b.call(key, v.S, 0) - b.call(key, v.S, ("f", 0)) - b.const(v.S, eta) \
                - _lin_comb(b, A3[i], keys, v.S, 0)
            b.sos(expr, piece, f"decrease[{key[0]}@vf{p + 1}]")
    return b, k, (A1, A2, A3)


def synth_vcbrf_persistence(spec: PersistenceSpec, A1, A2, A3, degree: int,
                            opts: SynthOptions | None = None) -> SynthesisResult:
    opts = opts or SynthOptions()
    t0 = time.perf_counter()
    b, k, (A1, A2, A3) = build_vcbrf_persistence(spec, A1, A2, A3, degree, opts)

    def make(vals):
        return VectorCertificate("VCBRF_persistence", k, b.view.n, _extract(b, vals),
                                 {"A1": A1, "A2": A2, "A3": A3}, _eta_values(b, vals),
                                 degree=degree)
    return _finish(b, spec, {"A1": A1.tolist(), "A2": A2.tolist(), "A3": A3.tolist()},
                   k, degree, make, t0)


# ---------------------------------------------------------------------------
# LTL over the product with a Büchi automaton


def _check_ltl(spec: LtlSpec):
    aut = spec.automaton
    if not aut.initial:
        raise SpecError("automaton has no initial state")
    for a in spec.labeling.names:
        if a not in aut.alphabet:
            raise SpecError(f"labeling letter {a!r} missing from the automaton alphabet")


def build_vcbrf_ltl(spec: LtlSpec, A1, A2, A3, degree: int, opts: SynthOptions,
                    kind: str = "VCBRF_LTL"):
    _check_ltl(spec)
    v = _StateView(spec.system)
    aut, lab = spec.automaton, spec.labeling
    A1 = np.asarray(A1, dtype=float)
    k = A1.shape[0] if A1.ndim == 2 else 1
    A1, A2, A3 = (_matrix(M, k, nm) for M, nm in ((A1, "A1"), (A2, "A2"), (A3, "A3")))
    b = _Builder(kind, v, opts)
    for q in aut.states:
        for i in range(k):
            b.template((i + 1, q), v.S, degree)
    eta = b.eta_var("acc") if aut.accepting else None
    insts = product_constraint_instances(aut, lab, mode="vcbrf")

    def keys(q):
        return [(i + 1, q) for i in range(k)]

    for inst in insts:
        if inst.family == "init":
            for key in keys(inst.source):
                b.sos(b.call(key, v.S, 0), v.X0, f"init[{key[0]},{inst.source}]")
            continue
        region = [rebase(p, v.S) for p in lab.region(inst.letter).pieces]
        n, n2 = inst.source, inst.target
        for pi, piece in enumerate(region):
            for i in range(k):
                tag = f"{n}->{n2}|{inst.letter}#{pi + 1}"
                if inst.family == "step":
                    expr = b.call((i + 1, n2), v.S, ("f", 0)) - _lin_comb(b, A1[i], keys(n), v.S, 0)
                    b.sos(expr, piece, f"invariant[{i + 1},{tag}]")
                elif inst.family == "nonacc":
                    expr = b.call((i + 1, n), v.S, 0) - b.call((i + 1, n2), v.S, ("f", 0)) \
                        - _lin_comb(b, A2[i], keys(n), v.S, 0)
                    b.sos(expr, piece, f"nonincrease[{i + 1},{tag}]")
                else:
                    expr = b.call((i + 1, n), v.S, 0) - b.call((i + 1, n2), v.S, ("f", 0)) \
                        - b.const(v.S, eta) - _lin_comb(b, A3[i], keys(n), v.S, 0)
                    b.sos(expr, piece, f"decrease[{i + 1},{tag}]")
    return b, k, (A1, A2, A3), insts


def synth_vcbrf_ltl(spec: LtlSpec, A1, A2, A3, degree: int,
                    opts: SynthOptions | None = None) -> SynthesisResult:
    opts = opts or SynthOptions()
    t0 = time.perf_counter()
    b, k, (A1, A2, A3), insts = build_vcbrf_ltl(spec, A1, A2, A3, degree, opts)

    def make(vals):
        return VectorCertificate("VCBRF_LTL", k, b.view.n, _extract(b, vals),
                                 {"A1": A1, "A2": A2, "A3": A3}, _eta_values(b, vals),
                                 degree=degree)
    res = _finish(b, spec, {"A1": A1.tolist(), "A2": A2.tolist(), "A3": A3.tolist()},
                  k, degree, make, t0)
    res.sizes["instances"] = len(insts)
    return res


def build_vcc_ltl(spec: LtlSpec, A, degree: int, opts: SynthOptions, gamma=None, rho=None,
                  assignment: Mapping[str, int] | Sequence[int] | None = None,
                  kind: str = "VCC_LTL", acceptance: str = "all"):
    _check_ltl(spec)
    v = _StateView(spec.system)
    aut, lab = spec.automaton, spec.labeling
    A = np.asarray(A, dtype=float)
    k = A.shape[0] if A.ndim == 2 else 1
    A = _matrix(A, k, "A")
    gamma = _consts(gamma, k, "gamma")
    rho = _consts(rho, k, "rho")
    acc = aut.accepting_list
    if isinstance(assignment, Mapping):
        assign = {r: int(assignment[r]) for r in acc}
        if any(not 1 <= a <= k for a in assign.values()):
            raise SpecError(f"assignment entries must lie in 1..{k}")
    else:
        assign = dict(zip(acc, _assignment(assignment, len(acc), k)))
    b = _Builder(kind, v, opts)
    for n in aut.states:
        for p in aut.states:
            for i in range(k):
                b.template((i + 1, (n, p)), v.P, degree)
    etas = {r: b.eta_var(r) for r in acc}
    insts = product_constraint_instances(aut, lab, mode="vcc", acceptance=acceptance)
    XX_cache: dict[tuple, SemiAlgebraicSet] = {}
    XXX = product_set(v.X0, v.X, v.X, space=v.R)
    for inst in insts:
        if inst.family in ("pair_step", "pair_ind"):
            region = [rebase(p, v.S) for p in lab.region(inst.letter).pieces]
            n, n2 = inst.source, inst.target
            for pi, piece in enumerate(region):
                tag = f"{n}->{n2}|{inst.letter}#{pi + 1}"
                if inst.family == "pair_step":
                    for i in range(k):
                        b.sos(b.call((i + 1, (n, n2)), v.S, 0, ("f", 0)), piece,
                              f"closure[{i + 1},{tag}]")
                else:
                    p = inst.other
                    ck = (inst.letter, pi)
                    dom = XX_cache.get(ck)
                    if dom is None:
                        dom = product_set(piece, v.X, space=v.P)
                        XX_cache[ck] = dom
                    for i in range(k):
                        expr = b.call((i + 1, (n, p)), v.P, 0, 1) - _lin_comb(
                            b, A[i], [(j + 1, (n2, p)) for j in range(k)], v.P, ("f", 0), 1)
                        b.sos(expr, dom, f"induct[{i + 1},{tag},{p}]")
        else:
            q0, r, r2 = inst.other, inst.source, inst.target
            j = assign[r]
            head = b.call((j, (q0, r)), v.R, 0, 1) - b.const(v.R, etas[r]) \
                - b.call((j, (q0, r2)), v.R, 0, 2)
            ante = [(gamma[i], b.call((i + 1, (q0, r)), v.R, 0, 1)) for i in range(k)] + \
                   [(rho[i], b.call((i + 1, (r, r2)), v.R, 1, 2)) for i in range(k)]
            b.sos(s_procedure_expr(head, ante), XXX, f"decrease[{j},{q0},{r}->{r2}]")
    return b, k, A, assign, gamma, rho, insts


def synth_vcc_ltl(spec: LtlSpec, A, degree: int, opts: SynthOptions | None = None,
                  gamma=None, rho=None, assignment=None,
                  acceptance: str = "all") -> SynthesisResult:
    opts = opts or SynthOptions()
    t0 = time.perf_counter()
    b, k, A, assign, gamma, rho, insts = build_vcc_ltl(spec, A, degree, opts, gamma, rho,
                                                       assignment, acceptance=acceptance)

    def make(vals):
        return VectorCertificate("VCC_LTL", k, b.view.n, _extract(b, vals), {"A": A},
                                 _eta_values(b, vals), gamma, rho, dict(assign), degree=degree)
    res = _finish(b, spec, {"A": A.tolist(), "gamma": list(gamma), "rho": list(rho),
                            "assignment": dict(assign)}, k, degree, make, t0)
    res.sizes["instances"] = len(insts)
    return res


# ---------------------------------------------------------------------------
# scalar baselines, written directly from the scalar definitions


def build_scalar_bc(spec: SafetySpec, lam: float, degree: int, opts: SynthOptions):
    if lam < 0:
        raise SpecError("lambda must be nonnegative")
    v = _StateView(spec.system)
    b = _Builder("BC", v, opts)
    key = (1, None)
    b.template(key, v.S, degree)
    B = lambda *blocks: b.call(key, v.S, *blocks)  # noqa: E731
    b.sos(-B(0), v.X0, "init")
    for j, piece in enumerate(v.union(spec.unsafe)):
        eta = b.eta_var(f"u{j + 1}")
        b.sos(B(0) - b.const(v.S, eta), piece, f"unsafe[{j + 1}]")
    b.sos(B(0).scale(lam) - B(("f", 0)), v.X, "step")
    return b


def synth_scalar_bc(spec: SafetySpec, lam: float, degree: int,
                    opts: SynthOptions | None = None) -> SynthesisResult:
    opts = opts or SynthOptions()
    t0 = time.perf_counter()
    b = build_scalar_bc(spec, lam, degree, opts)

    def make(vals):
        return VectorCertificate("BC", 1, b.view.n, _extract(b, vals), {}, _eta_values(b, vals),
                                 lam=lam, degree=degree)
    return _finish(b, spec, {"lambda": lam}, 1, degree, make, t0)


def build_scalar_cc_safety(spec: SafetySpec, lam: float, degree: int, opts: SynthOptions):
    if lam < 0:
        raise SpecError("lambda must be nonnegative")
    v = _StateView(spec.system)
    b = _Builder("CC_safety", v, opts)
    key = (1, None)
    b.template(key, v.P, degree)
    b.sos(b.call(key, v.S, 0, ("f", 0)), v.X, "closure[1]")
    b.sos(b.call(key, v.P, 0, 1) - b.call(key, v.P, ("f", 0), 1).scale(lam),
          product_set(v.X, v.X, space=v.P), "induct[1]")
    for j, piece in enumerate(v.union(spec.unsafe)):
        eta = b.eta_var(f"u{j + 1}")
        b.sos(-b.const(v.P, eta) - b.call(key, v.P, 0, 1),
              product_set(v.X0, piece, space=v.P), f"exclude[{j + 1}->1]")
    return b


def synth_scalar_cc_safety(spec: SafetySpec, lam: float, degree: int,
                           opts: SynthOptions | None = None) -> SynthesisResult:
    opts = opts or SynthOptions()
    t0 = time.perf_counter()
    b = build_scalar_cc_safety(spec, lam, degree, opts)
    pieces = len(spec.unsafe.pieces)

    def make(vals):
        return VectorCertificate("CC_safety", 1, b.view.n, _extract(b, vals),
                                 {"A": np.array([[lam]])}, _eta_values(b, vals),
                                 assignment={f"u{j + 1}": 1 for j in range(pieces)},
                                 lam=lam, degree=degree)
    return _finish(b, spec, {"lambda": lam}, 1, degree, make, t0)


def build_scalar_cc_persistence(spec: PersistenceSpec, lam: float, degree: int,
                                opts: SynthOptions, gamma: float = 1.0, rho: float = 1.0):
    if lam < 0 or gamma < 0 or rho < 0:
        raise SpecError("lambda, gamma and rho must be nonnegative")
    v = _StateView(spec.system)
    b = _Builder("CC_persistence", v, opts)
    key = (1, None)
    b.template(key, v.P, degree)
    b.sos(b.call(key, v.S, 0, ("f", 0)), v.X, "closure[1]")
    b.sos(b.call(key, v.P, 0, 1) - b.call(key, v.P, ("f", 0), 1).scale(lam),
          product_set(v.X, v.X, space=v.P), "induct[1]")
    for j, piece in enumerate(v.union(spec.vf)):
        eta = b.eta_var(f"vf{j + 1}")
        T01 = b.call(key, v.R, 0, 1)
        T02 = b.call(key, v.R, 0, 2)
        T12 = b.call(key, v.R, 1, 2)
        expr = T01 - b.const(v.R, eta) - T02 - T01.scale(gamma) - T12.scale(rho)
        b.sos(expr, product_set(v.X0, piece, piece, space=v.R), f"decrease[{j + 1}->1]")
    return b


def synth_scalar_cc_persistence(spec: PersistenceSpec, lam: float, degree: int,
                                opts: SynthOptions | None = None, gamma: float = 1.0,
                                rho: float = 1.0) -> SynthesisResult:
    opts = opts or SynthOptions()
    t0 = time.perf_counter()
    b = build_scalar_cc_persistence(spec, lam, degree, opts, gamma, rho)
    pieces = len(spec.vf.pieces)

    def make(vals):
        return VectorCertificate("CC_persistence", 1, b.view.n, _extract(b, vals),
                                 {"A": np.array([[lam]])}, _eta_values(b, vals), (gamma,), (rho,),
                                 {f"vf{j + 1}": 1 for j in range(pieces)}, lam=lam, degree=degree)
    return _finish(b, spec, {"lambda": lam, "gamma": gamma, "rho": rho}, 1, degree, make, t0)


def build_scalar_cc_ltl(spec: LtlSpec, lam: float, degree: int, opts: SynthOptions,
                        gamma: float = 1.0, rho: float = 1.0, acceptance: str = "all"):
    _check_ltl(spec)
    if lam < 0 or gamma < 0 or rho < 0:
        raise SpecError("lambda, gamma and rho must be nonnegative")
    v = _StateView(spec.system)
    aut, lab = spec.automaton, spec.labeling
    b = _Builder("CC_LTL", v, opts)
    for n in aut.states:
        for p in aut.states:
            b.template((1, (n, p)), v.P, degree)
    etas = {r: b.eta_var(r) for r in aut.accepting_list}
    XXX = product_set(v.X0, v.X, v.X, space=v.R)
    for inst in product_constraint_instances(aut, lab, mode="vcc", acceptance=acceptance):
        if inst.family == "pair_acc":
            q0, r, r2 = inst.other, inst.source, inst.target
            T01 = b.call((1, (q0, r)), v.R, 0, 1)
            expr = T01 - b.const(v.R, etas[r]) - b.call((1, (q0, r2)), v.R, 0, 2) \
                - T01.scale(gamma) - b.call((1, (r, r2)), v.R, 1, 2).scale(rho)
            b.sos(expr, XXX, f"decrease[1,{q0},{r}->{r2}]")
            continue
        n, n2 = inst.source, inst.target
        for pi, piece in enumerate(lab.region(inst.letter).pieces):
            piece = rebase(piece, v.S)
            tag = f"{n}->{n2}|{inst.letter}#{pi + 1}"
            if inst.family == "pair_step":
                b.sos(b.call((1, (n, n2)), v.S, 0, ("f", 0)), piece, f"closure[1,{tag}]")
            else:
                p = inst.other
                expr = b.call((1, (n, p)), v.P, 0, 1) \
                    - b.call((1, (n2, p)), v.P, ("f", 0), 1).scale(lam)
                b.sos(expr, product_set(piece, v.X, space=v.P), f"induct[1,{tag},{p}]")
    return b


def synth_scalar_cc_ltl(spec: LtlSpec, lam: float, degree: int, opts: SynthOptions | None = None,
                        gamma: float = 1.0, rho: float = 1.0) -> SynthesisResult:
    opts = opts or SynthOptions()
    t0 = time.perf_counter()
    b = build_scalar_cc_ltl(spec, lam, degree, opts, gamma, rho)

    def make(vals):
        return VectorCertificate("CC_LTL", 1, b.view.n, _extract(b, vals),
                                 {"A": np.array([[lam]])}, _eta_values(b, vals), (gamma,), (rho,),
                                 {r: 1 for r in spec.automaton.accepting_list}, lam=lam,
                                 degree=degree)
    return _finish(b, spec, {"lambda": lam, "gamma": gamma, "rho": rho}, 1, degree, make, t0)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepCell:
    degree: int
    k: int
    params: dict
    result: SynthesisResult


def sweep(run: Callable[[int, int, Any], SynthesisResult], degrees: Iterable[int],
          ks: Iterable[int], candidates: Mapping[int, Sequence[Any]] | Callable[[int], Sequence[Any]],
          exhaustive: bool = False) -> list[SweepCell]:
    """Try configurations in order: degree ascending, then k, then candidates as declared.

    ``run(degree, k, candidate)`` performs one synthesis. Stops after the
    first certificate unless ``exhaustive``.
    """
    degrees = sorted(degrees)
    ks = sorted(ks)
    if not degrees or not ks:
        raise SpecError("sweep needs nonempty degree and k ranges")
    log_: list[SweepCell] = []
    for d in degrees:
        for k in ks:
            cands = candidates(k) if callable(candidates) else candidates.get(k, [])
            if not cands:
                raise SpecError(f"no matrix candidates declared for k={k}")
            for c in cands:
                res = run(d, k, c)
                log_.append(SweepCell(d, k, {"candidate": _jsonable(c)}, res))
                log.info("sweep degree=%d k=%d -> %s", d, k, res.outcome)
                if res.found and not exhaustive:
                    return log_
    return log_


def _jsonable(c):
    if isinstance(c, np.ndarray):
        return c.tolist()
    if isinstance(c, dict):
        return {k: _jsonable(v) for k, v in c.items()}
    if isinstance(c, (list, tuple)):
        return [_jsonable(v) for v in c]
    return c
