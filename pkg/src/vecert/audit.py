"""Numerical audits of certificates: sampled condition margins and Gram checks.

Conditions are evaluated directly from the certificate definitions (not from
the SOS relaxation): implications are checked on samples where the
antecedent holds, and disjunctions over function indices are evaluated either
at the assigned index (``assigned``) or as a max over all indices
(``strict``). A margin is the amount by which an inequality holds; a
negative margin is a violation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .poly import Polynomial
from .semialg import RegionUnion, SemiAlgebraicSet, box_complement, rebase, sample_set
from .sosprog import gram_residual
from .sysmodel import product_constraint_instances, simulate_many

SYNTHESIZED = "synthesized"
TRANSCRIBED = "transcribed-rounded"


class AuditError(ValueError):
    """Certificate and problem do not fit together."""


@dataclass
class AuditOptions:
    mode: str = SYNTHESIZED
    samples: int = 10_000
    seed: int = 0
    boundary_fraction: float = 0.2
    rel_tol: float | None = None      # default 1e-6 (synthesized) / 0.05 (transcribed)
    psd_tol: float = 1e-8
    residual_tol: float = 1e-6
    disjunction: str = "assigned"     # or "strict"
    max_corners: int = 4096
    probes: dict = field(default_factory=dict)   # condition family -> list of points (tuples of blocks)

    def __post_init__(self):
        if self.mode not in (SYNTHESIZED, TRANSCRIBED):
            raise ValueError(f"unknown audit mode {self.mode!r}")
        if self.disjunction not in ("assigned", "strict"):
            raise ValueError(f"unknown disjunction mode {self.disjunction!r}")

    @property
    def tol(self) -> float:
        if self.rel_tol is not None:
            return self.rel_tol
        return 1e-6 if self.mode == SYNTHESIZED else 0.05


@dataclass
class ConditionRecord:
    cid: str
    family: str
    samples: int
    active: int
    worst_margin: float
    worst_point: tuple
    scale: float
    tol: float
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -self.tol

    @property
    def exact(self) -> bool:
        return self.worst_margin >= 0.0


@dataclass
class GramBlockRecord:
    label: str
    min_eigs: list[float]
    residual: float
    psd_tol: float
    residual_tol: float

    @property
    def passed(self) -> bool:
        return min(self.min_eigs, default=0.0) >= -self.psd_tol and \
            self.residual <= self.residual_tol


@dataclass
class ProbeRecord:
    cid: str
    point: tuple
    margin: float
    active: bool


@dataclass
class AuditReport:
    kind: str
    mode: str
    conditions: list[ConditionRecord]
    grams: list[GramBlockRecord] = field(default_factory=list)
    probes: list[ProbeRecord] = field(default_factory=list)
    verdict: str = "Fail"

    @property
    def rounding_slack(self) -> list[ConditionRecord]:
        """Conditions whose worst margin is negative but within tolerance."""
        return [c for c in self.conditions if c.passed and not c.exact]

    def failures(self) -> list[ConditionRecord]:
        return [c for c in self.conditions if not c.passed]

    def worst(self) -> ConditionRecord | None:
        if not self.conditions:
            return None
        return min(self.conditions, key=lambda c: c.worst_margin / max(c.scale, 1e-300))

    def summary(self) -> str:
        bad = self.failures()
        if bad:
            c = min(bad, key=lambda r: r.worst_margin + r.tol)
            return (f"{self.verdict}: {len(bad)} condition(s) violated; worst {c.cid} margin "
                    f"{c.worst_margin:.6g} at {_fmt_point(c.worst_point)}")
        gb = [g for g in self.grams if not g.passed]
        if gb:
            return f"{self.verdict}: {len(gb)} Gram block record(s) out of tolerance"
        return f"{self.verdict}: {len(self.conditions)} condition(s) audited"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "mode": self.mode,
            "verdict": self.verdict,
            "conditions": [{
                "id": c.cid, "family": c.family, "samples": c.samples, "active": c.active,
                "worst_margin": _r(c.worst_margin), "worst_point": [_r(v) for v in c.worst_point],
                "scale": _r(c.scale), "tol": _r(c.tol), "passed": c.passed,
                **({"note": c.note} if c.note else {})} for c in self.conditions],
            "grams": [{"label": g.label, "min_eig": _r(min(g.min_eigs, default=0.0)),
                       "residual": _r(g.residual), "passed": g.passed} for g in self.grams],
            "probes": [{"id": p.cid, "point": [_r(v) for v in p.point], "margin": _r(p.margin),
                        "active": p.active} for p in self.probes],
            "rounding_slack": [{"id": c.cid, "margin": _r(c.worst_margin),
                                "point": [_r(v) for v in c.worst_point]}
                               for c in self.rounding_slack],
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def _r(v: float) -> float:
    """Round for reports so reruns serialize identically."""
    if not math.isfinite(v):
        return v
    return float(f"{v:.12g}")


def _fmt_point(p) -> str:
    return "(" + ", ".join(f"{v:.6g}" for v in p) + ")"


# ---------------------------------------------------------------------------
# Gram audit


def gram_audit(cert, psd_tol: float = 1e-8, residual_tol: float = 1e-6) -> list[GramBlockRecord]:
    if not cert.grams:
        raise AuditError("certificate carries no Gram blocks")
    out = []
    for g in cert.grams:
        eigs = [float(np.linalg.eigvalsh(Q)[0]) if Q.size else 0.0 for Q in g.grams]
        res = gram_residual(g.target, g.grams, g.principal_basis, g.multiplier_bases,
                            g.multipliers)
        out.append(GramBlockRecord(g.label, eigs, float(res), psd_tol, residual_tol))
    return out


# ---------------------------------------------------------------------------
# condition assembly


@dataclass
class _Cond:
    cid: str
    family: str
    factors: list[SemiAlgebraicSet]           # one state-space set per argument block
    margin: Callable[[list[np.ndarray]], tuple[np.ndarray, np.ndarray]]
    polys: list[Polynomial]
    note: str = ""


def _ev(p: Polynomial, *blocks: np.ndarray) -> np.ndarray:
    return p.evaluate_many(np.hstack(blocks) if len(blocks) > 1 else blocks[0])


def _stack(polys: Sequence[Polynomial], *blocks) -> np.ndarray:
    """Values of several polynomials, shape (len(polys), N)."""
    return np.stack([_ev(p, *blocks) for p in polys])


class _Ctx:
    def __init__(self, cert, spec, opts: AuditOptions):
        self.cert = cert
        self.spec = spec
        self.opts = opts
        sys = spec.system
        self.sys = sys
        self.S = sys.space
        self.k = cert.k
        self.f = sys.step_many
        self.tol_fn = lambda polys: opts.tol * max((p.max_abs_coef() for p in polys), default=1.0)

    def polys(self, tag=None) -> list[Polynomial]:
        return [self.cert.poly(i + 1, tag) for i in range(self.k)]

    def piece(self, S: SemiAlgebraicSet) -> SemiAlgebraicSet:
        return rebase(S, self.S)

    def disj(self, vals: np.ndarray, assigned: int) -> np.ndarray:
        """Disjunction over function indices: row ``assigned`` or max over rows."""
        if self.opts.disjunction == "strict":
            return vals.max(axis=0)
        return vals[assigned - 1]


def _all_true(n):
    return np.ones(n, dtype=bool)


def _safety_pair(ctx: _Ctx, A: np.ndarray, unsafe: RegionUnion) -> list[_Cond]:
    T = ctx.polys()
    X, X0, f = ctx.sys.X, ctx.sys.X0, ctx.f
    out = [
        _Cond("closure", "closure", [X],
              lambda b: (_stack(T, b[0], f(b[0])).min(axis=0), _all_true(len(b[0]))), T),
        _Cond("induct", "induct", [X, X],
              lambda b: ((_stack(T, b[0], b[1]) - A @ _stack(T, f(b[0]), b[1])).min(axis=0),
                         _all_true(len(b[0]))), T),
    ]
    for j, piece in enumerate(unsafe.pieces):
        lab = f"u{j + 1}"
        eta = ctx.cert.eta.get(lab, ctx.cert.eta.get("u", 0.0))
        a = ctx.cert.assignment.get(lab, 1)
        out.append(_Cond(f"exclude[{lab}]", "exclude", [X0, ctx.piece(piece)],
                         lambda b, eta=eta, a=a: (ctx.disj(-eta - _stack(T, b[0], b[1]), a),
                                                  _all_true(len(b[0]))), T))
    return out


def _persistence_pair(ctx: _Ctx, A: np.ndarray, vf: RegionUnion) -> list[_Cond]:
    T = ctx.polys()
    out = _safety_pair(ctx, A, RegionUnion(vf.space))
    tol = ctx.tol_fn(T)
    for j, piece in enumerate(vf.pieces):
        lab = f"vf{j + 1}"
        eta = ctx.cert.eta.get(lab, 0.0)
        a = ctx.cert.assignment.get(lab, 1)
        P = ctx.piece(piece)

        def m(b, eta=eta, a=a):
            t01 = _stack(T, b[0], b[1])
            act = (t01.min(axis=0) >= -tol) & (_stack(T, b[1], b[2]).min(axis=0) >= -tol)
            return ctx.disj(t01 - eta - _stack(T, b[0], b[2]), a), act
        out.append(_Cond(f"decrease[{lab}]", "decrease", [ctx.sys.X0, P, P], m, T,
                         "implication; pairs drawn within one piece"))
    return out


def _vcbrf(ctx: _Ctx, A1: np.ndarray, vf: RegionUnion) -> list[_Cond]:
    B = ctx.polys()
    X, X0, f = ctx.sys.X, ctx.sys.X0, ctx.f
    eta = ctx.cert.eta.get("vf", 0.0)
    tol = ctx.tol_fn(B)
    out = [
        _Cond("init", "init", [X0], lambda b: (_stack(B, b[0]).min(axis=0), _all_true(len(b[0]))), B),
        _Cond("invariant", "invariant", [X],
              lambda b: ((_stack(B, f(b[0])) - A1 @ _stack(B, b[0])).min(axis=0),
                         _all_true(len(b[0]))), B),
    ]
    pieces = [ctx.piece(p) for p in vf.pieces]
    outside = [X] if not pieces else list(box_complement(X, RegionUnion(ctx.S, tuple(pieces))).pieces)

    def dec(off):
        def m(b):
            v = _stack(B, b[0])
            act = v.min(axis=0) >= -tol
            return (v - _stack(B, f(b[0])) - off).min(axis=0), act
        return m
    for p, P in enumerate(outside):
        out.append(_Cond(f"nonincrease[out{p + 1}]", "nonincrease", [P], dec(0.0), B, "implication"))
    for p, P in enumerate(pieces):
        out.append(_Cond(f"decrease[vf{p + 1}]", "decrease", [P], dec(eta), B, "implication"))
    return out


def _bc(ctx: _Ctx, unsafe: RegionUnion) -> list[_Cond]:
    B = ctx.cert.poly(1, None)
    lam = ctx.cert.lam if ctx.cert.lam is not None else 1.0
    X, X0, f = ctx.sys.X, ctx.sys.X0, ctx.f
    out = [_Cond("init", "init", [X0], lambda b: (-_ev(B, b[0]), _all_true(len(b[0]))), [B])]
    for j, piece in enumerate(unsafe.pieces):
        eta = ctx.cert.eta.get(f"u{j + 1}", 0.0)
        out.append(_Cond(f"unsafe[u{j + 1}]", "unsafe", [ctx.piece(piece)],
                         lambda b, eta=eta: (_ev(B, b[0]) - eta, _all_true(len(b[0]))), [B]))
    out.append(_Cond("step", "step", [X],
                     lambda b: (lam * _ev(B, b[0]) - _ev(B, f(b[0])), _all_true(len(b[0]))), [B]))
    return out


def _vbc(ctx: _Ctx, A: np.ndarray, unsafe: RegionUnion) -> list[_Cond]:
    B = ctx.polys()
    X, X0, f = ctx.sys.X, ctx.sys.X0, ctx.f
    out = [_Cond("init", "init", [X0], lambda b: (-_stack(B, b[0]).max(axis=0), _all_true(len(b[0]))), B)]
    for j, piece in enumerate(unsafe.pieces):
        eta = ctx.cert.eta.get(f"u{j + 1}", 0.0)
        out.append(_Cond(f"unsafe[u{j + 1}]", "unsafe", [ctx.piece(piece)],
                         lambda b, eta=eta: (_stack(B, b[0]).max(axis=0) - eta,
                                             _all_true(len(b[0]))), B))
    out.append(_Cond("step", "step", [X],
                     lambda b: ((A @ _stack(B, b[0]) - _stack(B, f(b[0]))).min(axis=0),
                                _all_true(len(b[0]))), B))
    return out


def _letter_pieces(ctx: _Ctx, letter: str) -> list[SemiAlgebraicSet]:
    return [ctx.piece(p) for p in ctx.spec.labeling.region(letter).pieces]


def _vcbrf_ltl(ctx: _Ctx, A1: np.ndarray) -> list[_Cond]:
    aut, lab = ctx.spec.automaton, ctx.spec.labeling
    X0, f = ctx.sys.X0, ctx.f
    eta = ctx.cert.eta.get("acc", 0.0)
    allp = [p for q in aut.states for p in ctx.polys(q)]
    tol = ctx.tol_fn(allp)
    out = []
    for inst in product_constraint_instances(aut, lab, mode="vcbrf"):
        if inst.family == "init":
            Bq = ctx.polys(inst.source)
            out.append(_Cond(f"init[{inst.source}]", "init", [X0],
                             lambda b, Bq=Bq: (_stack(Bq, b[0]).min(axis=0), _all_true(len(b[0]))), Bq))
            continue
        Bn, Bn2 = ctx.polys(inst.source), ctx.polys(inst.target)
        for pi, P in enumerate(_letter_pieces(ctx, inst.letter)):
            tag = f"{inst.source}->{inst.target}|{inst.letter}#{pi + 1}"
            if inst.family == "step":
                out.append(_Cond(f"invariant[{tag}]", "invariant", [P],
                                 lambda b, Bn=Bn, Bn2=Bn2: (
                                     (_stack(Bn2, f(b[0])) - A1 @ _stack(Bn, b[0])).min(axis=0),
                                     _all_true(len(b[0]))), Bn + Bn2))
            else:
                off = eta if inst.family == "acc" else 0.0

                def m(b, Bn=Bn, Bn2=Bn2, off=off):
                    v = _stack(Bn, b[0])
                    return (v - _stack(Bn2, f(b[0])) - off).min(axis=0), v.min(axis=0) >= -tol
                fam = "decrease" if inst.family == "acc" else "nonincrease"
                out.append(_Cond(f"{fam}[{tag}]", fam, [P], m, Bn + Bn2, "implication"))
    return out


def _pair_ltl(ctx: _Ctx, A: np.ndarray) -> list[_Cond]:
    aut, lab = ctx.spec.automaton, ctx.spec.labeling
    X, X0, f = ctx.sys.X, ctx.sys.X0, ctx.f
    T = {(n, p): ctx.polys((n, p)) for n in aut.states for p in aut.states}
    tol = ctx.tol_fn([p for v in T.values() for p in v])
    out = []
    for inst in product_constraint_instances(aut, lab, mode="vcc", acceptance="all"):
        if inst.family == "pair_acc":
            q0, r, r2 = inst.other, inst.source, inst.target
            eta = ctx.cert.eta.get(r, 0.0)
            a = ctx.cert.assignment.get(r, 1)
            T0r, T0r2, Trr2 = T[(q0, r)], T[(q0, r2)], T[(r, r2)]

            def m(b, T0r=T0r, T0r2=T0r2, Trr2=Trr2, eta=eta, a=a):
                t01 = _stack(T0r, b[0], b[1])
                act = (t01.min(axis=0) >= -tol) & (_stack(Trr2, b[1], b[2]).min(axis=0) >= -tol)
                return ctx.disj(t01 - eta - _stack(T0r2, b[0], b[2]), a), act
            out.append(_Cond(f"decrease[{q0},{r}->{r2}]", "decrease", [X0, X, X], m,
                             T0r + T0r2 + Trr2, "implication"))
            continue
        n, n2 = inst.source, inst.target
        for pi, P in enumerate(_letter_pieces(ctx, inst.letter)):
            tag = f"{n}->{n2}|{inst.letter}#{pi + 1}"
            if inst.family == "pair_step":
                Tn = T[(n, n2)]
                out.append(_Cond(f"closure[{tag}]", "closure", [P],
                                 lambda b, Tn=Tn: (_stack(Tn, b[0], f(b[0])).min(axis=0),
                                                   _all_true(len(b[0]))), Tn))
            else:
                p = inst.other
                Tnp, Tn2p = T[(n, p)], T[(n2, p)]
                out.append(_Cond(f"induct[{tag},{p}]", "induct", [P, X],
                                 lambda b, Tnp=Tnp, Tn2p=Tn2p: (
                                     (_stack(Tnp, b[0], b[1])
                                      - A @ _stack(Tn2p, f(b[0]), b[1])).min(axis=0),
                                     _all_true(len(b[0]))), Tnp + Tn2p))
    return out


def build_conditions(cert, spec, opts: AuditOptions) -> list[_Cond]:
    from .synth import LtlSpec, PersistenceSpec, SafetySpec
    if spec.system.n != cert.n:
        raise AuditError(f"certificate dimension {cert.n} does not match system dimension "
                         f"{spec.system.n}")
    ctx = _Ctx(cert, spec, opts)
    kind = cert.kind
    want = {"BC": SafetySpec, "VBC": SafetySpec, "CC_safety": SafetySpec, "VCC_safety": SafetySpec,
            "CC_persistence": PersistenceSpec, "VCC_persistence": PersistenceSpec,
            "VCBRF_persistence": PersistenceSpec, "VCBRF_LTL": LtlSpec, "CC_LTL": LtlSpec,
            "VCC_LTL": LtlSpec}[kind]
    if not isinstance(spec, want):
        raise AuditError(f"certificate kind {kind} needs a {want.__name__}, got "
                         f"{type(spec).__name__}")
    if kind == "BC":
        return _bc(ctx, spec.unsafe)
    if kind == "VBC":
        return _vbc(ctx, cert.matrices["A"], spec.unsafe)
    if kind in ("CC_safety", "VCC_safety"):
        return _safety_pair(ctx, cert.matrices["A"], spec.unsafe)
    if kind in ("CC_persistence", "VCC_persistence"):
        return _persistence_pair(ctx, cert.matrices["A"], spec.vf)
    if kind == "VCBRF_persistence":
        return _vcbrf(ctx, cert.matrices["A1"], spec.vf)
    if kind == "VCBRF_LTL":
        return _vcbrf_ltl(ctx, cert.matrices["A1"])
    return _pair_ltl(ctx, cert.matrices["A"])


# ---------------------------------------------------------------------------
# sampling


def _seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _corners(S: SemiAlgebraicSet) -> np.ndarray:
    if not S.is_box:
        return np.zeros((0, S.arity))
    lo, hi = np.array(S.lo), np.array(S.hi)
    n = len(lo)
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1
    return np.where(bits == 1, hi, lo)


def _factor_samples(cond: _Cond, idx: int, opts: AuditOptions) -> list[np.ndarray]:
    blocks = []
    for fi, S in enumerate(cond.factors):
        blocks.append(sample_set(S, opts.samples, _seed(opts.seed, idx, fi),
                                 boundary_fraction=opts.boundary_fraction).points)
    # corner combinations of box factors, when few enough
    corners = [_corners(S) for S in cond.factors]
    total = int(np.prod([len(c) for c in corners]))
    if all(len(c) for c in corners) and total <= opts.max_corners:
        grids = np.meshgrid(*[np.arange(len(c)) for c in corners], indexing="ij")
        for fi, (c, g) in enumerate(zip(corners, grids)):
            blocks[fi] = np.vstack([blocks[fi], c[g.ravel()]])
    return blocks


def check_certificate(cert, spec, opts: AuditOptions | None = None) -> AuditReport:
    """Sample every condition family of ``cert`` over its domain and record worst margins."""
    opts = opts or AuditOptions()
    conds = build_conditions(cert, spec, opts)
    records = []
    probes = []
    for idx, c in enumerate(conds):
        blocks = _factor_samples(c, idx, opts)
        margin, active = c.margin(blocks)
        margin = np.where(active, margin, np.inf)
        scale = max((p.max_abs_coef() for p in c.polys), default=1.0)
        n_act = int(active.sum())
        if n_act:
            w = int(np.argmin(margin))
            worst = float(margin[w])
            point = tuple(float(v) for b in blocks for v in b[w])
        else:
            worst, point = math.inf, ()
        records.append(ConditionRecord(c.cid, c.family, len(margin), n_act, worst, point, scale,
                                       opts.tol * scale, c.note))
        for pt in opts.probes.get(c.cid, []) + opts.probes.get(c.family, []):
            pb = [np.atleast_2d(np.asarray(p, dtype=float)) for p in pt]
            if len(pb) != len(c.factors):
                continue
            pm, pa = c.margin(pb)
            probes.append(ProbeRecord(c.cid, tuple(float(v) for b in pb for v in b[0]),
                                      float(pm[0]), bool(pa[0])))
    grams = gram_audit(cert, opts.psd_tol, opts.residual_tol) if cert.grams else []
    rep = AuditReport(cert.kind, opts.mode, records, grams, probes)
    rep.verdict = _verdict(rep, opts)
    return rep


def _verdict(rep: AuditReport, opts: AuditOptions) -> str:
    if rep.failures() or any(not g.passed for g in rep.grams):
        return "Fail"
    if opts.mode == TRANSCRIBED and rep.rounding_slack:
        return "PassWithRounding"
    return "Pass"


def recheck_witness(cert, spec, rec: ConditionRecord, opts: AuditOptions | None = None) -> float:
    """Re-evaluate one condition at its recorded worst point."""
    opts = opts or AuditOptions()
    conds = {c.cid: c for c in build_conditions(cert, spec, opts)}
    c = conds[rec.cid]
    n = spec.system.n
    pt = np.asarray(rec.worst_point)
    blocks = [pt[i * n:(i + 1) * n][None, :] for i in range(len(c.factors))]
    return float(c.margin(blocks)[0][0])


# ---------------------------------------------------------------------------
# trajectory audit


@dataclass
class TrajectoryReport:
    region: str
    trajectories: int
    horizon: int
    max_visits: int
    max_last_visit: int          # -1 when no trajectory ever visits
    ceased: bool                 # no visit in the final tail window of any trajectory
    tail: int
    left_domain: int             # trajectories that left the box of X

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def trajectory_audit(sys, region: RegionUnion, count: int = 100, steps: int = 500,
                     seed: int = 0, tail_fraction: float = 0.1, name: str = "") -> TrajectoryReport:
    """Simulate from sampled initial states and count visits to ``region``."""
    if steps <= 0 or count <= 0:
        return TrajectoryReport(name or region.label, max(count, 0), max(steps, 0), 0, -1, True, 0, 0)
    x0 = sample_set(sys.X0, count, seed).points
    traj = simulate_many(sys, x0, steps)
    flat = traj.reshape(-1, sys.n)
    region = RegionUnion(sys.space, tuple(rebase(p, sys.space) for p in region.pieces), region.label)
    hits = region.contains_many(flat).reshape(count, steps + 1)
    visits = hits.sum(axis=1)
    t_idx = np.arange(steps + 1)
    last = np.where(hits, t_idx, -1).max(axis=1)
    tail = max(1, int(round(steps * tail_fraction)))
    lo, hi = np.array(sys.X.lo), np.array(sys.X.hi)
    out_dom = ~np.all((traj >= lo - 1e-9) & (traj <= hi + 1e-9), axis=(1, 2))
    return TrajectoryReport(name or region.label, count, steps, int(visits.max()), int(last.max()),
                            bool(last.max() < steps + 1 - tail), tail, int(out_dom.sum()))
