"""Finite transition systems: reachability oracle, quadratic-template LPs and exact VCC audits.

States carry a real embedding so that polynomial certificates can be
evaluated on them. Linear programs are posed as SDPs with 1x1 blocks and
solved by :mod:`vecert.sdpcore`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .poly import Polynomial, VariableSpace
from .sdpcore import SdpBuilder, SolverOptions, Status, solve

# quadratic pair basis 1, x, y, x^2, xy, y^2 as exponents over (x, y)
PAIR_QUAD_BASIS: tuple[tuple[int, int], ...] = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
PAIR_SPACE = VariableSpace(("x", "y"))


@dataclass(frozen=True)
class FiniteTransitionSystem:
    states: tuple[str, ...]
    embedding: dict[str, float]
    initial: frozenset[str]
    unsafe: frozenset[str]
    edges: tuple[tuple[str, str], ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "initial", frozenset(self.initial))
        object.__setattr__(self, "unsafe", frozenset(self.unsafe))
        object.__setattr__(self, "edges", tuple(dict.fromkeys(tuple(e) for e in self.edges)))
        object.__setattr__(self, "embedding", {s: float(self.embedding[s]) for s in self.states})
        st = set(self.states)
        if len(st) != len(self.states):
            raise ValueError("duplicate states")
        for a, b in self.edges:
            if a not in st or b not in st:
                raise ValueError(f"edge ({a}, {b}) references an undeclared state")
        if not self.initial <= st or not self.unsafe <= st:
            raise ValueError("initial/unsafe states must be declared states")
        vals = list(self.embedding.values())
        if len(set(vals)) != len(vals):
            raise ValueError("state embedding must be injective")

    def successors(self, s: str) -> list[str]:
        return [b for a, b in self.edges if a == s]

    def value(self, s: str) -> float:
        return self.embedding[s]

    @classmethod
    def fig1(cls) -> "FiniteTransitionSystem":
        """Five-state example: q_i embedded at i, start q0, unsafe q1 and q3."""
        names = tuple(f"q{i}" for i in range(5))
        return cls(names, {q: float(i) for i, q in enumerate(names)}, {"q0"}, {"q1", "q3"},
                   (("q0", "q0"), ("q0", "q2"), ("q2", "q0"), ("q2", "q4"), ("q4", "q4"),
                    ("q1", "q2"), ("q3", "q4")), "fig1")


def reach(ts: FiniteTransitionSystem) -> set[str]:
    """Breadth-first fixed point from the initial states."""
    seen = set(ts.initial)
    queue = deque(sorted(ts.initial, key=ts.states.index))
    succ: dict[str, list[str]] = {s: [] for s in ts.states}
    for a, b in ts.edges:
        succ[a].append(b)
    while queue:
        s = queue.popleft()
        for t in succ[s]:
            if t not in seen:
                seen.add(t)
                queue.append(t)
    return seen


# ---------------------------------------------------------------------------
# condition instances


@dataclass(frozen=True)
class Ineq:
    """``sum_i coef_i * T_{fn_i}(x_i, y_i) >= rhs`` with pair arguments given as values."""
    family: str
    terms: tuple[tuple[float, int, float, float], ...]   # (coef, function index, x, y)
    rhs: float
    label: str = ""


def _pair_row(x: float, y: float) -> np.ndarray:
    return np.array([x ** a * y ** b for a, b in PAIR_QUAD_BASIS])


def cc_instances(ts: FiniteTransitionSystem, lam: float, eta: float) -> list[Ineq]:
    """All scalar-CC safety instances (closure, induction, exclusion) over the finite system."""
    v = ts.value
    out = [Ineq("closure", ((1.0, 0, v(a), v(b)),), 0.0, f"T({a},{b})>=0") for a, b in ts.edges]
    for a, b in ts.edges:
        for y in ts.states:
            out.append(Ineq("induct", ((1.0, 0, v(a), v(y)), (-lam, 0, v(b), v(y))), 0.0,
                            f"T({a},{y})>=lam*T({b},{y})"))
    for x0 in sorted(ts.initial, key=ts.states.index):
        for xu in sorted(ts.unsafe, key=ts.states.index):
            out.append(Ineq("exclude", ((-1.0, 0, v(x0), v(xu)),), eta, f"T({x0},{xu})<=-eta"))
    return out


def fig1_printed_instances(lam: float, eta: float) -> list[Ineq]:
    """The six scalar-CC inequalities listed for the five-state example."""
    return [
        Ineq("closure", ((1.0, 0, 0, 2),), 0.0, "T(0,2)>=0"),
        Ineq("closure", ((1.0, 0, 2, 4),), 0.0, "T(2,4)>=0"),
        Ineq("exclude", ((-1.0, 0, 0, 1),), eta, "T(0,1)<=-eta"),
        Ineq("exclude", ((-1.0, 0, 0, 3),), eta, "T(0,3)<=-eta"),
        Ineq("induct", ((1.0, 0, 0, 0), (-lam, 0, 2, 0)), 0.0, "T(0,0)>=lam*T(2,0)"),
        Ineq("induct", ((1.0, 0, 0, 4), (-lam, 0, 2, 4)), 0.0, "T(0,4)>=lam*T(2,4)"),
    ]


def vcc_instances(ts: FiniteTransitionSystem, A: np.ndarray, eta, assignment=None) -> list[Ineq]:
    """VCC safety instances; exclusion for unsafe state ``xu`` uses its assigned function."""
    A = np.asarray(A, dtype=float)
    k = A.shape[0]
    v = ts.value
    out = []
    for i in range(k):
        for a, b in ts.edges:
            out.append(Ineq("closure", ((1.0, i, v(a), v(b)),), 0.0, f"T{i + 1}({a},{b})>=0"))
    for i in range(k):
        for a, b in ts.edges:
            for y in ts.states:
                terms = [(1.0, i, v(a), v(y))] + [(-A[i, j], j, v(b), v(y)) for j in range(k)
                                                  if A[i, j] != 0.0]
                out.append(Ineq("induct", tuple(terms), 0.0, f"T{i + 1}({a},{y})>=(A T)({b},{y})"))
    unsafe = sorted(ts.unsafe, key=ts.states.index)
    for x0 in sorted(ts.initial, key=ts.states.index):
        for n, xu in enumerate(unsafe):
            j = (assignment or {}).get(xu, n % k)
            out.append(Ineq("exclude", ((-1.0, j, v(x0), v(xu)),), float(eta),
                            f"T{j + 1}({x0},{xu})<=-eta"))
    return out


# ---------------------------------------------------------------------------
# LP feasibility over quadratic pair templates


@dataclass
class LpResult:
    feasible: bool
    status: str
    coefficients: np.ndarray | None = None   # (k, 6)
    worst_slack: float = float("nan")


def _solve_instances(ineqs: Sequence[Ineq], k: int, opts: SolverOptions | None = None) -> LpResult:
    nb = len(PAIR_QUAD_BASIS)
    b = SdpBuilder()
    cvars = [b.add_free(f"c{i}_{m}") for i in range(k) for m in range(nb)]
    for q in ineqs:
        row = b.add_row(q.rhs, q.label)
        coef = np.zeros(k * nb)
        for c, fn, x, y in q.terms:
            coef[fn * nb:(fn + 1) * nb] += c * _pair_row(x, y)
        for j in np.flatnonzero(coef):
            b.add_free_entry(row, cvars[j], float(coef[j]))
        s = b.add_block(1, f"slack[{q.label}]")
        b.add_block_entry(row, s, 0, 0, -1.0)
    sol = solve(b.build(), opts or SolverOptions(tol=1e-9))
    if sol.status != Status.OPTIMAL:
        return LpResult(False, sol.status.value)
    coefs = sol.u.reshape(k, nb)
    margins = [_ineq_margin(q, coefs) for q in ineqs]
    worst = min(margins, default=0.0)
    # accept only solutions that satisfy every inequality up to roundoff
    scale = 1.0 + float(np.abs(coefs).max(initial=0.0))
    ok = worst >= -1e-9 * scale
    return LpResult(ok, sol.status.value if ok else "InexactSolution", coefs, worst)


def _ineq_margin(q: Ineq, coefs: np.ndarray) -> float:
    val = sum(c * float(coefs[fn] @ _pair_row(x, y)) for c, fn, x, y in q.terms)
    return val - q.rhs


def _check_eta(eta: float):
    if not eta > 0:
        raise ValueError("eta must be > 0: the exclusion inequality is strict")


@dataclass
class GridResult:
    outcome: str                      # "FeasibleAt" | "InfeasibleOnGrid"
    lam: float | None = None
    template: Polynomial | None = None
    per_lambda: list[tuple[float, str]] = field(default_factory=list)

    def summary(self) -> str:
        if self.outcome == "FeasibleAt":
            return f"FeasibleAt(lambda={self.lam:g})"
        return f"InfeasibleOnGrid ({len(self.per_lambda)} grid points, evidence only)"


def cc_feasible_quadratic(ts: FiniteTransitionSystem | None, lam_grid: Iterable[float], eta: float,
                          mode: str = "full", exhaustive: bool = False) -> GridResult:
    """Scalar-CC feasibility over quadratic templates, one LP per fixed lambda.

    ``mode="full"`` instantiates every condition over the finite system;
    ``mode="printed"`` uses the six inequalities listed for the five-state
    example (``ts`` is ignored).
    """
    _check_eta(eta)
    grid = [float(l) for l in lam_grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    if any(l < 0 for l in grid):
        raise ValueError("lambda values must be nonnegative")
    if mode not in ("full", "printed"):
        raise ValueError(f"unknown mode {mode!r}")
    res = GridResult("InfeasibleOnGrid")
    for lam in grid:
        ineqs = fig1_printed_instances(lam, eta) if mode == "printed" else cc_instances(ts, lam, eta)
        lp = _solve_instances(ineqs, 1)
        res.per_lambda.append((lam, "Feasible" if lp.feasible else lp.status))
        if lp.feasible and res.outcome != "FeasibleAt":
            res.outcome, res.lam = "FeasibleAt", lam
            res.template = Polynomial.from_coefficients(PAIR_SPACE, PAIR_QUAD_BASIS,
                                                        list(lp.coefficients[0]))
            if not exhaustive:
                break
    return res


def vcc_feasible_quadratic(ts: FiniteTransitionSystem, A, eta: float,
                           assignment=None) -> tuple[list[Polynomial] | None, LpResult]:
    """Quadratic VCC for a fixed matrix ``A`` (an LP once ``A`` is fixed)."""
    _check_eta(eta)
    A = np.asarray(A, dtype=float)
    if np.any(A < 0):
        raise ValueError("A must be entrywise nonnegative")
    lp = _solve_instances(vcc_instances(ts, A, eta, assignment), A.shape[0])
    if not lp.feasible:
        return None, lp
    return [Polynomial.from_coefficients(PAIR_SPACE, PAIR_QUAD_BASIS, list(c))
            for c in lp.coefficients], lp


# ---------------------------------------------------------------------------
# exact audits


@dataclass
class InstanceRecord:
    family: str
    label: str
    margin: float


@dataclass
class DiscreteAuditReport:
    instances: list[InstanceRecord]
    verdict: str
    instance_set: str = "full"

    def worst(self, family: str | None = None) -> InstanceRecord | None:
        rec = [r for r in self.instances if family is None or r.family == family]
        return min(rec, key=lambda r: r.margin) if rec else None

    def margin(self, label: str) -> float:
        for r in self.instances:
            if r.label == label:
                return r.margin
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "instance_set": self.instance_set,
                "instances": [{"family": r.family, "label": r.label,
                               "margin": float(f"{r.margin:.12g}")} for r in self.instances]}


def _T(polys: Sequence[Polynomial], i: int, x: float, y: float) -> float:
    return polys[i].evaluate((x, y))


def _printed_vcc_pairs():
    """Pair instances mirroring the six inequalities listed for the five-state example."""
    closure = [("q0", "q2"), ("q2", "q4")]
    induct = [("q0", "q2", "q0"), ("q0", "q2", "q4")]        # (x, x', y)
    return closure, induct


def vcc_audit_discrete(ts: FiniteTransitionSystem, T: Sequence[Polynomial], A, eta: float,
                       instances: str = "full", abs_tol: float = 0.0,
                       rounding_tol: float | None = None) -> DiscreteAuditReport:
    """Evaluate VCC safety instances exactly on the finite system.

    ``instances="full"`` instantiates closure and induction over every edge
    (and every ``y`` for induction); ``instances="printed"`` restricts them to
    the pairs of the listed six-inequality argument (closure on 0->2, 2->4;
    induction from 0->2 at y in {0, 4}). Exclusion is a disjunction over
    function indices; its margin is the best one over all indices.

    Margins are exact evaluations. ``abs_tol`` absorbs solver roundoff;
    ``rounding_tol`` (absolute) turns deficits up to that size into
    ``PassWithRounding`` for transcribed coefficients.
    """
    A = np.asarray(A, dtype=float)
    k = len(T)
    if A.shape != (k, k):
        raise ValueError(f"A must be {k}x{k}")
    if np.any(A < 0):
        raise ValueError("A must be entrywise nonnegative")
    _check_eta(eta)
    if instances not in ("full", "printed"):
        raise ValueError(f"unknown instance set {instances!r}")
    for p in T:
        if p.space.arity != 2:
            raise ValueError("pair polynomials over (x, y) expected")
    v = ts.value
    if instances == "full":
        closure = list(ts.edges)
        induct = [(a, b, y) for a, b in ts.edges for y in ts.states]
    else:
        closure, induct = _printed_vcc_pairs()
    recs = []
    for a, b in closure:
        for i in range(k):
            recs.append(InstanceRecord("closure", f"T{i + 1}({a},{b})>=0", _T(T, i, v(a), v(b))))
    for a, b, y in induct:
        nxt = np.array([_T(T, j, v(b), v(y)) for j in range(k)])
        for i in range(k):
            recs.append(InstanceRecord("induct", f"T{i + 1}({a},{y})>=(A T)({b},{y})",
                                       _T(T, i, v(a), v(y)) - float(A[i] @ nxt)))
    for x0 in sorted(ts.initial, key=ts.states.index):
        for xu in sorted(ts.unsafe, key=ts.states.index):
            best = max(-eta - _T(T, i, v(x0), v(xu)) for i in range(k))
            recs.append(InstanceRecord("exclude", f"exists i: T_i({x0},{xu})<=-eta", best))
    worst = min((r.margin for r in recs), default=0.0)
    if worst >= -abs_tol:
        verdict = "Pass"
    elif rounding_tol is not None and worst >= -rounding_tol:
        verdict = "PassWithRounding"
    else:
        verdict = "Fail"
    return DiscreteAuditReport(recs, verdict, instances)


def fig1_printed_vcc() -> tuple[list[Polynomial], np.ndarray, float]:
    """The two-component quadratic VCC printed for the five-state example."""
    T1 = Polynomial.parse("847.87*x*y - 883.63*y^2 - 3391.47*x + 4442.96*y - 3633.71", PAIR_SPACE)
    T2 = Polynomial.parse("0.080*x*y + 0.081*y^2 - 0.319*x - 0.564*y + 0.965", PAIR_SPACE)
    return [T1, T2], np.array([[4.703, 4.703], [1.621, 0.354]]), 1e-3


@dataclass
class OracleVerdict:
    consistent: bool
    reachable_unsafe: set[str]
    certificate_passed: bool
    message: str


def safety_oracle_consistency(ts: FiniteTransitionSystem, report: DiscreteAuditReport | None = None,
                              lp_feasible: bool = False) -> OracleVerdict:
    """A passing certificate must never coexist with a reachable unsafe state."""
    bad = reach(ts) & ts.unsafe
    passed = lp_feasible or (report is not None and report.verdict == "Pass"
                             and report.instance_set == "full")
    if passed and bad:
        return OracleVerdict(False, bad, passed,
                             f"soundness alarm: certificate passed but {sorted(bad)} reachable")
    return OracleVerdict(True, bad, passed, "consistent")


def random_system(rng: np.random.Generator, max_states: int = 6) -> FiniteTransitionSystem:
    """Random small system for soundness harnesses."""
    n = int(rng.integers(2, max_states + 1))
    names = tuple(f"s{i}" for i in range(n))
    emb = {s: float(i) for i, s in enumerate(names)}
    edges = [(names[a], names[b]) for a in range(n) for b in range(n) if rng.random() < 0.3]
    init = {names[0]}
    unsafe = {s for s in names[1:] if rng.random() < 0.35}
    return FiniteTransitionSystem(names, emb, init, unsafe, tuple(edges), "random")
