"""Discrete-time polynomial systems, labelings and Büchi automata."""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .poly import Polynomial, StructureError, VariableSpace
from .semialg import RegionUnion, SemiAlgebraicSet


@dataclass(frozen=True)
class DynamicalSystem:
    space: VariableSpace
    f: tuple[Polynomial, ...]
    X: SemiAlgebraicSet
    X0: SemiAlgebraicSet
    regions: Mapping[str, RegionUnion] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "f", tuple(self.f))
        object.__setattr__(self, "regions", dict(self.regions))
        if len(self.f) != self.space.arity:
            raise StructureError(f"dynamics has {len(self.f)} components for {self.space.arity} states")
        for p in self.f:
            if p.space != self.space:
                raise StructureError("dynamics component lives in another space")
        for S in (self.X, self.X0):
            if S.space != self.space:
                raise StructureError(f"set {S.label!r} lives in another space")

    @property
    def n(self) -> int:
        return self.space.arity

    @property
    def degree(self) -> int:
        return max(p.degree for p in self.f)

    def region(self, name: str) -> RegionUnion:
        try:
            return self.regions[name]
        except KeyError:
            raise KeyError(f"system {self.name!r} has no region {name!r}") from None

    def step(self, x: np.ndarray) -> np.ndarray:
        return np.array([p.evaluate(x) for p in self.f])

    def step_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.stack([p.evaluate_many(pts) for p in self.f], axis=1)

    def check_initial_inside(self, count: int = 1000, seed: int = 0) -> bool:
        from .semialg import sample_set
        pts = sample_set(self.X0, count, seed).points
        return bool(self.X.contains_many(pts, tol=1e-12).all())


# ---------------------------------------------------------------------------
# Büchi automata


@dataclass(frozen=True)
class BuchiAutomaton:
    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    initial: frozenset[str]
    transitions: tuple[tuple[str, str, str], ...]  # (q, letter, q')
    accepting: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        object.__setattr__(self, "initial", frozenset(self.initial))
        object.__setattr__(self, "accepting", frozenset(self.accepting))
        object.__setattr__(self, "transitions", tuple(dict.fromkeys(
            tuple(t) for t in self.transitions)))
        st, al = set(self.states), set(self.alphabet)
        if len(st) != len(self.states):
            raise StructureError("duplicate automaton states")
        for q, a, r in self.transitions:
            if q not in st or r not in st:
                raise StructureError(f"transition ({q}, {a}, {r}) references an undeclared state")
            if a not in al:
                raise StructureError(f"transition ({q}, {a}, {r}) uses undeclared letter {a!r}")
        if not self.initial <= st or not self.accepting <= st:
            raise StructureError("initial/accepting states must be declared states")

    def index(self, q: str) -> int:
        return self.states.index(q)

    def successors(self, q: str, letter: str) -> list[str]:
        return [r for (p, a, r) in self.transitions if p == q and a == letter]

    @property
    def non_accepting(self) -> list[str]:
        return [q for q in self.states if q not in self.accepting]

    @property
    def accepting_list(self) -> list[str]:
        return [q for q in self.states if q in self.accepting]

    @property
    def initial_list(self) -> list[str]:
        return [q for q in self.states if q in self.initial]


def letter_relation(aut: BuchiAutomaton, letter: str) -> set[tuple[str, str]]:
    if letter not in aut.alphabet:
        raise KeyError(f"letter {letter!r} not in alphabet {aut.alphabet}")
    return {(q, r) for (q, a, r) in aut.transitions if a == letter}


# ---------------------------------------------------------------------------
# labeling


@dataclass(frozen=True)
class LabelingPartition:
    letters: tuple[tuple[str, RegionUnion], ...]

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(self.letters))
        names = [a for a, _ in self.letters]
        if len(set(names)) != len(names):
            raise StructureError("duplicate letters in labeling")
        spaces = {r.space for _, r in self.letters}
        if len(spaces) > 1:
            raise StructureError("labeling regions live in different spaces")

    @property
    def names(self) -> list[str]:
        return [a for a, _ in self.letters]

    def region(self, letter: str) -> RegionUnion:
        for a, r in self.letters:
            if a == letter:
                return r
        raise KeyError(letter)

    def label_many(self, pts: np.ndarray) -> np.ndarray:
        """Index of the first declared letter whose region holds each point (-1: none)."""
        out = np.full(len(pts), -1, dtype=np.int64)
        for i, (_, reg) in enumerate(self.letters):
            hit = (out < 0) & reg.contains_many(pts)
            out[hit] = i
        return out

    def audit(self, X: SemiAlgebraicSet, count: int = 10_000, seed: int = 0) -> "PartitionAudit":
        from .semialg import sample_set
        pts = sample_set(X, count, seed).points
        claims = np.zeros(len(pts), dtype=np.int64)
        for _, reg in self.letters:
            claims += reg.contains_many(pts).astype(np.int64)
        # boundary points shared by closed regions count once (first declaration wins)
        interior_overlap = 0
        for i, (_, reg) in enumerate(self.letters):
            for _, other in self.letters[i + 1:]:
                both = reg.contains_many(pts, tol=-1e-9) & other.contains_many(pts, tol=-1e-9)
                interior_overlap += int(both.sum())
        return PartitionAudit(len(pts), int((claims == 0).sum()), interior_overlap)


@dataclass
class PartitionAudit:
    samples: int
    uncovered: int
    overlapping: int

    @property
    def ok(self) -> bool:
        return self.uncovered == 0 and self.overlapping == 0


# ---------------------------------------------------------------------------
# product constraint enumeration


@dataclass(frozen=True)
class ConstraintInstance:
    family: str          # "init", "step", "nonacc", "acc", "pair_step", "pair_ind", "pair_acc"
    letter: str | None
    source: str | None   # n (or q / r)
    target: str | None   # n' (or q' / r')
    other: str | None = None   # p for the pair-induction family, q0 for acceptance
    function: int | None = None


def product_constraint_instances(aut: BuchiAutomaton, lab: LabelingPartition | None = None,
                                 mode: str = "vcc",
                                 acceptance: str = "successors") -> list[ConstraintInstance]:
    """Enumerate the automaton-indexed constraint families.

    ``mode="vcc"``: for each letter and each ``(n, n')`` in its relation one
    step instance, and one induction instance per third state ``p``
    (``|delta_sigma| * (1 + |Q|)`` in total); then one acceptance instance per
    ``(q0, r, r')`` with ``q0`` initial, ``r`` accepting and ``r'`` an
    accepting successor of ``r`` (``acceptance="successors"``) or per ordered
    pair of accepting states (``acceptance="all"``).

    ``mode="vcbrf"``: initial instances per ``q0``; a step instance per
    letter-consistent edge; a non-accepting decrease instance per edge leaving
    a non-accepting state; an accepting decrease instance per edge leaving an
    accepting state.
    """
    letters = lab.names if lab is not None else list(aut.alphabet)
    for a in letters:
        if a not in aut.alphabet:
            raise StructureError(f"labeling letter {a!r} not in automaton alphabet")
    out: list[ConstraintInstance] = []
    if mode == "vcc":
        for a in letters:
            rel = sorted(letter_relation(aut, a), key=lambda e: (aut.index(e[0]), aut.index(e[1])))
            for n, n2 in rel:
                out.append(ConstraintInstance("pair_step", a, n, n2))
                for p in aut.states:
                    out.append(ConstraintInstance("pair_ind", a, n, n2, p))
        for q0 in aut.initial_list:
            for r in aut.accepting_list:
                if acceptance == "all":
                    succ = aut.accepting_list
                elif acceptance == "successors":
                    succ = sorted({r2 for (q, a, r2) in aut.transitions
                                   if q == r and r2 in aut.accepting and a in letters},
                                  key=aut.index)
                else:
                    raise ValueError(f"unknown acceptance enumeration {acceptance!r}")
                for r2 in succ:
                    out.append(ConstraintInstance("pair_acc", None, r, r2, q0))
    elif mode == "vcbrf":
        for q0 in aut.initial_list:
            out.append(ConstraintInstance("init", None, q0, None))
        for a in letters:
            rel = sorted(letter_relation(aut, a), key=lambda e: (aut.index(e[0]), aut.index(e[1])))
            for n, n2 in rel:
                out.append(ConstraintInstance("step", a, n, n2))
            for n, n2 in rel:
                fam = "acc" if n in aut.accepting else "nonacc"
                out.append(ConstraintInstance(fam, a, n, n2))
    else:
        raise ValueError(f"unknown enumeration mode {mode!r}")
    if not aut.accepting:
        warnings.warn("automaton has no accepting state; the property holds vacuously",
                      stacklevel=2)
    return out


# ---------------------------------------------------------------------------
# simulation


@dataclass
class Trajectory:
    states: np.ndarray                  # (T+1, n)
    membership: dict[str, np.ndarray]   # region -> bool per step
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.states)


def simulate(sys: DynamicalSystem, x0: Sequence[float], steps: int,
             regions: Sequence[str] | None = None, bbox_tol: float = 1e-9) -> Trajectory:
    """Iterate ``x_{t+1} = f(x_t)``; stops early (flagged) if the state leaves the box of X."""
    x = np.asarray(x0, dtype=float)
    if x.shape != (sys.n,):
        raise ValueError("initial point has the wrong dimension")
    out = [x]
    truncated = False
    lo = np.array(sys.X.lo) if sys.X.has_bbox else None
    hi = np.array(sys.X.hi) if sys.X.has_bbox else None
    for _ in range(steps):
        x = sys.step(x)
        if not np.all(np.isfinite(x)) or (lo is not None and (
                np.any(x < lo - bbox_tol) or np.any(x > hi + bbox_tol))):
            truncated = True
            out.append(x)
            break
        out.append(x)
    states = np.array(out)
    names = list(sys.regions) if regions is None else list(regions)
    member = {r: sys.region(r).contains_many(states) for r in names}
    return Trajectory(states, member, truncated)


def simulate_many(sys: DynamicalSystem, x0s: np.ndarray, steps: int) -> np.ndarray:
    """Vectorized iteration of many initial points; returns (count, steps+1, n)."""
    x = np.atleast_2d(np.asarray(x0s, dtype=float))
    out = np.empty((x.shape[0], steps + 1, sys.n))
    out[:, 0] = x
    for t in range(steps):
        x = sys.step_many(x)
        out[:, t + 1] = x
    return out


# ---------------------------------------------------------------------------
# dynamics text with a sine hook

_SIN = re.compile(r"sin\(")


def taylor_sin(arg: Polynomial) -> Polynomial:
    """Third-order Taylor polynomial of ``sin`` around 0: ``a - a^3/6``."""
    return arg - (arg ** 3).scale(1.0 / 6.0)


def parse_dynamics(exprs: Sequence[str], space: VariableSpace,
                   params: Mapping[str, float] | None = None) -> tuple[Polynomial, ...]:
    """Parse arithmetic dynamics into polynomials.

    Expressions may use ``+ - * / ^ **``, parentheses, numeric literals,
    named parameters and ``sin(...)``; each ``sin`` is replaced by its
    third-order Taylor polynomial.
    """
    params = dict(params or {})
    return tuple(_DynParser(e, space, params).parse() for e in exprs)


class _DynParser:
    TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)"
                       r"|(\*\*|[-+*/^(),])|([A-Za-z_][A-Za-z_0-9]*))")

    def __init__(self, text: str, space: VariableSpace, params: Mapping[str, float]):
        self.text = text
        self.space = space
        self.params = params
        self.toks: list[tuple[str, str]] = []
        pos = 0
        text = text.strip()
        while pos < len(text):
            m = self.TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise ValueError(f"cannot parse dynamics near {text[pos:pos + 12]!r}")
            pos = m.end()
            if m.group(1):
                self.toks.append(("num", m.group(1)))
            elif m.group(2):
                self.toks.append(("op", "^" if m.group(2) == "**" else m.group(2)))
            else:
                self.toks.append(("id", m.group(3)))
            while pos < len(text) and text[pos].isspace():
                pos += 1
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("end", "")

    def take(self, kind=None, val=None):
        tok = self.peek()
        if (kind and tok[0] != kind) or (val and tok[1] != val):
            raise ValueError(f"unexpected {tok[1] or 'end'} in dynamics {self.text!r}")
        self.i += 1
        return tok

    def parse(self) -> Polynomial:
        p = self.expr()
        if self.peek()[0] != "end":
            raise ValueError(f"trailing input in dynamics {self.text!r}")
        return p

    def expr(self) -> Polynomial:
        p = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self) -> Polynomial:
        p = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            q = self.unary()
            if op == "*":
                p = p * q
            else:
                if q.degree != 0 or q.is_zero():
                    raise ValueError("division only by nonzero constants")
                p = p.scale(1.0 / q.coefficient((0,) * self.space.arity))
        return p

    def unary(self) -> Polynomial:
        if self.peek() == ("op", "-"):
            self.take()
            return -self.unary()
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Polynomial:
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            tok = self.take("num")
            k = float(tok[1])
            if k != int(k) or k < 0:
                raise ValueError("exponents must be nonnegative integers")
            return base ** int(k)
        return base

    def atom(self) -> Polynomial:
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return Polynomial.constant(self.space, float(val))
        if kind == "op" and val == "(":
            self.take()
            p = self.expr()
            self.take("op", ")")
            return p
        if kind == "id":
            self.take()
            if val == "sin":
                self.take("op", "(")
                p = self.expr()
                self.take("op", ")")
                return taylor_sin(p)
            if val == "pi":
                return Polynomial.constant(self.space, math.pi)
            if val in self.space.names:
                return Polynomial.variable(self.space, val)
            if val in self.params:
                return Polynomial.constant(self.space, float(self.params[val]))
            raise ValueError(f"unknown symbol {val!r} in dynamics")
        raise ValueError(f"unexpected {val or 'end'} in dynamics {self.text!r}")
