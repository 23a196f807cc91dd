"""Semi-algebraic set descriptors ``{x : g(x) >= 0}`` and audit samplers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .poly import Polynomial, StructureError, VariableSpace

BLOCK_PREFIXES = "xyzuvw"


class SamplingError(RuntimeError):
    """Rejection sampling could not find enough points in a set."""


def block_space(n: int, blocks: int = 1, prefixes: str = BLOCK_PREFIXES) -> VariableSpace:
    """Space of ``blocks`` stacked copies of an ``n``-dimensional state.

    Block 0 is ``x1..xn``, block 1 ``y1..yn``, block 2 ``z1..zn``.
    """
    if blocks > len(prefixes):
        raise StructureError("too many blocks for the available prefixes")
    names: list[str] = []
    for b in range(blocks):
        names.extend(f"{prefixes[b]}{i + 1}" for i in range(n))
    return VariableSpace(tuple(names))


@dataclass(frozen=True)
class SemiAlgebraicSet:
    space: VariableSpace
    constraints: tuple[Polynomial, ...] = ()
    label: str = ""
    # axis-aligned box this set equals (for boxes) or lies within (bounding box)
    lo: tuple[float, ...] | None = None
    hi: tuple[float, ...] | None = None
    is_box: bool = False

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        for g in self.constraints:
            if g.space != self.space:
                raise StructureError(f"constraint of set {self.label!r} lives in another space")
        if (self.lo is None) != (self.hi is None):
            raise ValueError("bounding box needs both lo and hi")
        if self.lo is not None:
            object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
            object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
            if len(self.lo) != self.space.arity or len(self.hi) != self.space.arity:
                raise ValueError("bounding box dimension does not match the space")

    @property
    def arity(self) -> int:
        return self.space.arity

    @property
    def has_bbox(self) -> bool:
        return self.lo is not None

    @property
    def max_constraint_degree(self) -> int:
        return max((g.degree for g in self.constraints), default=0)

    def with_bbox(self, lo: Sequence[float], hi: Sequence[float]) -> "SemiAlgebraicSet":
        return SemiAlgebraicSet(self.space, self.constraints, self.label, tuple(lo), tuple(hi),
                                self.is_box)

    def relabel(self, label: str) -> "SemiAlgebraicSet":
        return SemiAlgebraicSet(self.space, self.constraints, label, self.lo, self.hi, self.is_box)

    def values(self, points: np.ndarray) -> np.ndarray:
        """Constraint values, shape (N, number of constraints)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.constraints:
            return np.zeros((pts.shape[0], 0))
        return np.column_stack([g.evaluate_many(pts) for g in self.constraints])

    def contains(self, point: Sequence[float], tol: float = 0.0) -> bool:
        return bool(self.contains_many(np.asarray(point, dtype=float)[None, :], tol)[0])

    def contains_many(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        vals = self.values(points)
        if vals.shape[1] == 0:
            return np.ones(vals.shape[0], dtype=bool)
        return np.all(vals >= -tol, axis=1)

    def volume(self) -> float:
        if not self.is_box:
            raise ValueError("volume is only defined for box sets")
        return float(np.prod(np.subtract(self.hi, self.lo)))


@dataclass(frozen=True)
class RegionUnion:
    space: VariableSpace
    pieces: tuple[SemiAlgebraicSet, ...] = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        for p in self.pieces:
            if p.space != self.space:
                raise StructureError("region pieces must share one space")

    @classmethod
    def of(cls, *pieces: SemiAlgebraicSet, label: str = "") -> "RegionUnion":
        if not pieces:
            raise ValueError("use RegionUnion(space) for an empty union")
        return cls(pieces[0].space, pieces, label)

    @property
    def is_empty(self) -> bool:
        return not self.pieces

    def __len__(self) -> int:
        return len(self.pieces)

    def __iter__(self):
        return iter(self.pieces)

    def contains_many(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        hit = np.zeros(pts.shape[0], dtype=bool)
        for p in self.pieces:
            hit |= p.contains_many(pts, tol)
        return hit

    def contains(self, point: Sequence[float], tol: float = 0.0) -> bool:
        return bool(self.contains_many(np.asarray(point, dtype=float)[None, :], tol)[0])

    def volume(self) -> float:
        return sum(p.volume() for p in self.pieces)


def box_set(lo: Sequence[float], hi: Sequence[float], space: VariableSpace | None = None,
            label: str = "") -> SemiAlgebraicSet:
    """Axis-aligned box encoded by one quadratic ``(x_i - lo_i)(hi_i - x_i) >= 0`` per axis."""
    lo = tuple(float(v) for v in lo)
    hi = tuple(float(v) for v in hi)
    if len(lo) != len(hi):
        raise ValueError("lo and hi have different lengths")
    if any(not a < b for a, b in zip(lo, hi)):
        raise ValueError(f"inverted or degenerate box bounds lo={lo} hi={hi}")
    space = space or VariableSpace.of("x", len(lo))
    if space.arity != len(lo):
        raise StructureError("box dimension does not match the space")
    cons = []
    for i, (a, b) in enumerate(zip(lo, hi)):
        xi = Polynomial.variable(space, i)
        cons.append((xi - a) * (b - xi))
    return SemiAlgebraicSet(space, tuple(cons), label, lo, hi, True)


def whole_space(space: VariableSpace, lo: Sequence[float] | None = None,
                hi: Sequence[float] | None = None, label: str = "") -> SemiAlgebraicSet:
    return SemiAlgebraicSet(space, (), label, None if lo is None else tuple(lo),
                            None if hi is None else tuple(hi))


def rebase(S: SemiAlgebraicSet, space: VariableSpace) -> SemiAlgebraicSet:
    """Same set expressed over a renamed space of equal arity."""
    if space.arity != S.arity:
        raise StructureError("rebase needs equal arity")
    if space == S.space:
        return S
    cons = tuple(Polynomial(space, dict(g.items())) for g in S.constraints)
    return SemiAlgebraicSet(space, cons, S.label, S.lo, S.hi, S.is_box)


def product_set(*sets: SemiAlgebraicSet, space: VariableSpace | None = None,
                label: str = "") -> SemiAlgebraicSet:
    """Cartesian product; factor ``b`` occupies the ``b``-th block of the product space."""
    if not sets:
        raise ValueError("product of zero sets")
    total = sum(s.arity for s in sets)
    if space is None:
        names: list[str] = []
        for s in sets:
            names.extend(s.space.names)
        if len(set(names)) == len(names):
            space = VariableSpace(tuple(names))
        elif all(s.arity == sets[0].arity for s in sets):
            space = block_space(sets[0].arity, len(sets))
        else:
            raise StructureError("clashing variable names; pass an explicit product space")
    if space.arity != total:
        raise StructureError("product space arity does not match the factors")
    cons: list[Polynomial] = []
    offset = 0
    for s in sets:
        cons.extend(g.lift(space, offset) for g in s.constraints)
        offset += s.arity
    if all(s.has_bbox for s in sets):
        lo = tuple(v for s in sets for v in s.lo)
        hi = tuple(v for s in sets for v in s.hi)
    else:
        lo = hi = None
    is_box = all(s.is_box for s in sets)
    label = label or " x ".join(s.label or "?" for s in sets)
    return SemiAlgebraicSet(space, tuple(cons), label, lo, hi, is_box)


def _box_bounds(S: SemiAlgebraicSet) -> tuple[np.ndarray, np.ndarray]:
    if not S.is_box:
        raise ValueError(f"set {S.label!r} is not an axis-aligned box")
    return np.array(S.lo), np.array(S.hi)


def _slab_complement(lo, hi, ilo, ihi) -> list[tuple[np.ndarray, np.ndarray]]:
    pieces = []
    cur_lo, cur_hi = lo.copy(), hi.copy()
    for d in range(len(lo)):
        if ilo[d] > cur_lo[d]:
            a, b = cur_lo.copy(), cur_hi.copy()
            b[d] = ilo[d]
            pieces.append((a, b))
        if ihi[d] < cur_hi[d]:
            a, b = cur_lo.copy(), cur_hi.copy()
            a[d] = ihi[d]
            pieces.append((a, b))
        cur_lo[d], cur_hi[d] = ilo[d], ihi[d]
    return pieces


def _merge_boxes(boxes: list[tuple[np.ndarray, np.ndarray]]):
    boxes = [(a.copy(), b.copy()) for a, b in boxes]
    merged = True
    while merged:
        merged = False
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                (a1, b1), (a2, b2) = boxes[i], boxes[j]
                diff = [d for d in range(len(a1)) if a1[d] != a2[d] or b1[d] != b2[d]]
                if len(diff) != 1:
                    continue
                d = diff[0]
                if b1[d] == a2[d] or b2[d] == a1[d]:
                    lo = a1.copy()
                    hi = b1.copy()
                    lo[d] = min(a1[d], a2[d])
                    hi[d] = max(b1[d], b2[d])
                    boxes[i] = (lo, hi)
                    del boxes[j]
                    merged = True
                    break
            if merged:
                break
    return boxes


def box_complement(outer: SemiAlgebraicSet, inner: SemiAlgebraicSet | RegionUnion,
                   label: str = "") -> RegionUnion:
    """Tile ``outer`` minus ``inner`` by closed axis-aligned boxes.

    ``inner`` is a box or a union of boxes contained in ``outer``. A single
    inner box yields at most ``2 * arity`` pieces. Shared faces may overlap.
    The result is empty (``is_empty``) when the inner boxes cover ``outer``.
    """
    lo, hi = _box_bounds(outer)
    inners = list(inner.pieces) if isinstance(inner, RegionUnion) else [inner]
    pieces = [(lo, hi)]
    for box in inners:
        ilo, ihi = _box_bounds(box)
        if np.any(ilo < lo - 1e-12) or np.any(ihi > hi + 1e-12):
            raise ValueError(f"inner box {box.label!r} is not contained in the outer box")
        nxt = []
        for plo, phi in pieces:
            clo, chi = np.maximum(plo, ilo), np.minimum(phi, ihi)
            if np.any(clo >= chi):
                nxt.append((plo, phi))
                continue
            nxt.extend(_slab_complement(plo, phi, clo, chi))
        pieces = nxt
    if len(inners) > 1:
        pieces = _merge_boxes(pieces)
    base = label or f"{outer.label or 'outer'}\\inner"
    sets = tuple(box_set(a, b, outer.space, f"{base}[{i}]") for i, (a, b) in enumerate(pieces))
    return RegionUnion(outer.space, sets, base)


@dataclass
class SampleResult:
    points: np.ndarray
    drawn: int
    accepted: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.drawn if self.drawn else 0.0


def sample_set(S: SemiAlgebraicSet, count: int, seed: int = 0,
               lo: Sequence[float] | None = None, hi: Sequence[float] | None = None,
               boundary_fraction: float = 0.0, min_rate: float = 1e-4,
               min_draws: int = 100_000, batch: int = 4096) -> SampleResult:
    """Seeded rejection sampling from the bounding box of ``S``.

    A ``boundary_fraction`` of the candidates get one random coordinate
    snapped to a face of the bounding box. Every returned point satisfies
    all constraints with value >= 0.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if lo is None:
        if not S.has_bbox:
            raise ValueError(f"set {S.label!r} has no bounding box; supply one")
        lo, hi = S.lo, S.hi
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    rng = np.random.default_rng(seed)
    got: list[np.ndarray] = []
    n_got = drawn = 0
    while n_got < count:
        cand = lo + (hi - lo) * rng.random((batch, len(lo)))
        if boundary_fraction > 0:
            snap = rng.random(batch) < boundary_fraction
            idx = np.flatnonzero(snap)
            dims = rng.integers(0, len(lo), size=idx.size)
            side = rng.random(idx.size) < 0.5
            cand[idx, dims] = np.where(side, lo[dims], hi[dims])
        drawn += batch
        ok = S.contains_many(cand)
        if ok.any():
            got.append(cand[ok])
            n_got += int(ok.sum())
        if drawn >= min_draws and n_got / drawn < min_rate:
            raise SamplingError(
                f"acceptance rate {n_got / drawn:.2e} below {min_rate:g} for set {S.label!r}")
    pts = np.concatenate(got)[:count]
    return SampleResult(pts, drawn, n_got)
