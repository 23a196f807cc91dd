"""Sparse multivariate polynomials over named variables.

Terms are stored as ``{exponent tuple: float coefficient}`` with zero
coefficients dropped. Monomials are ordered graded-lexicographically by
the key ``(degree, exponents)`` ascending, so the basis of two variables
up to degree one is ``[1, x2, x1]``. Every listing of terms (evaluation,
serialization, SDP indexing) follows this order.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Iterable, Mapping, Sequence

import numpy as np

Exponent = tuple[int, ...]


class StructureError(ValueError):
    """Operands live in incompatible variable spaces or are malformed."""


def grlex_key(exps: Exponent) -> tuple[int, Exponent]:
    return (sum(exps), exps)


@dataclass(frozen=True)
class VariableSpace:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(set(names)) != len(names):
            raise StructureError(f"duplicate variable names in {names}")

    @classmethod
    def of(cls, prefix: str, n: int) -> "VariableSpace":
        return cls(tuple(f"{prefix}{i + 1}" for i in range(n)))

    @property
    def arity(self) -> int:
        return len(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def concat(self, other: "VariableSpace") -> "VariableSpace":
        return VariableSpace(self.names + other.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise StructureError(f"unknown variable {name!r} in {self.names}") from None


@lru_cache(maxsize=None)
def _basis_exponents(arity: int, max_degree: int) -> tuple[Exponent, ...]:
    out: list[Exponent] = []
    for d in range(max_degree + 1):
        # combinations of variable indices with repetition give each monomial once
        for combo in combinations_with_replacement(range(arity), d):
            e = [0] * arity
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    out.sort(key=grlex_key)
    return tuple(out)


def monomial_basis(space: VariableSpace | int, max_degree: int) -> list[Exponent]:
    """All exponent vectors of degree <= max_degree in graded-lex order."""
    if max_degree < 0:
        raise ValueError("max_degree must be nonnegative")
    arity = space if isinstance(space, int) else space.arity
    return list(_basis_exponents(arity, max_degree))


def basis_size(arity: int, max_degree: int) -> int:
    return math.comb(arity + max_degree, max_degree)


class Polynomial:
    """Immutable sparse polynomial in canonical form."""

    __slots__ = ("space", "_terms", "_hash")

    def __init__(self, space: VariableSpace, terms: Mapping[Exponent, float] | None = None):
        self.space = space
        clean: dict[Exponent, float] = {}
        if terms:
            n = space.arity
            for e, c in terms.items():
                e = tuple(int(v) for v in e)
                if len(e) != n:
                    raise StructureError(f"exponent {e} has wrong length for {space.names}")
                if any(v < 0 for v in e):
                    raise StructureError(f"negative exponent in {e}")
                c = float(c)
                if c != 0.0:
                    clean[e] = clean.get(e, 0.0) + c
            clean = {e: c for e, c in clean.items() if c != 0.0}
        self._terms = dict(sorted(clean.items(), key=lambda kv: grlex_key(kv[0])))
        self._hash = None

    # constructors -------------------------------------------------------
    @classmethod
    def zero(cls, space: VariableSpace) -> "Polynomial":
        return cls(space)

    @classmethod
    def constant(cls, space: VariableSpace, value: float) -> "Polynomial":
        return cls(space, {(0,) * space.arity: value})

    @classmethod
    def variable(cls, space: VariableSpace, name: str | int) -> "Polynomial":
        i = name if isinstance(name, int) else space.index(name)
        e = [0] * space.arity
        e[i] = 1
        return cls(space, {tuple(e): 1.0})

    @classmethod
    def monomial(cls, space: VariableSpace, exps: Exponent, coef: float = 1.0) -> "Polynomial":
        return cls(space, {tuple(exps): coef})

    @classmethod
    def from_coefficients(cls, space: VariableSpace, basis: Sequence[Exponent],
                          coefs: Iterable[float]) -> "Polynomial":
        coefs = list(coefs)
        if len(coefs) != len(basis):
            raise StructureError("coefficient count does not match basis length")
        terms: dict[Exponent, float] = {}
        for e, c in zip(basis, coefs):
            terms[e] = terms.get(e, 0.0) + float(c)
        return cls(space, terms)

    # basic queries ------------------------------------------------------
    @property
    def terms(self) -> dict[Exponent, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        if not self._terms:
            return 0
        return max(sum(e) for e in self._terms)

    def coefficient(self, exps: Exponent) -> float:
        return self._terms.get(tuple(exps), 0.0)

    def max_abs_coef(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def coefficient_vector(self, basis: Sequence[Exponent]) -> np.ndarray:
        index = {e: i for i, e in enumerate(basis)}
        out = np.zeros(len(basis))
        for e, c in self._terms.items():
            if e not in index:
                raise StructureError(f"term {e} not in supplied basis")
            out[index[e]] = c
        return out

    def variables_used(self) -> set[int]:
        used = set()
        for e in self._terms:
            used.update(i for i, v in enumerate(e) if v)
        return used

    # arithmetic -----------------------------------------------------------
    def _check(self, other: "Polynomial"):
        if self.space != other.space:
            raise StructureError(
                f"space mismatch: {self.space.names} vs {other.space.names}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.space, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self._terms)
        for e, c in other._terms.items():
            terms[e] = terms.get(e, 0.0) + c
        return Polynomial(self.space, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.space, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, s: float) -> "Polynomial":
        s = float(s)
        if s == 0.0:
            return Polynomial(self.space)
        return Polynomial(self.space, {e: s * c for e, c in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(other)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms: dict[Exponent, float] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0.0) + c1 * c2
        return Polynomial(self.space, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only nonnegative integer powers")
        result = Polynomial.constant(self.space, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.space == other.space and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.space, tuple(self._terms.items())))
        return self._hash

    def almost_equal(self, other: "Polynomial", tol: float = 1e-12) -> bool:
        self._check(other)
        return (self - other).max_abs_coef() <= tol

    # evaluation -----------------------------------------------------------
    def evaluate(self, point: Sequence[float]) -> float:
        """Sum of terms in graded order at a single point."""
        point = [float(v) for v in point]
        if len(point) != self.space.arity:
            raise StructureError(
                f"point has length {len(point)}, expected {self.space.arity}")
        total = 0.0
        for e, c in self._terms.items():
            term = c
            for v, k in zip(point, e):
                if k:
                    term *= v ** k
            total += term
        return total

    __call__ = evaluate

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.space.arity:
            raise StructureError(
                f"points have width {pts.shape[1]}, expected {self.space.arity}")
        if not self._terms:
            return np.zeros(pts.shape[0])
        exps = np.array(list(self._terms.keys()), dtype=int)
        coefs = np.array(list(self._terms.values()))
        vals = np.ones((pts.shape[0], exps.shape[0]))
        for j in range(exps.shape[1]):
            col = exps[:, j]
            if col.any():
                vals *= pts[:, j:j + 1] ** col[None, :]
        return vals @ coefs

    # structural maps ------------------------------------------------------
    def lift(self, space: VariableSpace, offset: int) -> "Polynomial":
        """Embed into ``space`` with this polynomial's variables starting at ``offset``."""
        n = self.space.arity
        if offset < 0 or offset + n > space.arity:
            raise StructureError("lift target does not fit")
        pre, post = (0,) * offset, (0,) * (space.arity - offset - n)
        return Polynomial(space, {pre + e + post: c for e, c in self._terms.items()})

    def embed(self, space: VariableSpace, positions: Sequence[int]) -> "Polynomial":
        """Map variable i of this polynomial to variable ``positions[i]`` of ``space``."""
        if len(positions) != self.space.arity:
            raise StructureError("position map has wrong length")
        terms: dict[Exponent, float] = {}
        for e, c in self._terms.items():
            new = [0] * space.arity
            for i, k in enumerate(e):
                new[positions[i]] += k
            t = tuple(new)
            terms[t] = terms.get(t, 0.0) + c
        return Polynomial(space, terms)

    def compose(self, subst: Mapping[int | str, "Polynomial"],
                target: VariableSpace | None = None,
                keep: Mapping[int, int] | None = None) -> "Polynomial":
        """Replace designated variables by polynomials.

        ``subst`` maps variable indices (or names) of this polynomial to
        polynomials over ``target`` (default: this polynomial's space).
        Variables not in ``subst`` are mapped through ``keep`` (source index ->
        target index); when ``target`` is the own space they stay in place.
        """
        target = target or self.space
        sub: dict[int, Polynomial] = {}
        for k, p in subst.items():
            i = k if isinstance(k, int) else self.space.index(k)
            if p.space != target:
                raise StructureError("substituted polynomials must share the target space")
            sub[i] = p
        if keep is None:
            if target != self.space:
                missing = [i for i in range(self.space.arity) if i not in sub]
                if missing:
                    raise StructureError(
                        f"missing substitution for {[self.space.names[i] for i in missing]}")
            keep = {i: i for i in range(self.space.arity) if i not in sub}
        for i in range(self.space.arity):
            if i not in sub and i not in keep:
                raise StructureError(f"missing substitution for {self.space.names[i]}")
        return compose_terms(self._terms, sub, keep, target)

    # text -------------------------------------------------------------------
    def to_text(self) -> str:
        return format_terms(self._terms, self.space)

    def __str__(self):
        return self.to_text()

    def __repr__(self):
        return f"Polynomial({self.space.names}, {self.to_text()!r})"

    @classmethod
    def parse(cls, text: str, space: VariableSpace) -> "Polynomial":
        return parse_polynomial(text, space)


class PowerCache:
    """Caches substituted monomials for repeated composition with one map."""

    def __init__(self, sub: Mapping[int, Polynomial], keep: Mapping[int, int],
                 target: VariableSpace):
        self.sub = dict(sub)
        self.keep = dict(keep)
        self.target = target
        self._powers: dict[tuple[int, int], Polynomial] = {}
        self._monos: dict[Exponent, Polynomial] = {}
        self._one = Polynomial.constant(target, 1.0)

    def _power(self, i: int, k: int) -> Polynomial:
        hit = self._powers.get((i, k))
        if hit is None:
            hit = self.sub[i] if k == 1 else self._power(i, k - 1) * self.sub[i]
            self._powers[(i, k)] = hit
        return hit

    def monomial(self, exps: Exponent) -> Polynomial:
        exps = tuple(exps)
        hit = self._monos.get(exps)
        if hit is not None:
            return hit
        # kept variables are a pure exponent shift; substituted ones multiply out
        shift = [0] * self.target.arity
        result = self._one
        for i, k in enumerate(exps):
            if not k:
                continue
            if i in self.sub:
                result = result * self._power(i, k)
            else:
                shift[self.keep[i]] += k
        if any(shift):
            s = tuple(shift)
            result = Polynomial(self.target, {tuple(a + b for a, b in zip(e, s)): c
                                              for e, c in result.items()})
        self._monos[exps] = result
        return result


def compose_terms(terms: Mapping[Exponent, float], sub: Mapping[int, Polynomial],
                  keep: Mapping[int, int], target: VariableSpace,
                  cache: PowerCache | None = None) -> Polynomial:
    cache = cache or PowerCache(sub, keep, target)
    acc: dict[Exponent, float] = {}
    for e, c in terms.items():
        for me, mc in cache.monomial(e).items():
            acc[me] = acc.get(me, 0.0) + c * mc
    return Polynomial(target, acc)


def _format_coef(c: float) -> str:
    return repr(float(c))


def format_terms(terms: Mapping[Exponent, float], space: VariableSpace) -> str:
    if not terms:
        return "0"
    parts: list[str] = []
    for e, c in sorted(terms.items(), key=lambda kv: grlex_key(kv[0])):
        factors = []
        for name, k in zip(space.names, e):
            if k == 1:
                factors.append(name)
            elif k > 1:
                factors.append(f"{name}^{k}")
        sign = "-" if c < 0 else "+"
        body = "*".join([_format_coef(abs(c))] + factors)
        if not parts:
            parts.append(("-" if c < 0 else "") + body)
        else:
            parts.append(f" {sign} {body}")
    return "".join(parts)


_NUM = r"(?:\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|inf|nan)"
_TERM = re.compile(
    rf"\s*([+-]?)\s*(?:({_NUM})\s*(\*)?)?\s*((?:[A-Za-z_][A-Za-z0-9_]*(?:\s*\^\s*\d+)?\s*\*?\s*)*)")
_FACTOR = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)(?:\s*\^\s*(\d+))?")


def parse_polynomial(text: str, space: VariableSpace) -> Polynomial:
    """Parse ``coef*x1^a*y2^b`` sums, the output format of :meth:`Polynomial.to_text`."""
    s = text.strip()
    if not s:
        raise StructureError("empty polynomial text")
    terms: dict[Exponent, float] = {}
    pos = 0
    first = True
    while pos < len(s):
        m = _TERM.match(s, pos)
        if not m or m.end() == pos:
            raise StructureError(f"cannot parse polynomial near {s[pos:pos + 20]!r}")
        sign, num, _, facs = m.groups()
        if not first and not sign:
            raise StructureError(f"missing operator near {s[pos:pos + 20]!r}")
        if num is None and not facs.strip():
            raise StructureError(f"empty term near {s[pos:pos + 20]!r}")
        coef = float(num) if num is not None else 1.0
        if sign == "-":
            coef = -coef
        e = [0] * space.arity
        for fm in _FACTOR.finditer(facs):
            name, k = fm.group(1), fm.group(2)
            e[space.index(name)] += int(k) if k else 1
        t = tuple(e)
        terms[t] = terms.get(t, 0.0) + coef
        pos = m.end()
        first = False
    return Polynomial(space, terms)


def poly_add(p: Polynomial, q: Polynomial) -> Polynomial:
    return p + q


def poly_mul(p: Polynomial, q: Polynomial) -> Polynomial:
    return p * q


def poly_eval(p: Polynomial, point: Sequence[float]) -> float:
    return p.evaluate(point)


def poly_compose(p: Polynomial, subst: Mapping[int | str, Polynomial]) -> Polynomial:
    """Substitute a block of variables by polynomials over the same space.

    Typical use: ``p`` over a pair space ``(x, y)`` and ``subst`` mapping each
    ``x_i`` to ``f_i`` lifted into the pair space.
    """
    return p.compose(subst)
