"""Sum-of-squares programs lowered to standard-form SDPs.

A program owns scalar decision variables (template coefficients, margins
such as eta, free slacks) and a list of constraints of the form

    expr(x) is SOS on {x : g_1(x) >= 0, ..., g_m(x) >= 0},

which are certified in Putinar form ``expr = sigma_0 + sum_i sigma_i g_i``.
Each ``sigma`` is a Gram block ``z^T Q z`` over a graded-lex monomial basis;
matching coefficients of every monomial up to the constraint's even target
degree ``D`` yields one equality row.

Expressions are affine in the decision variables: every certificate matrix
and S-procedure constant is fixed before the program is built, and any
attempt to multiply two decision-bearing expressions raises
:class:`BilinearityError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .poly import Exponent, Polynomial, PowerCache, StructureError, VariableSpace, monomial_basis
from .sdpcore import SdpBuilder, SdpProblem, SdpSolution, SolverOptions, solve
from .semialg import SemiAlgebraicSet


class BilinearityError(TypeError):
    """Product of two expressions that both contain decision variables."""


class SizingError(ValueError):
    """Target degree of an SOS constraint is too small or malformed."""


# ---------------------------------------------------------------------------
# affine polynomial expressions


class AffinePolyExpr:
    """``const + sum_v u_v * weight_v`` with polynomial weights over one space."""

    __slots__ = ("space", "const", "lin")

    def __init__(self, space: VariableSpace, const: Polynomial | None = None,
                 lin: Mapping[int, Polynomial] | None = None):
        self.space = space
        self.const = const if const is not None else Polynomial.zero(space)
        if self.const.space != space:
            raise StructureError("constant part lives in another space")
        clean: dict[int, Polynomial] = {}
        for v, p in (lin or {}).items():
            if p.space != space:
                raise StructureError("linear weight lives in another space")
            if not p.is_zero():
                clean[int(v)] = p
        self.lin = dict(sorted(clean.items()))

    @classmethod
    def of(cls, p: Polynomial) -> "AffinePolyExpr":
        return cls(p.space, p)

    @classmethod
    def scalar(cls, space: VariableSpace, var: int, weight: float = 1.0) -> "AffinePolyExpr":
        return cls(space, None, {var: Polynomial.constant(space, weight)})

    @property
    def is_constant(self) -> bool:
        return not self.lin

    @property
    def degree(self) -> int:
        return max([self.const.degree] + [p.degree for p in self.lin.values()])

    @property
    def fixed_degree(self) -> int:
        return self.degree

    def variables(self) -> list[int]:
        return list(self.lin)

    def _coerce(self, other) -> "AffinePolyExpr":
        if isinstance(other, AffinePolyExpr):
            if other.space != self.space:
                raise StructureError("expressions live in different spaces")
            return other
        if isinstance(other, Polynomial):
            if other.space != self.space:
                raise StructureError("polynomial lives in another space")
            return AffinePolyExpr(self.space, other)
        if isinstance(other, (int, float, np.floating, np.integer)):
            return AffinePolyExpr(self.space, Polynomial.constant(self.space, float(other)))
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        lin = dict(self.lin)
        for v, p in o.lin.items():
            lin[v] = lin[v] + p if v in lin else p
        return AffinePolyExpr(self.space, self.const + o.const, lin)

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return self + (-o)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, s: float) -> "AffinePolyExpr":
        return AffinePolyExpr(self.space, self.const.scale(s),
                              {v: p.scale(s) for v, p in self.lin.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(float(other))
        if isinstance(other, AffinePolyExpr):
            if other.space != self.space:
                raise StructureError("expressions live in different spaces")
            if self.lin and other.lin:
                raise BilinearityError("product of two decision-bearing expressions")
            if not self.lin:
                return other * self.const
            other = other.const
        if isinstance(other, Polynomial):
            if other.space != self.space:
                raise StructureError("polynomial lives in another space")
            return AffinePolyExpr(self.space, self.const * other,
                                  {v: p * other for v, p in self.lin.items()})
        return NotImplemented

    __rmul__ = __mul__

    def evaluate(self, values: Mapping[int, float] | Sequence[float]) -> Polynomial:
        """Substitute decision values, giving a plain polynomial."""
        out = self.const
        for v, p in self.lin.items():
            val = values[v]
            if val != 0.0:
                out = out + p.scale(float(val))
        return out

    def __repr__(self):
        return f"AffinePolyExpr({self.space.names}, const={self.const}, vars={list(self.lin)})"


def s_procedure_expr(head: AffinePolyExpr,
                     antecedents: Iterable[tuple[float, AffinePolyExpr]]) -> AffinePolyExpr:
    """``head - sum c * antecedent`` for fixed nonnegative multipliers ``c``."""
    out = head
    for c, expr in antecedents:
        c = float(c)
        if c < 0 or not math.isfinite(c):
            raise ValueError(f"S-procedure multiplier must be a finite nonnegative constant, got {c}")
        if c != 0.0:
            out = out - expr.scale(c)
    return out


# ---------------------------------------------------------------------------
# templates


@dataclass(frozen=True)
class TemplateId:
    id: int
    space: VariableSpace
    degree: int
    basis: tuple[Exponent, ...]
    first_var: int
    name: str = ""

    @property
    def n_coefs(self) -> int:
        return len(self.basis)

    @property
    def coef_vars(self) -> range:
        return range(self.first_var, self.first_var + len(self.basis))

    def expr(self) -> AffinePolyExpr:
        lin = {self.first_var + m: Polynomial.monomial(self.space, e)
               for m, e in enumerate(self.basis)}
        return AffinePolyExpr(self.space, None, lin)

    def at(self, args: Sequence[Polynomial], target: VariableSpace,
           cache: PowerCache | None = None) -> AffinePolyExpr:
        """Template with its variable ``i`` replaced by ``args[i]`` (polynomials over ``target``).

        Arguments that are bare variables are applied as index shifts; others
        are multiplied out. Pass a shared ``cache`` when the same argument
        map is used for many templates.
        """
        if cache is None:
            cache = argument_cache(args, target)
        lin = {self.first_var + m: cache.monomial(e) for m, e in enumerate(self.basis)}
        return AffinePolyExpr(target, None, lin)

    def polynomial(self, values: Sequence[float] | np.ndarray) -> Polynomial:
        coefs = [float(values[v]) for v in self.coef_vars]
        return Polynomial.from_coefficients(self.space, self.basis, coefs)


def argument_cache(args: Sequence[Polynomial], target: VariableSpace) -> PowerCache:
    sub: dict[int, Polynomial] = {}
    keep: dict[int, int] = {}
    for i, a in enumerate(args):
        if a.space != target:
            raise StructureError("template arguments must live in the target space")
        items = list(a.items())
        if len(items) == 1 and items[0][1] == 1.0 and sum(items[0][0]) == 1:
            keep[i] = items[0][0].index(1)
        else:
            sub[i] = a
    return PowerCache(sub, keep, target)


def variables_of(space: VariableSpace, positions: Sequence[int] | None = None) -> list[Polynomial]:
    """Coordinate polynomials of ``space`` (optionally a subset, in the given order)."""
    idx = range(space.arity) if positions is None else positions
    return [Polynomial.variable(space, i) for i in idx]


# ---------------------------------------------------------------------------
# program


@dataclass
class ScalarVar:
    name: str
    lb: float = -math.inf
    ub: float = math.inf
    cost: float = 0.0


@dataclass
class SosConstraint:
    id: int
    expr: AffinePolyExpr
    domain: SemiAlgebraicSet
    degree: int                              # even target degree D
    multipliers: tuple[Polynomial, ...]      # domain constraints as used (normalized)
    principal_basis: tuple[Exponent, ...]
    multiplier_bases: tuple[tuple[Exponent, ...], ...]
    label: str = ""

    @property
    def n_rows(self) -> int:
        return math.comb(self.expr.space.arity + self.degree, self.degree)

    @property
    def block_dims(self) -> list[int]:
        return [len(self.principal_basis)] + [len(b) for b in self.multiplier_bases]


def default_target_degree(expr_degree: int, boost: int = 0) -> int:
    return 2 * math.ceil(max(expr_degree, 0) / 2) + 2 * int(boost)


class SosProgram:
    """Builder for an SOS program with scalar decision variables."""

    def __init__(self, name: str = "", normalize_domains: bool = True):
        self.name = name
        self.normalize_domains = normalize_domains
        self.scalars: list[ScalarVar] = []
        self.templates: list[TemplateId] = []
        self.constraints: list[SosConstraint] = []

    # variables ------------------------------------------------------------
    def new_scalar(self, name: str = "", lb: float = -math.inf, ub: float = math.inf,
                   cost: float = 0.0) -> int:
        self.scalars.append(ScalarVar(name or f"s{len(self.scalars)}", lb, ub, cost))
        return len(self.scalars) - 1

    def declare_template(self, space: VariableSpace, degree: int, name: str = "") -> TemplateId:
        if degree < 0:
            raise ValueError("template degree must be nonnegative")
        basis = tuple(monomial_basis(space, degree))
        first = len(self.scalars)
        tname = name or f"T{len(self.templates)}"
        for m in range(len(basis)):
            self.scalars.append(ScalarVar(f"{tname}.c{m}"))
        tid = TemplateId(len(self.templates), space, degree, basis, first, tname)
        self.templates.append(tid)
        return tid

    def scalar_expr(self, var: int, space: VariableSpace, weight: float = 1.0) -> AffinePolyExpr:
        return AffinePolyExpr.scalar(space, var, weight)

    # constraints ------------------------------------------------------------
    def add_sos_on_set(self, expr: AffinePolyExpr | Polynomial, domain: SemiAlgebraicSet,
                       target_degree: int | None = None, boost: int = 0,
                       label: str = "") -> int:
        if isinstance(expr, Polynomial):
            expr = AffinePolyExpr.of(expr)
        if domain.space != expr.space:
            raise StructureError(f"domain of {label or 'constraint'} lives in another space")
        deg = expr.degree
        D = default_target_degree(deg, boost) if target_degree is None else int(target_degree)
        if D % 2:
            raise SizingError(f"target degree {D} must be even")
        if D < deg:
            raise SizingError(f"target degree {D} below expression degree {deg}")
        for v in expr.lin:
            if not 0 <= v < len(self.scalars):
                raise StructureError(f"expression references unknown variable {v}")
        mults = []
        bases = []
        for g in domain.constraints:
            if g.degree > D:
                raise SizingError(f"domain constraint degree {g.degree} exceeds target degree {D}")
            if self.normalize_domains and not g.is_zero():
                g = g.scale(1.0 / g.max_abs_coef())
            mults.append(g)
            bases.append(tuple(monomial_basis(expr.space, (D - g.degree) // 2)))
        c = SosConstraint(len(self.constraints), expr, domain, D, tuple(mults),
                          tuple(monomial_basis(expr.space, D // 2)), tuple(bases),
                          label or f"c{len(self.constraints)}")
        self.constraints.append(c)
        return c.id

    # lowering -----------------------------------------------------------------
    def size_report(self) -> dict:
        blocks = [d for c in self.constraints for d in c.block_dims]
        return {
            "constraints": len(self.constraints),
            "blocks": len(blocks),
            "max_block": max(blocks, default=0),
            "block_entries": int(sum(d * (d + 1) // 2 for d in blocks)),
            "equalities": int(sum(c.n_rows for c in self.constraints)),
            "scalars": len(self.scalars),
            "templates": len(self.templates),
        }

    def compile(self) -> "CompiledProgram":
        b = SdpBuilder()
        for s in self.scalars:
            b.add_free(s.name, s.lb, s.ub, s.cost)
        layout: list[tuple[int, list[int]]] = []
        for c in self.constraints:
            row0 = len(b.b)
            rows = list(monomial_basis(c.expr.space, c.degree))
            index = _row_index(rows, c.degree)
            for a in rows:
                b.add_row(c.expr.const.coefficient(a), f"{c.label}:{a}")
            for v, p in c.expr.lin.items():
                for e, coef in p.items():
                    b.add_free_entry(row0 + index[e], v, -coef)
            blocks = []
            bk = b.add_block(len(c.principal_basis), f"{c.label}.sigma0")
            _gram_entries(b, bk, row0, c.principal_basis, None, c.degree)
            blocks.append(bk)
            for i, (g, basis) in enumerate(zip(c.multipliers, c.multiplier_bases)):
                bk = b.add_block(len(basis), f"{c.label}.sigma{i + 1}")
                _gram_entries(b, bk, row0, basis, g, c.degree)
                blocks.append(bk)
            layout.append((row0, blocks))
        return CompiledProgram(self, b.build(), layout)

    def solve(self, opts: SolverOptions | None = None, **kw) -> "SosSolution":
        return self.compile().solve(opts, **kw)


def _encode(exps: np.ndarray, base: int) -> np.ndarray:
    w = base ** np.arange(exps.shape[1], dtype=np.int64)
    return exps.astype(np.int64) @ w


def _row_index(rows: list[Exponent], D: int) -> dict[Exponent, int]:
    return {e: i for i, e in enumerate(rows)}


def _gram_entries(b: SdpBuilder, block: int, row0: int, basis: Sequence[Exponent],
                  g: Polynomial | None, D: int):
    """Coefficient of each row monomial in ``z_p z_q g`` for ``p <= q``."""
    if not basis:
        return
    n = len(basis[0])
    Z = np.array(basis, dtype=np.int64).reshape(len(basis), n)
    rows = np.array(monomial_basis(n, D), dtype=np.int64).reshape(-1, n)
    base = D + 1
    keys = _encode(rows, base)
    order = np.argsort(keys)
    sorted_keys = keys[order]
    iu, ju = np.triu_indices(len(basis))
    pair = Z[iu] + Z[ju]
    terms = [((0,) * n, 1.0)] if g is None else list(g.items())
    all_r, all_i, all_j, all_v = [], [], [], []
    for e, coef in terms:
        ex = pair + np.array(e, dtype=np.int64)
        k = _encode(ex, base)
        pos = np.searchsorted(sorted_keys, k)
        if np.any(pos >= len(sorted_keys)) or np.any(sorted_keys[np.minimum(pos, len(sorted_keys) - 1)] != k):
            raise SizingError("Gram product leaves the coefficient-matching basis")
        all_r.append(order[pos] + row0)
        all_i.append(iu)
        all_j.append(ju)
        all_v.append(np.full(len(iu), coef))
    b.add_block_entries(block, np.concatenate(all_r), np.concatenate(all_i),
                        np.concatenate(all_j), np.concatenate(all_v))


@dataclass
class CompiledProgram:
    program: SosProgram
    sdp: SdpProblem
    layout: list[tuple[int, list[int]]]  # (first row, block ids) per constraint

    def size_report(self) -> dict:
        rep = self.program.size_report()
        rep.update({"sdp_" + k: v for k, v in self.sdp.size_report().items()})
        return rep

    def solve(self, opts: SolverOptions | None = None, **kw) -> "SosSolution":
        sol = solve(self.sdp, opts, **kw)
        return SosSolution(self, sol)


@dataclass
class SosSolution:
    compiled: CompiledProgram
    sdp_solution: SdpSolution

    @property
    def status(self):
        return self.sdp_solution.status

    @property
    def optimal(self) -> bool:
        return self.sdp_solution.optimal

    @property
    def values(self) -> np.ndarray:
        return self.sdp_solution.u

    def value(self, var: int) -> float:
        return float(self.sdp_solution.u[var])

    def template(self, tid: TemplateId) -> Polynomial:
        return tid.polynomial(self.sdp_solution.u)

    def grams(self, constraint_id: int) -> list[np.ndarray]:
        _, blocks = self.compiled.layout[constraint_id]
        return [self.sdp_solution.X[k] for k in blocks]

    def constraint_polynomial(self, constraint_id: int) -> Polynomial:
        c = self.compiled.program.constraints[constraint_id]
        return c.expr.evaluate(self.sdp_solution.u)

    def reconstruction_residual(self, constraint_id: int) -> float:
        c = self.compiled.program.constraints[constraint_id]
        return gram_residual(c.expr.evaluate(self.sdp_solution.u), self.grams(constraint_id),
                             c.principal_basis, c.multiplier_bases, c.multipliers)

    def min_eigenvalues(self, constraint_id: int) -> list[float]:
        return [float(np.linalg.eigvalsh(Q)[0]) for Q in self.grams(constraint_id)]


def gram_polynomial(Q: np.ndarray, basis: Sequence[Exponent], space: VariableSpace) -> Polynomial:
    """``z^T Q z`` as a polynomial."""
    terms: dict[Exponent, float] = {}
    m = len(basis)
    for p in range(m):
        for q in range(m):
            v = Q[p, q]
            if v != 0.0:
                e = tuple(a + b for a, b in zip(basis[p], basis[q]))
                terms[e] = terms.get(e, 0.0) + float(v)
    return Polynomial(space, terms)


def gram_residual(target: Polynomial, grams: Sequence[np.ndarray],
                  principal_basis: Sequence[Exponent],
                  multiplier_bases: Sequence[Sequence[Exponent]],
                  multipliers: Sequence[Polynomial]) -> float:
    """Max-abs coefficient of ``target - sigma_0 - sum sigma_i g_i``."""
    space = target.space
    recon = gram_polynomial(grams[0], principal_basis, space)
    for Q, basis, g in zip(grams[1:], multiplier_bases, multipliers):
        recon = recon + gram_polynomial(Q, basis, space) * g
    diff = target - recon
    return diff.max_abs_coef() if not diff.is_zero() else 0.0
