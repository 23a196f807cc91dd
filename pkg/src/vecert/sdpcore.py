"""Standard-form semidefinite programs and a dense primal-dual interior-point solver.

Primal::

    minimize    sum_k <C_k, X_k> + c_free . u
    subject to  sum_k <A_ik, X_k> + (B u)_i = b_i     for every row i
                X_k PSD,  u free (optionally bounded)

Dual::

    maximize    b . y
    subject to  C_k - sum_i y_i A_ik = S_k PSD,   B^T y = c_free

Constraint matrices are symmetric; only upper-triangle entries are stored,
so an entry ``(i, j, v)`` with ``i < j`` contributes ``2 v X_ij`` to the
inner product. Blocks of dimension one are treated as a nonnegative orthant.

The solver is an infeasible-start path-following method using the HKM
search direction with Mehrotra predictor-corrector steps. Rows that share
no cone block decouple, so the normal matrix is block diagonal and is
factored cluster by cluster; free variables are eliminated through a small
Schur complement. Infeasibility is reported only when an iterate yields a
Farkas ray whose normalized residual is below ``infeas_tol``; otherwise
failure to converge is reported as ``MaxIter`` or ``NumericalFailure``.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)

MAX_ROWS = 4000


class SdpSizeError(ValueError):
    """Problem exceeds the dense-solver guardrail."""


class SdpFormatError(ValueError):
    """Malformed problem data."""


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITER = "MaxIter"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class BlockEntries:
    """Upper-triangle coefficients of one PSD block across rows."""
    rows: np.ndarray
    ii: np.ndarray
    jj: np.ndarray
    vals: np.ndarray

    @classmethod
    def empty(cls) -> "BlockEntries":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), z.copy(), np.zeros(0))


@dataclass
class SdpProblem:
    block_dims: list[int]
    n_free: int
    b: np.ndarray
    blocks: list[BlockEntries]
    free_rows: np.ndarray
    free_cols: np.ndarray
    free_vals: np.ndarray
    c_free: np.ndarray
    c_blocks: list[BlockEntries] = field(default_factory=list)
    free_lb: np.ndarray | None = None
    free_ub: np.ndarray | None = None
    free_names: list[str] = field(default_factory=list)
    block_names: list[str] = field(default_factory=list)
    row_labels: list[str] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return int(self.b.shape[0])

    @property
    def n_blocks(self) -> int:
        return len(self.block_dims)

    def size_report(self) -> dict:
        dims = list(self.block_dims)
        return {
            "blocks": len(dims),
            "psd_blocks": sum(1 for d in dims if d > 1),
            "max_block": max(dims, default=0),
            "block_entries": int(sum(d * (d + 1) // 2 for d in dims)),
            "equalities": self.n_rows,
            "free_scalars": self.n_free,
        }

    def block_matrix(self, k: int, row: int | None = None, objective: bool = False) -> np.ndarray:
        """Dense symmetric coefficient matrix of block ``k`` (for one row or the objective)."""
        n = self.block_dims[k]
        ent = self.c_blocks[k] if objective else self.blocks[k]
        sel = slice(None) if (objective or row is None) else ent.rows == row
        out = np.zeros((n, n))
        ii, jj, vv = ent.ii[sel], ent.jj[sel], ent.vals[sel]
        np.add.at(out, (ii, jj), vv)
        off = ii != jj
        np.add.at(out, (jj[off], ii[off]), vv[off])
        return out

    def objective_blocks(self) -> list[BlockEntries]:
        if self.c_blocks:
            return self.c_blocks
        return [BlockEntries.empty() for _ in self.block_dims]


class SdpBuilder:
    """Incremental construction of an :class:`SdpProblem`."""

    def __init__(self):
        self.block_dims: list[int] = []
        self.block_names: list[str] = []
        self._blk: list[tuple[list, list, list, list]] = []  # single entries
        self._chunks: list[list[tuple]] = []  # numpy batches, concatenated at build
        self._cblk: list[tuple[list, list, list]] = []
        self.free_names: list[str] = []
        self.free_lb: list[float] = []
        self.free_ub: list[float] = []
        self.c_free: list[float] = []
        self._fr: list[int] = []
        self._fc: list[int] = []
        self._fv: list[float] = []
        self.b: list[float] = []
        self.row_labels: list[str] = []

    def add_block(self, dim: int, name: str = "") -> int:
        if dim < 1:
            raise SdpFormatError("block dimension must be positive")
        self.block_dims.append(int(dim))
        self.block_names.append(name)
        self._blk.append(([], [], [], []))
        self._chunks.append([])
        self._cblk.append(([], [], []))
        return len(self.block_dims) - 1

    def add_free(self, name: str = "", lb: float = -math.inf, ub: float = math.inf,
                 cost: float = 0.0) -> int:
        self.free_names.append(name)
        self.free_lb.append(lb)
        self.free_ub.append(ub)
        self.c_free.append(cost)
        return len(self.free_names) - 1

    def set_free_cost(self, var: int, cost: float):
        self.c_free[var] = cost

    def add_row(self, rhs: float, label: str = "") -> int:
        self.b.append(float(rhs))
        self.row_labels.append(label)
        return len(self.b) - 1

    def add_block_entry(self, row: int, block: int, i: int, j: int, val: float):
        if i > j:
            i, j = j, i
        r, a, c, v = self._blk[block]
        r.append(row)
        a.append(i)
        c.append(j)
        v.append(val)

    def add_block_entries(self, block: int, rows, ii, jj, vals):
        ii = np.asarray(ii, dtype=np.int64)
        jj = np.asarray(jj, dtype=np.int64)
        self._chunks[block].append((np.asarray(rows, dtype=np.int64), np.minimum(ii, jj),
                                    np.maximum(ii, jj), np.asarray(vals, dtype=float)))

    def add_free_entry(self, row: int, var: int, val: float):
        self._fr.append(row)
        self._fc.append(var)
        self._fv.append(val)

    def add_block_cost(self, block: int, i: int, j: int, val: float):
        if i > j:
            i, j = j, i
        a, c, v = self._cblk[block]
        a.append(i)
        c.append(j)
        v.append(val)

    def build(self) -> SdpProblem:
        blocks = []
        for (r, a, c, v), chunks in zip(self._blk, self._chunks):
            parts = [(np.array(r, dtype=np.int64), np.array(a, dtype=np.int64),
                      np.array(c, dtype=np.int64), np.array(v, dtype=float))] + chunks
            blocks.append(_coalesce(*(np.concatenate(col) for col in zip(*parts))))
        cblocks = []
        for a, c, v in self._cblk:
            cblocks.append(_coalesce(np.zeros(len(a), dtype=np.int64), np.array(a, dtype=np.int64),
                                     np.array(c, dtype=np.int64), np.array(v, dtype=float)))
        fr, fc, fv = _coalesce_free(np.array(self._fr, dtype=np.int64),
                                    np.array(self._fc, dtype=np.int64),
                                    np.array(self._fv, dtype=float))
        return SdpProblem(
            block_dims=list(self.block_dims), n_free=len(self.free_names),
            b=np.array(self.b, dtype=float), blocks=blocks,
            free_rows=fr, free_cols=fc, free_vals=fv,
            c_free=np.array(self.c_free, dtype=float), c_blocks=cblocks,
            free_lb=np.array(self.free_lb, dtype=float), free_ub=np.array(self.free_ub, dtype=float),
            free_names=list(self.free_names), block_names=list(self.block_names),
            row_labels=list(self.row_labels))


def _coalesce(rows, ii, jj, vals) -> BlockEntries:
    if rows.size == 0:
        return BlockEntries.empty()
    order = np.lexsort((jj, ii, rows))
    rows, ii, jj, vals = rows[order], ii[order], jj[order], vals[order]
    key = np.stack([rows, ii, jj], axis=1)
    new = np.ones(len(rows), dtype=bool)
    new[1:] = np.any(key[1:] != key[:-1], axis=1)
    idx = np.cumsum(new) - 1
    summed = np.zeros(int(idx[-1]) + 1)
    np.add.at(summed, idx, vals)
    keep = summed != 0.0
    return BlockEntries(rows[new][keep], ii[new][keep], jj[new][keep], summed[keep])


def _coalesce_free(rows, cols, vals):
    if rows.size == 0:
        return rows, cols, vals
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    new = np.ones(len(rows), dtype=bool)
    new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    idx = np.cumsum(new) - 1
    summed = np.zeros(int(idx[-1]) + 1)
    np.add.at(summed, idx, vals)
    keep = summed != 0.0
    return rows[new][keep], cols[new][keep], summed[keep]


# ---------------------------------------------------------------------------
# validation


@dataclass
class Finding:
    severity: str  # "error" | "warning"
    code: str
    message: str
    rows: list[int] = field(default_factory=list)


def validate(problem: SdpProblem) -> list[Finding]:
    findings: list[Finding] = []
    m = problem.n_rows
    if len(problem.blocks) != len(problem.block_dims):
        findings.append(Finding("error", "block-count", "block data does not match block_dims"))
        return findings
    for k, (d, ent) in enumerate(zip(problem.block_dims, problem.blocks)):
        if d < 1:
            findings.append(Finding("error", "empty-block", f"block {k} has dimension {d}"))
        if ent.rows.size and (ent.ii.max() >= d or ent.jj.max() >= d):
            findings.append(Finding("error", "index-range", f"block {k} entry outside dimension {d}"))
        if ent.rows.size and (ent.rows.max() >= m or ent.rows.min() < 0):
            findings.append(Finding("error", "row-range", f"block {k} references missing row"))
        if not ent.rows.size:
            findings.append(Finding("warning", "unused-block", f"block {k} appears in no row"))
    if problem.free_rows.size and problem.free_cols.max() >= problem.n_free:
        findings.append(Finding("error", "free-range", "free entry references missing variable"))
    nnz = np.zeros(m, dtype=np.int64)
    cone = np.zeros(m, dtype=bool)
    for ent in problem.blocks:
        np.add.at(nnz, ent.rows, 1)
        cone[ent.rows] = True
    np.add.at(nnz, problem.free_rows, 1)
    zero = np.flatnonzero(nnz == 0)
    if zero.size:
        findings.append(Finding("error", "zero-row", "equality rows with no coefficients",
                                zero.tolist()))
    nocone = np.flatnonzero((nnz > 0) & ~cone)
    if nocone.size:
        findings.append(Finding("error", "no-cone-row",
                                "rows touching only free variables (express as bounds instead)",
                                nocone.tolist()))
    used = np.zeros(problem.n_free, dtype=bool)
    used[problem.free_cols] = True
    unused = np.flatnonzero(~used)
    if unused.size:
        findings.append(Finding("warning", "unbounded-free",
                                f"free variables in no row: {unused.tolist()[:10]}"))
    # duplicate rows: hash the canonical coefficient content of each row
    if m:
        sig: dict[tuple, list[int]] = {}
        parts: list[list] = [[] for _ in range(m)]
        for k, ent in enumerate(problem.blocks):
            for r, i, j, v in zip(ent.rows.tolist(), ent.ii.tolist(), ent.jj.tolist(),
                                  ent.vals.tolist()):
                parts[r].append(("b", k, i, j, v))
        for r, c, v in zip(problem.free_rows.tolist(), problem.free_cols.tolist(),
                           problem.free_vals.tolist()):
            parts[r].append(("f", c, v))
        for r in range(m):
            if parts[r]:
                sig.setdefault(tuple(sorted(parts[r])), []).append(r)
        dups = [rows for rows in sig.values() if len(rows) > 1]
        for rows in dups:
            findings.append(Finding("warning", "duplicate-rows",
                                    f"identical equality rows {rows}", rows))
    if m > MAX_ROWS:
        findings.append(Finding("warning", "size", f"{m} rows exceed the dense guardrail {MAX_ROWS}"))
    return findings


# ---------------------------------------------------------------------------
# solution


@dataclass
class SdpSolution:
    status: Status
    X: list[np.ndarray]
    u: np.ndarray
    y: np.ndarray
    S: list[np.ndarray]
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    solve_time: float
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL

    def min_eigenvalues(self) -> list[float]:
        return [float(np.linalg.eigvalsh(X)[0]) if X.size else 0.0 for X in self.X]


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 200
    infeas_tol: float = 1e-8
    verbosity: int = 0
    max_rows: int = MAX_ROWS


# ---------------------------------------------------------------------------
# internal standardized form


@dataclass
class _Cluster:
    rows: np.ndarray                 # global (standardized) row ids
    psd: list[tuple[int, np.ndarray]]  # (psd block id, dense stack (m_c, n, n))
    lp_ids: np.ndarray               # lp variable ids
    lp_A: np.ndarray                 # (m_c, n_lp_c)
    B: np.ndarray                    # (m_c, n_free)


class _Standard:
    """Row-scaled problem with bounds converted to equality rows."""

    def __init__(self, p: SdpProblem):
        dims = list(p.block_dims)
        n_free = p.n_free
        b = list(p.b)
        lb = p.free_lb if p.free_lb is not None else np.full(n_free, -np.inf)
        ub = p.free_ub if p.free_ub is not None else np.full(n_free, np.inf)
        blocks = [BlockEntries(e.rows, e.ii, e.jj, e.vals) for e in p.blocks]
        fr, fc, fv = list(p.free_rows), list(p.free_cols), list(p.free_vals)
        extra_lp: list[tuple[int, float]] = []  # (row, coefficient on new slack)
        for v in range(n_free):
            for bound, sign in ((lb[v], -1.0), (ub[v], 1.0)):
                if np.isfinite(bound):
                    r = len(b)
                    b.append(float(bound))
                    fr.append(r)
                    fc.append(v)
                    fv.append(1.0)
                    extra_lp.append((r, sign))
        self.orig_blocks = len(dims)
        for r, sign in extra_lp:
            k = len(dims)
            dims.append(1)
            blocks.append(BlockEntries(np.array([r]), np.array([0]), np.array([0]),
                                       np.array([sign])))
        self.dims = dims
        self.n_free = n_free
        m = len(b)
        self.m = m
        b = np.array(b, dtype=float)
        fr = np.array(fr, dtype=np.int64)
        fc = np.array(fc, dtype=np.int64)
        fv = np.array(fv, dtype=float)

        # row norms for scaling
        sq = np.zeros(m)
        for e in blocks:
            w = np.where(e.ii == e.jj, 1.0, 2.0)
            np.add.at(sq, e.rows, w * e.vals ** 2)
        np.add.at(sq, fr, fv ** 2)
        norms = np.sqrt(sq)
        norms[norms == 0] = 1.0
        self.row_scale = norms
        self.b = b / norms

        self.psd_ids = [k for k, d in enumerate(dims) if d > 1]
        self.lp_ids = [k for k, d in enumerate(dims) if d == 1]
        lp_index = {k: i for i, k in enumerate(self.lp_ids)}
        psd_index = {k: i for i, k in enumerate(self.psd_ids)}
        self.n_lp = len(self.lp_ids)

        cobj = p.objective_blocks() + [BlockEntries.empty() for _ in range(len(dims) - len(p.block_dims))]
        self.C = [_dense_sym(dims[k], cobj[k].ii, cobj[k].jj, cobj[k].vals) for k in self.psd_ids]
        self.c_lp = np.array([cobj[k].vals.sum() if cobj[k].vals.size else 0.0 for k in self.lp_ids])
        self.c_free = np.asarray(p.c_free, dtype=float).copy() if n_free else np.zeros(0)

        # union-find over rows linked by shared cone variables
        parent = list(range(m))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        def union_rows(rows):
            if rows.size == 0:
                return
            r0 = find(int(rows[0]))
            for r in np.unique(rows[1:]).tolist():
                ra = find(r)
                if ra != r0:
                    parent[ra] = r0

        for k, e in enumerate(blocks):
            union_rows(e.rows)
        roots = np.array([find(r) for r in range(m)])
        _, cluster_of_row = np.unique(roots, return_inverse=True)
        n_clusters = int(cluster_of_row.max()) + 1 if m else 0
        self.cluster_of_row = cluster_of_row

        local = np.zeros(m, dtype=np.int64)
        cl_rows = []
        for c in range(n_clusters):
            rows = np.flatnonzero(cluster_of_row == c)
            local[rows] = np.arange(rows.size)
            cl_rows.append(rows)
        psd_in: list[list] = [[] for _ in range(n_clusters)]
        lp_in: list[list] = [[] for _ in range(n_clusters)]
        for k, e in enumerate(blocks):
            if e.rows.size == 0:
                continue
            c = int(cluster_of_row[e.rows[0]])
            if dims[k] > 1:
                psd_in[c].append(k)
            else:
                lp_in[c].append(k)
        self.clusters: list[_Cluster] = []
        for c in range(n_clusters):
            rows = cl_rows[c]
            mc = rows.size
            psd = []
            for k in psd_in[c]:
                e = blocks[k]
                n = dims[k]
                stack = np.zeros((mc, n, n))
                lr = local[e.rows]
                v = e.vals / norms[e.rows]
                np.add.at(stack, (lr, e.ii, e.jj), v)
                off = e.ii != e.jj
                np.add.at(stack, (lr[off], e.jj[off], e.ii[off]), v[off])
                psd.append((psd_index[k], stack))
            lpk = lp_in[c]
            lpA = np.zeros((mc, len(lpk)))
            for j, k in enumerate(lpk):
                e = blocks[k]
                np.add.at(lpA, (local[e.rows], np.full(e.rows.size, j)), e.vals / norms[e.rows])
            B = np.zeros((mc, n_free))
            sel = cluster_of_row[fr] == c if fr.size else np.zeros(0, dtype=bool)
            if fr.size and sel.any():
                np.add.at(B, (local[fr[sel]], fc[sel]), fv[sel] / norms[fr[sel]])
            self.clusters.append(_Cluster(rows, psd, np.array([lp_index[k] for k in lpk], dtype=np.int64),
                                          lpA, B))

    # linear maps ---------------------------------------------------------
    def A_apply(self, X: list[np.ndarray], x_lp: np.ndarray, u: np.ndarray) -> np.ndarray:
        out = np.zeros(self.m)
        for cl in self.clusters:
            acc = np.zeros(cl.rows.size)
            for k, stack in cl.psd:
                acc += stack.reshape(stack.shape[0], -1) @ X[k].ravel()
            if cl.lp_ids.size:
                acc += cl.lp_A @ x_lp[cl.lp_ids]
            if self.n_free:
                acc += cl.B @ u
            out[cl.rows] = acc
        return out

    def A_cone_apply(self, X: list[np.ndarray], x_lp: np.ndarray) -> np.ndarray:
        return self.A_apply(X, x_lp, np.zeros(self.n_free))

    def A_adjoint(self, y: np.ndarray):
        Y = [np.zeros((self.dims[k], self.dims[k])) for k in self.psd_ids]
        y_lp = np.zeros(self.n_lp)
        yu = np.zeros(self.n_free)
        for cl in self.clusters:
            yc = y[cl.rows]
            for k, stack in cl.psd:
                Y[k] += np.tensordot(yc, stack, axes=(0, 0))
            if cl.lp_ids.size:
                y_lp[cl.lp_ids] += cl.lp_A.T @ yc
            if self.n_free:
                yu += cl.B.T @ yc
        return Y, y_lp, yu


def _dense_sym(n, ii, jj, vals):
    out = np.zeros((n, n))
    if len(ii):
        np.add.at(out, (ii, jj), vals)
        off = ii != jj
        np.add.at(out, (jj[off], ii[off]), vals[off])
    return out


def _sym(M):
    return 0.5 * (M + M.T)


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    """Largest alpha with X + alpha dX PSD (X positive definite)."""
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    T = sla.solve_triangular(L, dX, lower=True)
    T = sla.solve_triangular(L, T.T, lower=True)
    lam = np.linalg.eigvalsh(_sym(T))[0]
    return math.inf if lam >= 0 else -1.0 / lam


def _all_pd(blocks: list[np.ndarray], lp: np.ndarray) -> bool:
    if lp.size and np.any(lp <= 0):
        return False
    for M in blocks:
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            return False
    return True


def _max_step_lp(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not neg.any():
        return math.inf
    return float(np.min(-x[neg] / dx[neg]))


def _chol_solve_factory(M: np.ndarray):
    n = M.shape[0]
    if n == 0:
        return lambda r: r
    scale = max(1.0, float(np.max(np.abs(np.diag(M)))))
    reg = 0.0
    for attempt in range(8):
        try:
            c = sla.cho_factor(M + reg * np.eye(n), lower=True, check_finite=False)
            return lambda r, c=c: sla.cho_solve(c, r, check_finite=False)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            reg = scale * (1e-14 * 100 ** attempt)
    raise np.linalg.LinAlgError("normal matrix factorization failed")


def solve(problem: SdpProblem, opts: SolverOptions | None = None, **kw) -> SdpSolution:
    """Solve ``problem``; deterministic for identical inputs and options."""
    opts = opts or SolverOptions()
    for k, v in kw.items():
        setattr(opts, k, v)
    t0 = time.perf_counter()
    if problem.n_rows > opts.max_rows:
        raise SdpSizeError(
            f"{problem.n_rows} equality rows exceed the dense guardrail of {opts.max_rows}")
    errors = [f for f in validate(problem) if f.severity == "error"]
    if errors:
        raise SdpFormatError("; ".join(f.message for f in errors))

    st = _Standard(problem)
    if st.m == 0:
        return _trivial_solution(problem, st, t0)
    return _ipm(problem, st, opts, t0)


def _trivial_solution(problem, st, t0):
    X = [np.zeros((d, d)) for d in problem.block_dims]
    cost_free = np.abs(st.c_free).max(initial=0.0)
    cobj = problem.objective_blocks()
    unbounded = cost_free > 0 or any(
        np.linalg.eigvalsh(_dense_sym(d, e.ii, e.jj, e.vals))[0] < 0 if e.vals.size else False
        for d, e in zip(problem.block_dims, cobj))
    status = Status.UNBOUNDED if unbounded else Status.OPTIMAL
    S = [_dense_sym(d, e.ii, e.jj, e.vals) for d, e in zip(problem.block_dims, cobj)]
    return SdpSolution(status, X, np.zeros(problem.n_free), np.zeros(0), S, 0.0, 0.0, 0.0, 0.0,
                       0.0, 0, time.perf_counter() - t0, "empty problem")


def _ipm(problem: SdpProblem, st: _Standard, opts: SolverOptions, t0: float) -> SdpSolution:
    dims = [st.dims[k] for k in st.psd_ids]
    n_cone = sum(dims) + st.n_lp
    normb = 1.0 + np.linalg.norm(st.b)
    normC = 1.0 + math.sqrt(sum(np.sum(C ** 2) for C in st.C) + np.sum(st.c_lp ** 2)
                            + np.sum(st.c_free ** 2))

    xi = max(10.0, math.sqrt(max(dims, default=1)), float(np.max(1 + np.abs(st.b))))
    zeta = max(10.0, math.sqrt(max(dims, default=1)),
               max((np.linalg.norm(C) for C in st.C), default=0.0),
               float(np.max(np.abs(st.c_lp), initial=0.0)))
    X = [xi * np.eye(d) for d in dims]
    S = [zeta * np.eye(d) for d in dims]
    x_lp = np.full(st.n_lp, xi)
    s_lp = np.full(st.n_lp, zeta)
    y = np.zeros(st.m)
    u = np.zeros(st.n_free)

    status = Status.MAX_ITER
    message = "iteration limit reached"
    it = 0
    stall = 0
    best = None
    pres = dres = gap = math.inf
    for it in range(1, opts.max_iter + 1):
        # residuals
        Ax = st.A_apply(X, x_lp, u)
        rp = st.b - Ax
        Ay, Ay_lp, Ayu = st.A_adjoint(y)
        Rd = [C - A - Sk for C, A, Sk in zip(st.C, Ay, S)]
        rd_lp = st.c_lp - Ay_lp - s_lp
        ru = st.c_free - Ayu
        pobj = sum(float(np.sum(C * Xk)) for C, Xk in zip(st.C, X)) + float(st.c_lp @ x_lp) \
            + float(st.c_free @ u)
        dobj = float(st.b @ y)
        mu = (sum(float(np.sum(Xk * Sk)) for Xk, Sk in zip(X, S)) + float(x_lp @ s_lp)) / n_cone
        pres = np.linalg.norm(rp) / normb
        dres = math.sqrt(sum(np.sum(R ** 2) for R in Rd) + np.sum(rd_lp ** 2)
                         + np.sum(ru ** 2)) / normC
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        if opts.verbosity:
            log.info("it %3d pobj %+.8e dobj %+.8e pres %.2e dres %.2e gap %.2e mu %.2e",
                     it, pobj, dobj, pres, dres, gap, mu)
        if pres <= opts.tol and dres <= opts.tol and gap <= opts.tol:
            status, message = Status.OPTIMAL, "converged"
            break
        merit = max(pres, dres, gap)
        if best is None or merit < best[0]:
            best = (merit, it)
        # Farkas rays
        if dobj > 0:
            r1 = math.sqrt(sum(np.sum((C - R) ** 2) for C, R in zip(st.C, Rd))
                           + np.sum((st.c_lp - rd_lp) ** 2)) / dobj
            r2 = np.linalg.norm(st.c_free - ru) / dobj
            if max(r1, r2) <= opts.infeas_tol:
                if _check_primal_ray(st, y / dobj, S, s_lp, dobj, opts.infeas_tol):
                    status, message = Status.INFEASIBLE, "primal infeasibility certificate found"
                    break
        if pobj < 0:
            r3 = np.linalg.norm(st.b - rp) / (-pobj)
            if r3 <= opts.infeas_tol:
                status, message = Status.UNBOUNDED, "dual infeasibility certificate found"
                break

        try:
            step = _newton_step(st, X, S, x_lp, s_lp, rp, Rd, rd_lp, ru, mu, dims)
        except np.linalg.LinAlgError as exc:
            status, message = Status.NUMERICAL_FAILURE, f"factorization breakdown: {exc}"
            break
        alpha_p, alpha_d = step
        if alpha_p < 1e-10 and alpha_d < 1e-10:
            stall += 1
        else:
            stall = 0
        for _ in range(20):
            nX, nS, nx, ns, ny, nu = step.apply(X, S, x_lp, s_lp, y, u)
            if _all_pd(nX, nx) and _all_pd(nS, ns):
                break
            step.alpha_p *= 0.8
            step.alpha_d *= 0.8
        else:
            status, message = Status.NUMERICAL_FAILURE, "iterates left the cone interior"
            break
        X, S, x_lp, s_lp, y, u = nX, nS, nx, ns, ny, nu
        if stall >= 5:
            status, message = Status.NUMERICAL_FAILURE, "step lengths collapsed"
            break
        if best is not None and it - best[1] > 30:
            status, message = Status.NUMERICAL_FAILURE, "no progress in 30 iterations"
            break

    # undo row scaling in y; drop slack blocks added for bounds
    y_orig = y / st.row_scale
    Xs = _assemble_blocks(problem, st, X, x_lp)
    Ss = _assemble_blocks(problem, st, S, s_lp)
    pobj = sum(float(np.sum(C * Xk)) for C, Xk in zip(st.C, X)) + float(st.c_lp @ x_lp) \
        + float(st.c_free @ u)
    dobj = float(st.b @ y)
    return SdpSolution(status, Xs, u.copy(), y_orig[:problem.n_rows], Ss, pobj, dobj,
                       float(pres), float(dres), float(gap), it, time.perf_counter() - t0, message)


def _assemble_blocks(problem, st, psd_vals, lp_vals):
    out = []
    psd_pos = {k: i for i, k in enumerate(st.psd_ids)}
    lp_pos = {k: i for i, k in enumerate(st.lp_ids)}
    for k in range(problem.n_blocks):
        if k in psd_pos:
            out.append(psd_vals[psd_pos[k]].copy())
        else:
            out.append(np.array([[lp_vals[lp_pos[k]]]]))
    return out


def _check_primal_ray(st, yhat, S, s_lp, dobj, tol) -> bool:
    # yhat with b.yhat = 1: -A^T yhat must be PSD up to tol and B^T yhat ~ 0
    Y, Y_lp, Yu = st.A_adjoint(yhat)
    scale = 1.0 + np.linalg.norm(yhat)
    worst = 0.0
    for Yk in Y:
        worst = max(worst, float(np.linalg.eigvalsh(_sym(Yk))[-1]))
    if Y_lp.size:
        worst = max(worst, float(Y_lp.max()))
    return worst <= tol * scale and np.linalg.norm(Yu) <= tol * scale


@dataclass
class _Step:
    dX: list
    dS: list
    dx_lp: np.ndarray
    ds_lp: np.ndarray
    dy: np.ndarray
    du: np.ndarray
    alpha_p: float
    alpha_d: float

    def __iter__(self):
        return iter((self.alpha_p, self.alpha_d))

    def apply(self, X, S, x_lp, s_lp, y, u):
        ap, ad = self.alpha_p, self.alpha_d
        X = [_sym(Xk + ap * d) for Xk, d in zip(X, self.dX)]
        S = [_sym(Sk + ad * d) for Sk, d in zip(S, self.dS)]
        return X, S, x_lp + ap * self.dx_lp, s_lp + ad * self.ds_lp, y + ad * self.dy, \
            u + ap * self.du


def _newton_step(st: _Standard, X, S, x_lp, s_lp, rp, Rd, rd_lp, ru, mu, dims) -> _Step:
    Z = []
    for Sk in S:
        Lc = sla.cho_factor(Sk, lower=True)
        Z.append(_sym(sla.cho_solve(Lc, np.eye(Sk.shape[0]))))
    z_lp = 1.0 / s_lp

    # normal matrix per cluster and the free-variable Schur complement
    factors = []
    for cl in st.clusters:
        mc = cl.rows.size
        M = np.zeros((mc, mc))
        for k, stack in cl.psd:
            P = np.matmul(np.matmul(X[k], stack), Z[k])
            M += stack.reshape(mc, -1) @ P.reshape(mc, -1).T
        if cl.lp_ids.size:
            w = x_lp[cl.lp_ids] * z_lp[cl.lp_ids]
            M += (cl.lp_A * w) @ cl.lp_A.T
        M = _sym(M)
        solver = _chol_solve_factory(M)
        W = solver(cl.B) if st.n_free else np.zeros((mc, 0))
        factors.append((solver, W))
    if st.n_free:
        Su = np.zeros((st.n_free, st.n_free))
        for cl, (_, W) in zip(st.clusters, factors):
            Su += cl.B.T @ W
        Su = _sym(Su)
        su_solve = _chol_solve_factory(Su)
    else:
        su_solve = None

    def kkt_solve(h, r):
        """Solve ``M dy + B du = h``, ``B^T dy = r`` by block elimination over clusters."""
        hs = [h[cl.rows] for cl in st.clusters]
        dy = np.zeros(st.m)
        if not st.n_free:
            for cl, (solver, _), hc in zip(st.clusters, factors, hs):
                dy[cl.rows] = solver(hc)
            return dy, np.zeros(0)
        rhs = -r.copy()
        Mh = []
        for cl, (solver, _), hc in zip(st.clusters, factors, hs):
            t = solver(hc)
            Mh.append(t)
            rhs += cl.B.T @ t
        du = su_solve(rhs)
        for cl, (_, W), t in zip(st.clusters, factors, Mh):
            dy[cl.rows] = t - W @ du
        return dy, du

    def direction(sigma_mu, corr, corr_lp):
        # rhs of the centering equation without the dy-dependent part
        G = [sigma_mu * Zk - Xk - _sym(Xk @ R @ Zk) for Xk, Zk, R in zip(X, Z, Rd)]
        if corr is not None:
            G = [g - _sym(c @ Zk) for g, c, Zk in zip(G, corr, Z)]
        g_lp = sigma_mu * z_lp - x_lp - x_lp * rd_lp * z_lp
        if corr_lp is not None:
            g_lp = g_lp - corr_lp * z_lp
        h = rp - st.A_cone_apply(G, g_lp)
        dy, du = kkt_solve(h, ru)
        # iterative refinement: the normal matrix loses accuracy as X, S approach the boundary
        for _ in range(2):
            Ady, Ady_lp, Ady_u = st.A_adjoint(dy)
            Mdy = st.A_apply([_sym(Xk @ A @ Zk) for Xk, A, Zk in zip(X, Ady, Z)],
                             x_lp * Ady_lp * z_lp, du)
            r_h, r_u = h - Mdy, ru - Ady_u
            if np.linalg.norm(r_h) + np.linalg.norm(r_u) <= 1e-14 * (1.0 + np.linalg.norm(h)):
                break
            ey, eu = kkt_solve(r_h, r_u)
            dy, du = dy + ey, du + eu
        Ady, Ady_lp, _ = st.A_adjoint(dy)
        dS = [R - A for R, A in zip(Rd, Ady)]
        ds_lp = rd_lp - Ady_lp
        dX = [g + _sym(Xk @ A @ Zk) for g, Xk, A, Zk in zip(G, X, Ady, Z)]
        dx_lp = g_lp + x_lp * Ady_lp * z_lp
        return dX, dS, dx_lp, ds_lp, dy, du

    def steplengths(dX, dS, dx_lp, ds_lp):
        ap = min([_max_step(Xk, d) for Xk, d in zip(X, dX)] + [_max_step_lp(x_lp, dx_lp)])
        ad = min([_max_step(Sk, d) for Sk, d in zip(S, dS)] + [_max_step_lp(s_lp, ds_lp)])
        return ap, ad

    # predictor
    dX, dS, dx_lp, ds_lp, dy, du = direction(0.0, None, None)
    ap, ad = steplengths(dX, dS, dx_lp, ds_lp)
    ap_a, ad_a = min(1.0, ap), min(1.0, ad)
    n_cone = sum(dims) + st.n_lp
    mu_aff = (sum(float(np.sum((Xk + ap_a * a) * (Sk + ad_a * b)))
                  for Xk, a, Sk, b in zip(X, dX, S, dS))
              + float((x_lp + ap_a * dx_lp) @ (s_lp + ad_a * ds_lp))) / n_cone
    expon = 3 if min(ap_a, ad_a) > 0.1 else 2
    sigma = min(1.0, max(0.0, (mu_aff / mu) ** expon)) if mu > 0 else 0.0

    # corrector
    corr = [a @ b for a, b in zip(dX, dS)]
    corr_lp = dx_lp * ds_lp
    dX, dS, dx_lp, ds_lp, dy, du = direction(sigma * mu, corr, corr_lp)
    ap, ad = steplengths(dX, dS, dx_lp, ds_lp)
    gamma = 0.9 + 0.09 * min(ap_a, ad_a)
    alpha_p = min(1.0, gamma * ap)
    alpha_d = min(1.0, gamma * ad)
    return _Step(dX, dS, dx_lp, ds_lp, dy, du, alpha_p, alpha_d)
