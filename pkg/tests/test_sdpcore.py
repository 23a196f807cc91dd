import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vecert.sdpcore import (SdpBuilder, SdpFormatError, SdpSizeError, SolverOptions, Status,
                            solve, validate)
from vecert.sdpio import canonical_text, problem_hash, read_sdp, write_sdp


def rand_sym(rng, n):
    M = rng.normal(size=(n, n))
    return (M + M.T) / 2


def rand_pd(rng, n):
    M = rng.normal(size=(n, n))
    return M @ M.T + 0.5 * np.eye(n)


def feasible_sdp(seed):
    """Random SDP with strictly feasible primal and dual points, hence a finite optimum."""
    rng = np.random.default_rng(seed)
    dims = [int(d) for d in rng.integers(1, 5, size=rng.integers(1, 4))]
    m = int(rng.integers(1, 1 + sum(d * (d + 1) // 2 for d in dims)))
    n_free = int(rng.integers(0, 3))
    X0 = [rand_pd(rng, d) for d in dims]
    S0 = [rand_pd(rng, d) for d in dims]
    y0 = rng.normal(size=m)
    A = [[rand_sym(rng, d) for d in dims] for _ in range(m)]
    Bm = rng.normal(size=(m, n_free))
    u0 = rng.normal(size=n_free)
    b = np.array([sum(np.sum(A[i][k] * X0[k]) for k in range(len(dims))) for i in range(m)]) + Bm @ u0
    C = [S0[k] + sum(y0[i] * A[i][k] for i in range(m)) for k in range(len(dims))]
    cf = Bm.T @ y0
    bld = SdpBuilder()
    blocks = [bld.add_block(d) for d in dims]
    for j in range(n_free):
        bld.add_free(cost=float(cf[j]))
    for i in range(m):
        r = bld.add_row(float(b[i]))
        for k, d in zip(blocks, dims):
            for p in range(d):
                for q in range(p, d):
                    bld.add_block_entry(r, k, p, q, float(A[i][k][p, q]))
        for j in range(n_free):
            bld.add_free_entry(r, j, float(Bm[i, j]))
    for k, d in zip(blocks, dims):
        for p in range(d):
            for q in range(p, d):
                bld.add_block_cost(k, p, q, float(C[k][p, q]))
    return bld.build()


@settings(max_examples=50, derandomize=True)
@given(st.integers(0, 2 ** 31 - 1))
def test_random_feasible_sdps_optimal(seed):
    p = feasible_sdp(seed)
    sol = solve(p)
    assert sol.status == Status.OPTIMAL, sol.message
    assert sol.gap <= 1e-7
    assert abs(sol.primal_objective - sol.dual_objective) <= 1e-7 * (1 + abs(sol.primal_objective))
    assert min(sol.min_eigenvalues()) >= -1e-8


def test_known_optimum():
    # min tr X  s.t.  X_01 = 1  ->  X = [[1,1],[1,1]], value 2
    b = SdpBuilder()
    k = b.add_block(2)
    r = b.add_row(1.0)
    b.add_block_entry(r, k, 0, 1, 0.5)
    b.add_block_cost(k, 0, 0, 1.0)
    b.add_block_cost(k, 1, 1, 1.0)
    sol = solve(b.build())
    assert sol.optimal
    assert abs(sol.primal_objective - 2.0) < 1e-7
    assert np.allclose(sol.X[0], [[1, 1], [1, 1]], atol=1e-6)


def test_infeasible_detected():
    b = SdpBuilder()
    k = b.add_block(1)
    r = b.add_row(-1.0)        # x = -1 with x >= 0
    b.add_block_entry(r, k, 0, 0, 1.0)
    assert solve(b.build()).status == Status.INFEASIBLE


def test_unbounded_detected():
    b = SdpBuilder()
    k = b.add_block(1)
    u = b.add_free(cost=1.0)   # min u  s.t.  x + u = 1, x >= 0
    r = b.add_row(1.0)
    b.add_block_entry(r, k, 0, 0, 1.0)
    b.add_free_entry(r, u, 1.0)
    assert solve(b.build()).status == Status.UNBOUNDED


def test_guardrail_and_validation():
    p = feasible_sdp(3)
    with pytest.raises(SdpSizeError):
        solve(p, SolverOptions(max_rows=0))
    b = SdpBuilder()
    b.add_block(2)
    b.add_row(1.0)             # row with no coefficients
    codes = {f.code for f in validate(b.build())}
    assert "zero-row" in codes
    with pytest.raises(SdpFormatError):
        solve(b.build())


def test_deterministic():
    p = feasible_sdp(11)
    a, b = solve(p), solve(p)
    assert a.iterations == b.iterations
    assert all(np.array_equal(x, y) for x, y in zip(a.X, b.X))


# --- text format ---------------------------------------------------------------------------------

@settings(max_examples=30, derandomize=True)
@given(st.integers(0, 10 ** 6))
def test_sdp_text_round_trip(seed):
    p = feasible_sdp(seed)
    text = write_sdp(p)
    q = read_sdp(text)
    assert write_sdp(q) == text
    assert problem_hash(q) == problem_hash(p)


def test_canonical_text_ignores_names():
    p = feasible_sdp(5)
    q = read_sdp(write_sdp(p))
    q.row_labels = [f"r{i}" for i in range(q.n_rows)]
    assert canonical_text(p) == canonical_text(q)


def test_read_errors_carry_line_numbers():
    with pytest.raises(SdpFormatError, match="line 3"):
        read_sdp("sdp 1\nblocks 2\nbogus 1\n")
    with pytest.raises(SdpFormatError):
        read_sdp("sdp 1\nblocks 2\nfree 0\nrows 1\na 0 0 1 0 1.0\n")   # lower triangle
    with pytest.raises(SdpFormatError):
        read_sdp("sdp 1\n")
