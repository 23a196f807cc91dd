import numpy as np
import pytest

from vecert.discrete import (PAIR_SPACE, FiniteTransitionSystem, cc_feasible_quadratic, fig1_printed_vcc,
                             random_system, reach, safety_oracle_consistency, vcc_audit_discrete,
                             vcc_feasible_quadratic)
from vecert.poly import Polynomial

FIG1 = FiniteTransitionSystem.fig1()


def test_bfs_oracle():
    assert reach(FIG1) == {"q0", "q2", "q4"}
    assert not reach(FIG1) & FIG1.unsafe


def test_system_validation():
    with pytest.raises(ValueError):
        FiniteTransitionSystem(("a", "b"), {"a": 0, "b": 0}, {"a"}, set(), ())
    with pytest.raises(ValueError):
        FiniteTransitionSystem(("a",), {"a": 0}, {"a"}, set(), (("a", "z"),))


def test_printed_spot_values():
    (T1, T2), A, eta = fig1_printed_vcc()
    assert abs(T1.evaluate((0, 2)) - 1717.69) < 1e-9
    assert abs(T1.evaluate((0, 1)) - (-74.38)) < 1e-9
    assert abs(T2.evaluate((0, 3)) - 0.002) < 1e-9
    assert eta == 1e-3 and np.all(A >= 0)


def test_printed_vcc_fails_full_instantiation():
    T, A, eta = fig1_printed_vcc()
    rep = vcc_audit_discrete(FIG1, T, A, eta)
    assert rep.verdict == "Fail"
    # the self-loop q0 -> q0 forces T1(q0, q0) >= 0
    assert rep.margin("T1(q0,q0)>=0") < -3000


def test_printed_vcc_on_printed_instances_needs_rounding():
    T, A, eta = fig1_printed_vcc()
    strict = vcc_audit_discrete(FIG1, T, A, eta, instances="printed")
    assert strict.verdict == "Fail"
    loose = vcc_audit_discrete(FIG1, T, A, eta, instances="printed", rounding_tol=0.5)
    assert loose.verdict == "PassWithRounding"
    assert abs(loose.margin("exists i: T_i(q0,q3)<=-eta") - (-0.003)) < 1e-9
    assert loose.worst().family == "induct"


def test_scalar_cc_infeasible_on_grid():
    grid = np.round(np.arange(0, 51) * 0.1, 10)
    for mode in ("printed", "full"):
        res = cc_feasible_quadratic(FIG1, grid, 1e-4, mode=mode)
        assert res.outcome == "InfeasibleOnGrid"
        assert len(res.per_lambda) == 51


def test_vector_certificate_separates():
    T, lp = vcc_feasible_quadratic(FIG1, np.eye(2), 1e-3, {"q1": 0, "q3": 1})
    assert T is not None and lp.feasible
    scale = max(p.max_abs_coef() for p in T)
    rep = vcc_audit_discrete(FIG1, T, np.eye(2), 1e-3, abs_tol=1e-9 * scale)
    assert rep.verdict == "Pass"
    assert safety_oracle_consistency(FIG1, rep).consistent


def test_input_checks():
    T, A, _ = fig1_printed_vcc()
    with pytest.raises(ValueError):
        vcc_audit_discrete(FIG1, T, A, 0.0)
    with pytest.raises(ValueError):
        vcc_audit_discrete(FIG1, T, -A, 1e-3)
    with pytest.raises(ValueError):
        cc_feasible_quadratic(FIG1, [], 1e-3)
    with pytest.raises(ValueError):
        cc_feasible_quadratic(FIG1, [-1.0], 1e-3)


def test_oracle_flags_unsound_pass():
    ts = FiniteTransitionSystem(("a", "b"), {"a": 0, "b": 1}, {"a"}, {"b"}, (("a", "b"),))
    zero = Polynomial.zero(PAIR_SPACE)
    rep = vcc_audit_discrete(ts, [zero], np.eye(1), 1e-3)
    assert rep.verdict == "Fail"    # exclusion cannot hold with T = 0
    assert not safety_oracle_consistency(ts, lp_feasible=True).consistent


def test_soundness_harness_200_systems():
    rng = np.random.default_rng(2024)
    found = 0
    for _ in range(200):
        ts = random_system(rng)
        cc = cc_feasible_quadratic(ts, [0.5, 1.0], 1e-3)
        assert safety_oracle_consistency(ts, lp_feasible=cc.outcome == "FeasibleAt").consistent
        T, lp = vcc_feasible_quadratic(ts, np.eye(2), 1e-3)
        if T is not None:
            scale = max(p.max_abs_coef() for p in T)
            rep = vcc_audit_discrete(ts, T, np.eye(2), 1e-3, abs_tol=1e-9 * scale)
            verdict = safety_oracle_consistency(ts, rep)
            assert verdict.consistent, verdict.message
            found += rep.verdict == "Pass"
    assert found > 0   # the harness exercises passing certificates, not just failures
