"""Acceptance gate: one PASS/FAIL line per criterion (also repeated in the terminal summary).

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline.
"""

import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import OUTCOMES, record_acceptance
from vecert import certfile, cli, config
from vecert.audit import AuditOptions, check_certificate, trajectory_audit
from vecert.discrete import (FiniteTransitionSystem, cc_feasible_quadratic, fig1_printed_vcc,
                             reach, vcc_audit_discrete, vcc_feasible_quadratic)
from vecert.sysmodel import product_constraint_instances
from vecert.synth import (SynthOptions, synth_scalar_bc, synth_scalar_cc_safety,
                          synth_vcbrf_ltl, synth_vcbrf_persistence, synth_vcc_persistence,
                          synth_vcc_safety)

SWAP = [[0, 1], [1, 0]]


def report(n, ok, detail):
    print("\n" + record_acceptance(n, ok, detail))


def margins_ok(rep, rel=1e-6):
    return all(c.worst_margin >= -rel * c.scale for c in rep.conditions)


@pytest.fixture(scope="module")
def simple_spec():
    return config.build_spec(config.load_shipped("2d_simple_vcc"))


# ---------------------------------------------------------------------------------------------

def test_criterion_1_2d_vcc(simple_spec):
    res = synth_vcc_safety(simple_spec, SWAP, 3, SynthOptions(eta_lb=1e-3), assignment=[1, 2])
    rep = res.audit
    ok_found = res.outcome == "Certificate"
    ok_audit = rep is not None and rep.verdict == "Pass" and margins_ok(rep) \
        and all(c.samples >= 10_000 for c in rep.conditions)
    min_eig = min(min(g.min_eigs) for g in rep.grams) if rep is not None and rep.grams else float("nan")
    ok_gram = bool(min_eig >= -1e-8)
    ok = ok_found and ok_audit and ok_gram
    report(1, ok, f"2D VCC deg 3 k=2: {res.outcome}, audit {rep.verdict if rep else None}, "
                  f"min Gram eig {min_eig:.2e}")
    assert ok


def test_criterion_2_scalar_baselines(simple_spec):
    cells = {}
    for d in (1, 2, 3):
        for lam in (0.0, 0.5, 1.0):
            cells[(d, lam)] = synth_scalar_cc_safety(simple_spec, lam, d).outcome
    bc = synth_scalar_bc(simple_spec, 1.0, 5)
    ok_cc = all(v == "NotFound" for v in cells.values())
    ok_bc = bc.outcome == "Certificate" and bc.audit.verdict == "Pass"
    ok = ok_cc and ok_bc
    report(2, ok, f"CC NotFound in {sum(v == 'NotFound' for v in cells.values())}/9 cells; "
                  f"BC deg 5: {bc.outcome}/{bc.audit.verdict if bc.audit else None}")
    assert ok, cells


def test_criterion_3_five_state_example():
    t0 = time.perf_counter()
    ts = FiniteTransitionSystem.fig1()
    grid = config.lambda_grid({"start": 0, "stop": 5, "step": 0.1})
    g_printed = cc_feasible_quadratic(ts, grid, 1e-4, mode="printed")
    g_full = cc_feasible_quadratic(ts, grid, 1e-4, mode="full")
    ok_grid = g_printed.outcome == g_full.outcome == "InfeasibleOnGrid" and len(grid) == 51
    T, A, eta = fig1_printed_vcc()
    T1 = T[0]
    ok_spot = abs(T1.evaluate((0, 2)) - 1717.69) <= 1e-9 and abs(T1.evaluate((0, 1)) + 74.38) <= 1e-9
    ok_bfs = not (reach(ts) & {"q1", "q3"})
    printed = vcc_audit_discrete(ts, T, A, eta)
    ok_exact = printed.verdict == "Pass"
    # our own quadratic VCC separates the example; reported for context
    own, _ = vcc_feasible_quadratic(ts, np.eye(2), 1e-3, {"q1": 0, "q3": 1})
    own_ok = own is not None and vcc_audit_discrete(
        ts, own, np.eye(2), 1e-3, abs_tol=1e-9 * max(p.max_abs_coef() for p in own)).verdict == "Pass"
    runtime = time.perf_counter() - t0
    ok_time = runtime <= 10.0
    ok = ok_grid and ok_spot and ok_bfs and ok_exact and ok_time
    worst = printed.worst()
    report(3, ok, f"grid InfeasibleOnGrid={ok_grid}, spot values={ok_spot}, BFS={ok_bfs}, "
                  f"runtime {runtime:.1f}s; printed VCC exact audit {printed.verdict} "
                  f"(worst {worst.label} = {worst.margin:.2f}; unattainable, see decisions ledger); "
                  f"synthesized quadratic VCC with A=I passes={own_ok}")
    assert ok


def test_criterion_4_transcribed_tables():
    spec = config.build_spec(config.load_shipped("appendix_2d_vcc_audit"))
    cert = certfile.read(config.shipped_certificate_dir() / "2d_simple_vcc_appendix.cert")
    rep = check_certificate(cert, spec, AuditOptions(mode="transcribed-rounded"))
    ok_tables = rep.verdict in ("Pass", "PassWithRounding") and not rep.failures()
    # the ~0.003 slack at (0, 3) for T2 lives in the transcribed five-state VCC
    T, A, eta = fig1_printed_vcc()
    scale = max(p.max_abs_coef() for p in T)
    fig = vcc_audit_discrete(FiniteTransitionSystem.fig1(), T, A, eta, instances="printed",
                             rounding_tol=0.05 * scale)
    slack = fig.margin("exists i: T_i(q0,q3)<=-eta")
    ok_slack = fig.verdict == "PassWithRounding" and abs(slack + 0.003) < 1e-9 \
        and abs(T[1].evaluate((0, 3)) - 0.002) < 1e-9
    ok = ok_tables and ok_slack
    report(4, ok, f"2D tables {rep.verdict} (abs_tol 0.05*scale); T2(0,3) slack {slack:.4f} "
                  f"recorded by the five-state transcription audit ({fig.verdict}), "
                  f"not by the 2D tables - see decisions ledger")
    assert ok


def test_criterion_5_kuramoto(tmp_path):
    spec = config.build_spec(config.load_shipped("kuramoto_vcbrf"))
    res = synth_vcbrf_persistence(spec, [[0, 0], [1, 0]], np.zeros((2, 2)), np.zeros((2, 2)), 3)
    ok_cert = res.outcome == "Certificate" and res.audit.verdict == "Pass" and margins_ok(res.audit)
    tr = trajectory_audit(spec.system, spec.vf, count=100, steps=500)
    vspec = config.build_spec(config.load_shipped("kuramoto_vcc"))
    comp = synth_vcc_persistence(vspec, [[2, 0], [0, 1]], 3, SynthOptions(compile_only=True),
                                 assignment=[1, 2])
    skip = synth_vcc_persistence(vspec, [[2, 0], [0, 1]], 3, assignment=[1, 2])
    ok_vcc = comp.sizes.get("sdp_equalities", 0) > 0 and skip.solver_status == "Skipped"
    ok = ok_cert and tr.ceased and ok_vcc
    report(5, ok, f"VCBRF {res.outcome}/{res.audit.verdict if res.audit else None}; trajectories "
                  f"ceased={tr.ceased} (last visit {tr.max_last_visit}/500); VCC compiled "
                  f"{comp.sizes.get('sdp_equalities')} rows, max block {comp.sizes.get('sdp_max_block')}, "
                  f"solve {skip.solver_status}")
    assert ok


def test_criterion_6_ltl(simple_spec):
    toy = config.build_spec(config.load_shipped("ltl_toy_vcbrf"))
    res = synth_vcbrf_ltl(toy, [[1]], [[0]], [[1]], 4)
    safe = synth_vcc_safety(simple_spec, SWAP, 3, assignment=[1, 2])
    ok_toy = res.outcome == "Certificate" and res.audit.verdict == "Pass" and safe.found
    pp = config.build_spec(config.load_shipped("prey_predator_vcbrf_ltl"))
    comp = synth_vcbrf_ltl(pp, np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)), 5,
                           SynthOptions(compile_only=True))
    insts = product_constraint_instances(pp.automaton, pp.labeling, mode="vcbrf")
    expected = sum(2 * (1 if i.family == "init" else len(pp.labeling.region(i.letter).pieces))
                   for i in insts)
    ok_pp = comp.sizes["instances"] == len(insts) and comp.sizes["constraints"] == expected \
        and comp.sizes["sdp_equalities"] > 0
    ok = ok_toy and ok_pp
    report(6, ok, f"toy VCBRF-LTL {res.outcome}/{res.audit.verdict if res.audit else None} agrees with "
                  f"VCC safety {safe.outcome}; prey-predator k=2 deg 5 compiled: {len(insts)} instances, "
                  f"{comp.sizes['constraints']} constraints (expected {expected}), "
                  f"{comp.sizes['sdp_equalities']} rows")
    assert ok


PROPERTY_TESTS = [
    "tests/test_poly.py::test_ring_axioms",
    "tests/test_poly.py::test_compose_commutes_with_evaluation",
    "tests/test_poly.py::test_monomial_counts",
    "tests/test_sosprog.py::test_sos_round_trip",
    "tests/test_sdpcore.py::test_random_feasible_sdps_optimal",
    "tests/test_synth.py::test_k1_safety_reduces_to_scalar",
    "tests/test_synth.py::test_k1_persistence_reduces_to_scalar",
    "tests/test_synth.py::test_k1_ltl_reduces_to_scalar",
    "tests/test_discrete.py::test_soundness_harness_200_systems",
]


def test_criterion_7_property_suites():
    seen = {p: [o for n, o in OUTCOMES.items() if n == p or n.startswith(p + "[")]
            for p in PROPERTY_TESTS}
    missing = [p for p, o in seen.items() if not o]
    if missing:
        # not part of this session: run them now
        proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                               *missing], capture_output=True, text=True)
        for p in missing:
            seen[p] = ["passed" if proc.returncode == 0 else "failed"]
    bad = [p.split("::")[1] for p, o in seen.items() if any(x != "passed" for x in o)]
    ok = not bad
    report(7, ok, f"{len(PROPERTY_TESTS) - len(bad)}/{len(PROPERTY_TESTS)} property suites passed"
                  + (f"; failing: {bad}" if bad else ""))
    assert ok


def test_criterion_8_table_determinism(tmp_path):
    table = config.shipped_config_dir() / "table1"
    code1, _ = cli.table1_harness(table, tmp_path / "run1")
    code2, _ = cli.table1_harness(table, tmp_path / "run2")
    diffs = []
    files = sorted(p.relative_to(tmp_path / "run1") for p in (tmp_path / "run1").rglob("*")
                   if p.is_file() and p.name not in ("timing.json", "table1.txt"))
    for rel in files:
        other = tmp_path / "run2" / rel
        if not other.exists() or other.read_bytes() != (tmp_path / "run1" / rel).read_bytes():
            diffs.append(str(rel))
    certs = [f for f in files if f.suffix == ".cert"]
    ok = code1 == code2 == 0 and not diffs and len(certs) >= 3
    report(8, ok, f"{len(files)} artifacts ({len(certs)} certificates) compared across two harness "
                  f"runs; {len(diffs)} differ" + (f": {diffs[:5]}" if diffs else ""))
    assert ok
