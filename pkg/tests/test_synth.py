import warnings

import numpy as np
import pytest

from vecert.audit import AuditOptions, check_certificate
from vecert.poly import VariableSpace
from vecert.semialg import RegionUnion
from vecert.sdpio import canonical_text
from vecert.synth import (PersistenceSpec, SafetySpec, SpecError, SynthOptions,
                          build_scalar_cc_ltl, build_scalar_cc_persistence, build_scalar_cc_safety,
                          build_vcc_ltl, build_vcc_persistence, build_vcc_safety, sweep,
                          synth_scalar_bc, synth_scalar_cc_safety, synth_vcc_safety)

OPTS = SynthOptions()


def sdp_text(builder):
    return canonical_text(builder.prog.compile().sdp)


# --- k = 1 structural reduction to the scalar programs ------------------------------------------

@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_k1_safety_reduces_to_scalar(rot_safety, lam):
    vec = build_vcc_safety(rot_safety, [[lam]], 2, OPTS)[0]
    sca = build_scalar_cc_safety(rot_safety, lam, 2, OPTS)
    assert sdp_text(vec) == sdp_text(sca)


def test_k1_persistence_reduces_to_scalar(rot):
    spec = PersistenceSpec(rot, rot.region("Xu"))
    vec = build_vcc_persistence(spec, [[1.0]], 2, OPTS, [0.5], [2.0])[0]
    sca = build_scalar_cc_persistence(spec, 1.0, 2, OPTS, 0.5, 2.0)
    assert sdp_text(vec) == sdp_text(sca)


def test_k1_ltl_reduces_to_scalar(rot_ltl):
    vec = build_vcc_ltl(rot_ltl, [[1.0]], 2, OPTS)[0]
    sca = build_scalar_cc_ltl(rot_ltl, 1.0, 2, OPTS)
    assert sdp_text(vec) == sdp_text(sca)


def test_k2_differs_from_scalar(rot_safety):
    vec = build_vcc_safety(rot_safety, [[0, 1], [1, 0]], 2, OPTS)[0]
    sca = build_scalar_cc_safety(rot_safety, 1.0, 2, OPTS)
    assert sdp_text(vec) != sdp_text(sca)


# --- synthesis on a rotation ------------------------------------------------------------------

def test_vcc_safety_certificate_audits(rot_safety):
    res = synth_vcc_safety(rot_safety, [[0, 1], [1, 0]], 3, assignment=[1, 2])
    assert res.outcome == "Certificate", res.reason
    cert = res.certificate
    assert cert.k == 2 and set(cert.eta) == {"u1", "u2"} and min(cert.eta.values()) >= 1e-3
    assert res.audit.verdict == "Pass"
    # an independent re-audit with a different seed also passes
    rep = check_certificate(cert, rot_safety, AuditOptions(seed=99, samples=2000))
    assert rep.verdict == "Pass"


def test_scalar_bc_and_cc_outcomes(rot_safety):
    assert synth_scalar_bc(rot_safety, 1.0, 2).outcome in ("Certificate", "NotFound")
    res = synth_scalar_cc_safety(rot_safety, 1.0, 2)
    assert res.outcome in ("Certificate", "NotFound", "SolverFailure")


def test_compile_only_reports_sizes(rot_safety):
    res = synth_vcc_safety(rot_safety, [[0, 1], [1, 0]], 3, SynthOptions(compile_only=True))
    assert res.outcome == "NotFound" and res.reason == "compile only"
    assert res.sizes["sdp_equalities"] == res.sizes["equalities"] > 0
    assert res.certificate is None


def test_guardrail_skip(rot_safety):
    res = synth_vcc_safety(rot_safety, [[0, 1], [1, 0]], 3, SynthOptions(max_rows=10))
    assert res.solver_status == "Skipped" and "guardrail" in res.reason


def test_spec_errors(rot_safety):
    with pytest.raises(SpecError):
        build_vcc_safety(rot_safety, [[0, -1], [1, 0]], 2, OPTS)
    with pytest.raises(SpecError):
        build_vcc_safety(rot_safety, [[0, 1, 0], [1, 0, 0]], 2, OPTS)
    with pytest.raises(SpecError):
        build_vcc_safety(rot_safety, np.eye(2), 2, OPTS, assignment=[1, 3])
    with pytest.raises(SpecError):
        build_scalar_cc_safety(rot_safety, -0.5, 2, OPTS)


def test_empty_unsafe_set_warns(rot):
    spec = SafetySpec(rot, RegionUnion(rot.space))
    with pytest.warns(UserWarning):
        build_vcc_safety(spec, np.eye(1), 2, OPTS)


def test_sweep_order_and_stop(rot_safety):
    calls = []

    def run(d, k, c):
        calls.append((d, k))
        return synth_vcc_safety(rot_safety, c, d, SynthOptions(compile_only=True))
    cells = sweep(run, [3, 2], [1], {1: [[[1.0]]]})
    assert calls == [(2, 1), (3, 1)]
    assert [c.degree for c in cells] == [2, 3]
    with pytest.raises(SpecError):
        sweep(run, [2], [2], {1: [[[1.0]]]})
