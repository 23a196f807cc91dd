import numpy as np
import pytest

from vecert import certfile, config
from vecert.audit import (AuditOptions, check_certificate, gram_audit, recheck_witness,
                          trajectory_audit)
from vecert.synth import PersistenceSpec, synth_vcc_safety


@pytest.fixture(scope="module")
def appendix():
    spec = config.build_spec(config.load_shipped("appendix_2d_vcc_audit"))
    cert = certfile.read(config.shipped_certificate_dir() / "2d_simple_vcc_appendix.cert")
    return spec, cert


@pytest.fixture(scope="module")
def synthesized(rot_safety):
    res = synth_vcc_safety(rot_safety, [[0, 1], [1, 0]], 3, assignment=[1, 2])
    assert res.found
    return res.certificate


def test_transcribed_tables_pass(appendix):
    spec, cert = appendix
    rep = check_certificate(cert, spec, AuditOptions(mode="transcribed-rounded"))
    assert rep.verdict in ("Pass", "PassWithRounding")
    assert not rep.failures()
    excl = [c for c in rep.conditions if c.family == "exclude"]
    assert excl and all(c.worst_margin > 1.0 for c in excl)


def test_corrupted_certificate_fails(appendix):
    spec, cert = appendix
    text = certfile.dumps(cert)
    bad = certfile.loads(text)
    key = next(iter(bad.polynomials))
    bad.polynomials[key] = bad.polynomials[key] + 50.0   # breaks exclusion for function 1
    rep = check_certificate(bad, spec, AuditOptions(mode="transcribed-rounded"))
    assert rep.verdict == "Fail"
    worst = min(rep.failures(), key=lambda c: c.worst_margin)
    # the recorded witness reproduces the reported margin
    assert abs(recheck_witness(bad, spec, worst, AuditOptions(mode="transcribed-rounded"))
               - worst.worst_margin) <= 1e-9 * max(1.0, abs(worst.worst_margin))


def test_synthesized_certificate_and_gram_records(synthesized, rot_safety):
    grams = gram_audit(synthesized)
    assert grams and all(g.passed for g in grams)
    assert min(min(g.min_eigs) for g in grams) >= -1e-8
    rep = check_certificate(synthesized, rot_safety, AuditOptions(samples=2000))
    assert rep.verdict == "Pass"
    assert all(c.worst_margin >= -1e-6 * c.scale for c in rep.conditions)


def test_tampered_gram_detected(synthesized):
    cert = synthesized
    g = cert.grams[0]
    saved = g.grams[0].copy()
    try:
        g.grams[0] = saved - 10 * np.eye(saved.shape[0])
        assert not gram_audit(cert)[0].passed
    finally:
        g.grams[0] = saved


def test_audit_is_deterministic(appendix):
    spec, cert = appendix
    a = check_certificate(cert, spec, AuditOptions(mode="transcribed-rounded", samples=500))
    b = check_certificate(cert, spec, AuditOptions(mode="transcribed-rounded", samples=500))
    assert a.to_text() == b.to_text()


def test_options_validation():
    with pytest.raises(ValueError):
        AuditOptions(mode="loose")
    assert AuditOptions().tol == 1e-6
    assert AuditOptions(mode="transcribed-rounded").tol == 0.05


def test_trajectory_audit(rot):
    rep = trajectory_audit(rot, rot.region("Xu"), count=20, steps=40)
    assert rep.max_visits == 0 and rep.max_last_visit == -1 and rep.ceased
    assert rep.left_domain == 0
