import pytest

from vecert import certfile, config
from vecert.certfile import CertificateFormatError


@pytest.mark.parametrize("name", ["2d_simple_vcc_appendix.cert", "kuramoto_vcbrf_appendix.cert"])
def test_shipped_round_trip(name):
    text = (config.shipped_certificate_dir() / name).read_text()
    cert = certfile.loads(text)
    assert certfile.dumps(cert) == text


def test_synthesized_round_trip(rot_safety, tmp_path):
    from vecert.synth import synth_vcc_safety
    res = synth_vcc_safety(rot_safety, [[0, 1], [1, 0]], 3, assignment=[1, 2])
    path = certfile.write(res.certificate, tmp_path / "c.cert")
    back = certfile.read(path)
    assert certfile.dumps(back) == path.read_text()
    assert back.polynomials == res.certificate.polynomials
    assert back.eta == res.certificate.eta and back.assignment == res.certificate.assignment
    assert len(back.gram_hashes) == len(res.certificate.grams)


@pytest.mark.parametrize("text,match", [
    ("kind BC\nk 1\nn 2\n", "header"),
    ("vecert-certificate 2\n", "version"),
    ("vecert-certificate 1\nkind XYZ\nk 1\nn 2\n", "kind"),
    ("vecert-certificate 1\nkind BC\nk 1\nn 2\nmatrix A 2 2 1 2 3\n", "line 5"),
    ("vecert-certificate 1\nkind BC\nk 1\nn 2\npoly 1 - 1 + q7\n", "line 5"),
    ("vecert-certificate 1\nkind BC\nk 1\nn 2\nbogus 1\n", "line 5"),
    ("vecert-certificate 1\nkind VCC_safety\nk 1\nn 2\nmatrix A 1 1 -1.0\n", "negative"),
])
def test_format_errors(text, match):
    with pytest.raises(CertificateFormatError, match=match):
        certfile.loads(text)
