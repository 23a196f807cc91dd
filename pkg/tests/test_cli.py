import json
import shutil

import pytest

from vecert import certfile, config
from vecert.cli import main

CFG = config.shipped_config_dir()


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path / "out")])


def test_synth_writes_artifacts_deterministically(tmp_path, capsys):
    cfg = str(CFG / "2d_simple_vcc.cfg")
    assert main(["synth", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["synth", cfg, "--out", str(tmp_path / "b")]) == 0
    a, b = tmp_path / "a" / "2d_simple_vcc", tmp_path / "b" / "2d_simple_vcc"
    for name in ("report.json", "audit.json", "certificate.cert"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert (a / "timing.json").exists()
    rep = json.loads((a / "report.json").read_text())
    assert rep["exit_code"] == 0
    cert = certfile.read(a / "certificate.cert")
    assert cert.kind == "VCC_safety" and cert.k == 2


@pytest.mark.parametrize("name", ["appendix_2d_vcc_audit.cfg", "kuramoto_vcbrf_audit.cfg"])
def test_audit_verb(tmp_path, name):
    assert run(tmp_path, "audit", str(CFG / name)) == 0


def test_discrete_verb(tmp_path):
    assert run(tmp_path, "discrete", str(CFG / "fig1_counterexample.cfg")) == 0
    rep = json.loads((tmp_path / "out" / "fig1_counterexample" / "report.json").read_text())
    assert rep["exit_code"] == 0


def test_corrupted_certificate_exit_3(tmp_path):
    shutil.copy(CFG / "appendix_2d_vcc_audit.cfg", tmp_path / "a.cfg")
    src = (config.shipped_certificate_dir() / "2d_simple_vcc_appendix.cert").read_text()
    lines = src.splitlines()
    i = next(n for n, l in enumerate(lines) if l.startswith("poly 1 "))
    lines[i] = lines[i] + " + 100.0"
    (tmp_path / "bad.cert").write_text("\n".join(lines) + "\n")
    text = (tmp_path / "a.cfg").read_text().replace("../certificates/2d_simple_vcc_appendix.cert",
                                                    str(tmp_path / "bad.cert"))
    (tmp_path / "a.cfg").write_text(text)
    assert run(tmp_path, "audit", str(tmp_path / "a.cfg")) == 3


def test_config_errors_exit_1(tmp_path, capsys):
    base = (CFG / "2d_simple_vcc.cfg").read_text()
    (tmp_path / "neg.cfg").write_text(base.replace("A: [[0, 1], [1, 0]]", "A: [[0, -1], [1, 0]]"))
    assert run(tmp_path, "synth", str(tmp_path / "neg.cfg")) == 1
    assert "neg.cfg:21" in capsys.readouterr().err
    (tmp_path / "unk.cfg").write_text(base.replace("seed: 0", "seed: 0\nfoo: 1"))
    assert run(tmp_path, "synth", str(tmp_path / "unk.cfg")) == 1
    assert "unk.cfg:7" in capsys.readouterr().err
    assert run(tmp_path, "audit", str(CFG / "2d_simple_vcc.cfg")) == 1    # task mismatch
    assert run(tmp_path, "synth", str(tmp_path / "missing.cfg")) == 1


def test_guardrail_and_compile_only(tmp_path, capsys):
    cfg = str(CFG / "2d_simple_vcc.cfg")
    assert run(tmp_path, "synth", cfg, "--max-rows", "10") == 2
    assert run(tmp_path, "synth", cfg, "--compile-only") == 0
    assert "Compiled" in capsys.readouterr().out


def test_empty_table_dir_exit_2(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert run(tmp_path, "table1", str(tmp_path / "empty")) == 2
    assert "no configurations" in capsys.readouterr().out
    assert run(tmp_path, "table1", str(tmp_path / "nope")) == 1


def test_table_harness_small(tmp_path):
    d = tmp_path / "rows"
    d.mkdir()
    shutil.copy(CFG / "table1" / "01_2d_simple_vcc.cfg", d)
    shutil.copy(CFG / "table1" / "03_2d_simple_cc.cfg", d)
    (d / "99_broken.cfg").write_text("name: x\n")
    assert main(["table1", str(d), "--out", str(tmp_path / "o1")]) == 0
    assert main(["table1", str(d), "--out", str(tmp_path / "o2")]) == 0
    t1 = (tmp_path / "o1" / "table1.json").read_bytes()
    assert t1 == (tmp_path / "o2" / "table1.json").read_bytes()
    rows = json.loads(t1)["rows"]
    assert [r["status"] for r in rows] == ["Certificate", "NotFound", "Error"]


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("VECERT_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["synth", str(CFG / "2d_simple_vcc.cfg"), "--compile-only"]) == 0
    assert (tmp_path / "env" / "2d_simple_vcc" / "report.json").exists()
