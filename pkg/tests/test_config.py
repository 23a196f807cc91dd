import pytest

from vecert import config
from vecert.config import ConfigError
from vecert.synth import LtlSpec, PersistenceSpec, SafetySpec

SHIPPED = sorted(p.relative_to(config.shipped_config_dir()).as_posix()
                 for p in config.shipped_config_dir().rglob("*.cfg"))
BASE = (config.shipped_config_dir() / "2d_simple_vcc.cfg").read_text()


@pytest.mark.parametrize("rel", SHIPPED)
def test_shipped_configs_load(rel):
    cfg = config.load(config.shipped_config_dir() / rel)
    if cfg.task == "discrete":
        assert config.build_finite_system(cfg).states
    else:
        assert isinstance(config.build_spec(cfg), (SafetySpec, PersistenceSpec, LtlSpec))


def bad(text, match):
    with pytest.raises(ConfigError, match=match):
        config.loads(text, "t.cfg")


def test_unknown_key_is_line_anchored():
    bad(BASE.replace("  eta_lb: 0.001", "  eta_lb: 0.001\n  bogus: 1"), r"^t\.cfg:24: .*unknown key.*bogus")


def test_negative_matrix_rejected():
    bad(BASE.replace("A: [[0, 1], [1, 0]]", "A: [[0, -1], [1, 0]]"), r"^t\.cfg:21: .*nonnegative")


def test_semantic_errors():
    bad(BASE.replace("eta_lb: 0.001", "eta_lb: 0"), r"t\.cfg:23: eta_lb must be > 0")
    bad(BASE.replace('dynamics: ["x2", "-x1"]', 'dynamics: ["x2"]'), r"t\.cfg:9: ")
    bad(BASE.replace("schema_version: 1", "schema_version: 7"), r"t\.cfg:2: ")
    bad("a: [1,", r"YAML syntax error")
    bad("- 1\n", r"mapping")


def test_unknown_region_and_bad_box():
    cfg = config.loads(BASE.replace("unsafe: Xu", "unsafe: Nope"), "t.cfg")
    with pytest.raises(ConfigError, match="unknown region"):
        config.build_spec(cfg)
    cfg = config.loads(BASE.replace("lo: [0, -3.5]", "lo: [1, -3.5]"), "t.cfg")
    with pytest.raises(ConfigError, match="inverted"):
        config.build_spec(cfg)


def test_complement_region():
    text = BASE.replace("spec:\n  unsafe: Xu", "spec:\n  unsafe: Safe").replace(
        "  regions:\n", "  regions:\n    Safe:\n      complement:\n        outer: {box: {lo: [-4, -4], hi: [4, 4]}}\n"
                        "        inner: Xu\n")
    spec = config.build_spec(config.loads(text, "t.cfg"))
    assert len(spec.unsafe) >= 2
    assert not spec.unsafe.contains([-3, 3], tol=-1e-9) and spec.unsafe.contains([0, 0])


def test_lambda_grid():
    g = config.lambda_grid({"start": 0, "stop": 5, "step": 0.1})
    assert len(g) == 51 and g[0] == 0 and g[-1] == 5 and g[3] == 0.3
    with pytest.raises(ValueError):
        config.lambda_grid({"start": 1, "stop": 0, "step": 0.1})
