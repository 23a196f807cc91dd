import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vecert import config
from vecert.poly import Polynomial, VariableSpace
from vecert.semialg import RegionUnion, box_complement, box_set
from vecert.sysmodel import BuchiAutomaton, DynamicalSystem, LabelingPartition
from vecert.synth import LtlSpec, PersistenceSpec, SafetySpec

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def rotation_system() -> DynamicalSystem:
    S = VariableSpace.of("x", 2)
    x1, x2 = Polynomial.variable(S, 0), Polynomial.variable(S, 1)
    X = box_set([-4, -4], [4, 4], S, "X")
    X0 = box_set([0, -3.5], [0.5, -3], S, "X0")
    Xu = RegionUnion(S, (box_set([-4, 1], [-1, 4], S, "u1"), box_set([1, -4], [4, -1], S, "u2")), "Xu")
    return DynamicalSystem(S, (x2, -x1), X, X0, {"Xu": Xu}, "rotation")


@pytest.fixture(scope="session")
def rot():
    return rotation_system()


@pytest.fixture(scope="session")
def rot_safety(rot):
    return SafetySpec(rot, rot.region("Xu"))


@pytest.fixture(scope="session")
def rot_ltl(rot):
    Xu = rot.region("Xu")
    lab = LabelingPartition((("u", Xu), ("s", box_complement(rot.X, Xu, "s"))))
    aut = BuchiAutomaton(("q0", "q1"), ("u", "s"), {"q0"},
                         (("q0", "s", "q0"), ("q0", "u", "q1"), ("q1", "u", "q1")), {"q1"})
    return LtlSpec(rot, lab, aut)


@pytest.fixture(scope="session")
def kuramoto_persistence():
    return config.build_spec(config.load_shipped("kuramoto_vcbrf"))


@pytest.fixture(scope="session")
def prey_predator_ltl():
    return config.build_spec(config.load_shipped("prey_predator_vcbrf_ltl"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance reporting --------------------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}
OUTCOMES: dict[str, str] = {}


def record_acceptance(n: int, ok: bool, detail: str) -> str:
    ACCEPTANCE[n] = (ok, detail)
    return f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"


def pytest_collection_modifyitems(config, items):
    # acceptance checks run last so they can read the property-suite outcomes of this session
    items.sort(key=lambda it: it.nodeid.startswith("tests/test_acceptance.py"))


def pytest_runtest_logreport(report):
    if report.when == "call" or report.outcome != "passed":
        prev = OUTCOMES.get(report.nodeid)
        if prev != "failed":
            OUTCOMES[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
