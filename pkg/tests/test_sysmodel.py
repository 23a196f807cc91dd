import math
import warnings

import numpy as np
import pytest

from vecert.poly import Polynomial, StructureError, VariableSpace
from vecert.semialg import RegionUnion, box_set
from vecert.sysmodel import (BuchiAutomaton, DynamicalSystem, LabelingPartition, letter_relation,
                             parse_dynamics, product_constraint_instances, simulate,
                             simulate_many, taylor_sin)

S2 = VariableSpace.of("x", 2)


def toy_automaton():
    return BuchiAutomaton(("q0", "q1"), ("u", "s"), {"q0"},
                          (("q0", "s", "q0"), ("q0", "u", "q1"), ("q1", "u", "q1")), {"q1"})


def test_automaton_validation():
    with pytest.raises(StructureError):
        BuchiAutomaton(("q0",), ("a",), {"q0"}, (("q0", "b", "q0"),), set())
    with pytest.raises(StructureError):
        BuchiAutomaton(("q0",), ("a",), {"q0"}, (("q0", "a", "q9"),), set())
    with pytest.raises(StructureError):
        BuchiAutomaton(("q0", "q0"), ("a",), {"q0"}, (), set())


def test_letter_relation_and_successors():
    aut = toy_automaton()
    assert letter_relation(aut, "u") == {("q0", "q1"), ("q1", "q1")}
    assert aut.successors("q0", "s") == ["q0"]
    assert aut.non_accepting == ["q0"]
    with pytest.raises(KeyError):
        letter_relation(aut, "z")


def test_vcc_instance_count():
    aut = toy_automaton()
    inst = product_constraint_instances(aut)
    n_step = sum(len(letter_relation(aut, a)) for a in aut.alphabet)
    fam = [i.family for i in inst]
    assert fam.count("pair_step") == n_step
    assert fam.count("pair_ind") == n_step * len(aut.states)
    # accepting q1 has one accepting successor (itself)
    assert fam.count("pair_acc") == 1
    assert len(product_constraint_instances(aut, acceptance="all")) == len(inst)


def test_vcbrf_instance_count():
    aut = toy_automaton()
    inst = product_constraint_instances(aut, mode="vcbrf")
    fam = [i.family for i in inst]
    assert fam.count("init") == 1 and fam.count("step") == 3
    assert fam.count("acc") == 1 and fam.count("nonacc") == 2


def test_no_accepting_state_warns():
    aut = BuchiAutomaton(("q0",), ("a",), {"q0"}, (("q0", "a", "q0"),), set())
    with pytest.warns(UserWarning):
        product_constraint_instances(aut)


def test_labeling_first_declared_wins():
    A = RegionUnion.of(box_set([0, 0], [1, 1], S2))
    B = RegionUnion.of(box_set([1, 0], [2, 1], S2))
    lab = LabelingPartition((("a", A), ("b", B)))
    assert lab.label_many(np.array([[1.0, 0.5], [1.5, 0.5], [5, 5]])).tolist() == [0, 1, -1]
    audit = lab.audit(box_set([0, 0], [2, 1], S2), count=2000)
    assert audit.ok and audit.uncovered == 0
    with pytest.raises(StructureError):
        LabelingPartition((("a", A), ("a", B)))


def test_taylor_sin():
    x = Polynomial.variable(S2, 0)
    p = taylor_sin(x)
    assert p == x - (x ** 3).scale(1 / 6)
    assert abs(p.evaluate([0.1, 0]) - math.sin(0.1)) < 1e-6


def test_parse_dynamics():
    f = parse_dynamics(["x1 + T*(x2 - a*x1^2)", "sin(x1)/2"], S2, {"T": 0.1, "a": 2})
    assert abs(f[0].evaluate([1, 2]) - (1 + 0.1 * (2 - 2))) < 1e-15
    assert f[1] == taylor_sin(Polynomial.variable(S2, 0)).scale(0.5)
    with pytest.raises((StructureError, ValueError)):
        parse_dynamics(["x1 + q"], S2, {})
    with pytest.raises((StructureError, ValueError)):
        parse_dynamics(["x1 / x2"], S2, {})


def test_system_validation_and_simulation(rot):
    assert rot.n == 2 and rot.degree == 1
    tr = simulate(rot, [0.25, -3.25], 8)
    assert len(tr) == 9 and not tr.truncated
    assert np.allclose(tr.states[4], [0.25, -3.25])    # rotation by 90 degrees, period 4
    many = simulate_many(rot, np.array([[0.25, -3.25], [0.0, -3.0]]), 8)
    assert np.allclose(many[0], tr.states)
    with pytest.raises(StructureError):
        DynamicalSystem(S2, (Polynomial.variable(S2, 0),), rot.X, rot.X0)
    with pytest.raises(KeyError):
        rot.region("nope")


def test_simulation_truncates_on_exit():
    x = Polynomial.variable(S2, 0)
    sys = DynamicalSystem(S2, (x * 2, Polynomial.variable(S2, 1)), box_set([-1, -1], [1, 1], S2),
                          box_set([0.1, 0], [0.2, 0.1], S2))
    tr = simulate(sys, [0.5, 0.0], 10)
    assert tr.truncated and len(tr) == 3   # 1.0 sits on the closed boundary
