from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rltsdp.instance import (
    InstanceError,
    QpInstance,
    build_graph,
    check_point,
    emit_instance,
    from_matrix,
    objective_value,
    parse_instance,
    random_instance,
)
from reference import direct_objective


def test_parse_example2_coefficients(ex2):
    assert ex2.n == 3
    assert ex2.num_coefficients == 9
    assert ex2.diag == {1: 5080, 2: 5, 3: -40}
    assert ex2.offdiag == {(1, 2): -5849, (1, 3): 5767, (2, 3): -1824}
    assert ex2.linear == {1: -254, 2: 1824, 3: 37}


def test_parse_empty_instance():
    inst = parse_instance("n 2\n")
    assert inst.n == 2 and not inst.diag and not inst.offdiag and not inst.linear


def test_parse_accepts_either_pair_order_and_decimals():
    inst = parse_instance("# hi\nn 3\nq 3 1 0.25\nd 2 -1.5\nc 1 3/4\n")
    assert inst.offdiag == {(1, 3): Fraction(1, 4)}
    assert inst.diag == {2: Fraction(-3, 2)}
    assert inst.linear == {1: Fraction(3, 4)}


def test_parse_drops_zero_coefficients():
    inst = parse_instance("n 2\nd 1 0\nq 1 2 0.0\nc 2 1\n")
    assert inst.num_coefficients == 1


@pytest.mark.parametrize(
    "text, fragment, line",
    [
        ("d 1 2\n", "expected 'n <int>'", 1),
        ("n 0\n", "positive", 1),
        ("n x\n", "bad variable count", 1),
        ("n 2\nd 3 1\n", "outside", 2),
        ("n 2\nd 1 1\nd 1 2\n", "duplicate", 3),
        ("n 2\nq 1 2 1\nq 2 1 3\n", "duplicate", 3),
        ("n 2\nq 1 1 4\n", "i == j", 2),
        ("n 2\nz 1 1\n", "unknown line tag", 2),
        ("n 2\nc 1\n", "needs 2 fields", 2),
        ("n 2\nc 1 abc\n", "cannot parse", 2),
    ],
)
def test_parse_errors_report_line(text, fragment, line):
    with pytest.raises(InstanceError) as info:
        parse_instance(text)
    assert fragment in str(info.value)
    assert info.value.line == line


def test_missing_n():
    with pytest.raises(InstanceError, match="missing"):
        parse_instance("# only a comment\n")


def test_emit_is_sorted_and_deterministic():
    inst = parse_instance("n 3\nc 2 1\nq 2 3 -1\nq 1 3 2\nd 3 5\nd 1 -2\n")
    assert emit_instance(inst) == "n 3\nd 1 -2\nd 3 5\nq 1 3 2\nq 2 3 -1\nc 2 1\n"


def test_emit_fraction_formats():
    inst = QpInstance(2, {1: Fraction(1, 8)}, {}, {2: Fraction(-1, 3)})
    text = emit_instance(inst)
    assert "d 1 0.125" in text and "c 2 -1/3" in text
    assert parse_instance(text) == inst


@given(st.integers(1, 7), st.floats(0, 1), st.integers(0, 2**31))
@settings(max_examples=60, deadline=None)
def test_emit_parse_roundtrip(n, density, seed):
    inst = random_instance(n, density=density, plus=n // 3, seed=seed)
    assert parse_instance(emit_instance(inst)) == inst


def test_objective_examples(ex2, ex3):
    assert objective_value(ex2, (Fraction(3, 5), 1, 0)) == -4
    assert objective_value(ex3, (1, 0, Fraction(2, 35))) == Fraction(-10, 7)
    assert objective_value(ex2, (0, 0, 0)) == 0


def test_objective_dimension_mismatch(ex2):
    with pytest.raises(InstanceError):
        objective_value(ex2, (0, 0))


def test_coefficient_convention_matches_double_loop():
    rng = np.random.default_rng(11)
    for seed in range(1000):
        inst = random_instance(int(rng.integers(1, 7)), density=0.7, seed=seed)
        x = rng.random(inst.n)
        assert objective_value(inst, x) == pytest.approx(direct_objective(inst, x), rel=1e-12, abs=1e-9)


def test_exact_objective_matches_double_loop_on_rationals():
    rng = np.random.default_rng(5)
    for seed in range(100):
        inst = random_instance(4, density=0.8, seed=seed)
        x = tuple(Fraction(int(rng.integers(0, 9)), 8) for _ in range(4))
        assert objective_value(inst, x) == direct_objective(inst, x)


def test_from_matrix_doubles_off_diagonal():
    q = np.array([[1.0, 0.5], [0.5, -2.0]])
    inst = from_matrix(q, [1.0, 0.0])
    assert inst.offdiag == {(1, 2): 1}
    x = np.array([0.3, 0.9])
    assert objective_value(inst, x) == pytest.approx(x @ q @ x + x[0])


def test_from_matrix_rejects_asymmetric():
    with pytest.raises(InstanceError, match="symmetric"):
        from_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]), [0, 0])


def test_build_graph_examples(ex2, ex3):
    g = build_graph(ex2)
    assert g.edges == {(1, 2), (1, 3), (2, 3)}
    assert g.plus_loops == {1, 2} and g.minus_loops == {3}
    g3 = build_graph(ex3)
    assert g3.edges == {(1, 2), (1, 3), (2, 3)} and g3.plus_loops == {1, 2, 3}


def test_build_graph_no_loops():
    g = build_graph(parse_instance("n 3\nq 1 2 4\nc 3 1\n"))
    assert not g.plus_loops and not g.minus_loops


@given(st.integers(1, 6), st.integers(0, 10**6), st.integers(1, 1000))
@settings(max_examples=40, deadline=None)
def test_graph_depends_only_on_signs(n, seed, scale):
    inst = random_instance(n, density=0.6, seed=seed)
    scaled = QpInstance(
        n,
        {i: v * scale for i, v in inst.diag.items()},
        {k: v * Fraction(1, scale) for k, v in inst.offdiag.items()},
        {i: v * 7 for i, v in inst.linear.items()},
    )
    assert build_graph(inst) == build_graph(scaled)


def test_check_point():
    assert check_point([0, 0.5, 1], 3) == [0, 0.5, 1]
    with pytest.raises(InstanceError):
        check_point([1.5], 1)
    with pytest.raises(InstanceError):
        check_point([0.5], 2)


def test_random_instance_deterministic_and_plus_count():
    a = random_instance(6, density=0.5, plus=3, seed=42)
    b = random_instance(6, density=0.5, plus=3, seed=42)
    assert a == b
    assert sum(1 for v in a.diag.values() if v > 0) == 3
    assert sum(1 for v in random_instance(6, plus=0, seed=1).diag.values() if v > 0) == 0


def test_random_instance_rejects_bad_arguments():
    with pytest.raises(InstanceError):
        random_instance(0)
    with pytest.raises(InstanceError):
        random_instance(3, plus=4)
    with pytest.raises(InstanceError):
        random_instance(3, density=2)
