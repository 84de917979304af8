import io
from fractions import Fraction

import numpy as np
import pytest

from rltsdp.graph import LoopGraph
from rltsdp.instance import build_graph, random_instance
from rltsdp.oracle import global_min_boxqp
from rltsdp.relax import (
    LmiBlock,
    Psd2Config,
    RelaxationProgram,
    build_psd2,
    build_relaxation,
    set_instance_objective,
)
from rltsdp.rlt import LinearForm, Monomial, Square
from rltsdp.sdp import (
    SdpBlock,
    SdpError,
    SdpStandard,
    block_min_eigenvalues,
    export_sdpa,
    import_sdpa,
    lower,
    solve,
    solve_program,
)
from reference import cvxpy_solve


def z(*s):
    return LinearForm.var(Monomial(s))


def zz(i):
    return LinearForm.var(Square(i))


def example1_program(ex1):
    prog = build_psd2(build_graph(ex1), Psd2Config({1, 2}))
    return set_instance_objective(prog, ex1)


def one_var():
    blk = SdpBlock(1, coeffs={0: {(0, 0): 1.0}}, const={(0, 0): 1.0})
    return SdpStandard(1, [blk], np.array([1.0]))


def dump(sdp):
    buf = io.StringIO()
    export_sdpa(sdp, buf)
    return buf.getvalue()


def test_lower_example1(ex1):
    sdp = lower(example1_program(ex1))
    assert sdp.m == 7
    assert sdp.block_summary() == {3: 1, 2: 4, -4: 1}
    assert set(sdp.names) == {"z(1)", "z(2)", "z(1,2)", "z(1,1)", "z(2,2)", "z(1,1|2)", "z(2,2|1)"}


def test_lower_eliminates_equality():
    prog = RelaxationProgram()
    prog.add_scalar(z(1))
    prog.add_scalar(z(2))
    prog.add_scalar(1 - z(1) - z(2))
    assert lower(prog).m == 2
    prog.add_equality(z(1) - z(2), 0)
    sdp = lower(prog)
    assert sdp.m == 1 and len(sdp.elimination.pivots) == 1


def test_lower_inconsistent_equalities():
    prog = RelaxationProgram()
    prog.add_scalar(z(1))
    prog.add_equality(z(1) + z(2), 1)
    prog.add_equality(z(1) + z(2), 2)
    with pytest.raises(SdpError, match="inconsistent equalities: row 1"):
        lower(prog)


def test_lower_constant_block_infeasible():
    prog = RelaxationProgram()
    prog.add_scalar(z(1))
    prog.add_equality(z(1), 1)
    prog.add_scalar(LinearForm.const(Fraction(1, 2)) - z(1))
    with pytest.raises(SdpError, match="not PSD"):
        lower(prog)
    res, values = solve_program(prog)
    assert res.status == "infeasible" and values == {}


def test_empty_program():
    sdp = lower(RelaxationProgram(offset=Fraction(5)))
    assert sdp.m == 0
    res = solve(sdp)
    assert res.status == "optimal" and res.primal_objective == 5


def test_unboxed_one_dimensional_minimum():
    prog = RelaxationProgram()
    prog.add_block(LmiBlock(((LinearForm.const(1), z(1)), (z(1), zz(1)))))
    prog.set_objective(zz(1) + z(1))
    res, values = solve_program(prog)
    assert res.status == "optimal"
    assert res.primal_objective == pytest.approx(-0.25, abs=1e-7)
    assert values[Monomial((1,))] == pytest.approx(-0.5, abs=1e-4)


def test_detects_infeasible():
    prog = RelaxationProgram()
    prog.add_scalar(z(1) - 1)
    prog.add_scalar(LinearForm.const(Fraction(1, 2)) - z(1))
    prog.set_objective(z(1))
    res, _ = solve_program(prog)
    assert res.status == "infeasible"


def test_detects_unbounded():
    prog = RelaxationProgram()
    prog.add_scalar(z(1))
    prog.set_objective(-z(1))
    res, _ = solve_program(prog)
    assert res.status == "unbounded"
    lonely = RelaxationProgram()
    lonely.add_scalar(z(1))
    lonely.set_objective(z(1) + z(2))
    assert solve(lower(lonely)).status == "unbounded"


def test_tolerance_and_guards(ex1):
    sdp = lower(example1_program(ex1))
    with pytest.raises(SdpError):
        solve(sdp, tol=0.1)
    with pytest.raises(SdpError, match="guard"):
        solve(sdp, max_block=2)
    with pytest.raises(SdpError, match="guard"):
        solve(sdp, max_vars=3)


def test_example2_values(ex2):
    exact, _ = solve_program(build_relaxation("exact", ex2))
    assert exact.status == "optimal"
    assert exact.primal_objective == pytest.approx(float(global_min_boxqp(ex2).value), abs=1e-6)
    base, _ = solve_program(build_relaxation("shor-mc-tri", ex2))
    assert base.primal_objective == pytest.approx(-177.36, abs=0.5)


def certificate_ok(sdp, res, tol):
    mins = block_min_eigenvalues(sdp, res.y)
    pobj = float(sdp.cost @ res.y) + sdp.offset
    assert min(mins) >= -10 * tol
    assert abs(pobj - res.primal_objective) <= 1e-9 * (1 + abs(pobj))
    assert res.dual_objective <= res.primal_objective + tol * (1 + abs(pobj))
    assert res.gap <= tol


@pytest.mark.parametrize("name", ["shor", "shor-mc", "shor-mc-tri", "deyida", "deyida+shor", "exact"])
def test_certificates_and_reference_solver(name):
    tol = 1e-8
    for seed in range(4):
        inst = random_instance(4, density=0.7, plus=2, seed=seed, no_triplet=True)
        sdp = lower(build_relaxation(name, inst))
        res = solve(sdp, tol=tol)
        assert res.status == "optimal", res.message
        certificate_ok(sdp, res, tol)
        status, value = cvxpy_solve(sdp)
        assert status == "optimal"
        assert res.primal_objective == pytest.approx(value, rel=1e-5, abs=1e-5)


def test_solve_is_deterministic(ex2):
    sdp = lower(build_relaxation("exact", ex2))
    a, b = solve(sdp), solve(sdp)
    assert np.array_equal(a.y, b.y) and a.iterations == b.iterations


def test_export_smallest_instance():
    assert dump(one_var()) == "1\n1\n1\n1\n0 1 1 1 1\n1 1 1 1 1\n*offset 0\n"


def test_export_diagonal_block_negative():
    blk = SdpBlock(2, diagonal=True, coeffs={0: {(0, 0): 1.0, (1, 1): -1.0}}, const={(1, 1): -1.0})
    text = dump(SdpStandard(1, [blk], [1.0]))
    assert text.splitlines()[2] == "-2"


def test_export_uses_seventeen_digits():
    blk = SdpBlock(1, coeffs={0: {(0, 0): 0.1}}, const={(0, 0): 1 / 3})
    text = dump(SdpStandard(1, [blk], [1.0]))
    assert "0 1 1 1 0.33333333333333331" in text
    assert import_sdpa(text).blocks[0].const[(0, 0)] == 1 / 3


def test_roundtrip_example1(ex1, tmp_path):
    sdp = lower(example1_program(ex1))
    path = tmp_path / "ex1.dat-s"
    export_sdpa(sdp, path)
    first = path.read_bytes()
    export_sdpa(lower(example1_program(ex1)), path)
    assert path.read_bytes() == first
    again = import_sdpa(str(path))
    assert again.m == sdp.m and again.block_summary() == sdp.block_summary()
    assert solve(again).primal_objective == pytest.approx(solve(sdp).primal_objective, abs=1e-6)
    assert dump(again) == first.decode()


def test_import_multiple_diagonal_blocks():
    text = "1\n2\n-1 -1\n1\n0 1 1 1 1\n1 1 1 1 1\n0 2 1 1 2\n1 2 1 1 1\n"
    res = solve(import_sdpa(text))
    assert res.status == "optimal" and res.primal_objective == pytest.approx(2, abs=1e-7)
    assert len(res.min_eigenvalues) == 2


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("x\n", "line 1: malformed header"),
        ("1\n1\n1\n", "truncated"),
        ("1\n1\n1\n1\n0 1 1 1\n", "line 5: malformed entry"),
        ("1\n1\n1\n1\n3 1 1 1 1\n", "line 5: entry index out of range"),
        ("1\n1\n2\n1\n0 1 3 1 1\n", "outside block"),
        ("1\n1\n-2\n1\n0 1 1 2 1\n", "off-diagonal entry"),
        ("1\n1\n1\n1\n0 1 1 1 1\n0 1 1 1 2\n", "duplicate"),
        ("1\n1\n1\n1\n*offset x\n", "bad offset"),
    ],
)
def test_import_errors(text, fragment):
    with pytest.raises(SdpError, match=fragment):
        import_sdpa(text)


def test_import_accepts_sdpa_header_punctuation():
    text = '"comment\n1 = m\n1\n{1}\n{1.0}\n0 1 1 1 1\n1 1 1 1 1\n*offset 2.5\n'
    sdp = import_sdpa(text)
    assert sdp.offset == 2.5 and solve(sdp).primal_objective == pytest.approx(3.5, abs=1e-7)


def test_slack_matches_dense_reconstruction(ex2):
    sdp = lower(build_relaxation("deyida+shor", ex2))
    rng = np.random.default_rng(0)
    y = rng.standard_normal(sdp.m)
    for blk, s in zip(sdp.blocks, sdp.slack(y)):
        dense = -blk.matrix(None) + sum(y[k] * blk.matrix(k) for k in range(sdp.m))
        assert np.allclose(s, dense)
