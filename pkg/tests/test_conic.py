import cvxpy as cp
import numpy as np
import pytest

from rsma_ris_swipt.conic import ConicProgram, ProgramError, SolverSettings, vdot

NATIVE = SolverSettings()
MINORANT = SolverSettings(native_log=False)


def test_maximize_bounded_scalar():
    prog = ConicProgram()
    x = prog.variable("x")
    prog.maximize(x)
    prog.add_le(x, 3.0)
    res = prog.solve()
    assert res.optimal
    assert res["x"][0] == pytest.approx(3.0, abs=1e-7)
    assert res.objective_value == pytest.approx(3.0, abs=1e-7)


@pytest.mark.parametrize("settings", [NATIVE, MINORANT], ids=["native", "minorant"])
def test_maximize_log(settings):
    prog = ConicProgram()
    x = prog.variable("x")
    prog.add_log2_objective(1.0, x, anchor=0.5)
    prog.add_ge(x, 0.0)
    prog.add_le(x, 1.0)
    res = prog.solve(settings)
    assert res.optimal
    assert res["x"][0] == pytest.approx(1.0, abs=1e-6)
    assert res.objective_value == pytest.approx(1.0, abs=1e-6)


def test_minimum_norm_with_linear_constraint():
    prog = ConicProgram()
    p = prog.variable("p", 2, is_complex=True)
    r = prog.variable("r")
    prog.add_quad_le(p, r)
    prog.add_ge(vdot(np.array([1.0, 0.0]), p).real, 1.0)
    prog.minimize(r)
    res = prog.solve()
    assert res.optimal
    np.testing.assert_allclose(res["p"], [1.0, 0.0], atol=1e-6)
    assert res.objective_value == pytest.approx(1.0, abs=1e-6)


def test_minorant_mode_needs_anchor():
    prog = ConicProgram()
    x = prog.variable("x")
    prog.add_log2_objective(1.0, x)
    prog.add_le(x, 1.0)
    prog.add_ge(x, 0.0)
    with pytest.raises(ProgramError):
        prog.solve(MINORANT)


def test_minorant_mode_is_a_lower_bound():
    # with a poor anchor the surrogate log is looser but never exceeds the exact value
    prog = ConicProgram()
    x = prog.variable("x")
    prog.add_log2_objective(1.0, x, anchor=10.0)
    prog.add_ge(x, 0.0)
    prog.add_le(x, 1.0)
    prog.maximize(-0.2 * x)
    native = ConicProgram()
    y = native.variable("x")
    native.add_log2_objective(1.0, y)
    native.add_ge(y, 0.0)
    native.add_le(y, 1.0)
    native.maximize(-0.2 * y)
    a, b = prog.solve(MINORANT), native.solve(NATIVE)
    assert a.optimal and b.optimal
    assert a.objective_value <= b.objective_value + 1e-7


def test_declaration_errors():
    prog = ConicProgram()
    x = prog.variable("x", 2)
    with pytest.raises(ProgramError):
        prog.variable("x")
    with pytest.raises(ProgramError):
        prog.maximize(x)
    with pytest.raises(ProgramError):
        prog.add_log2_ge(x, 1.0)
    with pytest.raises(ProgramError):
        prog.add_log2_objective(-1.0, x[0])
    z = prog.variable("z", 1, is_complex=True)
    with pytest.raises(ProgramError):
        prog.add_ge(z, 0.0)
    prog.minimize(x[0])
    with pytest.raises(ProgramError):
        prog.add_log2_objective(1.0, x[1])


def test_infeasible_status():
    prog = ConicProgram()
    x = prog.variable("x")
    prog.add_ge(x, 2.0)
    prog.add_le(x, 1.0)
    prog.maximize(x)
    assert prog.solve().status == "infeasible"


def _random_program(rng, n=4, m=3):
    """max sum log2(1 + a_i^T x) - c^T x  s.t. ||x||^2 <= 4, x >= 0, log2(1 + b^T x) >= 0.5."""
    A = rng.uniform(0.1, 2.0, (m, n))
    b = rng.uniform(0.1, 1.0, n)
    c = rng.uniform(0.0, 0.3, n)
    prog = ConicProgram("random")
    x = prog.variable("x", n)
    prog.maximize(-(c @ x))
    for i in range(m):
        prog.add_log2_objective(1.0, A[i] @ x, anchor=1.0, name=f"obj{i}")
    prog.add_quad_le(x, 4.0, name="norm")
    prog.add_ge(x, 0.0, name="pos")
    prog.add_log2_ge(b @ x, 0.5, anchor=1.0, name="rate")
    return prog, (A, b, c)


def test_cross_check_against_cvxpy(rng):
    for _ in range(5):
        prog, (A, b, c) = _random_program(rng)
        res = prog.solve()
        assert res.optimal
        x = cp.Variable(A.shape[1])
        obj = cp.sum(cp.log(1 + A @ x)) / np.log(2) - c @ x
        cons = [cp.sum_squares(x) <= 4, x >= 0, cp.log(1 + b @ x) / np.log(2) >= 0.5]
        ref = cp.Problem(cp.Maximize(obj), cons).solve(solver=cp.CLARABEL)
        assert res.objective_value == pytest.approx(ref, abs=1e-6)


def test_solution_satisfies_stored_constraints(rng):
    prog, _ = _random_program(rng)
    res = prog.solve()
    residuals = prog.residuals(prog.pack(res.assignment))
    assert max(residuals.values()) <= 1e-7


def test_resolve_is_reproducible(rng):
    prog, _ = _random_program(rng)
    a, b = prog.solve(), prog.solve()
    assert abs(a.objective_value - b.objective_value) <= 1e-8


def test_dump_is_deterministic(rng):
    seed = rng.integers(1 << 30)
    first = _random_program(np.random.default_rng(seed))[0].dump()
    second = _random_program(np.random.default_rng(seed))[0].dump()
    assert first == second
    assert first.startswith("program random")
