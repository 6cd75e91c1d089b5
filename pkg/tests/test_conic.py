import dataclasses
import io
import itertools

import numpy as np
import pytest
from scipy.optimize import minimize

from aisac.conic import ConicProgram, ProgramError, dump_program, solve, validate_kkt


def lambda_max_program(H=np.diag([2.0, 1.0]), P=1.0):
    prog = ConicProgram()
    W = prog.variable(H.shape[0], "W")
    prog.add_linear(W.trace(H))
    prog.add_ge(P - W.trace(), "power")
    return prog


def test_lambda_max_example():
    sol = solve(lambda_max_program())
    assert sol.optimal
    assert sol.objective == pytest.approx(2.0, abs=1e-6)
    np.testing.assert_allclose(sol.values[0], np.diag([1.0, 0.0]), atol=1e-6)
    assert sol.kkt_residuals.max() <= 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_lambda_max_random_hermitian(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    H = (A + A.conj().T) / 2
    sol = solve(lambda_max_program(H, 2.5))
    assert sol.objective == pytest.approx(2.5 * max(np.linalg.eigvalsh(H)[-1], 0), abs=1e-6)


def test_sqrt_scalar_example():
    prog = ConicProgram()
    W = prog.variable(1)
    prog.add_sqrt(W.trace(), 2.0)
    prog.add_linear(W.trace(), -1.0)
    sol = solve(prog)
    assert sol.objective == pytest.approx(1.0, abs=1e-6)
    assert sol.values[0][0, 0].real == pytest.approx(1.0, abs=1e-4)


def test_log_scalar_example():
    prog = ConicProgram()
    W = prog.variable(1)
    prog.add_log(W.trace() + 1.0, 3.0)
    prog.add_linear(W.trace(), -1.0)
    sol = solve(prog)
    # d/dx 3 log(1+x) - x = 0 at x = 2
    assert sol.values[0][0, 0].real == pytest.approx(2.0, abs=1e-5)
    assert sol.objective == pytest.approx(3 * np.log(3) - 2, abs=1e-6)


@pytest.mark.parametrize("eps,feasible", [(0.1, False), (0.49, False), (0.6, True)])
def test_feasibility_boundary(eps, feasible):
    A = np.diag([2.0, 0.5])
    prog = ConicProgram()
    W = prog.variable(2)
    prog.add_linear(W.trace(), -1.0)
    prog.add_ge(W.trace(A) - 1.0, "qos")
    prog.add_ge(eps - W.trace(), "budget")
    sol = solve(prog)
    assert sol.optimal == feasible
    if not feasible:
        assert sol.status == "infeasible"
        with pytest.raises(ValueError):
            validate_kkt(prog, sol)
    else:
        assert sol.objective == pytest.approx(-0.5, abs=1e-6)


def test_equality_and_quadratic_bound():
    # max tr(C X) s.t. tr X = 1 and 1 >= 4 * tr(E X)^2, E = diag(1, 0)
    prog = ConicProgram()
    X = prog.variable(2)
    prog.add_linear(X.trace(np.diag([3.0, 1.0])))
    prog.add_eq(X.trace() - 1.0)
    prog.add_quadratic_bound(X.trace() * 0 + 1.0, [(4.0, X.trace(np.diag([1.0, 0.0])))])
    sol = solve(prog)
    # x11 <= 1/2 so value = 3 * 0.5 + 0.5
    assert sol.objective == pytest.approx(2.0, abs=1e-6)
    assert sol.kkt_residuals.max() < 1e-6


def test_kkt_detects_perturbation():
    prog = lambda_max_program()
    sol = solve(prog)
    moved = dataclasses.replace(sol, values=[sol.values[0] + 1e-2 * np.diag([-1.0, 1.0])])
    assert validate_kkt(prog, moved).stationarity > 1e-3


def test_malformed_programs_rejected():
    prog = ConicProgram()
    W = prog.variable(2)
    with pytest.raises(ProgramError, match="Hermitian"):
        prog.add_linear(W.trace(np.array([[0, 1], [0, 0]])))
    with pytest.raises(ProgramError, match="nonnegative"):
        prog.add_sqrt(W.trace(np.diag([1.0, -1.0])))
    with pytest.raises(ProgramError, match="shape"):
        W.trace(np.eye(3))
    with pytest.raises(ProgramError):
        prog.add_quadratic_bound(W.trace(), [(-1.0, W.trace())])
    with pytest.raises(ProgramError):
        solve(ConicProgram())


def test_deterministic():
    a = solve(lambda_max_program(np.diag([1.0, 3.0, 2.0]), 1.5))
    b = solve(lambda_max_program(np.diag([1.0, 3.0, 2.0]), 1.5))
    assert np.array_equal(a.values[0], b.values[0])


def test_scale_covariance():
    def prog(c):
        p = ConicProgram()
        W = p.variable(2)
        p.add_sqrt(W.trace(np.array([[2.0, 0.5], [0.5, 1.0]])), 2.0 * c)
        p.add_linear(W.trace(np.diag([0.3, 0.7])), -c)
        p.add_ge(1.0 - W.trace())
        return p

    s1, s5 = solve(prog(1.0)), solve(prog(5.0))
    assert s5.objective == pytest.approx(5 * s1.objective, rel=1e-6)
    np.testing.assert_allclose(s1.values[0], s5.values[0], atol=1e-5)


def _psd2(p):
    a, d, re, im = p
    # Cholesky-style parameterization covers all 2 x 2 PSD matrices
    L = np.array([[a, 0], [re + 1j * im, d]])
    return L @ L.conj().T


@pytest.mark.parametrize("seed", range(3))
def test_grid_search_oracle_2x2(seed):
    rng = np.random.default_rng(seed)

    def herm():
        A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        return (A + A.conj().T) / 2

    C = herm()
    B = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    S = B @ B.conj().T
    prog = ConicProgram()
    W = prog.variable(2)
    prog.add_linear(W.trace(C))
    prog.add_sqrt(W.trace(S), 1.5)
    prog.add_ge(1.0 - W.trace())
    sol = solve(prog)

    def f(p):
        X = _psd2(p)
        tr = np.trace(X).real
        if tr > 1:
            X = X / tr
        return -(np.trace(C @ X).real + 1.5 * np.sqrt(max(np.trace(S @ X).real, 0.0)))

    grid = np.linspace(-1, 1, 9)
    best = min((f(p), p) for p in itertools.product(grid, repeat=4))
    ref = minimize(f, best[1], method="Nelder-Mead",
                   options=dict(xatol=1e-10, fatol=1e-12, maxiter=20000))
    assert sol.objective == pytest.approx(-ref.fun, abs=1e-4)
    assert sol.objective >= -ref.fun - 1e-6


def test_dump_program_text():
    buf = io.StringIO()
    text = dump_program(lambda_max_program(), buf)
    assert buf.getvalue() == text
    assert "var W hermitian 2x2 psd" in text
    assert "objective linear" in text
