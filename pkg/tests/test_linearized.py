import numpy as np
import pytest

from cqnls.ground_state import default_grid, solve_ground_state
from cqnls.linearized import (MINUS, PLUS, LinearizedOperators, composed_residual, dense_internal_mode,
                              nonlinear_remainder, solve_internal_mode)


@pytest.fixture(scope="module")
def ops(gs05):
    return LinearizedOperators.from_ground_state(gs05)


def test_kernel_and_plus_identity(gs05, ops):
    g, Q = gs05.grid, gs05.Q
    assert np.sqrt(g.l2_sq(ops.apply(MINUS, Q)) / g.l2_sq(Q)) < 1e-8
    target = -2 * Q**3 - 4 * Q**5
    assert np.sqrt(g.l2_sq(ops.apply(PLUS, Q) - target) / g.l2_sq(target)) < 1e-8


def test_internal_mode(ctx05, ops):
    mode = ctx05.mode
    assert mode.e_omega > 0
    assert max(mode.residuals) < 1e-6
    assert composed_residual(ops, mode) < 1e-5
    assert 2 * mode.pairing == pytest.approx(1.0, abs=1e-10)
    assert mode.signQ2 < 0


def test_generator_eigenvector(ctx05, ops):
    mode, g = ctx05.mode, ctx05.grid
    # -i L Y_+ = e Y_+
    lhs = -1j * ops.apply_full(mode.Y_plus)
    assert np.sqrt(g.l2_sq(lhs - mode.e_omega * mode.Y_plus) / g.l2_sq(mode.Y_plus)) < 1e-6


def test_iterative_matches_dense():
    gs = solve_ground_state(0.05, grid=default_grid(0.05, n=300))
    ops = LinearizedOperators.from_ground_state(gs)
    assert solve_internal_mode(ops).e_omega == pytest.approx(dense_internal_mode(ops).e_omega, rel=1e-8)


def test_remainder_is_quadratic(ops, gs05):
    g = gs05.grid
    eta = np.exp(-(g.r / 5) ** 2) * (1 + 0.3j)
    n1 = np.sqrt(g.l2_sq(nonlinear_remainder(ops, 1e-3 * eta)))
    n2 = np.sqrt(g.l2_sq(nonlinear_remainder(ops, 5e-4 * eta)))
    assert np.log2(n1 / n2) == pytest.approx(2.0, abs=0.05)
