import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqnls.errors import ConfigurationError, GridMismatch
from cqnls.radial import RadialGrid, build_grid, h1_distance


@pytest.fixture(scope="module")
def grid():
    return build_grid(20.0, 2000)


def test_gaussian_quadrature(grid):
    assert grid.integrate(np.exp(-grid.r**2)) == pytest.approx(math.pi**1.5, rel=1e-12)


def test_laplacian_of_gaussian(grid):
    r = grid.r
    u = np.exp(-r**2)
    exact = (4 * r**2 - 6) * u
    assert np.abs(grid.laplacian(u) - exact).max() < 1e-8


def test_laplacian_is_symmetric(grid):
    r = grid.r
    u, w = np.exp(-r**2 / 3) * (1 + r), np.exp(-r**2 / 5) * np.cos(r)
    a, b = grid.inner(grid.laplacian(u), w), grid.inner(u, grid.laplacian(w))
    assert abs(a - b) <= 1e-12 * abs(a)


def test_grad_sq_matches_integration_by_parts(grid):
    u = np.exp(-grid.r**2 / 4)
    assert grid.grad_sq(u) == pytest.approx(-grid.inner_real(grid.laplacian(u), u), rel=1e-10)


@pytest.mark.parametrize("order", [2, 4, 6, 8])
def test_stencil_orders_converge(order):
    errs = []
    for n in (200, 400):
        g = RadialGrid(12.0, n, order)
        u = np.exp(-g.r**2)
        errs.append(np.abs(g.laplacian(u) - (4 * g.r**2 - 6) * u).max())
    assert math.log2(errs[0] / errs[1]) > order - 0.7


def test_shape_mismatch_raises(grid):
    with pytest.raises(GridMismatch):
        grid.l2_sq(np.ones(grid.n + 1))


@pytest.mark.parametrize("kwargs", [dict(r_max=-1.0, n=100), dict(r_max=10.0, n=3),
                                    dict(r_max=10.0, n=100, order=5)])
def test_invalid_grid(kwargs):
    with pytest.raises(ConfigurationError):
        RadialGrid(**kwargs)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), w=st.floats(0.5, 4.0))
def test_integrate_is_linear(a, b, w):
    g = build_grid(20.0, 400)
    u, v = np.exp(-(g.r / w) ** 2), g.r * np.exp(-g.r)
    lhs = g.integrate(a * u + b * v)
    rhs = a * g.integrate(u) + b * g.integrate(v)
    assert abs(lhs - rhs) <= 1e-12 * (abs(a) + abs(b) + 1) * 100


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0.1, 3.0), w=st.floats(0.5, 3.0), phase=st.floats(0, 2 * math.pi))
def test_norms_phase_invariant_and_nonnegative(c, w, phase):
    g = build_grid(20.0, 400)
    u = c * np.exp(-(g.r / w) ** 2) * np.exp(0.1j * g.r**2)
    n1, n2 = g.norms(u), g.norms(np.exp(1j * phase) * u)
    assert n1.h1_sq > 0
    assert n2.l2_sq == pytest.approx(n1.l2_sq, rel=1e-12)
    assert n2.grad_sq == pytest.approx(n1.grad_sq, rel=1e-12)
    assert h1_distance(g, u, u) == 0.0
