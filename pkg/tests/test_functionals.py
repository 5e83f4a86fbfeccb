import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqnls.functionals import (J_direct, action, aubin_talenti, dist_to_orbit, evaluate, lambda_star,
                               mass, scale, scaled_K, sobolev_constant)
from cqnls.radial import build_grid

G = build_grid(30.0, 1500)


def field(c=1.0, w=2.0, beta=0.02):
    return c * np.exp(-(G.r / w) ** 2) * np.exp(1j * beta * G.r**2)


def test_definitions():
    u = field()
    v = evaluate(G, u, 0.3)
    n = v.norms
    assert v.mass == pytest.approx(0.5 * n.l2_sq)
    assert v.energy == pytest.approx(0.5 * n.grad_sq - 0.25 * n.l4_4 - n.l6_6 / 6)
    assert v.K == pytest.approx(n.grad_sq - 0.75 * n.l4_4 - n.l6_6)
    assert v.action == pytest.approx(v.energy + 0.3 * v.mass)
    assert J_direct(n, 0.3) == pytest.approx(v.action - 0.5 * v.K, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(0.5, 2.0), c=st.floats(0.3, 2.0), w=st.floats(1.0, 3.0))
def test_scaling_preserves_mass(lam, c, w):
    u = field(c, w)
    assert mass(G, scale(G, u, lam)) == pytest.approx(mass(G, u), rel=1e-8)


def test_K_is_derivative_of_energy_along_scaling():
    u = field(1.5, 1.5)
    eps = 1e-4
    fd = (action(G, scale(G, u, 1 + eps), 0.1) - action(G, scale(G, u, 1 - eps), 0.1)) / (2 * eps)
    assert fd == pytest.approx(evaluate(G, u).K, rel=1e-6)


def test_scaled_K_single_root_and_lambda_star():
    u = field(1.0, 2.0)
    lam = lambda_star(G, u)
    assert abs(scaled_K(G.norms(u), lam)) < 1e-8 * G.norms(u).grad_sq * lam**2
    ks = scaled_K(G.norms(u), np.logspace(-2, 2, 500))
    assert np.sum(np.diff(np.sign(ks)) != 0) == 1


def test_dist_to_orbit_phase_invariant():
    Q = np.exp(-G.r**2)
    u = field()
    assert dist_to_orbit(G, np.exp(1.1j) * Q, Q) < 1e-12
    assert dist_to_orbit(G, np.exp(0.4j) * u, Q) == pytest.approx(dist_to_orbit(G, u, Q), abs=1e-12)


def test_sobolev_constant_close_to_closed_form():
    s = sobolev_constant(radii=(200.0, 400.0, 800.0), points_per_unit=4.0)
    assert s["sigma"] == pytest.approx(s["closed_form"], rel=1e-4)
    assert aubin_talenti(0.0) == 1.0
