import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqnls.errors import ConfigurationError
from cqnls.modulation import (EXITED, RETURN_VIOLATION, STAYED, ModulationConfig, chi, decompose,
                              modified_distance, one_pass_monitor, orthogonality_defects, reconstruct)
from cqnls.special import threshold_projection


@settings(max_examples=50, deadline=None)
@given(x=st.floats(0, 10), y=st.floats(0, 10))
def test_chi_is_monotone_cutoff(x, y):
    assert 0.0 <= chi(x) <= 1.0
    if x <= y:
        assert chi(x) >= chi(y)
    if x <= 1:
        assert chi(x) == 1.0
    if x >= 2:
        assert chi(x) == 0.0


def test_one_pass_monitor():
    R = 0.01
    up = R + R**1.5
    assert one_pass_monitor([0.0, R / 2, R], R) == STAYED
    assert one_pass_monitor([0.0, R, 2 * up, 3 * up], R) == EXITED
    assert one_pass_monitor([0.0, 2 * up, R / 2], R) == RETURN_VIOLATION
    with pytest.raises(ConfigurationError):
        one_pass_monitor([], R)


def test_modified_distance_is_continuous_rescaling():
    d = np.array([0.1, 0.2, 0.5, 2.0])
    dist = np.array([0.05, 0.1, 0.25, 1.5])
    out = modified_distance(d, dist, 1.0)
    assert np.allclose(out, [0.1, 0.2, 0.5, 3.0])


def test_decompose_and_reconstruct(gs05, ctx05):
    g = gs05.grid
    psi = np.exp(0.9j) * threshold_projection(gs05.Q + 1e-3 * ctx05.mode.Y_minus, gs05).field
    s = decompose(psi, ctx05)
    rec = reconstruct(s, ctx05)
    assert np.sqrt(g.l2_sq(rec - psi) / g.l2_sq(psi)) < 1e-10
    assert s.theta % (2 * np.pi) == pytest.approx(0.9, abs=1e-3)
    assert max(orthogonality_defects(s, ctx05).values()) < 1e-8
    assert s.d_omega >= 0


def test_orbit_point_has_zero_distance(gs05, ctx05):
    s = decompose(np.exp(0.3j) * gs05.Q, ctx05)
    assert s.energy_norm < 1e-10
    assert s.theta == pytest.approx(0.3, abs=1e-12)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ModulationConfig(gamma_tilde=-1.0)
