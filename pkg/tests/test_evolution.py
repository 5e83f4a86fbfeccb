import numpy as np
import pytest

from cqnls.errors import ConfigurationError
from cqnls.evolution import (BLOWUP, COMPLETED, EvolveConfig, check_virial_weight, conserved_drift,
                             detect_scatter, evolve, localized_virial, spectral_tail, step,
                             virial_weight)
from cqnls.ground_state import default_grid, solve_ground_state
from cqnls.radial import RadialGrid


@pytest.mark.parametrize("kwargs", [dict(dt0=0.0), dict(dt_floor=1.0), dict(record_every=0),
                                    dict(grad_blowup_factor=0.5), dict(sponge_width=1.5),
                                    dict(resolution_tol=2.0)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        EvolveConfig(**kwargs)


def test_single_step_preserves_mass():
    g = RadialGrid(30.0, 800)
    psi = 1.5 * np.exp(-g.r**2 / 2) * np.exp(0.2j * g.r**2)
    out = step(g, psi, 1e-3)
    assert g.l2_sq(out) == pytest.approx(g.l2_sq(psi), rel=1e-12)


def test_standing_wave_conservation(gs05):
    tr = evolve(gs05.grid, gs05.Q, EvolveConfig(dt0=2e-3, t_end=1.0, adapt=False))
    md, ed = conserved_drift(tr)
    assert tr.verdict == COMPLETED
    assert md < 1e-10 and ed < 1e-9
    # the modulus stays put; only the phase rotates at frequency omega
    assert np.abs(np.abs(tr.final) - gs05.Q).max() < 1e-6 * gs05.Q.max()
    phase = np.angle(tr.final[0] / gs05.Q[0])
    assert phase == pytest.approx(gs05.omega * 1.0, abs=1e-5)


def test_time_reversal():
    g = RadialGrid(30.0, 800)
    psi0 = 1.2 * np.exp(-g.r**2 / 3) * np.exp(0.1j * g.r**2)
    cfg = EvolveConfig(dt0=1e-3, t_end=0.3, adapt=False)
    fwd = evolve(g, psi0, cfg)
    back = evolve(g, fwd.final, EvolveConfig(dt0=1e-3, t_end=-0.3, adapt=False))
    assert np.sqrt(g.l2_sq(back.final - psi0) / g.l2_sq(psi0)) < 1e-9


def test_supercritical_data_blows_up():
    gs = solve_ground_state(0.05, grid=default_grid(0.05, n=1000))
    tr = evolve(gs.grid, 1.2 * gs.Q, EvolveConfig(dt0=1e-3, t_end=2.0))
    assert tr.verdict == BLOWUP
    assert 0 < tr.T_est < 2.0


def test_virial_weight_is_admissible():
    rep = check_virial_weight()
    assert rep["ok"]
    s = np.array([0.0, 0.5, 1.0, 3.0, 4.0])
    assert np.allclose(virial_weight(s)[:3], s[:3] ** 2)
    assert np.all(virial_weight(s)[3:] == 0)


def test_localized_virial_radius_guard():
    g = RadialGrid(30.0, 600)
    with pytest.raises(ConfigurationError):
        localized_virial(g, np.exp(-g.r**2), 11.0)


def test_spectral_tail_small_for_smooth_data():
    g = RadialGrid(30.0, 1000)
    assert spectral_tail(g, np.exp(-g.r**2)) < 1e-12
    spike = np.exp(-(g.r / (2 * g.h)) ** 2)
    assert spectral_tail(g, spike) > 1e-4


def test_dispersing_gaussian_scatters_with_sponge():
    g = RadialGrid(40.0, 800)
    psi0 = 0.3 * np.exp(-g.r**2 / 2)
    tr = evolve(g, psi0, EvolveConfig(dt0=5e-3, t_end=30.0, sponge_strength=5.0, sponge_width=0.2))
    assert detect_scatter(tr)
