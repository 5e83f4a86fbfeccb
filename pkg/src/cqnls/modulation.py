"""Symplectic decomposition of a solution near the ground-state orbit.

For psi close to {e^{i theta} Q}, write psi = e^{i theta}(Q + eta) and

    eta = lambda_+ Y_+ + lambda_- Y_- + a iQ + b dQ + gamma,

where Y_+- = Y1 +- i Y2 are the internal-mode eigenfunctions, dQ = dQ/dw
and gamma is symplectically orthogonal to Y_+, Y_-, iQ and dQ under
Omega(f, g) = Im int f conj(g).  The phase theta is chosen so that a = 0.
The grouping Gamma = b dQ + gamma enters the linearized energy norm

    |eta|_E^2 = e/2 (lambda_+^2 + lambda_-^2) + 1/2 <L Gamma, Gamma>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, GaugeDegenerate
from .functionals import dist_to_orbit, evaluate, nonlinearity
from .ground_state import GroundState, frequency_tangent
from .linearized import InternalMode, LinearizedOperators, nonlinear_remainder, solve_internal_mode

STAYED, EXITED, RETURN_VIOLATION = "Stayed", "Exited", "ReturnViolation"


@dataclass(frozen=True)
class ModulationConfig:
    delta_E: float = 0.1
    gamma_tilde: float = 0.05
    mass_tol: float = 1e-8
    gauge_floor: float = 1e-14

    def __post_init__(self):
        if not self.delta_E > self.gamma_tilde > 0:
            raise ConfigurationError("need delta_E > gamma_tilde > 0")
        if self.mass_tol <= 0:
            raise ConfigurationError("mass_tol must be positive")


@dataclass
class ModulationContext:
    """Everything attached to one frequency that the decomposition needs."""

    gs: GroundState
    ops: LinearizedOperators
    mode: InternalMode
    dQ: np.ndarray

    @classmethod
    def build(cls, gs: GroundState, mode: InternalMode | None = None, dQ=None) -> "ModulationContext":
        ops = LinearizedOperators.from_ground_state(gs)
        if mode is None:
            mode = solve_internal_mode(ops)
        if dQ is None:
            dQ = frequency_tangent(gs)
        return cls(gs, ops, mode, np.asarray(dQ, dtype=float))

    @property
    def grid(self):
        return self.gs.grid

    @property
    def omega(self) -> float:
        return self.gs.omega

    @property
    def e(self) -> float:
        return self.mode.e_omega

    @property
    def Q_dQ(self) -> float:
        return self.grid.inner_real(self.gs.Q, self.dQ)


@dataclass
class ModulationState:
    t: float
    theta: float
    lambda_plus: float
    lambda_minus: float
    b: float
    a: float
    gamma: np.ndarray
    Gamma: np.ndarray
    eta: np.ndarray
    energy_norm: float
    d_omega: float
    C_omega: float
    LGamma: float

    @property
    def lambda1(self) -> float:
        return 0.5 * (self.lambda_plus + self.lambda_minus)

    @property
    def lambda2(self) -> float:
        return 0.5 * (self.lambda_plus - self.lambda_minus)

    def row(self, grid) -> dict:
        return {
            "t": self.t,
            "theta": self.theta,
            "lambda_plus": self.lambda_plus,
            "lambda_minus": self.lambda_minus,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "b": self.b,
            "gamma_h1": grid.h1_norm(self.gamma),
            "energy_norm": self.energy_norm,
            "d_omega": self.d_omega,
        }


MODULATION_COLUMNS = ("t", "theta", "lambda_plus", "lambda_minus", "lambda1", "lambda2", "b",
                      "gamma_h1", "energy_norm", "d_omega")


def symplectic_form(grid, f, g) -> float:
    """Omega(f, g) = Im int f conj(g)."""
    return float(np.imag(grid.inner(f, g)))


def chi(x):
    """Non-increasing C^2 cutoff: 1 on [0, 1], 0 on [2, inf), quintic smoothstep between."""
    x = np.asarray(x, dtype=float)
    s = np.clip(x - 1.0, 0.0, 1.0)
    out = 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)
    return out if out.ndim else float(out)


def fix_gauge(grid, psi, dQ, floor: float = 1e-14) -> float:
    """Phase theta with Omega(e^{-i theta} psi, dQ) = 0 and (e^{-i theta} psi, dQ) < 0."""
    p = grid.inner(psi, dQ)
    scale = np.sqrt(grid.l2_sq(psi) * grid.l2_sq(dQ))
    if abs(p) <= floor * max(scale, 1.0):
        raise GaugeDegenerate(f"|<psi, dQ>| = {abs(p):.3e} is too small to fix the phase")
    return float(np.angle(-p))


def decompose(psi, ctx: ModulationContext, cfg: ModulationConfig = ModulationConfig(),
              t: float = 0.0, check_mass: bool = True) -> ModulationState:
    g, Q, dQ = ctx.grid, ctx.gs.Q, ctx.dQ
    psi = g.check(psi, "psi")
    if check_mass:
        m_psi, m_q = 0.5 * g.l2_sq(psi), ctx.gs.values.mass
        if abs(m_psi - m_q) > cfg.mass_tol * m_q:
            raise ConfigurationError(
                f"mass mismatch |M(psi)-M(Q)|/M(Q) = {abs(m_psi - m_q) / m_q:.3e}; "
                "project onto the threshold set first")
    theta = fix_gauge(g, psi, dQ, cfg.gauge_floor)
    eta = np.exp(-1j * theta) * psi - Q
    Yp, Ym = ctx.mode.Y_plus, ctx.mode.Y_minus
    lam_p = symplectic_form(g, eta, Ym)
    lam_m = -symplectic_form(g, eta, Yp)
    qdq = ctx.Q_dQ
    a = symplectic_form(g, eta, dQ) / qdq
    b = -symplectic_form(g, eta, 1j * Q) / qdq
    gamma = eta - lam_p * Yp - lam_m * Ym - b * dQ
    Gamma = b * dQ + gamma
    LG = ctx.ops.quadratic_form(Gamma)
    e = ctx.e
    en2 = 0.5 * e * (lam_p**2 + lam_m**2) + 0.5 * LG
    en = float(np.sqrt(max(en2, 0.0)))
    E_psi = evaluate(g, psi, ctx.omega).energy
    C = E_psi - ctx.gs.values.energy + 0.5 * e * (lam_p + lam_m) ** 2 - en2
    d2 = en2 + chi(en / (2.0 * cfg.delta_E)) * C
    return ModulationState(
        t=float(t),
        theta=theta,
        lambda_plus=lam_p,
        lambda_minus=lam_m,
        b=b,
        a=a,
        gamma=gamma,
        Gamma=Gamma,
        eta=eta,
        energy_norm=en,
        d_omega=float(np.sqrt(max(d2, 0.0))),
        C_omega=float(C),
        LGamma=float(LG),
    )


def reconstruct(state: ModulationState, ctx: ModulationContext) -> np.ndarray:
    """e^{i theta}(Q + lambda_+ Y_+ + lambda_- Y_- + b dQ + gamma)."""
    m = ctx.mode
    inner = ctx.gs.Q + state.lambda_plus * m.Y_plus + state.lambda_minus * m.Y_minus \
        + state.b * ctx.dQ + state.gamma
    return np.exp(1j * state.theta) * inner


def orthogonality_defects(state: ModulationState, ctx: ModulationContext) -> dict:
    """|Omega(gamma, f)| / (|eta| |f|) for the four symplectic directions f.

    Normalizing by eta rather than gamma keeps the measure meaningful when
    gamma is itself second order in eta.
    """
    g = ctx.grid
    ng = np.sqrt(g.l2_sq(state.eta))
    out = {}
    for name, f in (("Y_plus", ctx.mode.Y_plus), ("Y_minus", ctx.mode.Y_minus),
                    ("iQ", 1j * ctx.gs.Q), ("dQ", ctx.dQ)):
        denom = ng * np.sqrt(g.l2_sq(f))
        out[name] = abs(symplectic_form(g, state.gamma, f)) / denom if denom > 0 else 0.0
    return out


def energy_norm_expansion_check(state: ModulationState) -> float:
    """|C_w| / |eta|_E^2, with 0 for the degenerate eta = 0 case."""
    en2 = state.energy_norm**2
    if en2 == 0.0:
        return 0.0
    return abs(state.C_omega) / en2


def energy_norm_parts(state: ModulationState, ctx: ModulationContext) -> float:
    """Recompute |eta|_E^2 from the stored coefficients and Gamma."""
    return 0.5 * ctx.e * (state.lambda_plus**2 + state.lambda_minus**2) + \
        0.5 * ctx.ops.quadratic_form(state.Gamma)


# -- instantaneous modulation rates -------------------------------------------


@dataclass
class ModulationRates:
    theta_dot: float
    lambda_plus_dot: float
    lambda_minus_dot: float
    lambda1_dot: float
    lambda2_dot: float

    def residuals(self, state: ModulationState, ctx: ModulationContext) -> dict:
        e = ctx.e
        return {
            "theta": self.theta_dot - ctx.omega,
            "lambda_plus": self.lambda_plus_dot - e * state.lambda_plus,
            "lambda_minus": self.lambda_minus_dot + e * state.lambda_minus,
            "lambda1": self.lambda1_dot - e * state.lambda2,
            "lambda2": self.lambda2_dot - e * state.lambda1,
        }


def nls_rhs(grid, psi, quintic: float = 1.0) -> np.ndarray:
    """psi_t = i (Lap psi + |psi|^2 psi + |psi|^4 psi)."""
    return 1j * (grid.laplacian(psi) + nonlinearity(psi, quintic))


def modulation_rates(psi, state: ModulationState, ctx: ModulationContext) -> ModulationRates:
    """Time derivatives of theta and lambda_+- along the flow through psi.

    theta' follows from differentiating the gauge condition Omega(eta, dQ) = 0;
    eta_t = e^{-i theta}(psi_t - i theta' psi), and lambda_+-' are the
    projections of eta_t.
    """
    g, dQ = ctx.grid, ctx.dQ
    rot = np.exp(-1j * state.theta)
    psi_t = rot * nls_rhs(g, psi, ctx.gs.quintic)
    u = rot * psi
    theta_dot = symplectic_form(g, psi_t, dQ) / g.inner_real(u, dQ)
    eta_t = psi_t - 1j * theta_dot * u
    lp = symplectic_form(g, eta_t, ctx.mode.Y_minus)
    lm = -symplectic_form(g, eta_t, ctx.mode.Y_plus)
    return ModulationRates(theta_dot, lp, lm, 0.5 * (lp + lm), 0.5 * (lp - lm))


def forcing_projections(state: ModulationState, ctx: ModulationContext, theta_dot: float) -> dict:
    """(theta' - w) eta - N(eta) paired with Y_+- in L^2_real (the modulation forcing)."""
    g = ctx.grid
    f = (theta_dot - ctx.omega) * state.eta - nonlinear_remainder(ctx.ops, state.eta)
    return {
        "Y_plus": g.inner_real(f, ctx.mode.Y_plus),
        "Y_minus": g.inner_real(f, ctx.mode.Y_minus),
    }


# -- distance bookkeeping ------------------------------------------------------


def modified_distance(d_series, dist_series, gamma_tilde: float) -> np.ndarray:
    """Continuous distance: d_w where d_w <= gamma_tilde, else the H^1 orbit distance
    rescaled by the median d_w / dist ratio observed in the matching region."""
    d = np.asarray(d_series, dtype=float)
    dist = np.asarray(dist_series, dtype=float)
    if d.shape != dist.shape:
        raise ConfigurationError("distance series differ in length")
    near = (d <= gamma_tilde) & (dist > 0)
    ratio = float(np.median(d[near] / dist[near])) if near.any() else 1.0
    return np.where(d <= gamma_tilde, d, ratio * dist)


def one_pass_monitor(series, R: float) -> str:
    """Classify a distance history against the thresholds R and R + R^{3/2}."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ConfigurationError("empty distance series")
    if not R > 0:
        raise ConfigurationError("R must be positive")
    upper = R + R**1.5
    above = np.nonzero(x >= upper)[0]
    if above.size == 0:
        return STAYED
    if np.any(x[above[0]:] < R):
        return RETURN_VIOLATION
    return EXITED


def orbit_distance(ctx: ModulationContext, psi) -> float:
    return dist_to_orbit(ctx.grid, psi, ctx.gs.Q)
