"""Positive radial ground states of -Lap Q + w Q - Q^3 - Q^5 = 0.

The profile is found in two stages: shooting on the radial ODE
Q'' + (2/r) Q' = w Q - Q^3 - Q^5 with Q'(0) = 0, bisecting Q(0) between
trajectories that cross zero (Q(0) too large) and trajectories that turn
back up (Q(0) too small); then a Newton pass on the grid equation
polishes the sampled profile so the discrete residual is at round-off.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .errors import ConfigurationError, NoGroundState, NumericError
from .functionals import FunctionalValues, action_gradient, evaluate
from .radial import FOUR_PI, RadialGrid

log = logging.getLogger(__name__)

CUBIC_QUINTIC = "cubic-quintic"
CUBIC_ONLY = "cubic-only"
_QUINTIC = {CUBIC_QUINTIC: 1.0, CUBIC_ONLY: 0.0}


@dataclass(frozen=True)
class BranchConfig:
    omega_min: float = 0.01
    omega_max: float = 0.25
    q0_max: float = 60.0
    scan_points: int = 240
    bisection_steps: int = 200
    k_tol: float = 1e-6
    res_tol: float = 1e-8
    newton_tol: float = 1e-13
    newton_maxiter: int = 40


DEFAULT_CONFIG = BranchConfig()


def default_grid(omega: float, n: int = 5000, decay_lengths: float = 22.0, order: int = 6) -> RadialGrid:
    """Grid wide enough for Q_w to decay by ~e^{-decay_lengths}."""
    if omega <= 0:
        raise ConfigurationError(f"omega must be positive, got {omega}")
    return RadialGrid(decay_lengths / np.sqrt(omega), n, order)


@dataclass
class GroundState:
    omega: float
    grid: RadialGrid
    Q: np.ndarray
    q0: float
    residual: float
    values: FunctionalValues
    mode: str = CUBIC_QUINTIC
    l2_residual: float = 0.0
    newton_iterations: int = 0

    @property
    def quintic(self) -> float:
        return _QUINTIC[self.mode]

    @property
    def m_omega(self) -> float:
        return self.values.action

    def nehari_defect(self) -> float:
        """Relative defect of |grad Q|^2 + w|Q|^2 = |Q|_4^4 + |Q|_6^6."""
        n = self.values.norms
        lhs = n.grad_sq + self.omega * n.l2_sq
        rhs = n.l4_4 + self.quintic * n.l6_6
        return abs(lhs - rhs) / abs(lhs)

    def k_defect(self) -> float:
        return abs(self.values.K) / abs(self.values.action)

    def center_value(self) -> float:
        """Q(0) extrapolated from the grid samples (Q is even in r)."""
        r2 = self.grid.r[:4] ** 2
        return float(np.polyval(np.polyfit(r2, self.Q[:4], 3), 0.0))

    def invariant_report(self) -> dict:
        dQ = np.diff(self.Q)
        return {
            "positive": bool(np.all(self.Q > 0)),
            "decreasing": bool(np.all(dQ <= 1e-12)),
            "k_defect": self.k_defect(),
            "residual": self.residual,
            "nehari_defect": self.nehari_defect(),
        }


# -- shooting -------------------------------------------------------------------


def _series_start(q0, omega, quintic, r0):
    c = (omega * q0 - q0**3 - quintic * q0**5) / 6.0
    return [q0 + c * r0**2, 2.0 * c * r0]


def shoot(q0: float, omega: float, quintic: float = 1.0, r_end: float = 400.0,
          rtol: float = 1e-12, dense: bool = False):
    """Integrate the radial ODE from Q(0)=q0.

    Returns ``(outcome, r_event, sol)`` where outcome is +1 when the
    trajectory crosses zero, -1 when it turns back up, 0 when neither
    happens before ``r_end``.
    """
    c = omega * q0 - q0**3 - quintic * q0**5
    if c >= 0:
        return -1, 0.0, None

    def rhs(r, y):
        q, dq = y
        return [dq, omega * q - q**3 - quintic * q**5 - 2.0 * dq / r]

    def crosses_zero(r, y):
        return y[0]

    def turns_up(r, y):
        return y[1]

    crosses_zero.terminal = True
    crosses_zero.direction = -1
    turns_up.terminal = True
    turns_up.direction = 1
    r0 = min(1e-4, 1e-2 / np.sqrt(abs(c) / q0 + 1.0))
    sol = solve_ivp(rhs, (r0, r_end), _series_start(q0, omega, quintic, r0), method="DOP853",
                    rtol=rtol, atol=1e-14 * max(q0, 1.0), events=(crosses_zero, turns_up),
                    dense_output=dense)
    if sol.t_events[0].size:
        return 1, float(sol.t_events[0][0]), sol
    if sol.t_events[1].size:
        return -1, float(sol.t_events[1][0]), sol
    return 0, r_end, sol


def _q_floor(omega: float, quintic: float) -> float:
    # Q''(0) < 0 requires q0^2 + quintic q0^4 > omega
    if quintic == 0:
        return np.sqrt(omega)
    return np.sqrt((-1.0 + np.sqrt(1.0 + 4.0 * omega)) / 2.0)


def bracket_q0(omega: float, quintic: float, cfg: BranchConfig, guess: float | None = None):
    """Find (lo, hi) with shoot(lo) turning up and shoot(hi) crossing zero."""
    q_lo = _q_floor(omega, quintic) * (1.0 + 1e-9)
    if guess is not None and q_lo < guess < cfg.q0_max:
        for width in (1.05, 1.25, 1.6):
            lo, hi = max(guess / width, q_lo), min(guess * width, cfg.q0_max)
            if shoot(lo, omega, quintic)[0] == -1 and shoot(hi, omega, quintic)[0] == 1:
                return lo, hi
    qs = np.geomspace(q_lo, cfg.q0_max, cfg.scan_points)
    prev = None
    for q in qs:
        outcome = shoot(q, omega, quintic)[0]
        if prev is not None and prev[1] == -1 and outcome == 1:
            return prev[0], q
        prev = (q, outcome)
    raise NoGroundState(f"no bracketing Q(0) in [{q_lo:.4g}, {cfg.q0_max:.4g}] for omega={omega}")


def shooting_profile(omega: float, quintic: float = 1.0, cfg: BranchConfig = DEFAULT_CONFIG,
                     guess: float | None = None):
    """Bisect Q(0) and return ``(q0, r_cut, callable)`` for the separatrix profile."""
    lo, hi = bracket_q0(omega, quintic, cfg, guess)
    for _ in range(cfg.bisection_steps):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if shoot(mid, omega, quintic)[0] == 1:
            hi = mid
        else:
            lo = mid
    q0 = 0.5 * (lo + hi)
    _, r_lo, sol = shoot(lo, omega, quintic, dense=True)
    _, r_hi, _ = shoot(hi, omega, quintic)
    r_cut = 0.85 * min(r_lo, r_hi)
    kappa = np.sqrt(omega)
    q_cut = float(sol.sol(r_cut)[0])
    r_start = float(sol.t[0])

    def profile(r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        inner = r <= r_cut
        core = np.clip(r[inner], r_start, None)
        out[inner] = sol.sol(core)[0]
        out[~inner] = q_cut * (r_cut / r[~inner]) * np.exp(-kappa * (r[~inner] - r_cut))
        return out

    return q0, r_cut, profile


# -- Newton polish on the grid ---------------------------------------------------


def h_minus_one_norm(grid: RadialGrid, f) -> float:
    """sqrt(<(1 - Lap)^{-1} f, f>), computed with a banded solve in v = r f."""
    m = grid.bandwidth
    rf = grid.r * np.asarray(f)
    z = sla.solve_banded((m, m), grid.banded(diag=1.0, scale=-1.0), rf)
    return float(np.sqrt(abs(FOUR_PI * grid.h * np.real(np.vdot(z, rf)))))


def newton_polish(grid: RadialGrid, Q, omega: float, quintic: float = 1.0,
                  cfg: BranchConfig = DEFAULT_CONFIG):
    """Newton iteration on the discrete equation; returns (Q, iterations)."""
    m = grid.bandwidth
    Q = np.array(Q, dtype=float)
    r = grid.r
    scale = np.abs(Q).max()
    prev = np.inf
    for it in range(1, cfg.newton_maxiter + 1):
        F = action_gradient(grid, Q, omega, quintic)
        Q2 = Q * Q
        jac = grid.banded(diag=omega - 3.0 * Q2 - 5.0 * quintic * Q2 * Q2, scale=-1.0)
        step = sla.solve_banded((m, m), jac, r * F) / r
        Q -= step
        if not np.all(np.isfinite(Q)):
            raise NumericError(f"Newton diverged at iteration {it} (omega={omega})")
        size = np.abs(step).max()
        if size <= cfg.newton_tol * scale:
            return Q, it
        # quadratic convergence has stalled at the round-off level of the stencil
        if size <= 1e3 * cfg.newton_tol * scale and size > 0.5 * prev:
            return Q, it
        prev = size
    raise NumericError(f"Newton did not converge in {cfg.newton_maxiter} iterations "
                       f"(omega={omega}, last step {np.abs(step).max():.3e})")


def solve_ground_state(omega: float, mode: str = CUBIC_QUINTIC, grid: RadialGrid | None = None,
                       cfg: BranchConfig = DEFAULT_CONFIG, guess: float | None = None) -> GroundState:
    """Positive radial solution of the elliptic equation at frequency ``omega``."""
    if mode not in _QUINTIC:
        raise ConfigurationError(f"unknown mode {mode!r}")
    if not omega > 0:
        raise ConfigurationError(f"omega must be positive, got {omega}")
    quintic = _QUINTIC[mode]
    if mode == CUBIC_QUINTIC and not (cfg.omega_min <= omega <= cfg.omega_max):
        raise NoGroundState(f"omega={omega} outside configured branch range "
                            f"[{cfg.omega_min}, {cfg.omega_max}]")
    if grid is None:
        grid = default_grid(omega)
    q0, _, profile = shooting_profile(omega, quintic, cfg, guess)
    Q, its = newton_polish(grid, profile(grid.r), omega, quintic, cfg)
    if np.any(Q <= 0):
        raise NumericError(f"polished profile is not positive (omega={omega}); grid too short?")
    values = evaluate(grid, Q, omega, quintic)
    F = action_gradient(grid, Q, omega, quintic)
    gs = GroundState(
        omega=float(omega),
        grid=grid,
        Q=Q,
        q0=float(q0),
        residual=h_minus_one_norm(grid, F) / grid.h1_norm(Q),
        values=values,
        mode=mode,
        l2_residual=float(np.sqrt(grid.l2_sq(F))),
        newton_iterations=its,
    )
    if gs.residual > cfg.res_tol:
        log.warning("ground state residual %.3e above tolerance at omega=%g", gs.residual, omega)
    if mode == CUBIC_QUINTIC and gs.k_defect() > cfg.k_tol:
        log.warning("|K(Q)|/S(Q) = %.3e above tolerance at omega=%g; refine the grid",
                    gs.k_defect(), omega)
    return gs


# -- branch continuation ---------------------------------------------------------


@dataclass
class GroundStateBranch:
    omegas: np.ndarray
    states: list
    mass_curve: np.ndarray = field(init=False)
    mass_slope: np.ndarray = field(init=False)

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.mass_curve = np.array([s.values.mass for s in self.states])
        self.mass_slope = _central_slope(self.omegas, self.mass_curve)

    @property
    def grid(self) -> RadialGrid:
        return self.states[0].grid

    @property
    def interior_omegas(self) -> np.ndarray:
        return self.omegas[1:-1]

    def state_at(self, omega: float) -> GroundState:
        i = int(np.argmin(np.abs(self.omegas - omega)))
        if not np.isclose(self.omegas[i], omega, rtol=1e-12, atol=0):
            raise ConfigurationError(f"omega={omega} is not a branch node")
        return self.states[i]

    def step_norms(self) -> np.ndarray:
        """|Q_{w_{i+1}} - Q_{w_i}|_{H^1} between consecutive branch nodes."""
        g = self.grid
        return np.array([g.h1_norm(b.Q - a.Q) for a, b in zip(self.states, self.states[1:])])


def _central_slope(x, y):
    """Second-order slope at interior nodes of a (possibly nonuniform) grid."""
    h0 = x[1:-1] - x[:-2]
    h1 = x[2:] - x[1:-1]
    return (h0**2 * y[2:] - h1**2 * y[:-2] + (h1**2 - h0**2) * y[1:-1]) / (h0 * h1 * (h0 + h1))


class BranchFailure(NoGroundState):
    def __init__(self, message, partial, index):
        super().__init__(message)
        self.partial = partial
        self.index = index


def continue_branch(omegas, grid: RadialGrid | None = None, cfg: BranchConfig = DEFAULT_CONFIG,
                    mode: str = CUBIC_QUINTIC) -> GroundStateBranch:
    """Solve along increasing frequencies on one shared grid, warm-starting Q(0)."""
    omegas = np.asarray(omegas, dtype=float)
    if omegas.ndim != 1 or omegas.size < 3:
        raise ConfigurationError("a branch needs at least three frequencies")
    if np.any(np.diff(omegas) <= 0):
        raise ConfigurationError("frequencies must be strictly increasing")
    if grid is None:
        grid = default_grid(omegas[0])
    states, guess = [], None
    for i, om in enumerate(omegas):
        try:
            gs = solve_ground_state(om, mode, grid, cfg, guess)
        except (NoGroundState, NumericError) as exc:
            raise BranchFailure(f"branch failed at omega={om}: {exc}", states, i) from exc
        states.append(gs)
        guess = gs.q0
    return GroundStateBranch(omegas, states)


def domega_Q(branch: GroundStateBranch, omega: float) -> np.ndarray:
    """Finite-difference dQ/dw at an interior branch node (second order)."""
    i = int(np.argmin(np.abs(branch.omegas - omega)))
    if not np.isclose(branch.omegas[i], omega, rtol=1e-12, atol=0):
        raise ConfigurationError(f"omega={omega} is not a branch node")
    if i == 0 or i == len(branch.omegas) - 1:
        raise ConfigurationError(f"omega={omega} is at the branch boundary")
    x = branch.omegas[i - 1: i + 2]
    h0, h1 = x[1] - x[0], x[2] - x[1]
    Qm, Q0, Qp = (branch.states[j].Q for j in (i - 1, i, i + 1))
    return (h0**2 * Qp - h1**2 * Qm + (h1**2 - h0**2) * Q0) / (h0 * h1 * (h0 + h1))


def domega_Q_fd(gs: GroundState, delta: float, cfg: BranchConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Central difference (Q_{w+d} - Q_{w-d}) / 2d solved on the state's grid."""
    lo = solve_ground_state(gs.omega - delta, gs.mode, gs.grid, cfg, gs.q0)
    hi = solve_ground_state(gs.omega + delta, gs.mode, gs.grid, cfg, gs.q0)
    return (hi.Q - lo.Q) / (2.0 * delta)


def frequency_tangent(gs: GroundState) -> np.ndarray:
    """Exact derivative of the discrete branch: solves L_+ (dQ/dw) = -Q on the grid."""
    grid, Q = gs.grid, gs.Q
    m = grid.bandwidth
    Q2 = Q * Q
    jac = grid.banded(diag=gs.omega - 3.0 * Q2 - 5.0 * gs.quintic * Q2 * Q2, scale=-1.0)
    return sla.solve_banded((m, m), jac, -grid.r * Q) / grid.r
