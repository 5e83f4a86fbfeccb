"""Mass, energy, virial functional K, action, J and the L^2-critical scaling.

Conventions (all integrals over R^3 with the radial measure):

    M(u) = 1/2 |u|_2^2
    E(u) = 1/2 |grad u|_2^2 - 1/4 |u|_4^4 - 1/6 |u|_6^6
    K(u) = |grad u|_2^2 - 3/4 |u|_4^4 - |u|_6^6
    S_w(u) = E(u) + w M(u),   J_w(u) = S_w(u) - K(u)/2
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, GridMismatch, NumericError
from .radial import NormReport, RadialGrid


@dataclass(frozen=True)
class FunctionalValues:
    mass: float
    energy: float
    K: float
    action: float
    J: float
    omega: float
    norms: NormReport


def _combine(n: NormReport, omega: float, quintic: float = 1.0) -> FunctionalValues:
    mass = 0.5 * n.l2_sq
    energy = 0.5 * n.grad_sq - 0.25 * n.l4_4 - quintic * n.l6_6 / 6.0
    K = n.grad_sq - 0.75 * n.l4_4 - quintic * n.l6_6
    action = energy + omega * mass
    return FunctionalValues(
        mass=mass,
        energy=energy,
        K=K,
        action=action,
        J=action - 0.5 * K,
        omega=omega,
        norms=n,
    )


def evaluate(grid: RadialGrid, u, omega: float = 0.0, quintic: float = 1.0) -> FunctionalValues:
    """All functionals of ``u``; ``omega`` only enters the action and J.

    ``quintic=0`` switches to the pure cubic functionals (validation mode).
    """
    u = grid.check(u)
    if np.isnan(u).any():
        raise ConfigurationError("field contains NaN")
    return _combine(grid.norms(u), float(omega), quintic)


def mass(grid: RadialGrid, u) -> float:
    return 0.5 * grid.l2_sq(u)


def energy(grid: RadialGrid, u) -> float:
    return evaluate(grid, u).energy


def virial_K(grid: RadialGrid, u) -> float:
    return evaluate(grid, u).K


def action(grid: RadialGrid, u, omega: float) -> float:
    return evaluate(grid, u, omega).action


def J_direct(norms: NormReport, omega: float) -> float:
    """J_w from its positive closed form w/2 |u|_2^2 + 1/8 |u|_4^4 + 1/3 |u|_6^6."""
    return 0.5 * omega * norms.l2_sq + norms.l4_4 / 8.0 + norms.l6_6 / 3.0


def nonlinearity(u, quintic: float = 1.0):
    """|u|^2 u + |u|^4 u."""
    a2 = u.real**2 + u.imag**2 if np.iscomplexobj(u) else u * u
    return (a2 + quintic * a2 * a2) * u


def action_gradient(grid: RadialGrid, u, omega: float, quintic: float = 1.0) -> np.ndarray:
    """L^2 gradient of S_w: -Lap u + w u - |u|^2 u - |u|^4 u."""
    u = grid.check(u)
    return -grid.laplacian(u) + omega * u - nonlinearity(u, quintic)


# -- scaling T_lambda u = lambda^{3/2} u(lambda .) ------------------------------


def scale(grid: RadialGrid, u, lam: float) -> np.ndarray:
    """Resample ``lam**1.5 * u(lam * r)`` on the same grid (zero beyond r_max)."""
    if not lam > 0:
        raise ConfigurationError(f"scaling parameter must be positive, got {lam}")
    u = grid.check(u)
    if lam == 1.0:
        return u.copy()
    # spline v = r*u, which is odd in r and vanishes at both ends
    x = np.concatenate(([0.0], grid.r, [grid.r_max]))
    out = np.zeros(grid.n, dtype=np.result_type(u, float))
    rs = lam * grid.r
    inside = rs < grid.r_max
    parts = [(u.real, 1.0)] + ([(u.imag, 1j)] if np.iscomplexobj(u) else [])
    for part, unit in parts:
        spline = CubicSpline(x, np.concatenate(([0.0], grid.r * part, [0.0])), bc_type="natural")
        out[inside] = out[inside] + unit * spline(rs[inside]) / rs[inside]
    return lam**1.5 * out


def scaled_K(norms: NormReport, lam):
    """K(T_lam u) from the exact scaling laws of the three norms."""
    lam = np.asarray(lam, dtype=float)
    return lam**2 * norms.grad_sq - 0.75 * lam**3 * norms.l4_4 - lam**6 * norms.l6_6


def lambda_star(grid: RadialGrid, u, lam_min: float = 1e-3, lam_max: float = 1e3,
                tol: float = 1e-10) -> float:
    """The unique lambda with K(T_lambda u) = 0.

    K(T_lambda u) / lambda^2 = |grad u|^2 - 3/4 lambda |u|_4^4 - lambda^4 |u|_6^6
    is strictly decreasing, so bisection on a geometric bracket is safe.
    """
    n = grid.norms(u)
    if n.l2_sq == 0.0:
        raise ConfigurationError("lambda_star is undefined for the zero field")

    def g(lam):
        return n.grad_sq - 0.75 * lam * n.l4_4 - lam**4 * n.l6_6

    lo, hi = lam_min, lam_min
    if g(lo) <= 0:
        raise NumericError(f"K(T_lambda u) is not positive at lambda={lam_min}")
    while g(hi) > 0:
        lo, hi = hi, hi * 2.0
        if hi > lam_max:
            raise NumericError(f"no sign change of K(T_lambda u) below lambda={lam_max}")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- distance to the phase orbit -------------------------------------------------


def dist_to_orbit(grid: RadialGrid, u, Q) -> float:
    """inf over theta of |u - e^{i theta} Q|_{H^1}, in closed form."""
    u, Q = grid.check(u, "u"), grid.check(Q, "Q")
    if u.shape != Q.shape:
        raise GridMismatch("u and Q live on different grids")
    # the minimizing phase is arg <u, Q>_{H^1}; evaluating the difference
    # directly avoids the cancellation in |u|^2 + |Q|^2 - 2|<u, Q>|
    theta = np.angle(grid.h1_inner(u, Q))
    return grid.h1_norm(u - np.exp(1j * theta) * Q)


def orbit_phase(grid: RadialGrid, u, Q) -> float:
    """Phase theta attaining the infimum in :func:`dist_to_orbit`."""
    return float(np.angle(grid.h1_inner(u, Q)))


# -- Sobolev constant from the Aubin-Talenti profile ------------------------------


def aubin_talenti(r):
    """W(r) = (1 + r^2/3)^{-1/2}, the static solution of -Lap W = W^5."""
    return 1.0 / np.sqrt(1.0 + np.asarray(r) ** 2 / 3.0)


def sobolev_rayleigh(r_max: float, n: int, order: int = 6) -> float:
    """|grad W|_2^2 / |W|_6^2 for W truncated to a ball of radius r_max.

    The cut-off profile W - W(r_max) is used so that the Dirichlet grid
    sees a continuous field; the quotient converges like 1/r_max.
    """
    grid = RadialGrid(float(r_max), int(n), order)
    W = aubin_talenti(grid.r) - aubin_talenti(r_max)
    n6 = grid.norms(W)
    return n6.grad_sq / n6.l6_6 ** (1.0 / 3.0)


def sobolev_constant(radii=(200.0, 400.0, 800.0), points_per_unit: float = 20.0,
                     order: int = 6) -> dict:
    """Best Sobolev constant sigma estimated by Richardson extrapolation in 1/r_max.

    Returns a dict with the raw quotients, the extrapolated value and the
    closed form 3 (pi/2)^{4/3} for reference.
    """
    radii = [float(R) for R in radii]
    raw = [sobolev_rayleigh(R, int(R * points_per_unit), order) for R in radii]
    x = 1.0 / np.asarray(radii)
    # fit q(R) = sigma + a/R + b/R^2
    deg = min(len(radii) - 1, 2)
    coef = np.polyfit(x, np.asarray(raw), deg)
    return {
        "radii": radii,
        "quotients": raw,
        "sigma": float(coef[-1]),
        "closed_form": 3.0 * (np.pi / 2.0) ** (4.0 / 3.0),
    }
