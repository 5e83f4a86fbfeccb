"""Linearization around Q_w: L_+, L_-, the remainder N and the internal mode.

Writing psi = e^{i theta}(Q + eta) with theta' = w, the remainder obeys

    d/dt eta = -i L eta + N(eta),    L eta = L_+ Re(eta) + i L_- Im(eta),

    L_+ = -Lap + w - 3Q^2 - 5Q^4,     L_- = -Lap + w - Q^2 - Q^4.

The real exponential mode -i L Y_+ = e Y_+ with Y_+ = Y1 + i Y2 amounts to
L_+ Y1 = -e Y2 and L_- Y2 = e Y1, i.e. L_- L_+ Y1 = -e^2 Y1.

All matrices act on v = r*u, where L_+- become the symmetric banded
matrices -D2 + diag(w - V_+-).  The L^2 pairing of fields is 4*pi*h v.w.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConfigurationError, NumericError, SpectralFailure
from .ground_state import GroundState, frequency_tangent
from .radial import RadialGrid

PLUS, MINUS = "plus", "minus"


@dataclass
class LinearizedOperators:
    omega: float
    grid: RadialGrid
    Q: np.ndarray
    quintic: float = 1.0
    V_plus: np.ndarray = field(init=False, repr=False)
    V_minus: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Q2 = self.grid.check(self.Q, "Q") ** 2
        self.V_plus = 3.0 * Q2 + 5.0 * self.quintic * Q2 * Q2
        self.V_minus = Q2 + self.quintic * Q2 * Q2

    @classmethod
    def from_ground_state(cls, gs: GroundState) -> "LinearizedOperators":
        return cls(gs.omega, gs.grid, gs.Q, gs.quintic)

    def potential(self, which: str) -> np.ndarray:
        if which == PLUS:
            return self.V_plus
        if which == MINUS:
            return self.V_minus
        raise ConfigurationError(f"operator must be 'plus' or 'minus', got {which!r}")

    def matrix(self, which: str) -> sp.csr_matrix:
        """Sparse symmetric matrix of L_{+-} acting on v = r*u."""
        diag = self.omega - self.potential(which)
        return (-self.grid.d2 + sp.diags(diag)).tocsr()

    def banded(self, which: str) -> np.ndarray:
        return self.grid.banded(diag=self.omega - self.potential(which), scale=-1.0)

    def solve(self, which: str, f) -> np.ndarray:
        """L_{+-}^{-1} f (only meaningful for L_+, which is invertible on radial fields)."""
        m = self.grid.bandwidth
        r = self.grid.r
        return sla.solve_banded((m, m), self.banded(which), r * f) / r

    def apply(self, which: str, u) -> np.ndarray:
        u = self.grid.check(u)
        return -self.grid.laplacian(u) + (self.omega - self.potential(which)) * u

    def apply_full(self, eta) -> np.ndarray:
        """L eta = L_+ Re(eta) + i L_- Im(eta)."""
        eta = np.asarray(eta)
        return self.apply(PLUS, eta.real) + 1j * self.apply(MINUS, eta.imag)

    def apply_generator(self, eta) -> np.ndarray:
        """-i L eta = L_- Im(eta) - i L_+ Re(eta)."""
        eta = np.asarray(eta)
        return self.apply(MINUS, eta.imag) - 1j * self.apply(PLUS, eta.real)

    def quadratic_form(self, eta) -> float:
        """<L eta, eta> = (L_+ eta_1, eta_1) + (L_- eta_2, eta_2)."""
        eta = np.asarray(eta, dtype=complex)
        g = self.grid
        return g.inner_real(self.apply(PLUS, eta.real), eta.real) + \
            g.inner_real(self.apply(MINUS, eta.imag), eta.imag)


def apply_L(ops: LinearizedOperators, which: str, v) -> np.ndarray:
    return ops.apply(which, v)


def _f(u, quintic):
    a2 = np.abs(u) ** 2
    return (a2 + quintic * a2 * a2) * u


def nonlinear_remainder(ops: LinearizedOperators, eta) -> np.ndarray:
    """N(eta) = i[f(Q+eta) - f(Q) - (2Q^2+3Q^4) eta - (Q^2+2Q^4) conj(eta)], f(u) = |u|^2u + |u|^4u.

    The two pieces quadratic-and-cubic (from |u|^2 u) and quadratic-to-quintic
    (from |u|^4 u) are not separated; their sum is returned.
    """
    eta = ops.grid.check(eta).astype(complex)
    Q, c = ops.Q, ops.quintic
    Q2 = Q * Q
    lin = (2.0 * Q2 + 3.0 * c * Q2 * Q2) * eta + (Q2 + 2.0 * c * Q2 * Q2) * np.conj(eta)
    return 1j * (_f(Q + eta, c) - _f(Q.astype(complex), c) - lin)


# -- internal mode ---------------------------------------------------------------


@dataclass
class InternalMode:
    omega: float
    e_omega: float
    Y1: np.ndarray
    Y2: np.ndarray
    residuals: tuple
    pairing: float
    signQ2: float
    iterations: int = 0

    @property
    def Y_plus(self) -> np.ndarray:
        return self.Y1 + 1j * self.Y2

    @property
    def Y_minus(self) -> np.ndarray:
        return self.Y1 - 1j * self.Y2


@dataclass(frozen=True)
class SpectralConfig:
    tol: float = 1e-12
    maxiter: int = 200
    max_shift_decades: int = 16
    accept: float = 1e-6


def _product_banded(ops: LinearizedOperators, shift: float):
    """(L_- L_+ - shift) on v as a banded array with bandwidth 2m."""
    M = (ops.matrix(MINUS) @ ops.matrix(PLUS)).tocsr()
    m = 2 * ops.grid.bandwidth
    n = ops.grid.n
    ab = np.zeros((2 * m + 1, n))
    for k in range(-m, m + 1):
        d = M.diagonal(k)
        if k >= 0:
            ab[m - k, k:] = d
        else:
            ab[m - k, : n + k] = d
    ab[m] -= shift
    return M, ab, m


def solve_internal_mode(ops: LinearizedOperators, cfg: SpectralConfig = SpectralConfig(),
                        x0=None) -> InternalMode:
    """Negative eigenvalue -e^2 of L_- L_+ by shifted inverse iteration.

    The composed operator has the simple kernel vector z = -L_+^{-1} Q with
    left null vector Q; each iterate is projected along z onto Q-perp, which
    is invariant and carries the rest of the point spectrum.  The only
    negative eigenvalue is -e^2; a shift s < 0 converges to it as soon as
    |s| > (e^2 - w^2)/2, so the shift is pushed down by decades until the
    iterate settles on a negative value, then replaced by the running
    eigenvalue estimate.
    """
    g, om = ops.grid, ops.omega
    r = g.r
    vQ = r * ops.Q
    vz = -r * ops.solve(PLUS, ops.Q)
    qz = vQ @ vz

    def deflate(x):
        return x - (vQ @ x) / qz * vz

    start = r * np.exp(-np.sqrt(om) * r) if x0 is None else r * np.asarray(x0, dtype=float)
    M, ab, m = _product_banded(ops, 0.0)
    diag0 = M.diagonal(0).copy()
    shift = -om**2
    total = 0
    for _ in range(cfg.max_shift_decades):
        x = deflate(start)
        x /= np.linalg.norm(x)
        ab[m] = diag0 - shift
        mu, res, its, settled = _inverse_iteration(M, ab, m, x, deflate, shift, om, cfg)
        total += its
        x = settled
        if mu < 0:
            break
        shift *= 10.0
    else:
        raise SpectralFailure(f"no negative eigenvalue of L_-L_+ found (omega={om})")
    e = float(np.sqrt(-mu))
    mode = _finish_mode(ops, e, x / r, total)
    if max(mode.residuals) > cfg.accept:
        raise NumericError(f"internal-mode iteration stagnated at mu={mu:.6e}, "
                           f"eigen-residuals {mode.residuals}")
    return mode


def _inverse_iteration(M, ab, m, x, deflate, shift, om, cfg):
    diag0 = M.diagonal(0)
    mu, res = shift, np.inf
    for it in range(1, cfg.maxiter + 1):
        x_new = deflate(sla.solve_banded((m, m), ab, x))
        x_new /= np.linalg.norm(x_new)
        if x_new @ x < 0:
            x_new = -x_new
        Mx = M @ x_new
        mu_new = float(x_new @ Mx)
        res = float(np.linalg.norm(Mx - mu_new * x_new))
        x = x_new
        if res <= cfg.tol * abs(mu_new) or (mu_new < 0 and abs(mu_new - mu) <= 1e-14 * abs(mu_new)):
            return mu_new, res, it, x
        if abs(mu_new - mu) < 1e-3 * abs(mu_new):
            if mu_new > 0:
                # settled on the continuum edge: the shift is not deep enough
                return mu_new, res, it, x
            shift = mu_new * (1.0 + 1e-10)
            ab[m] = diag0 - shift
        mu = mu_new
    return mu, res, cfg.maxiter, x


def _finish_mode(ops: LinearizedOperators, e: float, Y1, iterations: int = 0) -> InternalMode:
    g = ops.grid
    Y1 = np.asarray(Y1, dtype=float)
    Y2 = -ops.apply(PLUS, Y1) / e
    pairing = g.inner_real(Y1, Y2)
    if pairing <= 0:
        raise SpectralFailure(f"(Y1, Y2) = {pairing:.3e} is not positive")
    c = 1.0 / np.sqrt(2.0 * pairing)
    Y1, Y2 = c * Y1, c * Y2
    if g.inner_real(ops.Q, Y2) > 0:
        Y1, Y2 = -Y1, -Y2
    return _with_diagnostics(ops, e, Y1, Y2, iterations)


def _with_diagnostics(ops, e, Y1, Y2, iterations=0) -> InternalMode:
    g = ops.grid
    res1 = np.sqrt(g.l2_sq(ops.apply(PLUS, Y1) + e * Y2) / g.l2_sq(Y2))
    res2 = np.sqrt(g.l2_sq(ops.apply(MINUS, Y2) - e * Y1) / g.l2_sq(Y1))
    return InternalMode(
        omega=ops.omega,
        e_omega=e,
        Y1=Y1,
        Y2=Y2,
        residuals=(float(res1), float(res2)),
        pairing=g.inner_real(Y1, Y2),
        signQ2=g.inner_real(ops.Q, Y2),
        iterations=iterations,
    )


def dense_internal_mode(ops: LinearizedOperators, max_n: int = 800) -> InternalMode:
    """Reference eigenpair from a dense nonsymmetric eigensolver (small grids only)."""
    if ops.grid.n > max_n:
        raise ConfigurationError(f"dense oracle limited to n <= {max_n}")
    M = (ops.matrix(MINUS) @ ops.matrix(PLUS)).toarray()
    w, V = np.linalg.eig(M)
    real = np.abs(w.imag) <= 1e-9 * np.abs(w).max()
    cand = np.where(real & (w.real < -1e-12 * np.abs(w).max()))[0]
    if cand.size == 0:
        raise SpectralFailure("dense solver found no negative eigenvalue")
    k = cand[np.argmin(w.real[cand])]
    e = float(np.sqrt(-w.real[k]))
    return _finish_mode(ops, e, np.real(V[:, k]) / ops.grid.r)


def composed_residual(ops: LinearizedOperators, mode: InternalMode) -> float:
    """|L_- L_+ Y1 + e^2 Y1| / |Y1| in L^2."""
    g = ops.grid
    lhs = ops.apply(MINUS, ops.apply(PLUS, mode.Y1)) + mode.e_omega**2 * mode.Y1
    return float(np.sqrt(g.l2_sq(lhs) / g.l2_sq(mode.Y1)))


@dataclass
class SpectralReport:
    checks: dict
    margins: dict

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def check_spectral_inequalities(mode: InternalMode, gs: GroundState, dQ=None,
                                orth_tol: float = 1e-8, dq_tol: float = 1e-3) -> SpectralReport:
    """Orthogonalities, positivity of (Y1,Y2), the sign of (Q,Y2) and the small-frequency
    inequality (e/2)|(Q,Y2)| >= 4|(Q^5,Y1)|."""
    g, Q = gs.grid, gs.Q
    if dQ is None:
        dQ = frequency_tangent(gs)
    nQ = np.sqrt(g.l2_sq(Q))
    q_y1 = abs(g.inner_real(Q, mode.Y1)) / (nQ * np.sqrt(g.l2_sq(mode.Y1)))
    dq_y2 = abs(g.inner_real(dQ, mode.Y2)) / np.sqrt(g.l2_sq(dQ) * g.l2_sq(mode.Y2))
    lhs = 0.5 * mode.e_omega * abs(mode.signQ2)
    rhs = 4.0 * abs(g.inner_real(Q**5, mode.Y1))
    margins = {
        "Q_Y1": q_y1,
        "dQ_Y2": dq_y2,
        "Y1_Y2": mode.pairing,
        "Q_Y2": mode.signQ2,
        "ejec_lhs": lhs,
        "ejec_rhs": rhs,
        "ejec_margin": lhs - rhs,
    }
    checks = {
        "Q_Y1_orthogonal": q_y1 <= orth_tol,
        "dQ_Y2_orthogonal": dq_y2 <= dq_tol,
        "Y1_Y2_positive": mode.pairing > 0,
        "Q_Y2_negative": mode.signQ2 < 0,
        "ejection_inequality": lhs >= rhs,
    }
    return SpectralReport(checks, margins)
