"""Radial grid, quadrature and finite-difference operators on R^3.

A radial function u(|x|) is sampled at the interior nodes r_i = i*h,
i = 1..n, with h = r_max/(n+1).  All operators act on the substitution
v = r*u, for which the 3-D radial Laplacian becomes (1/r) v''.  The
boundary conditions are v(0) = 0 (regularity) and v(r_max) = 0 (Dirichlet
truncation); both are imposed by odd reflection of v, so the central
stencils keep their full order right up to the ends.

Fields are plain numpy arrays of length ``grid.n`` (real or complex).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, GridMismatch

FOUR_PI = 4.0 * np.pi

# central second-derivative stencils: coefficient for offsets 0, 1, 2, ...
_D2 = {
    2: (-2.0, 1.0),
    4: (-30 / 12, 16 / 12, -1 / 12),
    6: (-490 / 180, 270 / 180, -27 / 180, 2 / 180),
    8: (-14350 / 5040, 8064 / 5040, -1008 / 5040, 128 / 5040, -9 / 5040),
}
# central first-derivative stencils: coefficient for offsets 1, 2, ...
_D1 = {
    2: (1 / 2,),
    4: (8 / 12, -1 / 12),
    6: (45 / 60, -9 / 60, 1 / 60),
    8: (672 / 840, -168 / 840, 32 / 840, -3 / 840),
}

MIN_NODES = 16


@dataclass(frozen=True)
class NormReport:
    """Squared / power norms of a field with the 4*pi*r^2 dr measure."""

    l2_sq: float
    grad_sq: float
    l4_4: float
    l6_6: float

    @property
    def h1_sq(self) -> float:
        return self.l2_sq + self.grad_sq


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial grid with interior nodes ``i*h`` for ``i = 1..n``.

    ``order`` selects the accuracy of the central stencils (2, 4, 6 or 8).
    """

    r_max: float
    n: int
    order: int = 6

    def __post_init__(self):
        if not np.isfinite(self.r_max) or self.r_max <= 0:
            raise ConfigurationError(f"r_max must be positive, got {self.r_max}")
        if int(self.n) != self.n or self.n < MIN_NODES:
            raise ConfigurationError(f"need n >= {MIN_NODES} nodes, got {self.n}")
        if self.order not in _D2:
            raise ConfigurationError(f"stencil order must be one of {sorted(_D2)}")

    @property
    def h(self) -> float:
        return self.r_max / (self.n + 1)

    @property
    def spacing(self) -> float:
        return self.h

    @cached_property
    def r(self) -> np.ndarray:
        r = self.h * np.arange(1, self.n + 1)
        r.flags.writeable = False
        return r

    @property
    def nodes(self) -> np.ndarray:
        return self.r

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights for the integral of f * 4*pi*r^2 dr (f(r_max) = 0)."""
        w = FOUR_PI * self.h * self.r**2
        w.flags.writeable = False
        return w

    @cached_property
    def d2(self) -> sp.csr_matrix:
        """Second-difference matrix acting on v = r*u (symmetric, reflected ends)."""
        return _reflected_stencil(self.n, _D2[self.order], even=True) / self.h**2

    @cached_property
    def d1(self) -> sp.csr_matrix:
        """First-difference matrix acting on v = r*u (odd reflection at both ends)."""
        coef = (0.0,) + _D1[self.order]
        return _reflected_stencil(self.n, coef, even=False) / self.h

    @property
    def bandwidth(self) -> int:
        return len(_D2[self.order]) - 1

    def banded(self, diag: np.ndarray | float = 0.0, scale: complex = 1.0) -> np.ndarray:
        """``scale * d2 + diag(diag)`` in the (l, u) banded layout of ``solve_banded``."""
        m, n = self.bandwidth, self.n
        dtype = np.result_type(np.asarray(diag), np.asarray(scale), float)
        ab = np.zeros((2 * m + 1, n), dtype=dtype)
        for k in range(-m, m + 1):
            d = scale * self.d2.diagonal(k)
            if k >= 0:
                ab[m - k, k:] = d
            else:
                ab[m - k, : n + k] = d
        ab[m] += diag
        return ab

    # -- field helpers -------------------------------------------------------

    def check(self, u, name: str = "field") -> np.ndarray:
        u = np.asarray(u)
        if u.shape != (self.n,):
            raise GridMismatch(f"{name} has shape {u.shape}, grid expects ({self.n},)")
        return u

    def laplacian(self, u) -> np.ndarray:
        u = self.check(u)
        return (self.d2 @ (self.r * u)) / self.r

    def dr(self, u) -> np.ndarray:
        """Pointwise radial derivative u'(r), via u' = (v' - u)/r."""
        u = self.check(u)
        return (self.d1 @ (self.r * u) - u) / self.r

    def integrate(self, f, edge: float = 0.0) -> float | complex:
        """Quadrature of f(r) * 4*pi*r^2 over [0, r_max].

        ``edge`` is the value of f at r_max (zero for fields obeying the
        Dirichlet truncation).
        """
        f = self.check(f)
        total = self.weights @ f
        if edge:
            total = total + 0.5 * FOUR_PI * self.h * self.r_max**2 * edge
        return total

    def inner(self, u, w) -> complex:
        """Complex L^2 pairing (u, w) = int u * conj(w)."""
        return self.weights @ (self.check(u) * np.conj(self.check(w)))

    def inner_real(self, u, w) -> float:
        return float(np.real(self.inner(u, w)))

    def l2_sq(self, u) -> float:
        u = self.check(u)
        return float(self.weights @ (u.real**2 + u.imag**2))

    def grad_inner(self, u, w) -> complex:
        """Discrete (grad u, grad w) = -(Laplacian u, w); exact summation by parts."""
        u, w = self.check(u), self.check(w)
        return FOUR_PI * self.h * np.vdot(self.r * w, -(self.d2 @ (self.r * u)))

    def grad_sq(self, u) -> float:
        return float(np.real(self.grad_inner(u, u)))

    def h1_inner(self, u, w) -> complex:
        return self.inner(u, w) + self.grad_inner(u, w)

    def h1_norm(self, u) -> float:
        return float(np.sqrt(max(self.l2_sq(u) + self.grad_sq(u), 0.0)))

    def norms(self, u) -> NormReport:
        u = self.check(u)
        a2 = u.real**2 + u.imag**2
        if not np.all(np.isfinite(a2)):
            raise ConfigurationError("field contains NaN or Inf")
        return NormReport(
            l2_sq=float(self.weights @ a2),
            grad_sq=self.grad_sq(u),
            l4_4=float(self.weights @ a2**2),
            l6_6=float(self.weights @ a2**3),
        )

    def sample(self, func) -> np.ndarray:
        """Evaluate a callable of r at the nodes."""
        return np.asarray(func(self.r))


def _reflected_stencil(n: int, coef, even: bool) -> sp.csr_matrix:
    """Banded Toeplitz stencil with odd reflection of v about r=0 and r=(n+1)h.

    ``coef[k]`` multiplies v_{i+k}; for ``even`` stencils v_{i-k} gets the
    same weight, otherwise it gets ``-coef[k]``.
    """
    m = len(coef) - 1
    offsets, bands = [], []
    for k in range(-m, m + 1):
        c = coef[abs(k)] if (even or k >= 0) else -coef[abs(k)]
        if c == 0.0 or abs(k) >= n:
            continue
        offsets.append(k)
        bands.append(np.full(n - abs(k), c))
    mat = sp.diags(bands, offsets, shape=(n, n), format="lil")
    for i in range(m):
        for k in range(i + 1, m + 1):
            # node i+1-k <= 0 mirrors onto node k-i-1, i.e. index k-i-2
            j = k - i - 2
            c_minus = coef[k] if even else -coef[k]
            if j >= 0:
                mat[i, j] -= c_minus
                mat[n - 1 - i, n - 1 - j] -= coef[k]
    return mat.tocsr()


def build_grid(r_max: float, n: int, order: int = 6) -> RadialGrid:
    return RadialGrid(float(r_max), int(n), order)


def integrate(grid: RadialGrid, f, edge: float = 0.0):
    return grid.integrate(f, edge)


def apply_radial_laplacian(grid: RadialGrid, u) -> np.ndarray:
    return grid.laplacian(u)


def h1_distance(grid: RadialGrid, u, v) -> float:
    return grid.h1_norm(grid.check(u, "u") - grid.check(v, "v"))
