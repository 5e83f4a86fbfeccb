"""Exponential-series approximate solutions, special solutions and the threshold classifier.

In the frame psi = e^{i w t}(Q + eta) the remainder obeys eta_t = -i L eta + N(eta).
With X = e^{-e t} the truncated series

    V_k = sum_{j=1}^{k} X^j Z_j,      Z_1 = A Y_-,

solves this equation up to O(X^{k+1}) when each Z_j (j >= 2) satisfies

    (-j e + i L) Z_j = F_j,

F_j being the X^j coefficient of N(sum_{m<j} X^m Z_m).  Since L is only
real-linear, each solve is a real 2n x 2n system in (Re Z_j, Im Z_j).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, onenormest, splu

from .errors import ConfigurationError, NumericError, ProjectionError, ResonanceError
from .evolution import BLOWUP, SCATTER, EvolveConfig, TrajectoryRecord, evolve
from .functionals import dist_to_orbit, evaluate, scale
from .ground_state import GroundState
from .linearized import InternalMode, LinearizedOperators, nonlinear_remainder
from .modulation import (RETURN_VIOLATION, ModulationConfig, ModulationContext, modified_distance,
                         one_pass_monitor)

log = logging.getLogger(__name__)

MAX_ORDER = 6
COND_LIMIT = 1e12

BLOWUP_LABEL, SCATTER_LABEL, TRAPPED_LABEL, UNDECIDED_LABEL = "Blowup", "Scatter", "Trapped", "Undecided"


# -- formal power series in X with field coefficients ------------------------------


def _series_mul(a, b, order):
    """Truncated product of two coefficient stacks (shape (order+1, n))."""
    out = np.zeros_like(a)
    for i in range(order + 1):
        if not a[i].any():
            continue
        for j in range(order + 1 - i):
            out[i + j] += a[i] * b[j]
    return out


def nonlinearity_series(Q, Z, order: int, quintic: float = 1.0) -> np.ndarray:
    """Coefficients of f(Q + sum_m X^m Z_m) up to X^order, f(u) = |u|^2 u + |u|^4 u.

    X is real, so conj acts coefficient-wise; f(u) = u^2 conj(u) + u^3 conj(u)^2.
    """
    n = Q.size
    U = np.zeros((order + 1, n), dtype=complex)
    U[0] = Q
    for m, z in enumerate(Z, start=1):
        if m <= order:
            U[m] = z
    Ub = np.conj(U)
    U2 = _series_mul(U, U, order)
    cubic = _series_mul(U2, Ub, order)
    if quintic == 0.0:
        return cubic
    quint = _series_mul(_series_mul(U2, U, order), _series_mul(Ub, Ub, order), order)
    return cubic + quintic * quint


def forcing(ops: LinearizedOperators, Z, j: int) -> np.ndarray:
    """F_j: the X^j coefficient of N(sum_{m<j} X^m Z_m), for j >= 2.

    The constant and linear parts of f(Q + eta) only reach orders < j, so
    F_j = i [f-series]_j.
    """
    if j < 2:
        raise ConfigurationError("forcing is defined for j >= 2")
    coeffs = nonlinearity_series(ops.Q.astype(complex), Z[: j - 1], j, ops.quintic)
    return 1j * coeffs[j]


def _block_system(ops: LinearizedOperators, mu: float) -> sp.csc_matrix:
    """Real matrix of (mu + i L) on (r Re Z, r Im Z)."""
    n = ops.grid.n
    I = sp.identity(n, format="csr")
    Lp = ops.matrix("plus")
    Lm = ops.matrix("minus")
    return sp.bmat([[mu * I, -Lm], [Lp, mu * I]], format="csc")


def _condition_estimate(A: sp.csc_matrix, lu) -> float:
    n = A.shape[0]
    inv = LinearOperator((n, n), matvec=lambda x: lu.solve(np.asarray(x, dtype=float).ravel()),
                         rmatvec=lambda x: lu.solve(np.asarray(x, dtype=float).ravel(), trans="T"),
                         dtype=float)
    return float(onenormest(A) * onenormest(inv))


def solve_shifted(ops: LinearizedOperators, mu: float, F) -> tuple[np.ndarray, float]:
    """Solve (mu + i L) Z = F for complex Z; returns (Z, condition estimate)."""
    r = ops.grid.r
    n = ops.grid.n
    A = _block_system(ops, mu)
    lu = splu(A)
    cond = _condition_estimate(A, lu)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ResonanceError(f"shifted system at mu={mu:.6g} is near-singular (cond ~ {cond:.3e})")
    rhs = np.concatenate([r * F.real, r * F.imag])
    x = lu.solve(rhs)
    return (x[:n] + 1j * x[n:]) / r, cond


@dataclass
class SeriesProfile:
    A: float
    k: int
    Z: list
    e_omega: float
    residual_order: float = math.nan
    conditions: list = field(default_factory=list)
    ops: LinearizedOperators | None = field(default=None, repr=False)

    def evaluate(self, t: float) -> np.ndarray:
        X = math.exp(-self.e_omega * t)
        out = np.zeros_like(self.Z[0], dtype=complex)
        for j, z in enumerate(self.Z, start=1):
            out = out + X**j * z
        return out

    def time_derivative(self, t: float) -> np.ndarray:
        X = math.exp(-self.e_omega * t)
        out = np.zeros_like(self.Z[0], dtype=complex)
        for j, z in enumerate(self.Z, start=1):
            out = out - j * self.e_omega * X**j * z
        return out

    def residual(self, t: float) -> np.ndarray:
        """V_t + i L V - N(V) for the truncated series."""
        V = self.evaluate(t)
        return self.time_derivative(t) + 1j * self.ops.apply_full(V) - nonlinear_remainder(self.ops, V)

    def residual_norm(self, t: float) -> float:
        return math.sqrt(self.ops.grid.l2_sq(self.residual(t)))


def measure_residual_order(series: SeriesProfile, x_min: float = 1e-4, x_max: float = 10**-0.5,
                           samples: int = 40, floor_factor: float = 10.0):
    """Fit log |residual(t)| against t; returns (exponent, times, norms).

    The first term is only as accurate as the computed eigenpair, which leaves
    a floor X |(-e + iL) Z_1| (plus round-off eps |L V|).  Points within
    ``floor_factor`` of it are discarded and the fit uses the smallest-X decade
    that remains, where the leading neglected term dominates.
    """
    e = series.e_omega
    X = np.logspace(math.log10(x_max), math.log10(x_min), samples)
    t = -np.log(X) / e
    norms = np.array([series.residual_norm(tt) for tt in t])
    g, ops = series.ops.grid, series.ops
    Z1 = series.Z[0]
    eig_res = math.sqrt(g.l2_sq(-e * Z1 + 1j * ops.apply_full(Z1)))
    L_size = math.sqrt(g.l2_sq(ops.apply_full(Z1)))
    floor = X * (eig_res + np.finfo(float).eps * L_size) * floor_factor
    ok = norms > floor
    if ok.sum() < 5:
        raise NumericError("series residual is at the round-off floor everywhere; cannot fit its order")
    idx = np.nonzero(ok)[0]
    last = idx[-1]
    keep = idx[X[idx] <= 10.0 * X[last]]
    if keep.size < 5:
        keep = idx[-5:]
    slope = np.polyfit(t[keep], np.log(norms[keep]), 1)[0]
    return -float(slope), t, norms


def build_profile_series(A: float, k: int, mode: InternalMode, ops: LinearizedOperators,
                         measure: bool = True) -> SeriesProfile:
    """Approximate solution V_k = sum_j e^{-j e t} Z_j with Z_1 = A Y_-."""
    if k < 1:
        raise ConfigurationError("series order k must be at least 1")
    if k > MAX_ORDER:
        raise ConfigurationError(f"series order is capped at {MAX_ORDER}")
    e = mode.e_omega
    Z = [A * mode.Y_minus.astype(complex)]
    conds = []
    for j in range(2, k + 1):
        F = forcing(ops, Z, j)
        if not F.any():
            Z.append(np.zeros_like(Z[0]))
            conds.append(1.0)
            continue
        z, cond = solve_shifted(ops, -j * e, F)
        Z.append(z)
        conds.append(cond)
    series = SeriesProfile(A=float(A), k=k, Z=Z, e_omega=e, conditions=conds, ops=ops)
    if measure and A != 0:
        series.residual_order = measure_residual_order(series)[0]
    elif A == 0:
        series.residual_order = math.inf
    return series


def make_special_initial_data(series: SeriesProfile, t0: float, gs: GroundState,
                              max_fraction: float = 0.1) -> np.ndarray:
    """Q + V_k(t0); refuses t0 for which V_k(t0) is not small against Q in H^1."""
    V = series.evaluate(t0)
    g = gs.grid
    size, ref = g.h1_norm(V), g.h1_norm(gs.Q)
    if size > max_fraction * ref:
        raise ConfigurationError(f"t0={t0:g} too small: |V_k(t0)|_H1 = {size:.3e} exceeds "
                                 f"{max_fraction:g} |Q|_H1 = {max_fraction * ref:.3e}")
    return gs.Q + V


def t0_for_level(e_omega: float, level: float = 1e-3) -> float:
    """t0 with e^{-e t0} = level."""
    return -math.log(level) / e_omega


def threshold_offsets(grid, psi, gs: GroundState) -> dict:
    """Mass and energy of psi relative to the ground state."""
    v = evaluate(grid, psi)
    return {"mass": v.mass, "energy": v.energy, "K": v.K,
            "d_mass": v.mass - gs.values.mass, "d_energy": v.energy - gs.values.energy}


# -- decay fits -------------------------------------------------------------------


@dataclass
class DecayFit:
    rate: float
    r2: float
    samples: int
    window: tuple


def fit_decay_rate(traj, window, column: str = "dist", noise_floor: float = 1e-9,
                   min_samples: int = 10) -> DecayFit:
    """Least-squares slope of -log(series) against t over ``window``.

    ``traj`` is a TrajectoryRecord or a pair (times, values).
    """
    if isinstance(traj, TrajectoryRecord):
        t = np.asarray(traj.times, dtype=float)
        y = traj.column(column)
    else:
        t, y = (np.asarray(a, dtype=float) for a in traj)
    lo, hi = min(window), max(window)
    sel = (t >= lo) & (t <= hi) & np.isfinite(y)
    if sel.sum() < min_samples:
        raise ConfigurationError(f"window {window} holds {int(sel.sum())} samples; need {min_samples}")
    ts, ys = t[sel], y[sel]
    if np.any(ys <= 10.0 * noise_floor):
        raise NumericError("series reaches the noise floor inside the fit window")
    logy = np.log(ys)
    slope, icpt = np.polyfit(ts, logy, 1)
    fitted = slope * ts + icpt
    ss_res = float(np.sum((logy - fitted) ** 2))
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(rate=-float(slope), r2=r2, samples=int(sel.sum()), window=(lo, hi))


# -- threshold projection -----------------------------------------------------------


@dataclass
class Projection:
    field: np.ndarray
    amplitude: float
    scale: float
    iterations: int
    d_mass: float
    d_energy: float


def threshold_projection(u, gs: GroundState, tol: float = 1e-10, maxiter: int = 60,
                         precondition: float = 0.1, max_step: float = 0.1) -> Projection:
    """Find a, lam with M(a T_lam u) = M(Q) and E(a T_lam u) = E(Q).

    Newton in (a, lam): at w = a T_lam u the Jacobian of (M, E) in the
    multiplicative variables (mu, nu) of mu T_nu w is [[2M, 0], [d_mu E, K]]
    by the exact scaling laws, with d_mu E = |grad w|^2 - |w|_4^4 - |w|_6^6.
    Tolerances are absolute, in units of |M(Q)| and |E(Q)|.
    """
    g = gs.grid
    u = g.check(u)
    MQ, EQ = gs.values.mass, gs.values.energy
    v0 = evaluate(g, u)
    if abs(v0.mass - MQ) > precondition * abs(MQ) or abs(v0.energy - EQ) > precondition * abs(EQ):
        raise ProjectionError("field is not within the projection neighbourhood of the threshold "
                              f"(dM/M = {(v0.mass - MQ) / MQ:.3e}, dE/E = {(v0.energy - EQ) / EQ:.3e})")
    a, lam = 1.0, 1.0
    w = u.copy()
    for it in range(maxiter + 1):
        v = evaluate(g, w)
        fM, fE = (v.mass - MQ) / abs(MQ), (v.energy - EQ) / abs(EQ)
        if abs(fM) <= tol and abs(fE) <= tol:
            return Projection(w, a, lam, it, v.mass - MQ, v.energy - EQ)
        n = v.norms
        dmuE = n.grad_sq - n.l4_4 - n.l6_6
        J = np.array([[2.0 * v.mass / abs(MQ), 0.0], [dmuE / abs(EQ), v.K / abs(EQ)]])
        if abs(np.linalg.det(J)) < 1e-12 * abs(J[0, 0]) * max(abs(J[1, 0]), 1.0):
            raise ProjectionError("projection Jacobian is singular (K ~ 0 along the scaling family)")
        dmu, dnu = np.linalg.solve(J, [-fM, -fE])
        dmu, dnu = (float(np.clip(x, -max_step, max_step)) for x in (dmu, dnu))
        a *= 1.0 + dmu
        lam *= 1.0 + dnu
        w = a * scale(g, u, lam)
    raise ProjectionError(f"threshold projection did not converge in {maxiter} iterations")


# -- special-solution runs ------------------------------------------------------------


@dataclass
class SpecialRunReport:
    A: float
    forward_rate: float
    forward_r2: float
    backward_verdict: str
    window: tuple
    K0: float
    t0: float
    series_order: float
    backward_T: float | None = None
    notes: list = field(default_factory=list)


# -- classification ----------------------------------------------------------------------


@dataclass(frozen=True)
class ClassifyConfig:
    """Run budgets for :func:`classify`.

    The trap window lasts ``trap_growths / e``: long enough for any genuine
    departure along the unstable mode to show, short enough that round-off
    seeded along that mode stays far below the trap radius on exact orbit
    data.  The sponge-off run then continues to ``t_blowup`` before the
    absorbing-layer run of length ``t_scatter``.
    """

    dt0: float = 1e-3
    trap_growths: float = 10.0
    t_blowup: float = 12.0
    t_scatter: float = 60.0
    dt_scatter: float = 2e-3
    sponge_strength: float = 5.0
    sponge_width: float = 0.2
    record_every: int = 10
    noise_floor: float = 1e-9
    orbit_noise: float = 1e-3
    modulation: ModulationConfig = ModulationConfig()

    def __post_init__(self):
        if min(self.dt0, self.t_blowup, self.t_scatter, self.dt_scatter, self.trap_growths) <= 0:
            raise ConfigurationError("classification budgets must be positive")
        if not 0 < self.orbit_noise < self.modulation.gamma_tilde:
            raise ConfigurationError("orbit_noise must lie below the trap radius")


@dataclass
class ClassificationResult:
    label: str
    K0: float
    direction: int
    grad0: float = 1.0
    evidence: dict = field(default_factory=dict)


def _k_sign_flips_while_trapped(K, d, gamma_tilde):
    """Number of K sign changes between consecutive rows that both lie inside the trap."""
    s = np.sign(K)
    inside = (d < gamma_tilde)
    flips = (s[1:] * s[:-1] < 0) & inside[1:] & inside[:-1]
    return int(flips.sum())


def _trap_verdict(traj, ctx, cfg, evidence) -> bool:
    """Trapped: inside the trap radius throughout, and either decaying
    exponentially or never leaving the numerical neighbourhood of the orbit."""
    gt = cfg.modulation.gamma_tilde
    dist = traj.column("dist")
    dmod = modified_distance(traj.column("d_omega"), dist, gt)
    if not np.all(dmod < gt):
        return False
    t = np.abs(np.asarray(traj.times, dtype=float))
    try:
        fit = fit_decay_rate((t, dist), (0.0, t.max()), noise_floor=cfg.noise_floor)
        evidence["trap_rate"] = fit.rate
        evidence["trap_fit_r2"] = fit.r2
        if fit.rate > 0 and dist[-1] < dist[0]:
            evidence["trap_reason"] = "exponential decay"
            return True
    except (ConfigurationError, NumericError):
        pass
    noise = cfg.orbit_noise * ctx.grid.h1_norm(ctx.gs.Q)
    if dist.max() <= noise:
        evidence["trap_reason"] = f"orbit distance stayed below {noise:.3e}"
        return True
    return False


def classify(psi0, ctx: ModulationContext, direction: int = 1,
             cfg: ClassifyConfig = ClassifyConfig()) -> ClassificationResult:
    """Label a threshold trajectory as Blowup, Trapped, Scatter or Undecided."""
    g = ctx.grid
    if direction not in (1, -1):
        raise ConfigurationError("direction must be +1 (forward) or -1 (backward)")
    v0 = evaluate(g, psi0)
    K0, grad0 = v0.K, v0.norms.grad_sq
    gt = cfg.modulation.gamma_tilde
    T1 = min(cfg.t_blowup, cfg.trap_growths / ctx.e)
    traj = evolve(g, psi0, EvolveConfig(dt0=cfg.dt0, t_end=direction * T1,
                                        record_every=cfg.record_every), context=ctx)
    evidence = {"trips": list(traj.notes), "T_trap_window": direction * T1}

    def summarize(rows_traj, tag):
        d = modified_distance(rows_traj.column("d_omega"), rows_traj.column("dist"), gt)
        K = rows_traj.column("K")
        evidence[f"one_pass{tag}"] = one_pass_monitor(d, gt)
        evidence[f"d_final{tag}"] = float(d[-1])
        evidence[f"d_max{tag}"] = float(np.nanmax(d))
        evidence[f"K_sign{tag}"] = [int(x) for x in np.sign(K)]
        evidence[f"K_flips_in_trap{tag}"] = _k_sign_flips_while_trapped(K, d, gt)

    if traj.verdict != BLOWUP and T1 < cfg.t_blowup:
        if _trap_verdict(traj, ctx, cfg, evidence):
            summarize(traj, "")
            return ClassificationResult(TRAPPED_LABEL, K0, direction, grad0, evidence)
        rest = evolve(g, traj.final, EvolveConfig(dt0=cfg.dt0, t_end=direction * (cfg.t_blowup - T1),
                                                  record_every=cfg.record_every), context=ctx)
        traj.times.extend(direction * T1 + np.asarray(rest.times[1:]))
        traj.rows.extend(dict(row, t=row["t"] + direction * T1) for row in rest.rows[1:])
        traj.verdict, traj.final = rest.verdict, rest.final
        traj.T_est = None if rest.T_est is None else rest.T_est + direction * T1
        evidence["trips"] += rest.notes
    summarize(traj, "")
    evidence["verdict_sponge_off"] = traj.label
    if traj.verdict == BLOWUP:
        evidence["T_est"] = traj.T_est
        return ClassificationResult(BLOWUP_LABEL, K0, direction, grad0, evidence)
    if _trap_verdict(traj, ctx, cfg, evidence):
        return ClassificationResult(TRAPPED_LABEL, K0, direction, grad0, evidence)

    sponge = EvolveConfig(dt0=cfg.dt_scatter, t_end=direction * cfg.t_scatter,
                          record_every=cfg.record_every, sponge_strength=cfg.sponge_strength,
                          sponge_width=cfg.sponge_width)
    straj = evolve(g, psi0, sponge, context=ctx)
    evidence["verdict_sponge_on"] = straj.label
    summarize(straj, "_sponge")
    if straj.verdict == SCATTER:
        return ClassificationResult(SCATTER_LABEL, K0, direction, grad0, evidence)
    return ClassificationResult(UNDECIDED_LABEL, K0, direction, grad0, evidence)


def consistent_with_case_split(result: ClassificationResult, k_tol: float = 1e-6) -> bool:
    """Allowed labels per the threshold trichotomy, by the sign of K(psi0).

    K(psi0) counts as zero when |K| <= k_tol |grad psi0|^2.
    """
    if abs(result.K0) <= k_tol * result.grad0:
        return result.label == TRAPPED_LABEL
    if result.K0 < 0:
        return result.label in (BLOWUP_LABEL, TRAPPED_LABEL)
    return result.label in (SCATTER_LABEL, TRAPPED_LABEL)


def has_return_violation(result: ClassificationResult) -> bool:
    return RETURN_VIOLATION in (result.evidence.get("one_pass"), result.evidence.get("one_pass_sponge"))


def special_run(ctx: ModulationContext, A: float, k: int = 3, level: float = 1e-3,
                forward_time: float | None = None, backward: bool = True,
                cfg: ClassifyConfig = ClassifyConfig(), fit_span: float = 3.0) -> SpecialRunReport:
    """Build U^A from the series, fit its forward decay and classify its backward fate."""
    series = build_profile_series(A, k, ctx.mode, ctx.ops)
    t0 = t0_for_level(ctx.e, level)
    psi0 = make_special_initial_data(series, t0, ctx.gs)
    K0 = evaluate(ctx.grid, psi0).K
    T = forward_time if forward_time is not None else fit_span / ctx.e
    fwd = evolve(ctx.grid, psi0, EvolveConfig(dt0=cfg.dt0, t_end=T, record_every=cfg.record_every),
                 context=ctx)
    fit = fit_decay_rate(fwd, (0.0, T), noise_floor=cfg.noise_floor)
    report = SpecialRunReport(A=A, forward_rate=fit.rate, forward_r2=fit.r2, backward_verdict="",
                              window=fit.window, K0=K0, t0=t0, series_order=series.residual_order)
    if backward:
        res = classify(psi0, ctx, -1, cfg)
        report.backward_verdict = {BLOWUP_LABEL: BLOWUP, SCATTER_LABEL: SCATTER}.get(res.label, "Undecided")
        report.backward_T = res.evidence.get("T_est")
        report.notes.append(f"backward label {res.label}")
    return report


def sweep(cases, ctx: ModulationContext, cfg: ClassifyConfig = ClassifyConfig(), direction: int = 1):
    """Classify a list of (name, psi0) pairs; returns [(name, ClassificationResult)]."""
    out = []
    for name, psi0 in cases:
        res = classify(psi0, ctx, direction, cfg)
        log.info("%s: K0=%+.3e -> %s", name, res.K0, res.label)
        out.append((name, res))
    return out


def with_dt(cfg: ClassifyConfig, factor: float) -> ClassifyConfig:
    return replace(cfg, dt0=cfg.dt0 * factor, dt_scatter=cfg.dt_scatter * factor)


def trichotomy_cases(ctx: ModulationContext, eps: float = 1e-2, level: float = 1e-3):
    """Twelve threshold initial data: orbit points, +-Y-perturbed and scaled/chirped variants.

    The perturbed and scaled fields are threshold-projected; the last two
    are the special data U^{+-1}, which already sit on the threshold to
    O(level^{k+1}).
    """
    g, Q = ctx.grid, ctx.gs.Q
    r2 = g.r**2
    cases = [(f"orbit(alpha={a:g})", np.exp(1j * a) * Q.astype(complex)) for a in (0.0, 0.7, 2.0)]
    for name, Y in (("Y-", ctx.mode.Y_minus), ("Y+", ctx.mode.Y_plus)):
        for s in (1, -1):
            u = Q + s * eps * Y
            cases.append((f"Q{'+' if s > 0 else '-'}{eps:g}{name}", threshold_projection(u, ctx.gs).field))
    for mu, beta in ((1.05, 0.004), (0.95, -0.004), (1.0, 0.006)):
        u = np.exp(1j * beta * r2) * scale(g, Q, mu)
        cases.append((f"scaled(mu={mu:g},beta={beta:+g})", threshold_projection(u, ctx.gs).field))
    t0 = t0_for_level(ctx.e, level)
    for A in (1.0, -1.0):
        series = build_profile_series(A, 3, ctx.mode, ctx.ops, measure=False)
        cases.append((f"special(A={A:+g})", make_special_initial_data(series, t0, ctx.gs)))
    return cases
