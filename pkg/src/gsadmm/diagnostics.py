"""Convergence diagnostics computed from iteration traces.

Everything here is a pure function of (problem, config, trace) plus the
structural matrices: the per-iteration residual vector d, the contraction
slack in the H-norm, the O(1/t) nonergodic envelope, the pointwise residual
bound with its computable coefficient, the projection-based natural residual
whose vanishing characterizes the solution set, the closed-form rate
constants, and the empirical linear-rate fit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .model import BlockProblem, Iterate, L1, SolverConfig
from .oracles import project

if TYPE_CHECKING:  # avoid a runtime cycle; records and traces are duck-typed
    from .engine import IterationRecord, Trace
    from .structure import StructuralMatrices

# Monotonicity of ||M(w - w~)||_H^2 is exact algebra; the tolerance is
# relative to the initial value so fixed-point traces at roundoff pass.
MONOTONE_RTOL = 1e-12
XI_BOUND_RTOL = 1e-8
# Both sides of the projection-residual inequality are formed from
# catastrophically cancelled differences near convergence, so the check
# carries an absolute floor at the square of measurement noise.
ERROR_BOUND_RTOL = 1e-9
ERROR_BOUND_ABS_FLOOR = 1e-24


class RegionNotCertified(RuntimeError):
    """(tau, s) lies outside the triangle region; the check is not covered."""


class InsufficientTrace(RuntimeError):
    """Too few usable iterations for an asymptotic rate fit."""


def _require_region(mats: "StructuralMatrices", what: str):
    if not mats.in_D:
        raise RegionNotCertified(
            f"{what} requires (tau, s) in the triangle region; got ({mats.tau}, {mats.s})"
        )


# ---------------------------------------------------------------------------
# Per-iteration residual vector d
# ---------------------------------------------------------------------------

def d_components(problem: BlockProblem, config: SolverConfig, w, w_tilde) -> list[np.ndarray]:
    """Blockwise optimality-shift vector of the predicted point.

    x components:  beta A_i' ((sigma1 - 1) sum_l A_l dx_l + A_i dx_i)
    y components:  (sigma2 + 1) beta B_j'B_j dy_j - tau B_j' dlam
    with dx = x~ - x, dy = y~ - y, dlam = lambda~ - lambda.
    """
    beta, sigma1, sigma2, tau = config.beta, config.sigma1, config.sigma2, config.tau
    ax_deltas = [
        blk.A @ (xt - xk)
        for blk, xt, xk in zip(problem.x_blocks, w_tilde.x_tilde, w.x)
    ]
    sx = np.zeros(problem.n)
    for d in ax_deltas:
        sx += d
    dlam = w_tilde.lambda_tilde - w.lam
    parts = []
    for i, blk in enumerate(problem.x_blocks):
        parts.append(beta * (blk.A.T @ ((sigma1 - 1.0) * sx + ax_deltas[i])))
    for j, blk in enumerate(problem.y_blocks):
        dy = w_tilde.y_tilde[j] - w.y[j]
        parts.append((sigma2 + 1.0) * beta * (blk.A.T @ (blk.A @ dy)) - tau * (blk.A.T @ dlam))
    return parts


def d_vector(problem: BlockProblem, config: SolverConfig, record: "IterationRecord") -> np.ndarray:
    """Stacked residual vector d^k recomputed from a record's (w, w~)."""
    return np.concatenate(d_components(problem, config, record.w, record.w_tilde))


def theta_hat(problem: BlockProblem, config: SolverConfig) -> float:
    """Computable coefficient with ||d||^2 <= theta_hat ||w - w~||^2.

    Sum over components of the squared spectral norms of the coefficient
    matrices in the d formula (Cauchy-Schwarz over the block partition).
    """
    beta, sigma1, sigma2, tau = config.beta, config.sigma1, config.sigma2, config.tau
    total = 0.0
    for i, bi in enumerate(problem.x_blocks):
        for l, bl in enumerate(problem.x_blocks):
            coef = sigma1 if l == i else sigma1 - 1.0
            total += (beta * coef * np.linalg.norm(bi.A.T @ bl.A, 2)) ** 2
    for bj in problem.y_blocks:
        total += ((sigma2 + 1.0) * beta * np.linalg.norm(bj.A.T @ bj.A, 2)) ** 2
        total += (tau * np.linalg.norm(bj.A, 2)) ** 2
    return float(total)


# ---------------------------------------------------------------------------
# Natural residual (projection-based error map)
# ---------------------------------------------------------------------------

def error_map_residual(problem: BlockProblem, w: Iterate, subgradient_selection=None) -> np.ndarray:
    """Stacked natural residual e(w, 1); zero exactly at solution points.

    Primal components are z - P_S[z - (g - A'lambda)] with g one subgradient
    element; the dual component is the constraint residual. For l1 blocks the
    default selection minimizes each residual component over the
    subdifferential interval, which is closed form because the projection and
    the interval are both componentwise: at a zero component the minimizer is
    clip(A'lambda, -weight, weight).
    """
    if subgradient_selection is not None:
        subgradient_selection = [np.asarray(g, dtype=float) for g in subgradient_selection]
    parts = []
    blocks = list(problem.x_blocks) + list(problem.y_blocks)
    points = list(w.x) + list(w.y)
    for idx, (blk, z) in enumerate(zip(blocks, points)):
        t = blk.A.T @ w.lam
        if subgradient_selection is not None:
            g = subgradient_selection[idx]
        elif isinstance(blk.objective, L1):
            weight = blk.objective.weight
            g = weight * np.sign(z)
            zero = z == 0.0
            g[zero] = np.clip(t[zero], -weight, weight)
        else:
            g = blk.objective.gradient(z)
        parts.append(z - project(blk.set, z - (g - t)))
    parts.append(problem.residual(w.x, w.y))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Contraction and nonergodic rate
# ---------------------------------------------------------------------------

def contraction_check(mats: "StructuralMatrices", record: "IterationRecord",
                      w_star: Iterate) -> float:
    """Slack of the H-norm contraction inequality at one iteration:

        ||w_k - w*||_H^2 - ||w_{k+1} - w*||_H^2 - ||w_k - w~_k||_G^2

    Nonnegative (up to roundoff) whenever (tau, s) is in the triangle region.
    """
    _require_region(mats, "contraction check")
    wk = record.w.stack()
    wn = record.w_next.stack()
    wt = record.w_tilde.stack()
    ws = w_star.stack()
    return mats.h_norm_sq(wk - ws) - mats.h_norm_sq(wn - ws) - mats.g_norm_sq(wk - wt)


@dataclass(frozen=True)
class NonergodicReport:
    monotone_ok: bool
    xi_bound_ok: bool
    sublinear_envelope: float  # max over t of (t+1) ||M(w_t - w~_t)||_H^2


def nonergodic_check(mats: "StructuralMatrices", trace: "Trace",
                     w_star: Iterate) -> NonergodicReport:
    """Monotone decay of ||M(w - w~)||_H^2 and the O(1/t) bound with the
    tightest spectral constant."""
    _require_region(mats, "nonergodic check")
    recs = trace.records
    if not recs:
        return NonergodicReport(True, True, 0.0)
    ms = [r.correction_residual for r in recs]
    m0 = ms[0]
    monotone_ok = all(
        ms[k + 1] <= ms[k] + MONOTONE_RTOL * (1.0 + m0) for k in range(len(ms) - 1)
    )
    h0 = mats.h_norm_sq(recs[0].w.stack() - w_star.stack())
    envelope = max((k + 1) * mk for k, mk in enumerate(ms))
    xi = mats.xi
    xi_bound_ok = (
        math.isfinite(xi)
        and xi > 0.0
        and all((k + 1) * xi * mk <= h0 * (1.0 + XI_BOUND_RTOL) for k, mk in enumerate(ms))
    )
    return NonergodicReport(monotone_ok, xi_bound_ok, envelope)


# ---------------------------------------------------------------------------
# Pointwise residual bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointwiseReport:
    sup_scaled_d_sq: float            # sup_t (t+1) ||d_t||^2
    sup_scaled_feasibility_sq: float  # sup_t (t+1) ||A x~ + B y~ - c||^2
    theta_hat: float
    theta_hat_ok: bool


def pointwise_residual_check(problem: BlockProblem, config: SolverConfig,
                             trace: "Trace") -> PointwiseReport:
    """Verify ||d_t||^2 <= theta_hat ||w_t - w~_t||^2 and collect the scaled sups."""
    th = theta_hat(problem, config)
    sup_d = 0.0
    sup_f = 0.0
    ok = True
    for k, rec in enumerate(trace.records):
        dw = rec.w.stack() - rec.w_tilde.stack()
        ok = ok and rec.d_norm_sq <= th * float(dw @ dw) * (1.0 + ERROR_BOUND_RTOL) + 1e-300
        sup_d = max(sup_d, (k + 1) * rec.d_norm_sq)
        sup_f = max(sup_f, (k + 1) * rec.feasibility ** 2)
    return PointwiseReport(sup_d, sup_f, th, bool(ok))


def feasibility_decomposition_error(problem: BlockProblem, config: SolverConfig,
                                    record: "IterationRecord") -> float:
    """Relative error of A x~ + B y~ - c = (lambda - lambda~)/beta - sum_j B_j (y_j - y~_j)."""
    lhs = problem.residual(record.w_tilde.x_tilde, record.w_tilde.y_tilde)
    rhs = (record.w.lam - record.w_tilde.lambda_tilde) / config.beta
    for blk, yk, yt in zip(problem.y_blocks, record.w.y, record.w_tilde.y_tilde):
        rhs = rhs - blk.A @ (yk - yt)
    denom = 1.0 + max(float(np.linalg.norm(lhs)), float(np.linalg.norm(rhs)))
    return float(np.linalg.norm(lhs - rhs)) / denom


# ---------------------------------------------------------------------------
# Rate constants and the linear-rate checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateConstants:
    """Spectral coefficients bounding the natural residual by ||w - w~||."""

    mu_tilde: tuple[float, ...]       # lambda_max(A_i'A_i)
    nu_tilde: tuple[float, ...]       # lambda_max(B_j'B_j)
    theta_bar: tuple[float, ...]
    vartheta_bar: tuple[float, ...]
    eta_bar: float
    delta: float


def rate_constants(problem: BlockProblem, config: SolverConfig) -> RateConstants:
    beta, sigma1, sigma2 = config.beta, config.sigma1, config.sigma2
    tau, s = config.tau, config.s
    p, q = problem.p, problem.q
    mu = tuple(float(np.linalg.eigvalsh(b.A.T @ b.A).max()) for b in problem.x_blocks)
    nu = tuple(float(np.linalg.eigvalsh(b.A.T @ b.A).max()) for b in problem.y_blocks)
    smu, snu = sum(mu), sum(nu)
    theta_bar = tuple(
        4.0 * p * (1.0 - sigma1) ** 2 * beta ** 2 * smu + 4.0 * beta ** 2 * mu_i
        for mu_i in mu
    )
    vartheta_bar = tuple(
        4.0 * q * (s * beta) ** 2 * smu
        + 3.0 * q * (s * beta) ** 2 * snu
        + 3.0 * (sigma2 + 1.0) ** 2 * beta ** 2 * nu_j
        + 2.0 * q
        for nu_j in nu
    )
    eta_bar = (
        4.0 * (tau + s - 1.0) ** 2 * smu
        + 3.0 * (s - 1.0) ** 2 * snu
        + 2.0 / beta ** 2
    )
    delta = max(max(theta_bar), max(vartheta_bar), eta_bar)
    return RateConstants(mu, nu, theta_bar, vartheta_bar, eta_bar, delta)


def error_bound_check(problem: BlockProblem, mats: "StructuralMatrices", trace: "Trace",
                   constants: RateConstants) -> tuple[bool, float]:
    """Pointwise bound of the squared natural residual at w_{k+1} by the
    G-norm of the prediction gap, both sides computed independently.

    Returns (all iterations pass, worst observed left/right ratio).
    """
    _require_region(mats, "projection-residual bound")
    coef = constants.delta * max(max(constants.mu_tilde), max(constants.nu_tilde), 1.0)
    coef /= mats.lambda_min_G
    ok = True
    worst = 0.0
    for rec in trace.records:
        left = float(np.sum(error_map_residual(problem, rec.w_next) ** 2))
        wk = rec.w.stack()
        dw = wk - rec.w_tilde.stack()
        right = coef * mats.g_norm_sq(dw)
        bound = right * (1.0 + ERROR_BOUND_RTOL) + ERROR_BOUND_ABS_FLOOR * (1.0 + float(wk @ wk))
        ok = ok and left <= bound
        if right > 0.0:
            worst = max(worst, left / right)
    return ok, worst


@dataclass(frozen=True)
class RateReport:
    sublinear_envelope: float
    monotone_ok: bool
    xi_bound_ok: bool
    error_bound_ok: bool
    error_bound_worst_ratio: float
    linear_ratio_fit: float   # least-squares slope of log dist_H over the tail
    r_hat: float              # exp(slope), the fitted per-iteration factor
    envelope_ok: bool         # dist_H(w_k) <= C r_hat^k with C = 2 dist0/(1 - r_hat)
    fit_start: int
    fit_end: int


def linear_rate_check(mats: "StructuralMatrices", trace: "Trace", w_star: Iterate,
                      constants: RateConstants) -> RateReport:
    """Pointwise residual-bound verification plus an empirical R-linear fit.

    The fit window is [t_conv/2, t_conv] where t_conv is the first iteration
    whose composite residual reaches 10x the configured tolerance (the whole
    trace when it never does); windows shorter than 20 usable points raise
    InsufficientTrace.
    """
    _require_region(mats, "linear rate check")
    recs = trace.records
    if len(recs) < 20:
        raise InsufficientTrace(f"{len(recs)} iterations; need at least 20")
    problem = trace.problem
    ner = nonergodic_check(mats, trace, w_star)
    eb_ok, eb_worst = error_bound_check(problem, mats, trace, constants)

    tol = trace.config.tol
    t_conv = len(recs) - 1
    for k, rec in enumerate(recs):
        if max(rec.d_inf, rec.feasibility_inf) <= 10.0 * tol:
            t_conv = k
            break
    start = t_conv // 2
    ws = w_star.stack()
    ks, logs = [], []
    for k in range(start, t_conv + 1):
        dh = mats.dist_H(recs[k].w.stack(), ws)
        if dh > 0.0 and math.isfinite(dh):
            ks.append(k)
            logs.append(math.log(dh))
    if len(ks) < 20:
        raise InsufficientTrace(
            f"fit window [{start}, {t_conv}] has {len(ks)} usable points; need at least 20"
        )
    slope = float(np.polyfit(np.asarray(ks, dtype=float), np.asarray(logs), 1)[0])
    r_hat = math.exp(slope)
    dist0 = mats.dist_H(recs[0].w.stack(), ws)
    if 0.0 < r_hat < 1.0 and dist0 > 0.0:
        big_c = 2.0 * dist0 / (1.0 - r_hat)
        envelope_ok = all(
            math.exp(lg) <= big_c * r_hat ** k * (1.0 + XI_BOUND_RTOL)
            for k, lg in zip(ks, logs)
        )
    else:
        envelope_ok = False
    return RateReport(
        sublinear_envelope=ner.sublinear_envelope,
        monotone_ok=ner.monotone_ok,
        xi_bound_ok=ner.xi_bound_ok,
        error_bound_ok=eb_ok,
        error_bound_worst_ratio=eb_worst,
        linear_ratio_fit=slope,
        r_hat=r_hat,
        envelope_ok=envelope_ok,
        fit_start=ks[0],
        fit_end=ks[-1],
    )
