"""The grouped symmetric ADMM iteration.

One iteration runs a Jacobian sweep over the x group, a half dual update with
stepsize tau, a Jacobian sweep over the y group against the half-updated
multiplier, and a full dual update with stepsize s:

    x_i+ = argmin_{x_i in X_i} L_beta(x_1..x_i..x_p, y, lambda)
           + (sigma1 beta/2) ||A_i (x_i - x_i_k)||^2          (i = 1..p)
    lambda_half = lambda - tau beta (A x+ + B y - c)
    y_j+ = argmin_{y_j in Y_j} L_beta(x+, y_1..y_j..y_q, lambda_half)
           + (sigma2 beta/2) ||B_j (y_j - y_j_k)||^2          (j = 1..q)
    lambda+ = lambda_half - s beta (A x+ + B y+ - c)

Each step also materializes the predicted point w~ = (x+, y+, lambda~) with
lambda~ = lambda - beta (A x+ + B y - c) and verifies online that the
computed step equals the linear correction w_k - M (w_k - w~_k), which
cross-validates the engine against the structural matrices every iteration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import structure
from .diagnostics import d_components
from .model import (
    BlockProblem,
    Iterate,
    SolverConfig,
    validate_config,
    validate_problem,
)
from .oracles import ProxQuery, project, prox_solve

CONVERGED = "converged"
ITERATION_CAP = "iteration-cap"


class NonFiniteIterate(RuntimeError):
    """NaN or infinity in an iterate; bad conditioning or an invalid config."""


@dataclass(frozen=True, eq=False)
class Prediction:
    """Predicted point w~: primal updates plus the shadow multiplier."""

    x_tilde: tuple[np.ndarray, ...]
    y_tilde: tuple[np.ndarray, ...]
    lambda_tilde: np.ndarray
    lambda_half: np.ndarray | None = None  # kept for diagnostics

    def stack(self) -> np.ndarray:
        return np.concatenate([*self.x_tilde, *self.y_tilde, self.lambda_tilde])


@dataclass(frozen=True, eq=False)
class IterationRecord:
    """Residuals and identity checks for the transition w_k -> w_{k+1}."""

    k: int
    w: Iterate
    w_next: Iterate
    w_tilde: Prediction
    feasibility: float        # ||A x~ + B y~ - c||
    feasibility_inf: float
    correction_residual: float  # ||M (w - w~)||_H^2
    d_norm_sq: float
    d_inf: float
    identity_error: float     # ||w_next - (w - M (w - w~))||
    dist_H: float             # ||w_k - w*||_H when a reference point is known
    contraction_slack: float  # nan without a reference point or outside the triangle


@dataclass(eq=False)
class Trace:
    problem: BlockProblem
    config: SolverConfig
    records: list[IterationRecord]
    termination: str
    w_final: Iterate


def x_group_update(problem: BlockProblem, config: SolverConfig, state: Iterate):
    """Jacobian sweep over the x blocks; every block reads the same snapshot."""
    beta, sigma1 = config.beta, config.sigma1
    rho = (1.0 + sigma1) * beta
    ax_sum = problem.apply_A(state.x)
    base = problem.c - problem.apply_B(state.y) + state.lam / beta
    out = []
    for blk, xi in zip(problem.x_blocks, state.x):
        a_xi = blk.A @ xi
        v = base - (ax_sum - a_xi)
        u = (v + sigma1 * a_xi) / (1.0 + sigma1)
        out.append(prox_solve(ProxQuery(blk.objective, blk.set, blk.A, rho, u)))
    return out


def half_dual_update(problem: BlockProblem, config: SolverConfig, state: Iterate, x_new):
    """lambda_half = lambda - tau beta (A x+ + B y - c)."""
    res = problem.apply_A(x_new) + problem.apply_B(state.y) - problem.c
    return state.lam - config.tau * config.beta * res


def y_group_update(problem: BlockProblem, config: SolverConfig, state: Iterate,
                   x_new, lambda_half: np.ndarray):
    """Jacobian sweep over the y blocks against the half-updated multiplier."""
    beta, sigma2 = config.beta, config.sigma2
    rho = (1.0 + sigma2) * beta
    by_sum = problem.apply_B(state.y)
    base = problem.c - problem.apply_A(x_new) + lambda_half / beta
    out = []
    for blk, yj in zip(problem.y_blocks, state.y):
        b_yj = blk.A @ yj
        v = base - (by_sum - b_yj)
        u = (v + sigma2 * b_yj) / (1.0 + sigma2)
        out.append(prox_solve(ProxQuery(blk.objective, blk.set, blk.A, rho, u)))
    return out


def full_dual_update(problem: BlockProblem, config: SolverConfig,
                     lambda_half: np.ndarray, x_new, y_new):
    """lambda+ = lambda_half - s beta (A x+ + B y+ - c)."""
    res = problem.apply_A(x_new) + problem.apply_B(y_new) - problem.c
    return lambda_half - config.s * config.beta * res


def predict(problem: BlockProblem, state: Iterate, x_new, y_new, beta: float,
            lambda_half: np.ndarray | None = None) -> Prediction:
    """Predicted point: lambda~ = lambda - beta (A x+ + B y_k - c)."""
    res = problem.apply_A(x_new) + problem.apply_B(state.y) - problem.c
    return Prediction(
        x_tilde=tuple(np.asarray(v, dtype=float) for v in x_new),
        y_tilde=tuple(np.asarray(v, dtype=float) for v in y_new),
        lambda_tilde=state.lam - beta * res,
        lambda_half=lambda_half,
    )


def step(problem: BlockProblem, config: SolverConfig, state: Iterate,
         mats: structure.StructuralMatrices | None = None,
         w_star: Iterate | None = None, k: int = 0):
    """One full iteration; returns (next iterate, record with identity checks)."""
    if mats is None:
        mats = structure.assemble(problem, config)

    x_new = x_group_update(problem, config, state)
    lambda_half = half_dual_update(problem, config, state, x_new)
    y_new = y_group_update(problem, config, state, x_new, lambda_half)
    lambda_new = full_dual_update(problem, config, lambda_half, x_new, y_new)
    pred = predict(problem, state, x_new, y_new, config.beta, lambda_half)
    nxt = Iterate(tuple(x_new), tuple(y_new), lambda_new)

    wk = state.stack()
    wt = pred.stack()
    wn = nxt.stack()
    if not np.all(np.isfinite(wn)):
        raise NonFiniteIterate(f"non-finite iterate at iteration {k}")

    dw = wk - wt
    mdw = mats.apply_M(dw)
    correction_residual = mats.h_norm_sq(mdw)
    identity_error = float(np.linalg.norm(wn - (wk - mdw)))

    d_parts = d_components(problem, config, state, pred)
    d_stack = np.concatenate(d_parts)
    d_norm_sq = float(d_stack @ d_stack)
    d_inf = float(np.abs(d_stack).max(initial=0.0))

    res_new = problem.residual(pred.x_tilde, pred.y_tilde)
    feasibility = float(np.linalg.norm(res_new))
    feasibility_inf = float(np.abs(res_new).max(initial=0.0))

    dist_h = float("nan")
    slack = float("nan")
    if w_star is not None:
        ws = w_star.stack()
        dist_h = mats.dist_H(wk, ws)
        if mats.in_D:
            slack = mats.h_norm_sq(wk - ws) - mats.h_norm_sq(wn - ws) - mats.g_norm_sq(dw)

    record = IterationRecord(
        k=k, w=state, w_next=nxt, w_tilde=pred,
        feasibility=feasibility, feasibility_inf=feasibility_inf,
        correction_residual=correction_residual,
        d_norm_sq=d_norm_sq, d_inf=d_inf,
        identity_error=identity_error,
        dist_H=dist_h, contraction_slack=slack,
    )
    return nxt, record


def initial_point(problem: BlockProblem, w0: Iterate | None = None) -> Iterate:
    """Default all-zeros start, projected blockwise onto the feasible sets."""
    if w0 is None:
        w0 = Iterate.zeros(problem)
    xs = tuple(project(blk.set, xi) for blk, xi in zip(problem.x_blocks, w0.x))
    ys = tuple(project(blk.set, yj) for blk, yj in zip(problem.y_blocks, w0.y))
    return Iterate(xs, ys, w0.lam)


def solve(problem: BlockProblem, config: SolverConfig, w0: Iterate | None = None,
          w_star: Iterate | None = None,
          mats: structure.StructuralMatrices | None = None,
          validate: bool = True) -> Trace:
    """Iterate until max(||d||_inf, ||A x~ + B y~ - c||_inf) <= tol or the cap.

    A negative tol disables the residual test entirely (the loop always runs
    to max_iters). Raises ValueError on validation failures unless
    validate=False (used by parameter sweeps that deliberately leave the
    certified stepsize regions).
    """
    if validate:
        report = validate_problem(problem)
        if not report.ok:
            raise ValueError("invalid problem: " + "; ".join(report.violations))
        report = validate_config(config, problem)
        if not report.ok:
            raise ValueError("invalid config: " + "; ".join(report.violations))
    if mats is None:
        mats = structure.assemble(problem, config)
    state = initial_point(problem, w0)
    records: list[IterationRecord] = []
    termination = ITERATION_CAP
    for k in range(config.max_iters):
        state, record = step(problem, config, state, mats=mats, w_star=w_star, k=k)
        records.append(record)
        if max(record.d_inf, record.feasibility_inf) <= config.tol:
            termination = CONVERGED
            break
    return Trace(problem=problem, config=config, records=records,
                 termination=termination, w_final=state)
