"""Exact solvers for the per-block subproblems.

Every block update of the iteration reduces, after completing the square, to
the canonical proximal form

    argmin_{z in S}  f(z) + (rho/2) ||A z - u||^2,

with rho > 0 and A of full column rank, so the minimizer is unique. Only
combinations with a closed form or a finite enumeration are admitted:

    quadratic x {free, box, nonnegative}   any A
    l1        x {free, nonnegative}        A a positive multiple of I
    linear    x {box, nonnegative}         any A

Inexact inner solvers are deliberately not provided; the per-iteration
per-iteration convergence checks assume exact subproblem solutions.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import L1, Box, FeasibleSet, Free, Linear, Nonnegative, Objective, Quadratic

# Active-set enumeration visits up to 3^dim patterns; cap the block dimension.
BOX_ENUM_CAP = 12


class UnsupportedCombination(ValueError):
    """Objective/set/coupling triple outside the exact-oracle catalog."""


class Unbounded(RuntimeError):
    """No KKT point found; the subproblem is unbounded or ill posed."""


def bounds(fset: FeasibleSet, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise (lo, hi) with +-inf for absent bounds."""
    if isinstance(fset, Free):
        return np.full(dim, -np.inf), np.full(dim, np.inf)
    if isinstance(fset, Nonnegative):
        return np.zeros(dim), np.full(dim, np.inf)
    if isinstance(fset, Box):
        return fset.lo, fset.hi
    raise UnsupportedCombination(f"unknown set variant {type(fset).__name__}")


def project(fset: FeasibleSet, z: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the feasible set (componentwise clamp)."""
    z = np.asarray(z, dtype=float)
    if isinstance(fset, Free):
        return z.copy()
    if isinstance(fset, Nonnegative):
        return np.maximum(z, 0.0)
    if isinstance(fset, Box):
        return np.clip(z, fset.lo, fset.hi)
    raise UnsupportedCombination(f"unknown set variant {type(fset).__name__}")


@dataclass(frozen=True, eq=False)
class ProxQuery:
    """argmin_{z in set} objective(z) + (rho/2) ||A z - u||^2."""

    objective: Objective
    set: FeasibleSet
    A: np.ndarray
    rho: float
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def value(self, z: np.ndarray) -> float:
        res = self.A @ z - self.u
        return self.objective.value(z) + 0.5 * self.rho * float(res @ res)


def _scaled_identity_factor(A: np.ndarray) -> float | None:
    """Return alpha > 0 if A = alpha * I, else None."""
    n, m = A.shape
    if n != m:
        return None
    alpha = float(A[0, 0])
    if alpha <= 0.0:
        return None
    if float(np.abs(A - alpha * np.eye(n)).max()) > 1e-12 * max(1.0, abs(alpha)):
        return None
    return alpha


def soft_threshold(v: np.ndarray, thresh: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)


def _solve_bound_quadratic(Heff: np.ndarray, geff: np.ndarray,
                           lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Minimize 0.5 z'Hz + g'z over [lo, hi] by KKT pattern enumeration.

    H must be positive definite so the minimizer (and hence the consistent
    KKT pattern) is unique; the first pattern passing the sign and
    feasibility tests in lexicographic order wins, which only breaks ties
    among numerically identical candidates.
    """
    dim = geff.shape[0]
    if dim > BOX_ENUM_CAP:
        raise UnsupportedCombination(
            f"constrained block dimension {dim} exceeds enumeration cap {BOX_ENUM_CAP}"
        )
    # 0 = interior, 1 = at lower bound, 2 = at upper bound; infinite bounds
    # cannot be active.
    states = []
    for c in range(dim):
        allowed = [0]
        if np.isfinite(lo[c]):
            allowed.append(1)
        if np.isfinite(hi[c]):
            allowed.append(2)
        states.append(allowed)

    def attempt(gtol_rel: float) -> np.ndarray | None:
        for pattern in itertools.product(*states):
            pat = np.asarray(pattern)
            free = pat == 0
            z = np.where(pat == 1, lo, np.where(pat == 2, hi, 0.0))
            nf = int(free.sum())
            if nf:
                rhs = -(geff[free] + Heff[np.ix_(free, ~free)] @ z[~free])
                try:
                    z[free] = np.linalg.solve(Heff[np.ix_(free, free)], rhs)
                except np.linalg.LinAlgError:
                    continue
            grad = Heff @ z + geff
            scale = 1.0 + float(np.abs(geff).max(initial=0.0)) + \
                float(np.abs(Heff).max()) * (1.0 + float(np.abs(z).max(initial=0.0)))
            gtol = gtol_rel * scale
            ftol = gtol_rel * (1.0 + float(np.abs(z).max(initial=0.0)))
            if nf and (np.any(z[free] < lo[free] - ftol) or np.any(z[free] > hi[free] + ftol)):
                continue
            if np.any(grad[pat == 1] < -gtol) or np.any(grad[pat == 2] > gtol):
                continue
            return z
        return None

    for gtol_rel in (1e-9, 1e-6):
        z = attempt(gtol_rel)
        if z is not None:
            return z
    raise Unbounded("no consistent KKT pattern; coupling matrix may be rank deficient")


def prox_solve(query: ProxQuery) -> np.ndarray:
    """Exact minimizer of the canonical proximal subproblem."""
    obj, fset, A, rho, u = query.objective, query.set, query.A, query.rho, query.u
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")

    if isinstance(obj, L1):
        alpha = _scaled_identity_factor(A)
        if alpha is None:
            raise UnsupportedCombination(
                "l1 blocks require the coupling matrix to be a positive multiple of I"
            )
        thresh = obj.weight / (rho * alpha * alpha)
        if isinstance(fset, Free):
            return soft_threshold(u / alpha, thresh)
        if isinstance(fset, Nonnegative):
            return np.maximum(u / alpha - thresh, 0.0)
        raise UnsupportedCombination(f"l1 objective with {type(fset).__name__} set")

    if isinstance(obj, (Quadratic, Linear)):
        Heff = rho * (A.T @ A)
        geff = -rho * (A.T @ u)
        if isinstance(obj, Quadratic):
            Heff = Heff + obj.P
            geff = geff + obj.r
        else:
            geff = geff + obj.r
        if isinstance(fset, Free):
            if isinstance(obj, Linear):
                raise UnsupportedCombination("linear objective over a free block")
            try:
                return np.linalg.solve(Heff, -geff)
            except np.linalg.LinAlgError as exc:
                raise Unbounded("singular proximal system; coupling matrix rank deficient") from exc
        if isinstance(fset, (Box, Nonnegative)):
            lo, hi = bounds(fset, query.dim)
            return _solve_bound_quadratic(Heff, geff, lo, hi)
        raise UnsupportedCombination(f"unknown set variant {type(fset).__name__}")

    raise UnsupportedCombination(f"unknown objective variant {type(obj).__name__}")


def certifying_subgradient(query: ProxQuery, z: np.ndarray) -> np.ndarray:
    """Subgradient element witnessing optimality of z for the query.

    For smooth objectives this is the gradient. For l1 the zero components
    take the element that cancels the smooth force, which the soft-threshold
    formula guarantees lies inside [-weight, weight].
    """
    obj = query.objective
    if isinstance(obj, (Quadratic, Linear)):
        return obj.gradient(z)
    if isinstance(obj, L1):
        force = query.rho * (query.A.T @ (query.u - query.A @ z))
        g = obj.weight * np.sign(z)
        zero = z == 0.0
        g[zero] = np.clip(force[zero], -obj.weight, obj.weight)
        return g
    raise UnsupportedCombination(f"unknown objective variant {type(obj).__name__}")


def optimality_residual(query: ProxQuery, z: np.ndarray) -> np.ndarray:
    """Projected-gradient residual z - P_S(z - (g(z) + rho A'(Az - u)))."""
    g = certifying_subgradient(query, z)
    step = g + query.rho * (query.A.T @ (query.A @ z - query.u))
    return z - project(query.set, z - step)
