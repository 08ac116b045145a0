"""Problem model for grouped multi-block separable convex programs.

A problem instance is

    min  sum_i f_i(x_i) + sum_j g_j(y_j)
    s.t. sum_i A_i x_i + sum_j B_j y_j = c,   x_i in X_i,  y_j in Y_j,

with every coupling matrix of full column rank and every constraint set a
polyhedron. The objective catalog is closed (quadratic, weighted l1, linear)
so that every block subproblem admits an exact oracle and every
subdifferential is a piecewise linear multifunction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# A coupling matrix is reported rank deficient when its smallest singular
# value is at most RANK_RTOL times its largest.
RANK_RTOL = 1e-10

# Box/nonnegative blocks above this dimension make active-set enumeration
# expensive; validation warns but does not reject.
ENUMERATION_WARN_DIM = 8

# Region policies for the dual stepsizes (tau, s).
REQUIRE_D = "D"
ALLOW_G = "G"


def _as_vector(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim != 1:
        a = a.reshape(-1)
    return a


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {a.shape}")
    return a


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Quadratic:
    """Convex quadratic z -> 0.5 z'Pz + r'z + t with symmetric PSD P."""

    P: np.ndarray
    r: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "P", _as_matrix(self.P))
        object.__setattr__(self, "r", _as_vector(self.r))
        object.__setattr__(self, "t", float(self.t))

    def value(self, z: np.ndarray) -> float:
        return 0.5 * float(z @ self.P @ z) + float(self.r @ z) + self.t

    def gradient(self, z: np.ndarray) -> np.ndarray:
        return self.P @ z + self.r


@dataclass(frozen=True, eq=False)
class L1:
    """Weighted l1 norm z -> weight * sum_i |z_i|, weight >= 0."""

    weight: float

    def __post_init__(self):
        object.__setattr__(self, "weight", float(self.weight))

    def value(self, z: np.ndarray) -> float:
        return self.weight * float(np.abs(z).sum())


@dataclass(frozen=True, eq=False)
class Linear:
    """Linear objective z -> r'z."""

    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", _as_vector(self.r))

    def value(self, z: np.ndarray) -> float:
        return float(self.r @ z)

    def gradient(self, z: np.ndarray) -> np.ndarray:
        return self.r


Objective = Quadratic | L1 | Linear


# ---------------------------------------------------------------------------
# Feasible sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Free:
    """The whole space."""


@dataclass(frozen=True, eq=False)
class Box:
    """Componentwise bounds lo <= z <= hi; entries may be -inf/+inf."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", _as_vector(self.lo))
        object.__setattr__(self, "hi", _as_vector(self.hi))


@dataclass(frozen=True, eq=False)
class Nonnegative:
    """The nonnegative orthant z >= 0."""


FeasibleSet = Free | Box | Nonnegative


# ---------------------------------------------------------------------------
# Problem instance
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Block:
    """One primal block: objective, coupling matrix (n x m), feasible set."""

    objective: Objective
    A: np.ndarray
    set: FeasibleSet

    def __post_init__(self):
        object.__setattr__(self, "A", _as_matrix(self.A))

    @property
    def dim(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True, eq=False)
class BlockProblem:
    """A grouped instance: p x-blocks, q y-blocks, and the right-hand side c."""

    x_blocks: tuple[Block, ...]
    y_blocks: tuple[Block, ...]
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_blocks", tuple(self.x_blocks))
        object.__setattr__(self, "y_blocks", tuple(self.y_blocks))
        object.__setattr__(self, "c", _as_vector(self.c))

    @property
    def p(self) -> int:
        return len(self.x_blocks)

    @property
    def q(self) -> int:
        return len(self.y_blocks)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def x_dims(self) -> tuple[int, ...]:
        return tuple(b.dim for b in self.x_blocks)

    @property
    def y_dims(self) -> tuple[int, ...]:
        return tuple(b.dim for b in self.y_blocks)

    @property
    def total_dim(self) -> int:
        """Stacked dimension of w = (x, y, lambda)."""
        return sum(self.x_dims) + sum(self.y_dims) + self.n

    def apply_A(self, xs) -> np.ndarray:
        out = np.zeros(self.n)
        for blk, xi in zip(self.x_blocks, xs):
            out += blk.A @ xi
        return out

    def apply_B(self, ys) -> np.ndarray:
        out = np.zeros(self.n)
        for blk, yj in zip(self.y_blocks, ys):
            out += blk.A @ yj
        return out

    def residual(self, xs, ys) -> np.ndarray:
        """Constraint residual A x + B y - c."""
        return self.apply_A(xs) + self.apply_B(ys) - self.c


@dataclass(frozen=True)
class SolverConfig:
    """Penalty, dual stepsizes, proximal weights, and stopping control.

    Requirements: beta > 0, sigma1 > p - 1, sigma2 > q - 1 (strict), and
    (tau, s) inside the region selected by region_policy ("D" accepts only
    the triangle {tau < 1, s < 1, tau + s > 0}; "G" also accepts the wider
    elliptic region, with rate diagnostics uncertified outside the triangle).
    """

    beta: float = 1.0
    tau: float = 0.3
    s: float = 0.4
    sigma1: float = 0.5
    sigma2: float = 0.5
    max_iters: int = 500
    tol: float = 1e-10
    region_policy: str = REQUIRE_D


@dataclass(frozen=True, eq=False)
class Iterate:
    """A full primal-dual point w = (x_1..x_p, y_1..y_q, lambda)."""

    x: tuple[np.ndarray, ...]
    y: tuple[np.ndarray, ...]
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(_as_vector(v) for v in self.x))
        object.__setattr__(self, "y", tuple(_as_vector(v) for v in self.y))
        object.__setattr__(self, "lam", _as_vector(self.lam))

    def stack(self) -> np.ndarray:
        return np.concatenate([*self.x, *self.y, self.lam])

    @staticmethod
    def zeros(problem: BlockProblem) -> "Iterate":
        return Iterate(
            tuple(np.zeros(d) for d in problem.x_dims),
            tuple(np.zeros(d) for d in problem.y_dims),
            np.zeros(problem.n),
        )

    @staticmethod
    def from_stack(problem: BlockProblem, v: np.ndarray) -> "Iterate":
        v = _as_vector(v)
        if v.shape[0] != problem.total_dim:
            raise ValueError("stacked vector has wrong length")
        xs, ys = [], []
        off = 0
        for d in problem.x_dims:
            xs.append(v[off:off + d])
            off += d
        for d in problem.y_dims:
            ys.append(v[off:off + d])
            off += d
        return Iterate(tuple(xs), tuple(ys), v[off:])


@dataclass
class ValidationReport:
    """Accumulated violations (fatal) and warnings (advisory)."""

    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


# ---------------------------------------------------------------------------
# Stepsize regions
# ---------------------------------------------------------------------------

def in_region_G(tau: float, s: float) -> bool:
    """Elliptic stepsize region: tau + s > 0 and -tau^2 - s^2 - tau*s + tau + s + 1 > 0."""
    return tau + s > 0.0 and -tau * tau - s * s - tau * s + tau + s + 1.0 > 0.0


def in_region_D(tau: float, s: float) -> bool:
    """Triangular stepsize region: tau < 1, s < 1, tau + s > 0."""
    return tau < 1.0 and s < 1.0 and tau + s > 0.0


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _check_objective(obj: Objective, dim: int, label: str, report: ValidationReport):
    if isinstance(obj, Quadratic):
        if obj.P.shape != (dim, dim):
            report.violations.append(f"{label}: quadratic P has shape {obj.P.shape}, expected ({dim}, {dim})")
            return
        if obj.r.shape != (dim,):
            report.violations.append(f"{label}: quadratic r has length {obj.r.shape[0]}, expected {dim}")
            return
        scale = max(1.0, float(np.abs(obj.P).max()))
        if float(np.abs(obj.P - obj.P.T).max()) > 1e-10 * scale:
            report.violations.append(f"{label}: quadratic P is not symmetric")
            return
        if float(np.linalg.eigvalsh(0.5 * (obj.P + obj.P.T)).min()) < -1e-10 * scale:
            report.violations.append(f"{label}: quadratic P is not positive semidefinite")
    elif isinstance(obj, L1):
        if obj.weight < 0.0:
            report.violations.append(f"{label}: l1 weight {obj.weight} is negative")
    elif isinstance(obj, Linear):
        if obj.r.shape != (dim,):
            report.violations.append(f"{label}: linear r has length {obj.r.shape[0]}, expected {dim}")
    else:
        report.violations.append(f"{label}: unknown objective variant {type(obj).__name__}")


def _check_set(fset: FeasibleSet, dim: int, label: str, report: ValidationReport):
    if isinstance(fset, Box):
        if fset.lo.shape != (dim,) or fset.hi.shape != (dim,):
            report.violations.append(f"{label}: box bounds have wrong length, expected {dim}")
            return
        if np.any(fset.lo > fset.hi):
            report.violations.append(f"{label}: box has lo > hi in some component")
    elif not isinstance(fset, (Free, Nonnegative)):
        report.violations.append(f"{label}: unknown set variant {type(fset).__name__}")
    if isinstance(fset, (Box, Nonnegative)) and dim > ENUMERATION_WARN_DIM:
        report.warnings.append(
            f"{label}: constrained dimension {dim} exceeds {ENUMERATION_WARN_DIM}; "
            "active-set enumeration will be slow"
        )


def validate_problem(problem: BlockProblem) -> ValidationReport:
    """Check dimensions, rank, and variant invariants; findings go in the report."""
    report = ValidationReport()
    n = problem.n
    if n < 1:
        report.violations.append("constraint dimension n must be at least 1")
    if problem.p < 1:
        report.violations.append("at least one x-block is required (p >= 1)")
    if problem.q < 1:
        report.violations.append("at least one y-block is required (q >= 1)")
    for group, blocks in (("x", problem.x_blocks), ("y", problem.y_blocks)):
        for idx, blk in enumerate(blocks):
            label = f"{group}[{idx}]"
            if blk.A.shape[0] != n:
                report.violations.append(
                    f"{label}: coupling matrix has {blk.A.shape[0]} rows, expected n={n}"
                )
            sv = np.linalg.svd(blk.A, compute_uv=False)
            if sv.size == 0 or sv.max() == 0.0 or sv.min() <= RANK_RTOL * sv.max():
                report.violations.append(f"{label}: coupling matrix is not of full column rank")
            _check_objective(blk.objective, blk.dim, label, report)
            _check_set(blk.set, blk.dim, label, report)
    return report


def validate_config(config: SolverConfig, problem: BlockProblem) -> ValidationReport:
    """Check penalty/proximal bounds and the stepsize region policy."""
    report = ValidationReport()
    if not config.beta > 0.0:
        report.violations.append(f"beta must be positive, got {config.beta}")
    if not config.sigma1 > problem.p - 1:
        report.violations.append(
            f"sigma1 must exceed p-1 = {problem.p - 1} strictly, got {config.sigma1}"
        )
    if not config.sigma2 > problem.q - 1:
        report.violations.append(
            f"sigma2 must exceed q-1 = {problem.q - 1} strictly, got {config.sigma2}"
        )
    if config.max_iters < 0:
        report.violations.append(f"max_iters must be nonnegative, got {config.max_iters}")
    tau, s = config.tau, config.s
    if config.region_policy == REQUIRE_D:
        if not in_region_D(tau, s):
            report.violations.append(
                f"(tau, s) = ({tau}, {s}) is outside the triangle region required by policy D"
            )
    elif config.region_policy == ALLOW_G:
        if not (in_region_G(tau, s) or in_region_D(tau, s)):
            report.violations.append(
                f"(tau, s) = ({tau}, {s}) is outside both stepsize regions"
            )
        elif not in_region_D(tau, s):
            report.warnings.append(
                f"(tau, s) = ({tau}, {s}) lies outside the triangle region; "
                "convergence holds but rate diagnostics are not certified"
            )
    else:
        report.violations.append(f"unknown region policy {config.region_policy!r}")
    return report


# ---------------------------------------------------------------------------
# Lagrangian functionals and the first-order map
# ---------------------------------------------------------------------------

def objective_total(problem: BlockProblem, w: Iterate) -> float:
    """sum_i f_i(x_i) + sum_j g_j(y_j)."""
    val = 0.0
    for blk, xi in zip(problem.x_blocks, w.x):
        val += blk.objective.value(xi)
    for blk, yj in zip(problem.y_blocks, w.y):
        val += blk.objective.value(yj)
    return val


def lagrangian(problem: BlockProblem, w: Iterate) -> float:
    """L(x, y, lambda) = sum f_i + sum g_j - <lambda, A x + B y - c>."""
    res = problem.residual(w.x, w.y)
    return objective_total(problem, w) - float(w.lam @ res)


def augmented_lagrangian(problem: BlockProblem, w: Iterate, beta: float) -> float:
    """Lagrangian plus (beta/2) ||A x + B y - c||^2."""
    res = problem.residual(w.x, w.y)
    return lagrangian(problem, w) + 0.5 * beta * float(res @ res)


def kkt_map(problem: BlockProblem, w: Iterate, subgradients=None) -> np.ndarray:
    """Stacked first-order map (g_i - A_i'lambda; h_j - B_j'lambda; A x + B y - c).

    With subgradients=None the primal entries use zero in place of the
    objective subgradients, which leaves the affine map whose linear part is
    skew symmetric. Otherwise `subgradients` supplies one vector per block
    (x blocks first, then y blocks).
    """
    if subgradients is not None:
        subgradients = [(_as_vector(v)) for v in subgradients]
        if len(subgradients) != problem.p + problem.q:
            raise ValueError(
                f"expected {problem.p + problem.q} subgradient vectors, got {len(subgradients)}"
            )
    parts = []
    for idx, (blk, xi) in enumerate(zip(problem.x_blocks, w.x)):
        part = -blk.A.T @ w.lam
        if subgradients is not None:
            g = subgradients[idx]
            if g.shape != xi.shape:
                raise ValueError(f"subgradient {idx} has wrong dimension")
            part = part + g
        parts.append(part)
    for jdx, (blk, yj) in enumerate(zip(problem.y_blocks, w.y)):
        part = -blk.A.T @ w.lam
        if subgradients is not None:
            g = subgradients[problem.p + jdx]
            if g.shape != yj.shape:
                raise ValueError(f"subgradient {problem.p + jdx} has wrong dimension")
            part = part + g
        parts.append(part)
    parts.append(problem.residual(w.x, w.y))
    return np.concatenate(parts)
