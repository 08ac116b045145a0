"""Evaluation-based reference minimizer for proximal queries.

Independent of prox_solve: a dense grid over a bounding box narrows to a
local grid of step <= 1e-4, then coordinate descent polishes (closed-form
coordinate minimization for smooth objectives, per-coordinate grid
refinement for l1). Strict convexity of every admitted query makes the
coordinate stage globally convergent, so the pair (grid, polish) cannot be
trapped away from the unique minimizer.
"""
import numpy as np

from gsadmm.model import L1, Linear, Quadratic
from gsadmm.oracles import ProxQuery, bounds

SPAN = 20.0  # search frame for unbounded directions; asserted non-binding


def eval_many(query: ProxQuery, Z: np.ndarray) -> np.ndarray:
    """Objective values for rows of Z, shape (m, dim)."""
    res = Z @ query.A.T - query.u
    vals = 0.5 * query.rho * np.sum(res * res, axis=1)
    obj = query.objective
    if isinstance(obj, Quadratic):
        vals += 0.5 * np.sum((Z @ obj.P) * Z, axis=1) + Z @ obj.r + obj.t
    elif isinstance(obj, L1):
        vals += obj.weight * np.sum(np.abs(Z), axis=1)
    elif isinstance(obj, Linear):
        vals += Z @ obj.r
    else:
        raise TypeError(type(obj).__name__)
    return vals


def _mesh(lo, hi, pts):
    axes = [np.linspace(lo[c], hi[c], pts) for c in range(len(lo))]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in grids], axis=1)


def _multilevel_grid(query, lo, hi):
    """Shrinking grids until the local step is at most 1e-4 per coordinate."""
    Z = _mesh(lo, hi, 201)
    z = Z[int(np.argmin(eval_many(query, Z)))]
    step = (hi - lo) / 200.0
    while float(step.max(initial=0.0)) > 1e-4:
        wlo = np.maximum(lo, z - 3.0 * step)
        whi = np.minimum(hi, z + 3.0 * step)
        Z = _mesh(wlo, whi, 61)
        z = Z[int(np.argmin(eval_many(query, Z)))]
        step = (whi - wlo) / 60.0
    return z


def _refine_coordinate(query, z, c, lo_c, hi_c):
    """1-d multilevel grid along coordinate c (evaluation only)."""
    wlo = max(lo_c, z[c] - 2.0)
    whi = min(hi_c, z[c] + 2.0)
    for _ in range(14):
        ts = np.linspace(wlo, whi, 61)
        Z = np.repeat(z[None, :], ts.size, axis=0)
        Z[:, c] = ts
        best = ts[int(np.argmin(eval_many(query, Z)))]
        step = (whi - wlo) / 60.0
        wlo = max(lo_c, best - 2.0 * step)
        whi = min(hi_c, best + 2.0 * step)
        if step < 1e-13:
            break
    return best


def brute_force_min(query: ProxQuery):
    """Reference (argmin, value); never calls prox_solve."""
    dim = query.dim
    set_lo, set_hi = bounds(query.set, dim)
    lo = np.maximum(set_lo, -SPAN)
    hi = np.minimum(set_hi, SPAN)
    z = _multilevel_grid(query, lo, hi)

    obj = query.objective
    if isinstance(obj, (Quadratic, Linear)):
        H = query.rho * (query.A.T @ query.A)
        g0 = -query.rho * (query.A.T @ query.u)
        if isinstance(obj, Quadratic):
            H = H + obj.P
            g0 = g0 + obj.r
        else:
            g0 = g0 + obj.r
        z = z.copy()
        for _ in range(20000):
            delta = 0.0
            for c in range(dim):
                grad_c = float(H[c] @ z + g0[c])
                t = np.clip(z[c] - grad_c / H[c, c], set_lo[c], set_hi[c])
                delta = max(delta, abs(t - z[c]))
                z[c] = t
            if delta < 1e-14:
                break
    else:  # l1 couples through alpha I, so the objective is separable
        z = z.copy()
        for _ in range(2):
            for c in range(dim):
                z[c] = _refine_coordinate(query, z, c, set_lo[c], set_hi[c])

    # the artificial frame must not be the binding constraint
    frame = ~np.isfinite(set_lo) | ~np.isfinite(set_hi)
    assert np.all(np.abs(z[frame]) < SPAN - 1.0), "search frame too small"
    return z, float(eval_many(query, z[None, :])[0])


# ---------------------------------------------------------------------------
# Random query families
# ---------------------------------------------------------------------------

FAMILIES = (
    "quadratic-free",
    "quadratic-box",
    "quadratic-nonnegative",
    "l1-free",
    "l1-nonnegative",
    "linear-box",
    "linear-nonnegative",
)


def _random_coupling(rng, dim):
    gauss = rng.standard_normal((dim, dim))
    q1, _ = np.linalg.qr(gauss)
    q2, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    svals = rng.uniform(0.6, 1.5, size=dim)
    return (q1 * svals) @ q2.T


def _random_spd(rng, dim):
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eigs = rng.uniform(1.0, 4.0, size=dim)
    return (q * eigs) @ q.T


def _random_box(rng, dim):
    from gsadmm.model import Box
    lo = -rng.uniform(0.3, 2.0, size=dim)
    hi = rng.uniform(0.3, 2.0, size=dim)
    return Box(lo, hi)


def random_query(family: str, rng: np.random.Generator) -> ProxQuery:
    from gsadmm.model import Box, Free, Nonnegative
    dim = int(rng.integers(1, 3))
    rho = float(rng.uniform(0.5, 2.0))
    u = rng.standard_normal(dim)
    kind, _, set_name = family.partition("-")
    if kind == "l1":
        A = float(rng.uniform(0.6, 1.4)) * np.eye(dim)
        obj = L1(float(rng.uniform(0.2, 1.5)))
    else:
        A = _random_coupling(rng, dim)
        if kind == "quadratic":
            obj = Quadratic(_random_spd(rng, dim), rng.standard_normal(dim))
        else:
            obj = Linear(rng.standard_normal(dim))
    if set_name == "free":
        fset = Free()
    elif set_name == "nonnegative":
        fset = Nonnegative()
    else:
        fset = _random_box(rng, dim)
    return ProxQuery(obj, fset, A, rho, u)
