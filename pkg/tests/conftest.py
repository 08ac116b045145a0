import time

import pytest

import gsadmm as g


@pytest.fixture(scope="session")
def catalog():
    return g.standard_catalog()


@pytest.fixture(scope="session")
def qp1_bundle():
    return g.generators.qp1()


@pytest.fixture(scope="session")
def qp1_run(qp1_bundle):
    b = qp1_bundle
    cfg = g.default_config(b.problem, max_iters=500, tol=1e-10)
    mats = g.assemble(b.problem, cfg)
    trace = g.solve(b.problem, cfg, w_star=b.w_star, mats=mats)
    return b, cfg, mats, trace


@pytest.fixture(scope="session")
def catalog_runs(catalog):
    """Full-length traces (2000 iterations, residual test disabled) for every
    bundled instance, plus the wall time of the solve loop."""
    runs = []
    t0 = time.perf_counter()
    for b in catalog:
        cfg = g.default_config(b.problem, max_iters=2000, tol=-1.0)
        mats = g.assemble(b.problem, cfg)
        trace = g.solve(b.problem, cfg, w_star=b.w_star, mats=mats)
        runs.append((b, cfg, mats, trace))
    elapsed = time.perf_counter() - t0
    return {"runs": runs, "elapsed": elapsed}


@pytest.fixture(scope="session")
def linear_rate_runs(catalog):
    """Convergence runs on the piecewise-linear instances (l1 and box QP)."""
    runs = []
    for b in catalog:
        if not (b.name.startswith("l1") or b.name.startswith("boxqp")):
            continue
        cfg = g.default_config(b.problem, max_iters=5000, tol=1e-12)
        mats = g.assemble(b.problem, cfg)
        trace = g.solve(b.problem, cfg, w_star=b.w_star, mats=mats)
        runs.append((b, cfg, mats, trace))
    return runs
