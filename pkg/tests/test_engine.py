import numpy as np
import pytest

import gsadmm as g
from gsadmm import engine
from gsadmm.model import Block, BlockProblem, Free, Iterate, Quadratic, SolverConfig


@pytest.fixture()
def qp1(qp1_bundle):
    cfg = g.default_config(qp1_bundle.problem)
    return qp1_bundle.problem, cfg, qp1_bundle.w_star


# ---------------------------------------------------------------------------
# Hand-checked first step of the 1x1 quadratic instance
# ---------------------------------------------------------------------------

def test_first_step_hand_values(qp1):
    problem, cfg, _ = qp1
    w0 = Iterate.zeros(problem)
    x1 = engine.x_group_update(problem, cfg, w0)
    assert x1[0] == pytest.approx([2.0 / 7.0], abs=1e-15)
    lam_half = engine.half_dual_update(problem, cfg, w0, x1)
    assert lam_half == pytest.approx([3.0 / 14.0], abs=1e-15)
    y1 = engine.y_group_update(problem, cfg, w0, x1, lam_half)
    assert y1[0] == pytest.approx([13.0 / 49.0], abs=1e-15)
    lam1 = engine.full_dual_update(problem, cfg, lam_half, x1, y1)
    assert lam1 == pytest.approx([19.3 / 49.0], abs=1e-14)
    pred = engine.predict(problem, w0, x1, y1, cfg.beta, lam_half)
    assert pred.lambda_tilde == pytest.approx([5.0 / 7.0], abs=1e-15)


def test_step_matches_linear_correction(qp1):
    problem, cfg, _ = qp1
    mats = g.assemble(problem, cfg)
    nxt, rec = engine.step(problem, cfg, Iterate.zeros(problem), mats=mats)
    m_form = Iterate.zeros(problem).stack() - mats.M @ (Iterate.zeros(problem).stack() - rec.w_tilde.stack())
    assert np.allclose(nxt.stack(), m_form, atol=1e-15)
    assert rec.identity_error <= 1e-15
    assert np.allclose(nxt.stack(), [2.0 / 7.0, 13.0 / 49.0, 19.3 / 49.0], atol=1e-14)


def test_half_step_identity_along_run(qp1_run):
    _, cfg, _, trace = qp1_run
    for rec in trace.records:
        lam, lam_tilde = rec.w.lam, rec.w_tilde.lambda_tilde
        lam_half = rec.w_tilde.lambda_half
        expected = lam - cfg.tau * (lam - lam_tilde)
        assert np.allclose(lam_half, expected, atol=1e-12)


def test_trivial_stepsize_reductions(qp1):
    problem, _, _ = qp1
    w = Iterate((np.array([0.2]),), (np.array([0.1]),), np.array([0.5]))
    cfg0 = SolverConfig(tau=0.0, s=0.4, sigma1=0.5, sigma2=0.5)
    x1 = engine.x_group_update(problem, cfg0, w)
    assert np.array_equal(engine.half_dual_update(problem, cfg0, w, x1), w.lam)
    cfg_s0 = SolverConfig(tau=0.4, s=0.0, sigma1=0.5, sigma2=0.5)
    y1 = engine.y_group_update(problem, cfg_s0, w, x1, w.lam)
    assert np.array_equal(engine.full_dual_update(problem, cfg_s0, w.lam, x1, y1), w.lam)


def test_prediction_is_multiplier_at_feasible_pair(qp1):
    problem, cfg, _ = qp1
    w = Iterate((np.array([0.25]),), (np.array([0.75]),), np.array([0.3]))
    pred = engine.predict(problem, w, [np.array([0.25])], [np.array([0.75])], cfg.beta)
    assert np.array_equal(pred.lambda_tilde, w.lam)


def test_prediction_scales_with_beta(qp1):
    problem, _, _ = qp1
    w = Iterate.zeros(problem)
    x1 = [np.array([0.4])]
    y1 = [np.array([0.0])]
    p1 = engine.predict(problem, w, x1, y1, beta=1.0)
    p2 = engine.predict(problem, w, x1, y1, beta=2.0)
    assert np.allclose(w.lam - p2.lambda_tilde, 2.0 * (w.lam - p1.lambda_tilde), atol=1e-15)


# ---------------------------------------------------------------------------
# Fixed points and group snapshots
# ---------------------------------------------------------------------------

def test_fixed_point_stays(qp1):
    problem, cfg, w_star = qp1
    nxt, rec = engine.step(problem, cfg, w_star)
    assert np.allclose(nxt.stack(), w_star.stack(), atol=1e-14)
    assert rec.feasibility <= 1e-14
    assert rec.d_norm_sq <= 1e-28
    assert rec.correction_residual <= 1e-28


def test_group_update_reads_snapshot_only():
    rng = np.random.default_rng(21)
    blocks = []
    for _ in range(3):
        gauss = rng.standard_normal((3, 2))
        u, _ = np.linalg.qr(gauss)
        blocks.append(Block(Quadratic(np.eye(2), rng.standard_normal(2)), u, Free()))
    problem = BlockProblem(tuple(blocks), (Block(Quadratic([[2.0]], [0.0]), np.ones((3, 1)) / np.sqrt(3), Free()),), rng.standard_normal(3))
    perm_problem = BlockProblem((blocks[2], blocks[0], blocks[1]), problem.y_blocks, problem.c)
    cfg = SolverConfig(sigma1=problem.p - 1 + 0.5, sigma2=0.5)
    w = Iterate(tuple(rng.standard_normal(2) for _ in range(3)), (rng.standard_normal(1),), rng.standard_normal(3))
    w_perm = Iterate((w.x[2], w.x[0], w.x[1]), w.y, w.lam)
    out = engine.x_group_update(problem, cfg, w)
    out_perm = engine.x_group_update(perm_problem, cfg, w_perm)
    for i, j in ((0, 1), (1, 2), (2, 0)):
        assert np.max(np.abs(out[i] - out_perm[j])) <= 1e-14 * (1 + np.max(np.abs(out[i])))


def test_feasibility_decomposition_along_run(qp1_run):
    bundle, cfg, _, trace = qp1_run
    for rec in trace.records:
        err = g.diagnostics.feasibility_decomposition_error(bundle.problem, cfg, rec)
        assert err <= 1e-10


# ---------------------------------------------------------------------------
# Driver loop
# ---------------------------------------------------------------------------

def test_solve_qp1_converges(qp1_run):
    bundle, _, _, trace = qp1_run
    assert trace.termination == engine.CONVERGED
    assert len(trace.records) <= 500
    assert np.allclose(trace.w_final.stack(), [0.5, 0.5, 1.0], atol=1e-8)
    assert trace.records[-1].dist_H <= 1e-8


def test_solve_zero_iteration_cap(qp1):
    problem, cfg, _ = qp1
    trace = g.solve(problem, SolverConfig(sigma1=0.5, sigma2=0.5, max_iters=0))
    assert trace.termination == engine.ITERATION_CAP
    assert trace.records == []
    assert np.array_equal(trace.w_final.stack(), np.zeros(3))


def test_solve_infinite_tolerance_stops_after_one_step(qp1):
    problem, _, _ = qp1
    trace = g.solve(problem, SolverConfig(sigma1=0.5, sigma2=0.5, tol=np.inf))
    assert trace.termination == engine.CONVERGED
    assert len(trace.records) == 1


def test_solve_negative_tolerance_runs_to_cap(qp1):
    problem, _, _ = qp1
    trace = g.solve(problem, SolverConfig(sigma1=0.5, sigma2=0.5, tol=-1.0, max_iters=40))
    assert trace.termination == engine.ITERATION_CAP
    assert len(trace.records) == 40


def test_solve_validates_inputs(qp1):
    problem, _, _ = qp1
    with pytest.raises(ValueError):
        g.solve(problem, SolverConfig(sigma1=-0.5, sigma2=0.5))
    with pytest.raises(ValueError):
        g.solve(problem, SolverConfig(sigma1=0.5, sigma2=0.5, tau=1.5, s=0.3))


def test_solve_projects_initial_point():
    bundle = g.generators.boxqp_1d()
    w0 = Iterate((np.array([9.0]),), (np.array([0.0]),), np.array([0.0]))
    trace = g.solve(bundle.problem, g.default_config(bundle.problem, max_iters=1, tol=-1.0), w0=w0)
    assert trace.records[0].w.x[0][0] == 0.3  # clamped into [0, 0.3]


def test_non_finite_iterate_raises(qp1):
    # negative dual stepsizes push the multiplier the wrong way; the iterates
    # blow up and the overflow is caught rather than silently propagated
    problem, _, _ = qp1
    cfg = SolverConfig(tau=-0.5, s=-0.3, sigma1=0.5, sigma2=0.5, max_iters=5000, tol=-1.0)
    with pytest.raises(engine.NonFiniteIterate), np.errstate(all="ignore"):
        g.solve(problem, cfg, validate=False)


def test_identity_error_bound_on_catalog(catalog_runs):
    for bundle, cfg, mats, trace in catalog_runs["runs"]:
        for rec in trace.records:
            bound = 1e-10 * (1.0 + float(np.linalg.norm(rec.w.stack())))
            assert rec.identity_error <= bound, bundle.name
