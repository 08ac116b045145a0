"""Command-line harness: single runs, stepsize sweeps, structural checks,
instance generation, and report printing.

Exit codes: 0 ok, 1 validation failure, 2 runtime failure, 3 generation
failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .. import diagnostics, engine, generators, structure
from ..model import SolverConfig, in_region_D, in_region_G, validate_config, validate_problem
from . import io

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_GENERATION = 3

FIXED_INSTANCES = {
    "qp1": generators.qp1,
    "l1-1d": generators.l1_1d,
    "boxqp-1d": generators.boxqp_1d,
}

GEN_ERRORS = (
    generators.DegenerateInstance,
    generators.NonUniqueSolution,
    generators.PatternExplosion,
)


def _dims(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok]


def _add_instance_args(sub):
    sub.add_argument("--instance", help="path to an instance document")
    sub.add_argument("--generator", choices=sorted(set(generators.GENERATORS) | set(FIXED_INSTANCES)),
                     help="generate the instance instead of reading a file")
    sub.add_argument("--seed", type=int, default=1)
    sub.add_argument("--p", type=int, default=1)
    sub.add_argument("--q", type=int, default=1)
    sub.add_argument("--x-dims", type=_dims, default=None, help="comma separated block dims")
    sub.add_argument("--y-dims", type=_dims, default=None, help="comma separated block dims")
    sub.add_argument("--n", type=int, default=1)


def _add_config_args(sub):
    sub.add_argument("--config", help="path to a key-value config document")
    sub.add_argument("--beta", type=float)
    sub.add_argument("--tau", type=float)
    sub.add_argument("--s", type=float)
    sub.add_argument("--sigma1", type=float)
    sub.add_argument("--sigma2", type=float)
    sub.add_argument("--max-iters", type=int)
    sub.add_argument("--tol", type=float)
    sub.add_argument("--policy", choices=["D", "G"])


def _generate(args):
    name = args.generator
    if name in FIXED_INSTANCES:
        return FIXED_INSTANCES[name]()
    x_dims = args.x_dims if args.x_dims is not None else [1] * args.p
    y_dims = args.y_dims if args.y_dims is not None else [1] * args.q
    if name == "quadratic":
        return generators.gen_quadratic(args.p, args.q, x_dims, y_dims, args.n, args.seed)
    if name == "l1":
        return generators.gen_l1(args.p, args.q, y_dims, args.n, args.seed)
    if name == "boxqp":
        return generators.gen_box_qp(args.p, args.q, x_dims, y_dims, args.n, args.seed)
    raise ValueError(f"unknown generator {name!r}")


def _load_instance(args):
    """Returns (problem, w_star or None, label)."""
    if args.instance:
        problem, w_star, _meta = io.read_instance(args.instance)
        return problem, w_star, str(args.instance)
    if args.generator:
        bundle = _generate(args)
        return bundle.problem, bundle.w_star, bundle.name
    raise ValueError("either --instance or --generator is required")


def _resolve_config(args, problem) -> SolverConfig:
    values = dataclasses.asdict(generators.default_config(problem))
    if args.config:
        for ln in Path(args.config).read_text(encoding="utf-8").splitlines():
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            key, _, val = ln.partition(" ")
            key = {"policy": "region_policy"}.get(key, key.replace("-", "_"))
            if key not in values:
                raise ValueError(f"unknown config key {key!r}")
            if key == "region_policy":
                values[key] = val.strip()
            elif key == "max_iters":
                values[key] = int(val)
            else:
                values[key] = float(val)
    for key in ("beta", "tau", "s", "sigma1", "sigma2", "tol"):
        flag = getattr(args, key)
        if flag is not None:
            values[key] = flag
    if args.max_iters is not None:
        values["max_iters"] = args.max_iters
    if args.policy is not None:
        values["region_policy"] = args.policy
    return SolverConfig(**values)


def _validate_or_fail(problem, config) -> int:
    report = validate_problem(problem)
    config_report = validate_config(config, problem)
    for warning in report.warnings + config_report.warnings:
        print(f"warning: {warning}")
    violations = report.violations + config_report.violations
    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def _run_diagnostics(problem, config, mats, trace, w_star):
    """(spectra, nonergodic, pointwise, rate); entries None when uncertified."""
    spectra = structure.spectral_summary(mats)
    pointwise = diagnostics.pointwise_residual_check(problem, config, trace)
    nonergodic = None
    rate = None
    if w_star is not None and mats.in_D:
        nonergodic = diagnostics.nonergodic_check(mats, trace, w_star)
        try:
            constants = diagnostics.rate_constants(problem, config)
            rate = diagnostics.linear_rate_check(mats, trace, w_star, constants)
        except diagnostics.InsufficientTrace:
            rate = None
    return spectra, nonergodic, pointwise, rate


def cmd_run(args, print_report: bool = False) -> int:
    try:
        problem, w_star, label = _load_instance(args)
    except GEN_ERRORS as exc:
        print(f"generation failure: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except (OSError, ValueError, io.ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    config = _resolve_config(args, problem)
    status = _validate_or_fail(problem, config)
    if status != EXIT_OK:
        return status
    try:
        mats = structure.assemble(problem, config)
    except structure.SingularM as exc:
        print(f"violation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        trace = engine.solve(problem, config, w_star=w_star, mats=mats)
    except engine.NonFiniteIterate as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    spectra, nonergodic, pointwise, rate = _run_diagnostics(problem, config, mats, trace, w_star)
    entries = {"instance": label}
    entries.update(io.report_entries(trace, spectra, nonergodic, pointwise, rate))
    report_text = io.format_report(entries)
    if print_report:
        sys.stdout.write(report_text)
    else:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        io.write_trace_csv(outdir / "trace.csv", trace)
        (outdir / "report.txt").write_text(report_text, encoding="utf-8")
        final = trace.records[-1] if trace.records else None
        print(f"{label}: {trace.termination} after {len(trace.records)} iterations"
              + (f", final residual {max(final.d_inf, final.feasibility_inf):.3e}" if final else ""))
    return EXIT_OK


def cmd_report(args) -> int:
    return cmd_run(args, print_report=True)


def cmd_sweep(args) -> int:
    try:
        problem, w_star, label = _load_instance(args)
    except GEN_ERRORS as exc:
        print(f"generation failure: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except (OSError, ValueError, io.ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    base = _resolve_config(args, problem)
    report = validate_problem(problem)
    if not report.ok:
        for v in report.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    tau_lo, tau_hi, tau_count = args.tau_grid
    s_lo, s_hi, s_count = args.s_grid
    taus = np.linspace(tau_lo, tau_hi, int(tau_count))
    ss = np.linspace(s_lo, s_hi, int(s_count))
    rows = []
    for tau in taus:
        for s in ss:
            row = {
                "tau": float(tau), "s": float(s),
                "in_G": in_region_G(tau, s), "in_D": in_region_D(tau, s),
                "lambda_min_G": float("nan"), "lambda_min_H": float("nan"),
                "xi": float("nan"), "iters_to_tol": -1, "r_hat": -1.0,
            }
            rows.append(row)
            config = dataclasses.replace(base, tau=float(tau), s=float(s))
            try:
                mats = structure.assemble(problem, config)
            except (structure.SingularM, np.linalg.LinAlgError):
                continue
            row["lambda_min_G"] = mats.lambda_min_G
            row["lambda_min_H"] = mats.lambda_min_H
            row["xi"] = mats.xi
            try:
                # divergence at uncertified stepsizes is an expected outcome
                with np.errstate(over="ignore", invalid="ignore"):
                    trace = engine.solve(problem, config, w_star=w_star, mats=mats, validate=False)
            except engine.NonFiniteIterate:
                continue
            if trace.termination == engine.CONVERGED:
                row["iters_to_tol"] = len(trace.records)
            if w_star is not None and mats.in_D:
                try:
                    constants = diagnostics.rate_constants(problem, config)
                    rate = diagnostics.linear_rate_check(mats, trace, w_star, constants)
                    row["r_hat"] = rate.r_hat
                except (diagnostics.InsufficientTrace, diagnostics.RegionNotCertified):
                    pass
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    io.write_atlas_csv(outdir / "atlas.csv", rows)
    print(f"{label}: swept {len(rows)} stepsize points")
    return EXIT_OK


def cmd_check(args) -> int:
    """One-shot structural validation with one pass/fail line per invariant."""
    failures = 0

    def check(name: str, ok: bool, detail: str = ""):
        nonlocal failures
        if not ok:
            failures += 1
        suffix = f" ({detail})" if detail else ""
        print(f"check {name}: {'pass' if ok else 'FAIL'}{suffix}")

    try:
        problem, w_star, label = _load_instance(args)
    except GEN_ERRORS as exc:
        print(f"generation failure: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except (OSError, ValueError, io.ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    config = _resolve_config(args, problem)
    print(f"checking {label}")
    report = validate_problem(problem)
    check("problem-valid", report.ok, "; ".join(report.violations))
    config_report = validate_config(config, problem)
    check("config-valid", config_report.ok, "; ".join(config_report.violations))
    if not report.ok:
        return EXIT_VALIDATION

    try:
        mats = structure.assemble(problem, config)
    except structure.SingularM as exc:
        check("correction-matrix-invertible", False, str(exc))
        return EXIT_VALIDATION
    check("correction-matrix-invertible", True)

    g_closed = structure.build_G_closed(problem, config.beta, config.sigma1,
                                        config.sigma2, config.tau, config.s)
    scale = max(1.0, float(np.abs(mats.G).max()))
    check("g-definition-matches-closed-form",
          float(np.abs(mats.G - g_closed).max()) <= 1e-12 * scale)
    h_scale = max(1.0, float(np.abs(mats.H).max()))
    raw_h = np.linalg.solve(mats.M.T, mats.Q.T).T
    check("h-symmetric", float(np.abs(raw_h - raw_h.T).max()) <= 1e-10 * h_scale)
    m_inv = structure.m_inverse_closed(problem, config.beta, config.tau, config.s)
    check("m-inverse-closed-form",
          float(np.abs(np.linalg.inv(mats.M) - m_inv).max()) <= 1e-12 * max(1.0, float(np.abs(m_inv).max())))
    if mats.in_D:
        check("g-positive-definite", structure.is_positive_definite(mats.G),
              f"lambda_min_G={mats.lambda_min_G:.3e}")
        check("h-positive-definite", structure.is_positive_definite(mats.H),
              f"lambda_min_H={mats.lambda_min_H:.3e}")
        check("xi-positive", np.isfinite(mats.xi) and mats.xi > 0, f"xi={mats.xi:.3e}")
    else:
        print(f"note: (tau, s) = ({config.tau}, {config.s}) outside the triangle region; "
              "definiteness not asserted "
              f"(lambda_min_G={mats.lambda_min_G:.3e})")
    if w_star is not None:
        res = float(np.linalg.norm(diagnostics.error_map_residual(problem, w_star)))
        check("reference-point-kkt", res <= generators.KKT_RESIDUAL_TOL, f"residual={res:.3e}")
    return EXIT_VALIDATION if failures else EXIT_OK


def cmd_gen(args) -> int:
    if not args.generator:
        print("error: --generator is required", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        bundle = _generate(args)
    except GEN_ERRORS as exc:
        print(f"generation failure: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    io.write_instance(args.out, bundle.problem, bundle.w_star,
                      bundle.provenance, bundle.certificate, bundle.seed)
    print(f"wrote {bundle.name} to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gsadmm",
        description="Grouped symmetric ADMM solver and verification harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve one instance and write trace + report")
    _add_instance_args(run)
    _add_config_args(run)
    run.add_argument("--out", default="gsadmm-out", help="output directory")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="stepsize-grid atlas over (tau, s)")
    _add_instance_args(sweep)
    _add_config_args(sweep)
    sweep.add_argument("--tau-grid", type=float, nargs=3, metavar=("MIN", "MAX", "COUNT"),
                       default=[-1.5, 1.5, 21])
    sweep.add_argument("--s-grid", type=float, nargs=3, metavar=("MIN", "MAX", "COUNT"),
                       default=[-1.5, 1.5, 21])
    sweep.add_argument("--out", default="gsadmm-out", help="output directory")
    sweep.set_defaults(func=cmd_sweep)

    chk = sub.add_parser("check", help="structural invariants of one instance")
    _add_instance_args(chk)
    _add_config_args(chk)
    chk.set_defaults(func=cmd_check)

    gen = sub.add_parser("gen", help="generate an instance file with its reference point")
    _add_instance_args(gen)
    gen.add_argument("--out", required=True, help="output instance file")
    gen.set_defaults(func=cmd_gen)

    rep = sub.add_parser("report", help="solve one instance and print the report")
    _add_instance_args(rep)
    _add_config_args(rep)
    rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
