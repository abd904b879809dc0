"""Batch front end.

Each command writes its artifacts (CSVs, figures, resolved config, run
metadata) into a fresh run directory named ``<name>-<timestamp>-<seed>`` and
prints one ``CHECK <name> PASS|FAIL lhs=<v> rhs=<v> tol=<v>`` line per
verification.  Exit codes: 0 all checks passed, 1 at least one check failed,
2 unusable input (usage or scenario structure), 3 scenario validation, 4 bad
covariance, 5 runtime instability or blowup, 6 other library errors.

CSV numbers are written with ``repr``, so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .effective_noise import generalized_intensity_series
from .errors import (
    Blowup,
    Instability,
    NfkitError,
    NonPositiveSemidefinite,
    ParseError,
    ValidationError,
)
from .gaussian_model import RNG_ALGORITHM
from .genfpk_solver import auto_domain, solve
from .linear_exact import LinearScenario, closed_form_trajectory, exact_pdf
from .mc_oracle import (
    estimate_pdf,
    l1_distance,
    moment_check,
    nf_empirical_check,
    simulate,
    variational_check,
)
from .nf_core import (
    VariableLayout,
    averaged_shift_expectation,
    gaussian_expectation,
    lemma_residuals,
    nf_lhs,
    nf_rhs,
    random_moment_spec,
    random_polynomial,
)
from .scenario import parse_scenario, serialize
from . import plots

NF_TOL_SCALE = 1e-9
LEMMA_TOL = 1e-10


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: str, header: list, rows) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def check(name: str, ok: bool, lhs, rhs, tol) -> int:
    verdict = "PASS" if ok else "FAIL"
    print(f"CHECK {name} {verdict} lhs={_fmt(lhs)} rhs={_fmt(rhs)} tol={_fmt(tol)}")
    return 0 if ok else 1


def make_run_dir(out: str, name: str, seed) -> str:
    stamp = time.strftime("%Y%m%dT%H%M%S")
    base = os.path.join(out, f"{name}-{stamp}-{seed}")
    run_dir = base
    counter = 1
    while os.path.exists(run_dir):
        counter += 1
        run_dir = f"{base}-{counter}"
    os.makedirs(run_dir)
    return run_dir


def write_run_metadata(run_dir: str, command: str, params: dict, cfg=None, results: dict | None = None):
    doc = {
        "command": command,
        "library_version": __version__,
        "rng_algorithm": RNG_ALGORITHM,
        "parameters": params,
    }
    if results:
        doc["results"] = results
    with open(os.path.join(run_dir, "run.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if cfg is not None:
        with open(os.path.join(run_dir, "scenario.yaml"), "w", encoding="utf-8") as fh:
            fh.write(serialize(cfg))


def _pdf_rows(trajectory):
    for snap, t in zip(trajectory.snapshots, trajectory.times):
        for x, f in zip(snap.grid.points, snap.values):
            yield (float(t), float(x), float(f))


def _solver_grid(cfg):
    return cfg.pdf_grid or auto_domain(cfg.drift, cfg.model, cfg.kappa, cfg.time_grid)


# -- commands ----------------------------------------------------------------


def cmd_verify_nf(args) -> int:
    rng = np.random.default_rng(args.seed)
    run_dir = make_run_dir(args.out, "verify-nf", args.seed)

    def suite(label: str, trials: int, layout_maker):
        rows = []
        worst = None  # (residual, lhs, rhs, bound) with the largest residual/bound margin
        for trial in range(trials):
            layout = layout_maker()
            spec = random_moment_spec(rng, layout.total)
            degree = int(rng.integers(1, args.max_degree + 1))
            F = random_polynomial(rng, layout.total, degree, names=layout.names())
            t_index = int(rng.choice(layout.xi_indices))
            lhs = nf_lhs(t_index, F, spec)
            rhs = nf_rhs(t_index, F, spec, layout)
            residual = abs(lhs - rhs)
            bound = NF_TOL_SCALE * (1.0 + abs(lhs))
            rows.append((label, trial, lhs, rhs, residual, bound))
            if worst is None or residual - bound > worst[0] - worst[3]:
                worst = (residual, lhs, rhs, bound)
        return rows, worst

    scalar_trials = args.trials
    vector_trials = max(200, (2 * args.trials) // 5)
    rows_s, worst_s = suite(
        "scalar", scalar_trials,
        lambda: VariableLayout(n_initial=1, n_components=1, n_times=int(rng.integers(1, 9))),
    )
    rows_v, worst_v = suite(
        "vector", vector_trials,
        lambda: VariableLayout(n_initial=2, n_components=2, n_times=2),
    )

    write_csv(
        os.path.join(run_dir, "residuals.csv"),
        ["suite", "trial", "lhs", "rhs", "residual", "bound"],
        rows_s + rows_v,
    )
    for label, rows in (("scalar", rows_s), ("vector", rows_v)):
        plots.residual_scatter(
            os.path.join(run_dir, f"residuals_{label}.png"),
            np.array([r[4] for r in rows]),
            np.array([r[5] for r in rows]),
            f"splitting-identity residuals ({label}, n={len(rows)})",
        )

    failures = 0
    failures += check("nf_identity_scalar", worst_s[0] <= worst_s[3], worst_s[1], worst_s[2], worst_s[3])
    failures += check("nf_identity_vector", worst_v[0] <= worst_v[3], worst_v[1], worst_v[2], worst_v[3])
    write_run_metadata(
        run_dir, "verify-nf",
        {"trials": scalar_trials, "vector_trials": vector_trials,
         "max_degree": args.max_degree, "seed": args.seed},
        results={"scalar_worst_residual": worst_s[0], "vector_worst_residual": worst_v[0]},
    )
    print(f"artifacts: {run_dir}")
    return failures


def cmd_verify_lemmata(args) -> int:
    rng = np.random.default_rng(args.seed)
    run_dir = make_run_dir(args.out, "verify-lemmata", args.seed)

    rows = []
    worst_lemma = 0.0
    worst_op = None
    for trial in range(args.trials):
        n_times = int(rng.integers(1, 7))
        layout = VariableLayout(n_initial=1, n_components=1, n_times=n_times)
        spec = random_moment_spec(rng, layout.total)
        degree = int(rng.integers(1, args.max_degree + 1))
        p = random_polynomial(rng, layout.total, degree, names=layout.names())
        report = lemma_residuals(p, spec, layout)
        worst_lemma = max(worst_lemma, report.max_residual)

        by_op = averaged_shift_expectation(p, spec, layout)
        by_wick = gaussian_expectation(p, spec)
        op_resid = abs(by_op - by_wick)
        op_bound = NF_TOL_SCALE * (1.0 + abs(by_wick))
        if worst_op is None or op_resid - op_bound > worst_op[0] - worst_op[3]:
            worst_op = (op_resid, by_op, by_wick, op_bound)
        rows.append((trial, report.max_residual, op_resid, op_bound))

    write_csv(
        os.path.join(run_dir, "lemma_residuals.csv"),
        ["trial", "lemma_max_residual", "operator_vs_pairing_residual", "operator_bound"],
        rows,
    )
    plots.residual_scatter(
        os.path.join(run_dir, "lemma_residuals.png"),
        np.array([r[1] for r in rows]),
        np.full(len(rows), LEMMA_TOL),
        f"operator-lemma residuals (n={len(rows)})",
    )

    failures = 0
    failures += check("lemma_residuals", worst_lemma <= LEMMA_TOL, worst_lemma, 0.0, LEMMA_TOL)
    failures += check("operator_expectation", worst_op[0] <= worst_op[3], worst_op[1], worst_op[2], worst_op[3])
    write_run_metadata(
        run_dir, "verify-lemmata",
        {"trials": args.trials, "max_degree": args.max_degree, "seed": args.seed},
        results={"worst_lemma_residual": worst_lemma, "worst_operator_residual": worst_op[0]},
    )
    print(f"artifacts: {run_dir}")
    return failures


def _write_solver_artifacts(run_dir: str, cfg, traj, mode: str) -> int:
    write_csv(os.path.join(run_dir, "pdf.csv"), ["t", "x", "f"], _pdf_rows(traj))
    with open(os.path.join(run_dir, "solver_metadata.json"), "w", encoding="utf-8") as fh:
        meta = traj.metadata.as_dict()
        meta.pop("dt_history")
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

    x = traj.x_grid.points
    numeric_rows = []
    for snap, t in zip(traj.snapshots, traj.times):
        m = float(np.trapezoid(x * snap.values, x))
        v = float(np.trapezoid(x * x * snap.values, x) - m * m)
        numeric_rows.append((float(t), m, v))
    write_csv(os.path.join(run_dir, "pdf_moments.csv"), ["t", "mean", "var"], numeric_rows)

    plots.pdf_overlay(
        os.path.join(run_dir, "pdf_evolution.png"),
        x,
        {f"t={float(t):g}": snap.values for snap, t in zip(traj.snapshots, traj.times)},
        f"response pdf ({mode})",
    )

    drift_max = max(traj.metadata.mass_drift_history, default=0.0)
    failures = check("solver_mass_drift", drift_max <= 1e-3, drift_max, 0.0, 1e-3)
    if traj.metadata.negative_diffusion_steps:
        print(
            f"NOTE negative_diffusion steps={traj.metadata.negative_diffusion_steps} "
            f"min_bracket={_fmt(traj.metadata.min_bracket)}"
        )
    return failures


def cmd_solve_linear(args) -> int:
    cfg = parse_scenario(args.scenario)
    run_dir = make_run_dir(args.out, cfg.name, cfg.seed)
    traj = solve(cfg, mode="linear")
    failures = _write_solver_artifacts(run_dir, cfg, traj, "linear")

    sc = LinearScenario(cfg.drift.eta, cfg.kappa, cfg.model, cfg.time_grid)
    ref = closed_form_trajectory(sc)
    write_csv(
        os.path.join(run_dir, "moments_closed_form.csv"),
        ["t", "mean", "var"],
        zip(cfg.time_grid.points, ref.mean, ref.variance),
    )
    plots.moment_bands(
        os.path.join(run_dir, "moments.png"),
        cfg.time_grid.points, ref.mean, np.sqrt(np.maximum(ref.variance, 0.0)),
        "closed-form response moments",
    )

    tol = cfg.tolerances.get("l1_exact", 1e-3)
    worst = (0.0, 0.0)
    l1_rows = []
    for snap, t in zip(traj.snapshots, traj.times):
        f_ex = exact_pdf(sc, float(t), traj.x_grid)
        l1 = float(np.trapezoid(np.abs(snap.values - f_ex), traj.x_grid.points))
        l1_rows.append((float(t), l1, tol))
        if l1 > worst[0]:
            worst = (l1, float(t))
    write_csv(os.path.join(run_dir, "l1_exact.csv"), ["t", "l1", "tol"], l1_rows)
    failures += check("linear_pdf_vs_exact", worst[0] <= tol, worst[0], 0.0, tol)

    write_run_metadata(
        run_dir, "solve-linear", {"scenario": args.scenario, "seed": cfg.seed}, cfg=cfg,
        results={"l1_worst": worst[0], "l1_worst_time": worst[1]},
    )
    print(f"artifacts: {run_dir}")
    return failures


def cmd_solve_genfpk(args) -> int:
    cfg = parse_scenario(args.scenario)
    run_dir = make_run_dir(args.out, cfg.name, cfg.seed)
    traj = solve(cfg, mode="genfpk")
    failures = _write_solver_artifacts(run_dir, cfg, traj, f"closure order {cfg.closure_order}")

    series = generalized_intensity_series(cfg.model, traj.history, cfg.kappa, cfg.closure_order)
    n = traj.history.n_filled
    times = cfg.time_grid.points[:n]
    write_csv(
        os.path.join(run_dir, "intensities.csv"),
        ["t"] + [f"d{m}" for m in range(cfg.closure_order + 1)],
        ([float(times[i])] + [float(series.values[m, i]) for m in range(cfg.closure_order + 1)]
         for i in range(n)),
    )
    plots.intensity_curves(
        os.path.join(run_dir, "intensities.png"), times, series.values[:, :n],
        "effective intensities along the run",
    )

    write_run_metadata(
        run_dir, "solve-genfpk", {"scenario": args.scenario, "seed": cfg.seed}, cfg=cfg,
        results={"n_steps": traj.metadata.n_steps},
    )
    print(f"artifacts: {run_dir}")
    return failures


def cmd_mc(args) -> int:
    cfg = parse_scenario(args.scenario)
    n_paths = args.n_paths or cfg.n_paths
    seed = args.seed if args.seed is not None else cfg.seed
    run_dir = make_run_dir(args.out, cfg.name, seed)

    ens = simulate(cfg, n_paths, seed)
    write_csv(
        os.path.join(run_dir, "ensemble.csv"),
        ["t", "mean", "var", "n"],
        ((float(t), float(m), float(v), n_paths)
         for t, m, v in zip(ens.grid.points, ens.mean, ens.variance)),
    )

    x_grid = _solver_grid(cfg)
    pdf_rows = []
    curves = {}
    for t in cfg.output_times:
        idx = cfg.time_grid.index_of(float(t))
        snap = estimate_pdf(ens, idx, x_grid, cfg.estimator)
        curves[f"t={float(t):g}"] = snap.values
        pdf_rows.extend((float(t), float(xv), float(fv)) for xv, fv in zip(x_grid.points, snap.values))
    write_csv(os.path.join(run_dir, "pdf_mc.csv"), ["t", "x", "f"], pdf_rows)
    plots.pdf_overlay(
        os.path.join(run_dir, "pdf_mc.png"), x_grid.points, curves,
        f"ensemble densities ({cfg.estimator}, n={n_paths})",
    )
    plots.moment_bands(
        os.path.join(run_dir, "ensemble_moments.png"),
        ens.grid.points, ens.mean, np.sqrt(np.maximum(ens.variance, 0.0)),
        f"ensemble moments (n={n_paths})",
    )

    failures = 0
    results = {"n_paths": n_paths}
    if cfg.drift.is_linear:
        ref = closed_form_trajectory(LinearScenario(cfg.drift.eta, cfg.kappa, cfg.model, cfg.time_grid))
        zs = moment_check(ens, ref.mean, ref.variance)
        worst = max(zs["mean_max_se"], zs["var_max_se"])
        failures += check("mc_moment_match", worst <= 5.0, worst, 0.0, 5.0)
        rep = nf_empirical_check(cfg, ens) if ens.draws is not None else None
        if rep is not None:
            failures += check("mc_splitting_identity", rep.passed, rep.lhs, rep.rhs, 5.0 * rep.se)
            results["splitting_identity"] = rep.as_dict()
        results["moment_z_scores"] = zs
    else:
        print("NOTE moment reference requires a linear drift; artifact-only run")

    write_run_metadata(
        run_dir, "mc", {"scenario": args.scenario, "n_paths": n_paths, "seed": seed},
        cfg=cfg, results=results,
    )
    print(f"artifacts: {run_dir}")
    return failures


def cmd_compare(args) -> int:
    cfg = parse_scenario(args.scenario)
    n_paths = args.n_paths or cfg.n_paths
    seed = args.seed if args.seed is not None else cfg.seed
    run_dir = make_run_dir(args.out, cfg.name, seed)

    mode = "linear" if cfg.drift.is_linear else "genfpk"
    traj = solve(cfg, mode=mode)
    ens = simulate(cfg, n_paths, seed)

    default_tol = 0.02 if cfg.drift.is_linear else 0.05
    tol = cfg.tolerances.get("l1", default_tol)
    failures = 0
    rows = []
    for snap, t in zip(traj.snapshots[1:], traj.times[1:]):
        idx = cfg.time_grid.index_of(float(t))
        f_mc = estimate_pdf(ens, idx, traj.x_grid, cfg.estimator)
        l1 = l1_distance(snap, f_mc)
        rows.append((float(t), l1, tol))
        failures += check(f"compare_l1_t{float(t):g}", l1 <= tol, l1, 0.0, tol)
        plots.pdf_overlay(
            os.path.join(run_dir, f"compare_t{float(t):g}.png"),
            traj.x_grid.points,
            {"solver": snap.values, f"{cfg.estimator} (n={n_paths})": f_mc.values},
            f"solver vs ensemble at t={float(t):g}",
        )
    write_csv(os.path.join(run_dir, "l1.csv"), ["t", "l1", "tol"], rows)
    write_csv(os.path.join(run_dir, "pdf.csv"), ["t", "x", "f"], _pdf_rows(traj))
    write_csv(
        os.path.join(run_dir, "ensemble.csv"),
        ["t", "mean", "var", "n"],
        ((float(t), float(m), float(v), n_paths)
         for t, m, v in zip(ens.grid.points, ens.mean, ens.variance)),
    )

    write_run_metadata(
        run_dir, "compare",
        {"scenario": args.scenario, "n_paths": n_paths, "seed": seed, "mode": mode},
        cfg=cfg, results={"l1": [list(r) for r in rows]},
    )
    print(f"artifacts: {run_dir}")
    return failures


def cmd_variational_check(args) -> int:
    cfg = parse_scenario(args.scenario)
    seed = args.seed if args.seed is not None else cfg.seed
    run_dir = make_run_dir(args.out, cfg.name, seed)

    rep = variational_check(cfg, n_probe=args.trials, eps=args.eps, seed=seed)
    default_tol = 1e-6 if cfg.drift.is_linear else 1e-3
    tol = cfg.tolerances.get("variational", default_tol)

    failures = check("variational_initial", rep.initial_max_rel <= tol, rep.initial_max_rel, 0.0, tol)
    labels = ["initial"]
    values = [rep.initial_max_rel]
    if rep.excitation_skipped:
        print("NOTE excitation probe skipped: kappa is zero")
    else:
        failures += check(
            "variational_excitation", rep.excitation_max_rel <= tol, rep.excitation_max_rel, 0.0, tol
        )
        labels.append("excitation")
        values.append(rep.excitation_max_rel)

    plots.error_bars(
        os.path.join(run_dir, "variational.png"), labels, values, [tol] * len(labels),
        "sensitivity probe errors",
    )
    with open(os.path.join(run_dir, "variational.json"), "w", encoding="utf-8") as fh:
        json.dump(rep.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    write_run_metadata(
        run_dir, "variational-check",
        {"scenario": args.scenario, "n_probe": args.trials, "eps": args.eps, "seed": seed},
        cfg=cfg, results=rep.as_dict(),
    )
    print(f"artifacts: {run_dir}")
    return failures


# -- argument parsing -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nfkit",
        description="verification suites, pdf solvers, and Monte Carlo comparisons "
        "for coloured-noise random differential equations",
    )
    parser.add_argument("--version", action="version", version=f"nfkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario: bool):
        p.add_argument("--out", default="runs", help="directory that receives the run directory")
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario YAML path")

    p = sub.add_parser("verify-nf", help="random-trial check of the correlation-splitting identity")
    common(p, scenario=False)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--max-degree", type=int, default=6)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_verify_nf)

    p = sub.add_parser("verify-lemmata", help="operator algebra residuals and operator-vs-pairing agreement")
    common(p, scenario=False)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--max-degree", type=int, default=6)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_verify_lemmata)

    p = sub.add_parser("solve-linear", help="exact linear pdf evolution plus closed-form comparison")
    common(p, scenario=True)
    p.set_defaults(func=cmd_solve_linear)

    p = sub.add_parser("solve-genfpk", help="closure pdf evolution with effective intensities")
    common(p, scenario=True)
    p.set_defaults(func=cmd_solve_genfpk)

    p = sub.add_parser("mc", help="Monte Carlo ensemble, density estimates, moment checks")
    common(p, scenario=True)
    p.add_argument("--n-paths", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("compare", help="L1 distance between solver pdf and ensemble estimate")
    common(p, scenario=True)
    p.add_argument("--n-paths", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("variational-check", help="finite-difference probes of the sensitivity formulas")
    common(p, scenario=True)
    p.add_argument("--trials", type=int, default=8, help="number of probe draws")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_variational_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        failures = args.func(args)
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print("scenario validation failed:", file=sys.stderr)
        for violation in exc.violations:
            print(f"  {violation}", file=sys.stderr)
        return 3
    except NonPositiveSemidefinite as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (Instability, Blowup) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except NfkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 6
    return 0 if failures == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
