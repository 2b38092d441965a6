"""Command-line front end.

Exit codes: 0 pass, 1 assertion failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import functools
import math
import sys
from pathlib import Path

import numpy as np
import yaml
from pydantic import ValidationError
from scipy import stats

from . import __version__
from .config import EXPERIMENTS, ExperimentConfig, parse_assignments, resolve
from .limits import gamma_star_1, gamma_star_2, limit_kernel_law, orthant_probs, is_axis_aligned, exact_orthant_probs
from .network import InputSet, forward_bounded, init_weights, kernel_rescaling
from .seeding import map_replicates, replicate_rng
from .svg import heatmap_svg
from .tables import format_table, matrix_table, measure_table, summary_json
from .training import TrainConfig
from .verify import (
    calibrate_prefactor,
    calibration_self_test,
    log_slope,
    simulate_widths,
    theorem1_sweep,
    theorem2_sweep,
    theorem3_quantile,
    training_batch,
)
from .limits import spectral_gamma_X

PASS, FAIL, INVALID = 0, 1, 2


class Run:
    """Output directory plus the header stamped on every table."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.digest = cfg.digest()

    def header(self, *extra: str) -> list[str]:
        return [f"stablentk {__version__} {self.cfg.experiment}", f"config_digest={self.digest}", *extra]

    def table(self, name: str, columns, rows, *extra: str) -> None:
        (self.out / name).write_text(format_table(columns, rows, self.header(*extra)))

    def text(self, name: str, body: str) -> None:
        (self.out / name).write_text(body)

    def summary(self, data: dict) -> None:
        data = {"experiment": self.cfg.experiment, "config_digest": self.digest, **data}
        self.text("summary.json", summary_json(data))


def _say(msg: str) -> None:
    print(msg, flush=True)


def _inputs(cfg: ExperimentConfig) -> InputSet:
    return cfg.inputs.build(cfg.seed)


# ------------------------------------------------------------------ commands


def cmd_limit_dist(cfg: ExperimentConfig) -> int:
    run = Run(cfg)
    X = _inputs(cfg)
    sweep, reports = theorem1_sweep(X, cfg.alpha, cfg.widths, cfg.samples, cfg.seed, cfg.workers)
    run.table("limit_dist_sweep.csv", sweep.columns(), sweep.rows(), f"alpha={cfg.alpha!r}", f"samples={cfg.samples}")
    k = X.k
    for m, rep in reports.items():
        cols = [f"z{j + 1}" for j in range(k)] + ["ecf_re", "ecf_im", "ref_re", "ref_im"]
        rows = [[*z, e.real, e.imag, r.real, r.imag] for z, e, r in zip(rep.grid, rep.empirical, rep.reference)]
        run.table(f"limit_dist_ecf_m{m}.csv", cols, rows, f"width={m}", f"distance={rep.distance!r}")
    if cfg.alpha < 2:
        run.text("gamma_X.csv", measure_table(spectral_gamma_X(X, cfg.alpha), run.header()))
    ok_trend = len(cfg.widths) < 2 or sweep.slope < 0
    ok_tol = cfg.ecf_tolerance is None or sweep.statistic[-1] < cfg.ecf_tolerance
    verdict = ok_trend and ok_tol
    run.summary({"sweep": sweep.summary(), "trend_decreasing": ok_trend, "within_tolerance": ok_tol, "pass": verdict})
    for m, d in zip(sweep.widths, sweep.statistic):
        _say(f"m={m:>8d}  ECF sup distance {d:.4f}")
    _say(f"slope {sweep.slope:.4f}  trend {'decreasing' if ok_trend else 'NOT decreasing'}  -> {'PASS' if verdict else 'FAIL'}")
    return PASS if verdict else FAIL


def _kernel_guard(cfg: ExperimentConfig, X: InputSet) -> None:
    if cfg.alpha >= 2:
        raise ValueError("the kernel limit needs alpha < 2")
    X.require_independent_unit()


def _orthant(cfg: ExperimentConfig, X: InputSet):
    if is_axis_aligned(X):
        return exact_orthant_probs(X)
    return orthant_probs(X, cfg.alpha, max(cfg.reference_samples, 10_000), replicate_rng(cfg.seed, "orthant", 0))


def _calibration_lines(rep) -> list[str]:
    return [rep.report()] + [f"{k}: {v!r}" for k, v in sorted(rep.distances.items())]


def cmd_ntk_limit(cfg: ExperimentConfig) -> int:
    X = _inputs(cfg)
    _kernel_guard(cfg, X)
    if cfg.prefactor_mode == "calibrated" and cfg.widths[-1] < 2**16:
        raise ValueError("prefactor_mode 'calibrated' needs the largest width >= 2^16")
    run = Run(cfg)
    samples = simulate_widths(X, cfg.alpha, cfg.widths, cfg.samples, cfg.seed, workers=cfg.workers)
    calib = None
    mode = cfg.prefactor_mode
    if mode == "calibrated":
        calib = calibrate_prefactor(
            X, cfg.alpha, cfg.widths[-1], cfg.samples, cfg.seed, n_reference=cfg.reference_samples, samples=samples[cfg.widths[-1]]
        )
        mode = calib.selected
        run.text("calibration.txt", "\n".join(f"# {h}" for h in run.header()) + "\n" + "\n".join(_calibration_lines(calib)) + "\n")
        _say(calib.report())
    probs = _orthant(cfg, X)
    law = limit_kernel_law(X, cfg.alpha, mode, probs=probs)
    run.text("gamma_star_1.csv", measure_table(law.gamma1, run.header(f"prefactor_mode={mode}")))
    run.text("gamma_star_2.csv", measure_table(law.gamma2, run.header(f"prefactor_mode={mode}")))
    t2 = theorem2_sweep(X, cfg.alpha, cfg.widths, cfg.samples, cfg.seed, law, n_reference=cfg.reference_samples, samples=samples)
    run.table("ntk_ks_sweep.csv", t2.ks.columns(), t2.ks.rows(), f"prefactor_mode={mode}")
    hill_rows = [[m, j + 1, h.alpha, h.stderr, h.tail_points] for m, hs in t2.hill.items() for j, h in enumerate(hs)]
    run.table("ntk_hill.csv", ["width", "entry", "alpha_hat", "stderr", "tail_points"], hill_rows, f"target={cfg.alpha / 2!r}")
    run.table("ntk_rank_correlation.csv", ["width", "spearman_h1_h2"], [[m, r] for m, r in t2.spearman.items()])
    t3 = theorem3_quantile(X, cfg.alpha, cfg.kernel_width, cfg.kernel_seeds, cfg.seed, cfg.workers, cfg.quantile)
    run.table(
        "ntk_lambda_min.csv",
        ["seed", "lambda_min", "h1_min", "h2_min"],
        [[i, a, b, c] for i, (a, b, c) in enumerate(zip(t3.lambda_min, t3.h1_min, t3.h2_min))],
        f"width={cfg.kernel_width}",
    )
    ok_ks = len(cfg.widths) < 2 or t2.ks.slope < 0
    ok_q = t3.quantile > 0
    ok_psd = t3.psd_floor >= -1e-10
    verdict = ok_ks and ok_q and ok_psd
    run.summary(
        {
            "prefactor_mode": mode,
            "calibration": None if calib is None else {"selected": calib.selected, "distances": calib.distances, "noise": calib.noise, "inconclusive": calib.inconclusive},
            "kernel_limit": t2.summary(),
            "min_eigenvalue": {"quantile": t3.quantile, "q": t3.q, "psd_floor": t3.psd_floor},
            "ks_decreasing": ok_ks,
            "lambda_quantile_positive": ok_q,
            "psd": ok_psd,
            "pass": verdict,
        }
    )
    for m, d in zip(t2.ks.widths, t2.ks.statistic):
        _say(f"m={m:>8d}  max entry KS {d:.4f}  rank corr {t2.spearman[m]:+.4f}")
    _say(f"lambda_min {cfg.quantile:.0%} quantile {t3.quantile:.4g}; PSD floor {t3.psd_floor:.3g} -> {'PASS' if verdict else 'FAIL'}")
    return PASS if verdict else FAIL


def cmd_calibrate(cfg: ExperimentConfig) -> int:
    X = _inputs(cfg)
    _kernel_guard(cfg, X)
    run = Run(cfg)
    m = cfg.widths[-1]
    real = calibrate_prefactor(X, cfg.alpha, m, cfg.samples, cfg.seed, cfg.workers, cfg.reference_samples)
    _say(real.report())
    rows, rates = [], {}
    for mode in ("paper_literal", "tail_consistent"):
        fn = functools.partial(
            calibration_self_test, X.columns, cfg.alpha, mode, cfg.self_test_samples, 10 * cfg.self_test_samples, cfg.seed
        )
        reps = map_replicates(fn, cfg.self_test_reps, workers=cfg.workers)
        hits = [r.selected == mode for r in reps]
        rates[mode] = float(np.mean(hits))
        rows += [[mode, i, r.selected, r.distances["paper_literal"], r.distances["tail_consistent"], r.inconclusive] for i, r in enumerate(reps)]
        _say(f"self-test {mode}: selected correctly in {rates[mode]:.0%} of {cfg.self_test_reps}")
    run.table("calibration_self_test.csv", ["generator", "rep", "selected", "ks_paper_literal", "ks_tail_consistent", "inconclusive"], rows)
    run.text("calibration.txt", "\n".join(f"# {h}" for h in run.header(f"width={m}")) + "\n" + "\n".join(_calibration_lines(real)) + "\n")
    verdict = all(r >= cfg.self_test_accuracy for r in rates.values())
    run.summary(
        {
            "width": m,
            "selected": real.selected,
            "distances": real.distances,
            "noise": real.noise,
            "inconclusive": real.inconclusive,
            "self_test_rates": rates,
            "pass": verdict,
        }
    )
    return PASS if verdict else FAIL


def _train_config(cfg: ExperimentConfig) -> TrainConfig:
    t = cfg.train
    return TrainConfig(dt=t.dt, t_max=t.t_max, record_every=t.record_every, eta_mode=t.eta_mode, eta=t.eta, adaptive=t.adaptive)


def _clean_message(s: str) -> str:
    return s.replace(",", ";").replace("\n", " ")


def cmd_train(cfg: ExperimentConfig) -> int:
    X = _inputs(cfg)
    X.require_independent_unit()
    if cfg.alpha >= 2:
        raise ValueError("training experiments need alpha < 2")
    run = Run(cfg)
    t = cfg.train
    tc = _train_config(cfg)
    kappa = kernel_rescaling(t.width, cfg.alpha)
    outcomes = training_batch(
        X, cfg.alpha, t.width, t.seeds, cfg.seed, tc, t.targets, cfg.workers, t.decay_slack, t.decay_atol, keep_trajectories=True
    )
    rows, passed = [], []
    for o in outcomes:
        if o.trajectory is not None:
            run.text(f"train_seed{o.index:03d}.csv", o.trajectory.to_text("\n".join(run.header(f"seed_index={o.index}"))))
        if o.status == "ok":
            ok_a = o.final_residual <= t.residual_ratio * o.initial_residual
            ok_b = o.max_weight_drift < kappa
            ok = ok_a and ok_b and o.decay_ok
        else:
            ok_a = ok_b = ok = False
            _say(f"seed {o.index}: diverged: {o.message}")
        passed.append(ok)
        rows.append(
            [o.index, o.status, o.initial_residual, o.final_residual, o.max_weight_drift, o.final_h2_drift, o.lambda0, o.certificate, o.decay_ok, ok_a, ok_b, ok, _clean_message(o.message)]
        )
    run.table(
        "train_summary.csv",
        ["seed", "status", "initial_residual", "final_residual", "max_weight_drift", "final_h2_drift", "lambda0", "certificate", "decay_ok", "residual_ok", "drift_ok", "pass", "message"],
        rows,
        f"width={t.width}",
        f"weight_drift_bound={kappa!r}",
    )
    rate = float(np.mean(passed))
    drift = {}
    for m in t.drift_widths:
        res = training_batch(X, cfg.alpha, m, t.drift_seeds, cfg.seed, tc, t.targets, cfg.workers, t.decay_slack, t.decay_atol)
        finals = [o.final_h2_drift for o in res if o.status == "ok"]
        drift[m] = float(np.median(finals)) if finals else float("nan")
    slope = log_slope(list(drift), list(drift.values())) if len(drift) >= 2 and all(np.isfinite(list(drift.values()))) else float("nan")
    if drift:
        run.table("train_h2_drift.csv", ["width", "median_final_h2_drift"], [[m, v] for m, v in drift.items()], f"seeds={t.drift_seeds}")
    ok_drift = not drift or len(drift) < 2 or slope < 0
    verdict = rate >= t.pass_rate and ok_drift
    run.summary(
        {
            "pass_rate": rate,
            "required_pass_rate": t.pass_rate,
            "diverged": sum(o.status != "ok" for o in outcomes),
            "certificate_rate": float(np.mean([o.certificate for o in outcomes])),
            "h2_drift_by_width": {str(m): v for m, v in drift.items()},
            "h2_drift_slope": slope,
            "pass": verdict,
        }
    )
    _say(f"seeds passing (a)-(c): {rate:.0%} (need {t.pass_rate:.0%}); H2 drift slope {slope:.3f} -> {'PASS' if verdict else 'FAIL'}")
    return PASS if verdict else FAIL


def surface(W, n: int) -> np.ndarray:
    axis = np.linspace(0.0, 1.0, n)
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    pts = np.vstack([g1.ravel(), g2.ravel()])
    return forward_bounded(W, pts).reshape(n, n)


def top_neuron_share(W) -> float:
    a = np.abs(W.outer)
    return float(a.max() / a.sum())


def cmd_paths(cfg: ExperimentConfig) -> int:
    run = Run(cfg)
    p = cfg.paths
    axis = np.linspace(0.0, 1.0, p.grid)
    info = {}
    for a in p.alphas:
        W = init_weights(p.width, 2, a, replicate_rng(cfg.seed, f"paths/alpha={a!r}", 0))
        z = surface(W, p.grid)
        tag = f"{a:g}".replace(".", "p")
        rows = [[axis[i], axis[j], z[i, j]] for i in range(p.grid) for j in range(p.grid)]
        run.table(f"paths_alpha{tag}.csv", ["x1", "x2", "value"], rows, f"alpha={a!r}", f"width={p.width}")
        run.text(f"paths_alpha{tag}.svg", heatmap_svg(z.T, f"alpha={a:g} m={p.width}"))
        kurt = float(stats.kurtosis(z.ravel(), fisher=False)) if z.size > 1 and np.ptp(z) > 0 else float("nan")
        info[f"{a!r}"] = {"kurtosis": kurt, "top_neuron_share": top_neuron_share(W)}
        _say(f"alpha={a:<4g} kurtosis {kurt:.3f}  top-neuron share {info[f'{a!r}']['top_neuron_share']:.3f}")
    run.summary({"surfaces": info, "width": p.width, "grid": p.grid, "pass": True})
    return PASS


COMMANDS = {
    "limit-dist": cmd_limit_dist,
    "ntk-limit": cmd_ntk_limit,
    "train": cmd_train,
    "paths": cmd_paths,
    "calibrate": cmd_calibrate,
}


# --------------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stablentk", description="Stable-initialized shallow ReLU network experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="YAML or JSON config file")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key (dotted for nesting)")
        p.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    return parser


def config_from_args(args) -> ExperimentConfig:
    over = parse_assignments(args.set)
    for key in ("seed", "out", "workers"):
        val = getattr(args, key)
        if val is not None:
            over[key] = val
    return resolve(args.command, args.config, overrides=over)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return INVALID if exc.code else PASS
    try:
        cfg = config_from_args(args)
    except (ValidationError, ValueError, OSError, yaml.YAMLError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return INVALID
    if args.dry_run:
        print(f"# config_digest={cfg.digest()}")
        print(yaml.safe_dump(cfg.model_dump(), sort_keys=True), end="")
        return PASS
    try:
        return COMMANDS[args.command](cfg)
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return INVALID


if __name__ == "__main__":
    sys.exit(main())
