"""Command-line entry point: ``sigman [SCENARIO] --preset NAME | --config PATH``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure, 4 fit-quality
failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
import traceback
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import estimation as est
from . import liouville as lv
from . import trajectories as tr
from .config import PRESETS, SCENARIOS, ConfigError, RunConfig, build_config, parse_config
from .qubit import SY, SZ
from .weights import combine_sigma, sigma_weights

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_FIT = 4


def _grid_step(cfg: RunConfig) -> tuple[float, int]:
    a = cfg.analysis
    t_max = a.t_max_us if a.t_max_us is not None else 3 * a.t_ref_us
    return t_max / (a.n_points - 1), a.n_points


def _run_weights(cfg: RunConfig, out: Path, summary: list[str]) -> list[str]:
    w = sigma_weights(cfg.analysis.order)
    summary.append(f"order {w.order} weights: " + ", ".join(str(x) for x in w.weights))
    with open(out / "weights.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["n", "k", "numerator", "denominator", "value"])
        for k, x in enumerate(w.weights):
            wr.writerow([w.order, k, x.numerator, x.denominator, repr(float(x))])
    return ["weights.csv"]


def _run_ramsey(cfg: RunConfig, out: Path, summary: list[str]) -> list[str]:
    step, n = _grid_step(cfg)
    spec, stride = tr.aligned_step(cfg.sequence, step)
    series = tr.run_ensemble(spec, (n - 1) * step, record_every=stride, workers=cfg.workers)
    if spec.sigma_meas > 0:
        series = tr.add_measurement_noise(series, spec)
    tr.write_signal_csv(series, out / "signals.csv")
    fit = est.fit_stretched_exp(series.times_us, series.mean_sx, series.sem)
    _write_single_fit(out / "fits.csv", "ramsey", spec.drive_mhz, fit)
    summary.append(f"Ramsey fit: T={fit.T:.5g} us, r={fit.r:.4g}, converged={fit.converged}")
    if not fit.converged:
        raise est.FitError(f"Ramsey fit failed: {fit.message}")
    return ["signals.csv", "fits.csv"]


def _write_single_fit(path: Path, method: str, drive: float, fit: est.FitResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["method", "drive_mhz", "T_us", "r", "T_sem", "r_sem", "n_converged"])
        wr.writerow([method, repr(float(drive)), repr(fit.T), repr(fit.r), repr(fit.T_err), repr(fit.r_err), int(fit.converged)])


def _run_scan(cfg: RunConfig, out: Path, summary: list[str]) -> list[str]:
    step, n = _grid_step(cfg)
    files = []
    for i, f in enumerate(cfg.analysis.drive_grid_mhz):
        spec, stride = tr.aligned_step(cfg.sequence.replace(drive_mhz=float(f)), step)
        series = tr.run_ensemble(spec, (n - 1) * step, record_every=stride, workers=cfg.workers)
        if spec.sigma_meas > 0:
            series = tr.add_measurement_noise(series, spec)
        name = f"signals_drive{i}.csv"
        tr.write_signal_csv(series, out / name)
        files.append(name)
        summary.append(f"drive {f} MHz -> {name}")
    return files


def _run_sigma(cfg: RunConfig, out: Path, summary: list[str]) -> list[str]:
    step, n = _grid_step(cfg)
    order = cfg.sequence.max_order
    spec, stride = tr.aligned_step(cfg.sequence, step)
    series = tr.run_ensemble(spec, order * (n - 1) * step, record_every=stride, workers=cfg.workers)
    if spec.sigma_meas > 0:
        series = tr.add_measurement_noise(series, spec)
    rows = []
    for j in range(1, n):
        r, u = tr.rk_from_series(series, order, j)
        sig, usig = {}, {}
        for m in range(1, order + 1):
            sig[m], usig[m] = combine_sigma(sigma_weights(m), r[: m + 1], u[: m + 1])
        rows.append(tr.FidelitySeries(float(series.times_us[j]), order, r, u, sig, usig))
    tr.write_fidelities_csv(rows, out / "fidelities.csv")
    summary.append(f"{len(rows)} tau1 points, orders 1..{order}")
    return ["fidelities.csv"]


def _run_accerr(cfg: RunConfig, out: Path, summary: list[str]) -> list[str]:
    a = cfg.analysis
    drive = a.drive_mhz if a.drive_mhz is not None else cfg.sequence.drive_mhz
    table = est.accumulated_error_scan(cfg.sequence, drive, a.t_ref_us, a.n_points, workers=cfg.workers)
    est.write_accumulated_csv(table, out / "accumulated_error.csv")
    ar, a2, a3 = table.at(1.0)
    summary.append(f"A(t/T2*=1): ramsey={ar:.5g} sigma2={a2:.5g} sigma3={a3:.5g}")
    return ["accumulated_error.csv"]


def _run_sweep(cfg: RunConfig, out: Path, summary: list[str]) -> list[str]:
    a = cfg.analysis
    sweep = est.t2_sweep(
        cfg.sequence,
        a.drive_grid_mhz,
        a.repeats,
        a.t_ref_us,
        window_us=a.window_us,
        n_points=a.n_points,
        sigma_model=a.sigma_model,
        min_contrast=a.min_contrast,
        workers=cfg.workers,
    )
    est.write_fits_csv(sweep, out / "fits.csv")
    for name in est.METHODS:
        st = sweep.stats[name][-1]
        summary.append(f"{name} @ {sweep.drive_mhz[-1]} MHz: T={st.mean_T:.5g} +- {st.sem_T:.2g} us")
    return ["fits.csv"]


def _run_purity(cfg: RunConfig, out: Path, summary: list[str]) -> list[str]:
    a = cfg.analysis
    drive = a.drive_mhz if a.drive_mhz is not None else cfg.sequence.drive_mhz
    t_max = a.t_max_us if a.t_max_us is not None else 0.1 * a.t_ref_us
    table = est.purity_comparison(cfg.sequence, drive, t_max, a.n_points, a.max_purity_loss, workers=cfg.workers)
    est.write_purity_csv(table, out / "purity.csv")
    if len(table.t_us):
        summary.append(
            f"{len(table.t_us)} points with dP <= {a.max_purity_loss}; "
            f"max|dP+sigma2|={np.max(np.abs(table.dP - table.neg_sigma2)):.3g}, "
            f"max|dP+sigma3|={np.max(np.abs(table.dP - table.neg_sigma3)):.3g}"
        )
    return ["purity.csv"]


def convergence_family(rabi: float, gamma: float):
    """H = rabi * sigma_y / 2 with sigma_z dephasing at rate gamma."""
    return lv.ChannelSpec(rabi * SY / 2, [(SZ, gamma)], 1.0)


def _run_convergence(cfg: RunConfig, out: Path, summary: list[str]) -> list[str]:
    a = cfg.analysis
    fam = convergence_family(a.conv_rabi, a.conv_gamma)
    xs = np.geomspace(a.x_min, a.x_max, a.n_x)
    results = [lv.convergence_order(fam, n, xs) for n in a.conv_orders]
    lv.write_convergence_csv(results, out / "convergence.csv")
    for res in results:
        summary.append(f"n={res.order}: slope={res.slope if res.slope is None else round(res.slope, 4)}")
    return ["convergence.csv"]


RUNNERS = {
    "weights": _run_weights,
    "ramsey": _run_ramsey,
    "scan": _run_scan,
    "sigma": _run_sigma,
    "accerr": _run_accerr,
    "sweep": _run_sweep,
    "purity": _run_purity,
    "convergence": _run_convergence,
}


def _versions() -> dict[str, str]:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"package": pkg, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def run_scenario(cfg: RunConfig, out_dir: str | Path | None = None) -> int:
    """Run one scenario, writing CSVs, config.json and manifest.json; return the exit code."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    summary: list[str] = []
    manifest = {
        "scenario": cfg.scenario,
        "master_seed": cfg.master_seed,
        "workers": cfg.workers,
        "config": cfg.to_dict(),
        "versions": _versions(),
        "outputs": [],
        "failures": [],
    }
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        manifest["outputs"] = RUNNERS[cfg.scenario](cfg, out, summary)
    except est.FitError as exc:
        code = EXIT_FIT
        manifest["failures"].append({"kind": "fit-quality", "message": str(exc)})
    except Exception as exc:  # recorded in the manifest, surfaced via exit code
        code = EXIT_RUNTIME
        manifest["failures"].append({"kind": "runtime", "message": repr(exc), "traceback": traceback.format_exc()})
    manifest["wall_time_s"] = round(time.perf_counter() - t0, 3)
    manifest["status"] = "ok" if code == EXIT_OK else "failed"
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    for line in summary:
        print(line)
    for f in manifest["failures"]:
        print(f"FAILED ({f['kind']}): {f['message']}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sigman", description=__doc__.splitlines()[0])
    p.add_argument("scenario", nargs="?", choices=SCENARIOS, help="override the scenario of the config/preset")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset", help=f"bundled preset ({', '.join(sorted(PRESETS))})")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="worker processes for trajectory batches")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--order", type=int, help="estimator order for the weights scenario")
    p.add_argument("--list-presets", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list_presets:
        for name in sorted(PRESETS):
            print(f"{name:28s} {PRESETS[name]['scenario']}")
        return EXIT_OK
    try:
        data: dict = {}
        if args.config:
            data = json.loads(json.dumps(parse_config(args.config).to_dict()))
        if args.preset:
            data["preset"] = args.preset
        if args.scenario:
            data["scenario"] = args.scenario
        elif not data:
            raise ConfigError("give a scenario, --preset or --config")
        if args.seed is not None:
            data["master_seed"] = args.seed
        if args.workers is not None:
            data["workers"] = args.workers
        if args.order is not None:
            data.setdefault("analysis", {})["order"] = args.order
        cfg = build_config(data)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_scenario(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
