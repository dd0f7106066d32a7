"""Decay-model fitting and the robustness analyses built on it.

Fit models (``e_m(t) = exp[-(m t / T)^r]``):

* ``ramsey``: e_1(t)
* ``sigma`` weight-consistent: -sum_k a_k^(n) e_k(t), the noise-free value of
  -sigma_n when R_k follows a stretched exponential in k*tau1
* ``alt-third-order``: 5/3 - 5/2 e_1 + e_2 - 1/6 e_3, kept for comparison with an
  alternative set of third-order coefficients
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .noise import SWEEP_STREAM, child_seed
from .trajectories import (
    SequenceSpec,
    SigmaCurve,
    SignalSeries,
    add_measurement_noise,
    aligned_step,
    sigma_curve,
    simulate,
)
from .weights import sigma_weights

R_BOUNDS = (0.5, 3.5)
R_STARTS = (1.0, 1.5, 2.0)
SIGMA_MODELS = ("weight-consistent", "alt-third-order")
_ALT3 = (5 / 3, -5 / 2, 1.0, -1 / 6)


class FitError(RuntimeError):
    """A fit or sweep did not reach the required quality."""


@dataclass(frozen=True)
class FitResult:
    T: float
    r: float
    covariance: np.ndarray
    residual_rms: float
    converged: bool
    n_iterations: int
    message: str = ""

    @property
    def T_err(self) -> float:
        return math.sqrt(max(self.covariance[0, 0], 0.0))

    @property
    def r_err(self) -> float:
        return math.sqrt(max(self.covariance[1, 1], 0.0))


def stretched(t, T, r, m=1):
    return np.exp(-np.power(m * np.asarray(t, dtype=float) / T, r))


def model_coefficients(order: int | None, model: str = "weight-consistent") -> np.ndarray:
    """Coefficients c_m such that the model is sum_m c_m e_m(t), e_0 = 1."""
    if order is None:
        return np.array([0.0, 1.0])
    if model == "weight-consistent":
        return -sigma_weights(order).as_floats()
    if model == "alt-third-order":
        if order != 3:
            raise ValueError("alt-third-order is a third-order model")
        return np.array(_ALT3)
    raise ValueError(f"unknown sigma model {model!r}")


def evaluate_model(t, T, r, coeffs) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, coeffs[0], dtype=float)
    for m, c in enumerate(coeffs[1:], start=1):
        out = out + c * stretched(t, T, r, m)
    return out


def _fit(times, values, sigmas, coeffs, t_inits, max_nfev=2000) -> FitResult:
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    w = np.ones_like(y)
    weighted = False
    if sigmas is not None:
        s = np.asarray(sigmas, dtype=float)
        if np.all(np.isfinite(s)) and np.all(s > 0):
            w = 1 / s
            weighted = True

    def resid(p):
        return (evaluate_model(t, math.exp(p[0]), p[1], coeffs) - y) * w

    best = None
    for r0 in R_STARTS:
        for T0 in t_inits:
            res = least_squares(
                resid,
                x0=[math.log(T0), r0],
                bounds=([-np.inf, R_BOUNDS[0]], [np.inf, R_BOUNDS[1]]),
                method="trf",
                xtol=1e-15,
                ftol=1e-15,
                gtol=1e-15,
                max_nfev=max_nfev,
            )
            if best is None or res.cost < best.cost:
                best = res
    logT, r = best.x
    T = math.exp(logT)
    J = best.jac
    dof = max(len(y) - 2, 1)
    try:
        cov_u = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov_u = np.full((2, 2), np.inf)
    if not weighted:
        cov_u = cov_u * (2 * best.cost / dof)
    # d(T) = T d(log T)
    jac_T = np.diag([T, 1.0])
    with np.errstate(invalid="ignore"):
        cov = jac_T @ cov_u @ jac_T
    rms = float(np.sqrt(np.mean((evaluate_model(t, T, r, coeffs) - y) ** 2)))

    problems = []
    if best.status <= 0:
        problems.append(f"optimizer status {best.status}: {best.message}")
    if min(r - R_BOUNDS[0], R_BOUNDS[1] - r) < 1e-6:
        problems.append(f"r={r:.4g} pinned at a bound")
    t_span = t.max()
    if not np.isfinite(T) or T > 1e3 * t_span:
        problems.append(f"T={T:.4g} far beyond the data window ({t_span:.4g})")
    if not np.all(np.isfinite(cov)):
        problems.append("singular Jacobian at the optimum")
    return FitResult(T, float(r), cov, rms, not problems, int(best.nfev), "; ".join(problems))


def _not_converged(msg: str) -> FitResult:
    return FitResult(float("nan"), float("nan"), np.full((2, 2), np.nan), float("nan"), False, 0, msg)


def fit_stretched_exp(times, values, sigmas=None) -> FitResult:
    """Weighted fit of exp[-(t/T)^r]; T starts at the first 1/e crossing."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(t) < 6:
        raise ValueError("need at least 6 points")
    if y.min() < -0.2 or y.max() > 1.2:
        raise ValueError("values must lie in [-0.2, 1.2]")
    below = np.nonzero(y <= math.exp(-1))[0]
    if len(below) == 0:
        return _not_converged("no 1/e crossing inside the window; decay not resolved")
    T0 = max(t[below[0]], t[t > 0].min())
    return _fit(t, y, sigmas, model_coefficients(None), [T0])


def fit_sigma_model(times, sigma_values, order: int, model: str = "weight-consistent", sigmas=None) -> FitResult:
    """Fit -sigma_n(tau1) data with the order-n decay model.

    ``sigma_values`` are the positive quantities -sigma_n.
    """
    if order not in (2, 3):
        raise ValueError("order must be 2 or 3")
    t = np.asarray(times, dtype=float)
    y = np.asarray(sigma_values, dtype=float)
    if len(t) < 6:
        raise ValueError("need at least 6 points")
    coeffs = model_coefficients(order, model)
    pos = t[t > 0]
    if y.max() <= 0 or len(pos) == 0:
        return _not_converged("-sigma shows no growth inside the window")
    # coarse log-grid scan for the starting T
    grid = np.geomspace(pos.min() / 10, pos.max() * 100, 60)
    costs = [np.sum((evaluate_model(t, T, 1.0, coeffs) - y) ** 2) for T in grid]
    return _fit(t, y, sigmas, coeffs, [grid[int(np.argmin(costs))]])


# --- accumulated error -----------------------------------------------------


def _values(series):
    if isinstance(series, SignalSeries):
        return series.times_us, series.mean_sx
    if isinstance(series, SigmaCurve):
        return series.tau1_us, series.sigma
    return None, np.asarray(series, dtype=float)


def accumulated_error(driven, nondriven) -> np.ndarray:
    """A(t_m) = sum_{j<=m} |s_driven(t_j) - s_nondriven(t_j)|."""
    t1, a = _values(driven)
    t2, b = _values(nondriven)
    if a.shape != b.shape or (t1 is not None and t2 is not None and not np.array_equal(t1, t2)):
        raise ValueError("driven and non-driven series must share a time grid")
    return np.cumsum(np.abs(a - b))


@dataclass(frozen=True)
class AccumulatedErrorTable:
    t_norm: np.ndarray
    ramsey: np.ndarray
    sigma2: np.ndarray
    sigma3: np.ndarray

    def at(self, t_norm: float) -> tuple[float, float, float]:
        """Accumulated errors at the last grid point with t/T2* <= t_norm."""
        i = int(np.searchsorted(self.t_norm, t_norm + 1e-12) - 1)
        return float(self.ramsey[i]), float(self.sigma2[i]), float(self.sigma3[i])


def accumulated_error_scan(
    spec: SequenceSpec,
    drive_mhz: float,
    t2_ref: float,
    n_points: int = 100,
    t_norm_max: float = 1.0,
    workers: int = 1,
) -> AccumulatedErrorTable:
    """Driven vs non-driven accumulated error for Ramsey, sigma_2 and sigma_3.

    Both runs share the master seed, so they see the same noise realizations.
    The axis is t/T2* for Ramsey and tau1/T2* for sigma_n.
    """
    step = t_norm_max * t2_ref / (n_points - 1)
    base, stride = aligned_step(spec.replace(drive_mhz=0.0), step)
    driven_spec = base.replace(drive_mhz=drive_mhz)
    duration = 3 * (n_points - 1) * step

    def curves(s):
        series = simulate(s, duration, record_every=stride, workers=workers).signal()
        if s.sigma_meas > 0:
            series = add_measurement_noise(series, s)
        return (
            series.mean_sx[:n_points],
            sigma_curve(series, 2, n_points).sigma,
            sigma_curve(series, 3, n_points).sigma,
        )

    d = curves(driven_spec)
    n = curves(base)
    t_norm = np.arange(n_points) * step / t2_ref
    return AccumulatedErrorTable(t_norm, *(accumulated_error(x, y) for x, y in zip(d, n)))


# --- T2* sweep -----------------------------------------------------------------

METHODS = ("ramsey", "sigma2", "sigma3")


@dataclass(frozen=True)
class MethodStats:
    mean_T: float
    sem_T: float
    mean_r: float
    sem_r: float
    n_converged: int
    n_excluded: int


@dataclass(frozen=True)
class SweepResult:
    drive_mhz: np.ndarray
    t_ref: float
    repeats: int
    stats: dict[str, list[MethodStats]] = field(default_factory=dict)
    samples: dict[str, np.ndarray] = field(default_factory=dict)  # (n_drive, M) fitted T

    def bias(self, method: str, i: int) -> float:
        return abs(self.stats[method][i].mean_T - self.t_ref)


def max_sweep_drive(window_us: float, min_contrast: float = 0.2) -> float:
    """Largest drive keeping the coherent factor cos(2 pi f t) >= min_contrast over [0, window]."""
    return math.acos(min_contrast) / (2 * math.pi * window_us)


def _mean_sem(x: np.ndarray) -> tuple[float, float]:
    x = x[np.isfinite(x)]
    if len(x) == 0:
        return float("nan"), float("nan")
    sem = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else float("nan")
    return float(x.mean()), sem


def fit_methods(series: SignalSeries, n_points: int, sigma_model: str = "weight-consistent") -> dict[str, FitResult]:
    """Fit Ramsey on the first ``n_points`` of the series and sigma_2/3 on tau1 > 0.

    Inputs violating a fit's preconditions come back as non-converged results.
    """
    out = {}
    try:
        out["ramsey"] = fit_stretched_exp(series.times_us[:n_points], series.mean_sx[:n_points], series.sem[:n_points])
    except ValueError as exc:
        out["ramsey"] = _not_converged(str(exc))
    for order in (2, 3):
        c = sigma_curve(series, order, n_points)
        try:
            out[f"sigma{order}"] = fit_sigma_model(c.tau1_us[1:], -c.sigma[1:], order, sigma_model, c.sem[1:])
        except ValueError as exc:
            out[f"sigma{order}"] = _not_converged(str(exc))
    return out


def t2_sweep(
    base_spec: SequenceSpec,
    drive_grid: Sequence[float],
    repeats: int,
    t_ref: float,
    window_us: float | None = None,
    n_points: int = 60,
    sigma_model: str = "weight-consistent",
    min_contrast: float = 0.2,
    workers: int = 1,
) -> SweepResult:
    """Fitted T2* vs drive for Ramsey, sigma_2 and sigma_3 over M repeats.

    Every method sees the same axis range [0, window]: Ramsey on t, sigma_n
    on tau1 (so the simulation spans 3*window).  Repeat m uses a master seed
    derived from (base seed, m), shared across drives.  Fits that fail are
    excluded and counted; more than 20% exclusions raises FitError.
    """
    if repeats < 5:
        raise ValueError("repeats must be >= 5")
    drives = np.asarray(drive_grid, dtype=float)
    window = 2 * t_ref if window_us is None else window_us
    f_max = max_sweep_drive(window, min_contrast)
    if drives.max() > f_max + 1e-12:
        raise ValueError(f"drive {drives.max()} MHz leaves the low-action regime (max {f_max:.4g} MHz)")
    step = window / (n_points - 1)
    aligned, stride = aligned_step(base_spec, step)
    duration = 3 * window

    fitted = {m: np.full((len(drives), repeats), np.nan) for m in METHODS}
    fitted_r = {m: np.full((len(drives), repeats), np.nan) for m in METHODS}
    for i, f in enumerate(drives):
        for rep in range(repeats):
            spec = aligned.replace(drive_mhz=float(f), master_seed=child_seed(base_spec.master_seed, SWEEP_STREAM, rep))
            series = simulate(spec, duration, record_every=stride, workers=workers).signal()
            series = add_measurement_noise(series, spec)
            for name, fit in fit_methods(series, n_points, sigma_model).items():
                if fit.converged:
                    fitted[name][i, rep] = fit.T
                    fitted_r[name][i, rep] = fit.r

    stats: dict[str, list[MethodStats]] = {}
    for name in METHODS:
        rows = []
        for i in range(len(drives)):
            ok = np.isfinite(fitted[name][i])
            n_ok = int(ok.sum())
            if repeats - n_ok > 0.2 * repeats:
                raise FitError(f"{name} at {drives[i]} MHz: {repeats - n_ok}/{repeats} fits failed")
            mT, sT = _mean_sem(fitted[name][i])
            mr, sr = _mean_sem(fitted_r[name][i])
            rows.append(MethodStats(mT, sT, mr, sr, n_ok, repeats - n_ok))
        stats[name] = rows
    return SweepResult(drives, t_ref, repeats, stats, fitted)


# --- purity loss ---------------------------------------------------------------


@dataclass(frozen=True)
class PurityTable:
    t_us: np.ndarray
    dP: np.ndarray
    neg_sigma2: np.ndarray
    neg_sigma3: np.ndarray


def purity_comparison(
    spec: SequenceSpec,
    drive_mhz: float,
    t_max_us: float,
    n_points: int = 50,
    max_purity_loss: float = 0.05,
    workers: int = 1,
) -> PurityTable:
    """Tomographic purity loss vs -sigma_2, -sigma_3 at tau1 = t, noise-free readout.

    Rows where the tomographic purity loss exceeds ``max_purity_loss`` (and
    everything after the first such row) are dropped.
    """
    step = t_max_us / (n_points - 1)
    aligned, stride = aligned_step(spec.replace(drive_mhz=drive_mhz), step)
    ens = simulate(aligned, 3 * t_max_us, record_every=stride, workers=workers)
    tomo = ens.tomography()
    series = ens.signal()
    dP = tomo.purity_loss[:n_points]
    s2 = -sigma_curve(series, 2, n_points).sigma
    s3 = -sigma_curve(series, 3, n_points).sigma
    over = np.nonzero(dP > max_purity_loss)[0]
    keep = n_points if len(over) == 0 else int(over[0])
    t = tomo.times_us[:n_points]
    return PurityTable(t[:keep], dP[:keep], s2[:keep], s3[:keep])


# --- CSV -----------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v))


def write_fits_csv(sweep: SweepResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "drive_mhz", "T_us", "r", "T_sem", "r_sem", "n_converged"])
        for name in METHODS:
            for f, st in zip(sweep.drive_mhz, sweep.stats[name]):
                w.writerow([name, _fmt(f), _fmt(st.mean_T), _fmt(st.mean_r), _fmt(st.sem_T), _fmt(st.sem_r), st.n_converged])


def write_accumulated_csv(table: AccumulatedErrorTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_norm", "A_ramsey", "A_sigma2", "A_sigma3"])
        for row in zip(table.t_norm, table.ramsey, table.sigma2, table.sigma3):
            w.writerow([_fmt(v) for v in row])


def write_purity_csv(table: PurityTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_us", "dP", "neg_sigma2", "neg_sigma3"])
        for row in zip(table.t_us, table.dP, table.neg_sigma2, table.neg_sigma3):
            w.writerow([_fmt(v) for v in row])
