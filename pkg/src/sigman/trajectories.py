"""Monte Carlo simulation of the driven Ramsey sequence.

The qubit starts at +x, is driven about y at ``drive_mhz`` while an OU
detuning rotates it about z, and is subject to optical pumping and extra
pure dephasing.  Each step is Strang split: half dissipation, exact rotation
about the instantaneous field, half dissipation.

Trajectories are processed in batches of fixed size ``BATCH``.  Batch
membership depends only on trajectory index, every trajectory draws from its
own counter-derived seed and batch partial sums are reduced in batch order,
so outputs are bit-identical for any number of workers.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .noise import MEASUREMENT_STREAM, NOISE_STREAM, NoiseTrajectory, OUParams, child_seed_sequence, draw_trajectories
from .qubit import TWO_PI, dissipate_bloch
from .weights import MAX_ORDER, combine_sigma, sigma_weights

BATCH = 128


@dataclass(frozen=True)
class SequenceSpec:
    drive_mhz: float = 0.0
    tau1_us: float = 0.1
    max_order: int = 3
    b_mhz: float = 0.0
    tau_c_us: float = 1e6
    gamma_pump: float = 0.0
    gamma_phi: float = 0.0
    dt_us: float = 0.01
    n_traj: int = 2000
    n_shots: int = 1
    sigma_meas: float = 0.0
    master_seed: int = 0

    def __post_init__(self):
        errors = validate_sequence(self)
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def noise(self) -> OUParams:
        return OUParams(self.b_mhz, self.tau_c_us, self.dt_us)

    def replace(self, **changes) -> "SequenceSpec":
        return replace(self, **changes)


def validate_sequence(spec: SequenceSpec, prefix: str = "") -> list[str]:
    """Constraint violations as messages naming the offending fields."""
    p = prefix
    errs = []
    if not spec.tau1_us > 0:
        errs.append(f"{p}tau1_us must be > 0")
    if not 1 <= spec.max_order <= MAX_ORDER:
        errs.append(f"{p}max_order must be in [1, {MAX_ORDER}]")
    if spec.b_mhz < 0:
        errs.append(f"{p}b_mhz must be >= 0")
    if not spec.tau_c_us > 0:
        errs.append(f"{p}tau_c_us must be > 0")
    if spec.gamma_pump < 0 or spec.gamma_phi < 0:
        errs.append(f"{p}gamma_pump and {p}gamma_phi must be >= 0")
    if not spec.dt_us > 0:
        errs.append(f"{p}dt_us must be > 0")
    elif spec.dt_us > spec.tau_c_us / 10:
        errs.append(f"{p}dt_us={spec.dt_us} exceeds {p}tau_c_us/10={spec.tau_c_us / 10}")
    if spec.drive_mhz < 0:
        errs.append(f"{p}drive_mhz must be >= 0")
    elif spec.drive_mhz > 0 and spec.dt_us > 1 / (20 * spec.drive_mhz):
        errs.append(f"{p}dt_us={spec.dt_us} exceeds 1/(20*{p}drive_mhz)={1 / (20 * spec.drive_mhz)}")
    if spec.n_traj < 1:
        errs.append(f"{p}n_traj must be >= 1")
    if spec.n_shots < 1:
        errs.append(f"{p}n_shots must be >= 1")
    if spec.sigma_meas < 0:
        errs.append(f"{p}sigma_meas must be >= 0")
    return errs


@dataclass(frozen=True)
class SignalSeries:
    times_us: np.ndarray
    mean_sx: np.ndarray
    sem: np.ndarray
    with_measurement_noise: bool = False


@dataclass(frozen=True)
class TomographySeries:
    times_us: np.ndarray
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray

    @property
    def purity_loss(self) -> np.ndarray:
        """1 - tr(rho^2) of the ensemble-averaged state."""
        return 0.5 * (1 - (self.sx**2 + self.sy**2 + self.sz**2))


@dataclass(frozen=True)
class EnsembleResult:
    times_us: np.ndarray
    mean_bloch: np.ndarray  # (n_times, 3)
    sem_sx: np.ndarray
    n_traj: int

    def signal(self) -> SignalSeries:
        return SignalSeries(self.times_us, self.mean_bloch[:, 0].copy(), self.sem_sx)

    def tomography(self) -> TomographySeries:
        m = self.mean_bloch
        return TomographySeries(self.times_us, m[:, 0].copy(), m[:, 1].copy(), m[:, 2].copy())


@dataclass(frozen=True)
class FidelitySeries:
    tau1: float
    order: int
    r_values: np.ndarray
    r_sem: np.ndarray
    sigma: dict[int, float] = field(default_factory=dict)
    sigma_sem: dict[int, float] = field(default_factory=dict)


def n_steps_for(spec: SequenceSpec, duration_us: float) -> int:
    return int(math.ceil(duration_us / spec.dt_us - 1e-9))


def _evolve(spec: SequenceSpec, delta: np.ndarray, record_every: int) -> np.ndarray:
    """Evolve one batch under detuning rows ``delta`` (batch, steps).

    Returns Bloch vectors (batch, n_records, 3) at steps 0, record_every, ...
    """
    nb, steps = delta.shape
    dt = spec.dt_us
    f = spec.drive_mhz
    freq = np.hypot(f, delta)
    angle = TWO_PI * dt * freq
    with np.errstate(invalid="ignore", divide="ignore"):
        ny = np.where(freq > 0, f / freq, 0.0)
        nz = np.where(freq > 0, delta / freq, 1.0)
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    omc = 1 - cos_a
    half = dt / 2
    dissipative = spec.gamma_pump > 0 or spec.gamma_phi > 0

    n_rec = steps // record_every + 1
    out = np.empty((nb, n_rec, 3))
    v = np.zeros((nb, 3))
    v[:, 0] = 1.0
    out[:, 0] = v
    for i in range(steps):
        if dissipative:
            v = dissipate_bloch(v, spec.gamma_pump, spec.gamma_phi, half)
        x, y, z = v[:, 0], v[:, 1], v[:, 2]
        a_y, a_z = ny[:, i], nz[:, i]
        c, s, o = cos_a[:, i], sin_a[:, i], omc[:, i]
        ndotv = a_y * y + a_z * z
        # axis (0, a_y, a_z): n x v = (a_y z - a_z y, a_z x, -a_y x)
        v = np.stack(
            [
                x * c + (a_y * z - a_z * y) * s,
                y * c + a_z * x * s + a_y * ndotv * o,
                z * c - a_y * x * s + a_z * ndotv * o,
            ],
            axis=1,
        )
        if dissipative:
            v = dissipate_bloch(v, spec.gamma_pump, spec.gamma_phi, half)
        if (i + 1) % record_every == 0:
            out[:, (i + 1) // record_every] = v
    return out


def trajectory_seed(spec: SequenceSpec, index: int) -> np.random.SeedSequence:
    return child_seed_sequence(spec.master_seed, NOISE_STREAM, index)


def run_trajectory(spec: SequenceSpec, noise: NoiseTrajectory | np.ndarray, duration_us: float, record_every: int = 1) -> np.ndarray:
    """Bloch vectors (n_records, 3) of one trajectory under the given noise samples."""
    samples = np.asarray(getattr(noise, "samples", noise), dtype=float)
    steps = n_steps_for(spec, duration_us)
    if len(samples) < steps:
        raise ValueError(f"noise covers {len(samples)} steps, need {steps}")
    return _evolve(spec, samples[None, :steps], record_every)[0]


def _batch_sums(spec: SequenceSpec, batch: int, steps: int, record_every: int):
    lo = batch * BATCH
    hi = min(spec.n_traj, lo + BATCH)
    if spec.b_mhz > 0:
        seeds = [trajectory_seed(spec, i) for i in range(lo, hi)]
        delta = draw_trajectories(spec.noise, steps, seeds)
    else:
        delta = np.zeros((hi - lo, steps))
    traj = _evolve(spec, delta, record_every)
    return traj.sum(axis=0), (traj[:, :, 0] ** 2).sum(axis=0)


def simulate(spec: SequenceSpec, duration_us: float, record_every: int = 1, workers: int = 1) -> EnsembleResult:
    """Ensemble-averaged Bloch vector on the recording grid."""
    steps = n_steps_for(spec, duration_us)
    if steps < 1:
        raise ValueError("duration must cover at least one step")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    n_batches = -(-spec.n_traj // BATCH)
    args = [(spec, b, steps, record_every) for b in range(n_batches)]
    if workers > 1 and n_batches > 1:
        with ProcessPoolExecutor(max_workers=min(workers, n_batches)) as pool:
            parts = list(pool.map(_batch_sums_star, args))
    else:
        parts = [_batch_sums(*a) for a in args]
    total = parts[0][0].copy()
    total_sq = parts[0][1].copy()
    for s, sq in parts[1:]:
        total += s
        total_sq += sq
    n = spec.n_traj
    mean = total / n
    if n > 1:
        var = np.maximum(total_sq - n * mean[:, 0] ** 2, 0.0) / (n - 1)
        sem = np.sqrt(var / n)
    else:
        sem = np.zeros(mean.shape[0])
    times = np.arange(mean.shape[0]) * record_every * spec.dt_us
    return EnsembleResult(times, mean, sem, n)


def _batch_sums_star(a):
    return _batch_sums(*a)


def run_ensemble(spec: SequenceSpec, duration_us: float, record_every: int = 1, workers: int = 1) -> SignalSeries:
    return simulate(spec, duration_us, record_every, workers).signal()


def tomography(spec: SequenceSpec, duration_us: float, record_every: int = 1, workers: int = 1) -> TomographySeries:
    return simulate(spec, duration_us, record_every, workers).tomography()


def add_measurement_noise(series: SignalSeries, spec: SequenceSpec, stream: int = 0) -> SignalSeries:
    """Add Gaussian readout noise of std sigma_meas/sqrt(n_shots) to every point.

    The reported ``sem`` combines ensemble and readout noise in quadrature.
    """
    if series.with_measurement_noise:
        raise ValueError("measurement noise already applied to this series")
    std = spec.sigma_meas / math.sqrt(spec.n_shots)
    rng = np.random.default_rng(child_seed_sequence(spec.master_seed, MEASUREMENT_STREAM, stream))
    noisy = series.mean_sx + std * rng.standard_normal(len(series.mean_sx))
    sem = np.sqrt(series.sem**2 + std**2)
    return SignalSeries(series.times_us, noisy, sem, with_measurement_noise=True)


def aligned_step(spec: SequenceSpec, tau1_us: float) -> tuple[SequenceSpec, int]:
    """Shrink dt so tau1 is an integer number of steps; return (spec, steps per tau1)."""
    m = int(math.ceil(tau1_us / spec.dt_us - 1e-9))
    return spec.replace(dt_us=tau1_us / m, tau1_us=tau1_us), m


def rk_from_series(series: SignalSeries, order: int, stride: int):
    """R_k = series at index k*stride for k = 0..order, with their SEMs."""
    idx = np.arange(order + 1) * stride
    if idx[-1] >= len(series.mean_sx):
        raise ValueError("series too short for the requested order")
    return series.mean_sx[idx], series.sem[idx]


def measure_rk(spec: SequenceSpec, workers: int = 1, noisy: bool | None = None) -> FidelitySeries:
    """R_0..R_n at t = k tau1 from one simulated series, plus sigma_n for n <= max_order.

    Readout noise is added when ``sigma_meas > 0`` unless ``noisy`` says otherwise.
    """
    aligned, m = aligned_step(spec, spec.tau1_us)
    n = spec.max_order
    series = simulate(aligned, n * spec.tau1_us, record_every=m, workers=workers).signal()
    if noisy if noisy is not None else spec.sigma_meas > 0:
        series = add_measurement_noise(series, aligned)
    r, u = rk_from_series(series, n, 1)
    sig, usig = {}, {}
    for order in range(1, n + 1):
        s, us = combine_sigma(sigma_weights(order), r[: order + 1], u[: order + 1])
        sig[order], usig[order] = s, us
    return FidelitySeries(spec.tau1_us, n, r, u, sig, usig)


@dataclass(frozen=True)
class SigmaCurve:
    tau1_us: np.ndarray
    order: int
    sigma: np.ndarray
    sem: np.ndarray


def sigma_curve(series: SignalSeries, order: int, n_tau1: int | None = None) -> SigmaCurve:
    """sigma_n(tau1) for tau1 on the series grid, reading R_k at k*tau1.

    ``n_tau1`` grid points (including tau1 = 0) are used; by default as many
    as the series length allows.
    """
    max_j = (len(series.mean_sx) - 1) // order
    j = np.arange(max_j + 1 if n_tau1 is None else n_tau1)
    if j[-1] > max_j:
        raise ValueError(f"series supports at most {max_j + 1} tau1 points for order {order}")
    r = np.stack([series.mean_sx[k * j] for k in range(order + 1)])
    u = np.stack([series.sem[k * j] for k in range(order + 1)])
    sig, usig = combine_sigma(sigma_weights(order), r, u)
    return SigmaCurve(series.times_us[j], order, np.asarray(sig), np.asarray(usig))


def _fmt(v) -> str:
    return repr(float(v))


def write_signal_csv(series: SignalSeries, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_us", "mean_sx", "sem"])
        for row in zip(series.times_us, series.mean_sx, series.sem):
            w.writerow([_fmt(v) for v in row])


def write_fidelities_csv(rows: list[FidelitySeries], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau1_us", "k", "R_k", "sigma2", "sigma3", "u_sigma2", "u_sigma3"])
        nan = float("nan")
        for fs in rows:
            for k, rk in enumerate(fs.r_values):
                w.writerow(
                    [_fmt(fs.tau1), k, _fmt(rk)]
                    + [_fmt(fs.sigma.get(2, nan)), _fmt(fs.sigma.get(3, nan))]
                    + [_fmt(fs.sigma_sem.get(2, nan)), _fmt(fs.sigma_sem.get(3, nan))]
                )


def write_tomography_csv(tomo: TomographySeries, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_us", "sx", "sy", "sz", "purity_loss"])
        for row in zip(tomo.times_us, tomo.sx, tomo.sy, tomo.sz, tomo.purity_loss):
            w.writerow([_fmt(v) for v in row])
