"""Ornstein-Uhlenbeck detuning noise and its calibration.

All frequencies are cyclic (MHz) and times in microseconds.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.signal import lfilter

# spawn_key streams for counter-derived seeding
NOISE_STREAM = 0
MEASUREMENT_STREAM = 1
SWEEP_STREAM = 2


def child_seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    """Seed for the stream identified by ``key`` under ``master_seed``.

    Depends only on (master_seed, key), never on scheduling order.
    """
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))


def child_seed(master_seed: int, *key: int) -> int:
    """64-bit integer seed derived from (master_seed, key)."""
    return int(child_seed_sequence(master_seed, *key).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class OUParams:
    b: float  # stationary std of detuning, MHz
    tau_c: float  # correlation time, us
    dt: float  # step, us

    def __post_init__(self):
        if not self.b >= 0:
            raise ValueError(f"b must be >= 0, got {self.b}")
        if not self.tau_c > 0:
            raise ValueError(f"tau_c must be > 0, got {self.tau_c}")
        if not 0 < self.dt <= self.tau_c / 10:
            raise ValueError(
                f"dt={self.dt} must satisfy 0 < dt <= tau_c/10 (tau_c={self.tau_c})"
            )

    @property
    def decay(self) -> float:
        """One-step autocorrelation exp(-dt/tau_c)."""
        return math.exp(-self.dt / self.tau_c)

    @property
    def kick(self) -> float:
        """Std of the innovation, b*sqrt(1 - exp(-2 dt/tau_c))."""
        return self.b * math.sqrt(-math.expm1(-2 * self.dt / self.tau_c))


@dataclass(frozen=True)
class NoiseTrajectory:
    samples: np.ndarray
    params: OUParams
    seed: int | np.random.SeedSequence

    def __len__(self):
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) * self.params.dt


def ou_filter(params: OUParams, initial: np.ndarray, innovations: np.ndarray) -> np.ndarray:
    """Run the exact OU recursion along the last axis.

    ``initial`` holds delta_0 (one per row) and ``innovations`` the standard
    normals eta_0..eta_{N-2}; the result has N samples per row.
    """
    rho, s = params.decay, params.kick
    initial = np.asarray(initial, dtype=float)
    innovations = np.asarray(innovations, dtype=float)
    # delta_{i+1} = rho * delta_i + s * eta_i, seeded with delta_0
    x = np.concatenate([initial[..., None], s * innovations], axis=-1)
    return lfilter([1.0], [1.0, -rho], x, axis=-1)


def draw_trajectories(params: OUParams, steps: int, seeds) -> np.ndarray:
    """One row of ``steps`` samples per seed, each from its own generator."""
    out = np.empty((len(seeds), steps))
    init = np.empty(len(seeds))
    eta = np.empty((len(seeds), steps - 1))
    for i, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        init[i] = params.b * rng.standard_normal()
        eta[i] = rng.standard_normal(steps - 1)
    out[:] = ou_filter(params, init, eta)
    return out


def ou_trajectory(params: OUParams, steps: int, seed: int) -> NoiseTrajectory:
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    samples = draw_trajectories(params, steps, [seed])[0]
    return NoiseTrajectory(samples=samples, params=params, seed=seed)


@dataclass(frozen=True)
class TrajectoryStats:
    mean: float
    variance: float
    autocorrelation: np.ndarray | None
    degenerate: bool = False


def empirical_stats(traj: NoiseTrajectory | np.ndarray, max_lag: int) -> TrajectoryStats:
    """Sample mean, unbiased variance and normalized autocorrelation up to max_lag.

    A constant trajectory has no defined autocorrelation; it is reported with
    ``degenerate=True`` and ``autocorrelation=None``.
    """
    x = np.asarray(getattr(traj, "samples", traj), dtype=float)
    if max_lag < 1 or len(x) < 100 * max_lag:
        raise ValueError(f"need at least {100 * max_lag} samples for max_lag={max_lag}, got {len(x)}")
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    if var == 0.0:
        return TrajectoryStats(mean, 0.0, None, degenerate=True)
    d = x - mean
    c0 = np.dot(d, d) / len(d)
    acf = np.array([1.0] + [np.dot(d[:-lag], d[lag:]) / len(d) / c0 for lag in range(1, max_lag + 1)])
    return TrajectoryStats(mean, var, acf)


def coherence_exponent(t, b: float, tau_c: float):
    """Gaussian-phase exponent chi(t) for OU detuning noise.

    <sigma_x>(t) = exp(-chi(t)) with
    chi = (2 pi b)^2 tau_c^2 (t/tau_c - 1 + exp(-t/tau_c)).
    """
    t = np.asarray(t, dtype=float)
    u = t / tau_c
    # u - 1 + e^{-u} computed stably for small u
    g = np.where(u < 1e-3, u**2 / 2 - u**3 / 6 + u**4 / 24, u + np.expm1(-u))
    return (2 * np.pi * b) ** 2 * tau_c**2 * g


def calibrate_b_for_t2(t2_target: float, regime: str = "quasi-static", tau_c: float | None = None) -> float:
    """Noise amplitude b (MHz) whose free-induction decay reaches 1/e at t2_target.

    ``quasi-static``: frozen Gaussian detuning, exp(-(2 pi b)^2 t^2 / 2), giving
    b = sqrt(2) / (2 pi T2*).  ``ou``: finite correlation time ``tau_c`` using
    the full OU dephasing exponent.
    """
    if not t2_target > 0:
        raise ValueError(f"t2_target must be > 0, got {t2_target}")
    if regime == "quasi-static":
        return math.sqrt(2) / (2 * math.pi * t2_target)
    if regime == "ou":
        if tau_c is None or not tau_c > 0:
            raise ValueError("regime 'ou' needs tau_c > 0")
        return 1.0 / math.sqrt(float(coherence_exponent(t2_target, 1.0, tau_c)))
    raise ValueError(f"unknown regime {regime!r}")


def ou_log_slope(u):
    """d ln chi / d ln t of the OU dephasing exponent at t = u * tau_c.

    Runs from 2 (u -> 0, quasi-static) down to 1 (u -> inf, motional narrowing).
    """
    u = np.asarray(u, dtype=float)
    return u * -np.expm1(-u) / (u + np.expm1(-u))


@dataclass(frozen=True)
class DecayCalibration:
    b: float  # MHz
    tau_c: float  # us
    gamma_pump: float  # MHz


def calibrate_mixed_decay(t2: float, r: float, pump_share: float = 0.5) -> DecayCalibration:
    """Pumping plus OU bath whose decay hits 1/e at ``t2`` with log-slope ``r`` there.

    The coherence is exp(-G t - chi(t)).  Pumping supplies ``pump_share`` of
    the exponent at t2 (G t2 = pump_share); the OU bath supplies the rest with
    tau_c chosen so the combined slope d ln(-ln f)/d ln t equals r at t2.
    """
    if not t2 > 0:
        raise ValueError("t2 must be > 0")
    if not 0 <= pump_share < 1:
        raise ValueError("pump_share must be in [0, 1)")
    bath_slope = (r - pump_share) / (1 - pump_share)
    if not 1 < bath_slope < 2:
        raise ValueError(f"r={r} unreachable with pump_share={pump_share}")
    u = brentq(lambda x: float(ou_log_slope(x)) - bath_slope, 1e-6, 1e6, xtol=1e-14)
    tau_c = t2 / u
    b = math.sqrt((1 - pump_share) / float(coherence_exponent(t2, 1.0, tau_c)))
    return DecayCalibration(b=b, tau_c=tau_c, gamma_pump=pump_share / (math.pi * t2))


def write_trajectory_csv(traj: NoiseTrajectory, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "time_us", "delta_MHz"])
        for i, (t, d) in enumerate(zip(traj.times, traj.samples)):
            w.writerow([i, repr(float(t)), repr(float(d))])
