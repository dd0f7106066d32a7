"""Run configuration: JSON ingestion, validation and bundled presets."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace
from typing import Any

from .noise import calibrate_b_for_t2, calibrate_mixed_decay
from .trajectories import SequenceSpec, validate_sequence
from .weights import MAX_ORDER

SCENARIOS = ("weights", "ramsey", "scan", "sigma", "accerr", "sweep", "purity", "convergence")

# decay targets of the two measured regimes
T2_NON_MARKOVIAN = 22.1
T2_NEARLY_MARKOVIAN = 0.81
R_NEARLY_MARKOVIAN = 1.23
QUASI_STATIC_MEMORY = 1e4  # tau_c in units of T2*
PUMP_SHARE = 0.5  # fraction of the laser-on decay exponent at T2* due to pumping


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AnalysisParams:
    order: int = 3
    t_ref_us: float = T2_NEARLY_MARKOVIAN
    t_max_us: float | None = None
    n_points: int = 60
    drive_grid_mhz: tuple[float, ...] = (0.0,)
    drive_mhz: float | None = None
    repeats: int = 5
    window_us: float | None = None
    sigma_model: str = "weight-consistent"
    min_contrast: float = 0.2
    max_purity_loss: float = 0.05
    conv_orders: tuple[int, ...] = (1, 2, 3)
    conv_rabi: float = 0.7
    conv_gamma: float = 0.3
    x_min: float = 1e-3
    x_max: float = 1e-1
    n_x: int = 9


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    sequence: SequenceSpec = field(default_factory=SequenceSpec)
    analysis: AnalysisParams = field(default_factory=AnalysisParams)
    output_dir: str = "runs/out"
    workers: int = 1
    master_seed: int = 1
    preset: str | None = None

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["sequence"].pop("master_seed")
        d["analysis"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["analysis"].items()}
        if d["preset"] is None:
            d.pop("preset")
        return d


# --- regimes -------------------------------------------------------------------


def quasi_static_regime(t2: float = T2_NON_MARKOVIAN, **kw) -> dict[str, Any]:
    """Frozen Gaussian detuning calibrated to reach 1/e at ``t2`` (r = 2)."""
    return dict(b_mhz=calibrate_b_for_t2(t2), tau_c_us=QUASI_STATIC_MEMORY * t2, **kw)


def pumping_rate_for_t2(t2: float) -> float:
    """gamma_pump (MHz) whose transverse decay exp(-pi gamma_pump t) reaches 1/e at t2."""
    return 1 / (math.pi * t2)


def strong_pumping_regime(t2: float = T2_NEARLY_MARKOVIAN, bath_t2: float = T2_NON_MARKOVIAN, **kw) -> dict[str, Any]:
    """Native quasi-static bath plus pumping with transverse time ``t2``."""
    d = quasi_static_regime(bath_t2)
    d.update(gamma_pump=pumping_rate_for_t2(t2), **kw)
    return d


def mixed_regime(t2: float = T2_NEARLY_MARKOVIAN, r: float = R_NEARLY_MARKOVIAN, pump_share: float = PUMP_SHARE, **kw) -> dict[str, Any]:
    """Optical pumping plus a finite-memory OU bath (the laser-on regime)."""
    cal = calibrate_mixed_decay(t2, r, pump_share)
    return dict(b_mhz=cal.b, tau_c_us=cal.tau_c, gamma_pump=cal.gamma_pump, **kw)


def markovian_regime(t2: float = T2_NEARLY_MARKOVIAN, **kw) -> dict[str, Any]:
    """White-noise limit of the dephasing bath: Lindblad dephasing only (r = 1).

    Deterministic, so a single trajectory represents the ensemble.
    """
    return dict(gamma_phi=1 / (2 * math.pi * t2), b_mhz=0.0, n_traj=1, **kw)


def _preset(scenario, sequence=None, **analysis):
    return {"scenario": scenario, "sequence": sequence or {}, "analysis": analysis}


def _presets() -> dict[str, dict[str, Any]]:
    nm = T2_NON_MARKOVIAN
    mk = T2_NEARLY_MARKOVIAN
    sweep_meas = dict(sigma_meas=0.02, n_shots=1)
    return {
        "weights": _preset("weights", order=3),
        "convergence": _preset("convergence", conv_orders=[1, 2, 3]),
        "ramsey_non_markovian": _preset(
            "ramsey", quasi_static_regime(nm, dt_us=0.1, n_traj=2000), t_ref_us=nm, t_max_us=3 * nm, n_points=121
        ),
        "ramsey_strong_pumping": _preset(
            "ramsey", strong_pumping_regime(mk, dt_us=0.005, n_traj=2000), t_ref_us=mk, t_max_us=3 * mk, n_points=121
        ),
        "ramsey_nearly_markovian": _preset(
            "ramsey", mixed_regime(mk, dt_us=0.005, n_traj=2000), t_ref_us=mk, t_max_us=3 * mk, n_points=121
        ),
        "scan_non_markovian": _preset(
            "scan", quasi_static_regime(nm, dt_us=0.02, n_traj=500, **sweep_meas),
            t_ref_us=nm, t_max_us=nm, n_points=201, drive_grid_mhz=[0.0, 0.5, 1.0, 2.09],
        ),
        "scan_nearly_markovian": _preset(
            "scan", mixed_regime(mk, dt_us=0.005, n_traj=500, **sweep_meas),
            t_ref_us=mk, t_max_us=2 * mk, n_points=201, drive_grid_mhz=[0.0, 0.5, 1.0, 2.09],
        ),
        "sigma_nearly_markovian": _preset(
            "sigma", mixed_regime(mk, dt_us=0.005, n_traj=500, drive_mhz=2.09, **sweep_meas),
            t_ref_us=mk, t_max_us=mk, n_points=61,
        ),
        "fig4_non_markovian": _preset(
            "accerr", quasi_static_regime(nm, dt_us=0.02, n_traj=1000), t_ref_us=nm, drive_mhz=2.09, n_points=101
        ),
        "fig4_nearly_markovian": _preset(
            "accerr", mixed_regime(mk, dt_us=0.005, n_traj=1000), t_ref_us=mk, drive_mhz=2.09, n_points=101
        ),
        "fig5_markovian": _preset(
            "sweep", markovian_regime(mk, dt_us=0.002, **sweep_meas),
            t_ref_us=mk, drive_grid_mhz=[0.0, 0.025, 0.05, 0.075, 0.1, 0.125], repeats=20, n_points=60,
        ),
        "fig5_nearly_markovian": _preset(
            "sweep", mixed_regime(mk, dt_us=0.004, n_traj=200, **sweep_meas),
            t_ref_us=mk, drive_grid_mhz=[0.0, 0.025, 0.05, 0.075, 0.1, 0.125], repeats=10, n_points=60,
        ),
        "fig6_markovian": _preset(
            "purity", markovian_regime(mk, dt_us=0.001), t_ref_us=mk, drive_mhz=0.3, t_max_us=0.1, n_points=51
        ),
        "fig6_nearly_markovian": _preset(
            "purity", mixed_regime(mk, dt_us=0.001, n_traj=2000), t_ref_us=mk, drive_mhz=0.3, t_max_us=0.1, n_points=51
        ),
    }


PRESETS = _presets()


# --- parsing -------------------------------------------------------------------

_TOP_KEYS = {"scenario", "preset", "sequence", "analysis", "output_dir", "workers", "master_seed"}


_INT_FIELDS = {"max_order", "n_traj", "n_shots", "order", "n_points", "repeats", "n_x"}


def _coerce_section(cls, data: dict, path: str, exclude=()) -> dict[str, Any]:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    allowed = {f.name for f in dataclasses.fields(cls)} - set(exclude)
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    out = {}
    for k, v in data.items():
        if isinstance(v, list):
            v = tuple(v)
        if k in _INT_FIELDS:
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{path}.{k}: expected an integer, got {v!r}")
        elif k not in ("sigma_model",) and v is not None:
            items = v if isinstance(v, tuple) else (v,)
            if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in items):
                raise ConfigError(f"{path}.{k}: expected a number, got {v!r}")
        out[k] = v
    return out


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def build_config(data: dict[str, Any]) -> RunConfig:
    """Validate a config mapping (optionally layered on a named preset)."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
    preset = data.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r} (known: {', '.join(sorted(PRESETS))})")
        data = _merge(PRESETS[preset], data)
    scenario = data.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario: expected one of {', '.join(SCENARIOS)}, got {scenario!r}")

    seed = data.get("master_seed", 1)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("master_seed: expected an unsigned 64-bit integer")
    workers = data.get("workers", 1)
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers: expected an integer >= 1")

    seq_kw = _coerce_section(SequenceSpec, data.get("sequence", {}), "sequence", exclude=("master_seed",))
    errs = validate_sequence(_with_defaults(SequenceSpec, seq_kw, master_seed=seed), prefix="sequence.")
    if errs:
        raise ConfigError("; ".join(errs))
    sequence = SequenceSpec(**seq_kw, master_seed=seed)

    an_kw = _coerce_section(AnalysisParams, data.get("analysis", {}), "analysis")
    analysis = AnalysisParams(**an_kw)
    errs = _validate_analysis(analysis)
    if errs:
        raise ConfigError("; ".join(errs))

    return RunConfig(
        scenario=scenario,
        sequence=sequence,
        analysis=analysis,
        output_dir=str(data.get("output_dir", "runs/out")),
        workers=workers,
        master_seed=seed,
        preset=preset,
    )


def _with_defaults(cls, kw: dict, **extra) -> SimpleNamespace:
    vals = {f.name: f.default for f in dataclasses.fields(cls)}
    vals.update(kw, **extra)
    return SimpleNamespace(**vals)


def _validate_analysis(a: AnalysisParams) -> list[str]:
    errs = []
    if not 1 <= a.order <= MAX_ORDER:
        errs.append(f"analysis.order must be in [1, {MAX_ORDER}]")
    if not a.t_ref_us > 0:
        errs.append("analysis.t_ref_us must be > 0")
    if a.t_max_us is not None and not a.t_max_us > 0:
        errs.append("analysis.t_max_us must be > 0")
    if a.n_points < 6:
        errs.append("analysis.n_points must be >= 6")
    if a.repeats < 5:
        errs.append("analysis.repeats must be >= 5")
    if a.sigma_model not in ("weight-consistent", "alt-third-order"):
        errs.append("analysis.sigma_model must be 'weight-consistent' or 'alt-third-order'")
    if any(f < 0 for f in a.drive_grid_mhz):
        errs.append("analysis.drive_grid_mhz entries must be >= 0")
    if not 1e-3 <= a.x_min < a.x_max <= 0.3:
        errs.append("analysis.x_min/x_max must satisfy 1e-3 <= x_min < x_max <= 0.3")
    if a.n_x < 6:
        errs.append("analysis.n_x must be >= 6")
    if any(not 1 <= n <= MAX_ORDER for n in a.conv_orders):
        errs.append(f"analysis.conv_orders entries must be in [1, {MAX_ORDER}]")
    return errs


def parse_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: malformed JSON ({exc})") from None
    return build_config(data)


def preset_config(name: str, **overrides) -> RunConfig:
    return build_config(_merge({"preset": name}, overrides))
