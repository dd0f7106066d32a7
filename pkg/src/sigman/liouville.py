"""Exact superoperator propagation for one qubit.

Density matrices are vectorized column-stacked, so vec(A rho B) =
(B^T kron A) vec(rho).  The propagator for one repetition is
K = exp(x (H_super + L_super)), and k repetitions are K^k.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .qubit import ID2, SX, SY, SZ
from .weights import combine_sigma, sigma_weights

RHO0 = 0.5 * (ID2 + SX)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |+z><-z|, pumps toward +z

CONVENTIONS = ("projection", "trace")


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=complex).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    return np.asarray(v).reshape(2, 2, order="F")


@dataclass(frozen=True)
class Superoperator:
    matrix: np.ndarray
    kind: str  # "unitary-generator" | "dissipator" | "propagator"

    def __call__(self, rho):
        return unvec(self.matrix @ vec(rho))


@dataclass(frozen=True)
class ChannelSpec:
    hamiltonian: np.ndarray
    lindblad_ops: Sequence[tuple[np.ndarray, float]] = field(default_factory=tuple)
    x: float = 1.0

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        if h.shape != (2, 2) or np.max(np.abs(h - h.conj().T)) > 1e-12:
            raise ValueError("hamiltonian must be a 2x2 Hermitian matrix")
        for _, rate in self.lindblad_ops:
            if rate < 0:
                raise ValueError(f"Lindblad rates must be >= 0, got {rate}")
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "lindblad_ops", tuple((np.asarray(a, dtype=complex), float(g)) for a, g in self.lindblad_ops))

    def with_x(self, x: float) -> "ChannelSpec":
        return ChannelSpec(self.hamiltonian, self.lindblad_ops, x)


def build_superops(spec: ChannelSpec) -> tuple[Superoperator, Superoperator]:
    """Generators of rho -> -i[H, rho] and of the Lindblad dissipator."""
    h = spec.hamiltonian
    h_super = -1j * (np.kron(ID2, h) - np.kron(h.T, ID2))
    l_super = np.zeros((4, 4), dtype=complex)
    for a, rate in spec.lindblad_ops:
        ada = a.conj().T @ a
        l_super += rate * (np.kron(a.conj(), a) - 0.5 * np.kron(ID2, ada) - 0.5 * np.kron(ada.T, ID2))
    return Superoperator(h_super, "unitary-generator"), Superoperator(l_super, "dissipator")


def propagator(spec: ChannelSpec) -> Superoperator:
    h_super, l_super = build_superops(spec)
    return Superoperator(expm(spec.x * (h_super.matrix + l_super.matrix)), "propagator")


def _readout(rho: np.ndarray, convention: str) -> float:
    if convention == "projection":
        return float(np.trace(SX @ rho).real)
    if convention == "trace":
        return float(np.trace(RHO0 @ rho).real)
    raise ValueError(f"unknown convention {convention!r}")


def exact_rk(spec: ChannelSpec, k: int, convention: str = "projection", K: Superoperator | None = None) -> float:
    if k < 0:
        raise ValueError("k must be >= 0")
    K = K or propagator(spec)
    v = np.linalg.matrix_power(K.matrix, k) @ vec(RHO0)
    return _readout(unvec(v), convention)


def exact_rk_series(spec: ChannelSpec, n: int, convention: str = "projection") -> np.ndarray:
    """R_0..R_n from repeated application of one propagator."""
    K = propagator(spec).matrix
    v = vec(RHO0)
    out = []
    for _ in range(n + 1):
        out.append(_readout(unvec(v), convention))
        v = K @ v
    return np.array(out)


def dissipator_expectation(spec: ChannelSpec, convention: str = "projection") -> float:
    """x tr(O L(rho_0)) with O = sigma_x (projection) or rho_0 (trace)."""
    _, l_super = build_superops(spec)
    return spec.x * _readout(l_super(RHO0), convention)


@dataclass(frozen=True)
class ConvergenceResult:
    order: int
    x: np.ndarray
    sigma: np.ndarray
    l_expect: np.ndarray
    abs_error: np.ndarray
    slope: float | None
    at_floor: bool

    def rows(self):
        for i in range(len(self.x)):
            yield self.order, self.x[i], self.sigma[i], self.l_expect[i], self.abs_error[i]


NUMERICAL_FLOOR = 1e-13


def convergence_order(
    family: ChannelSpec | Callable[[float], ChannelSpec],
    n: int,
    x_grid: Sequence[float],
    convention: str = "projection",
) -> ConvergenceResult:
    """Log-log slope of |sigma_n(x) - <L>(x)| over ``x_grid``.

    ``family`` is either a ChannelSpec (rescaled via ``with_x``) or a callable
    x -> ChannelSpec.  Points whose error sits below the numerical floor are
    dropped from the fit; if all of them do, ``slope`` is None and
    ``at_floor`` is set.
    """
    xs = np.asarray(x_grid, dtype=float)
    if len(xs) < 6 or xs.min() < 1e-3 - 1e-15 or xs.max() > 0.3 + 1e-15:
        raise ValueError("x_grid needs >= 6 points inside [1e-3, 0.3]")
    make = family.with_x if isinstance(family, ChannelSpec) else family
    w = sigma_weights(n)
    sig, lex = [], []
    for x in xs:
        spec = make(float(x))
        sig.append(combine_sigma(w, exact_rk_series(spec, n, convention)))
        lex.append(dissipator_expectation(spec, convention))
    sig, lex = np.array(sig), np.array(lex)
    err = np.abs(sig - lex)
    ok = err > NUMERICAL_FLOOR
    if ok.sum() < 2:
        return ConvergenceResult(n, xs, sig, lex, err, None, True)
    slope = float(np.polyfit(np.log(xs[ok]), np.log(err[ok]), 1)[0])
    return ConvergenceResult(n, xs, sig, lex, err, slope, False)


def write_convergence_csv(results: Sequence[ConvergenceResult], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "x", "sigma_n", "L_expect", "abs_error"])
        for res in results:
            for row in res.rows():
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def sequence_channel(drive_mhz: float, gamma_pump: float, gamma_phi: float, tau1_us: float) -> ChannelSpec:
    """ChannelSpec equivalent to one tau1 of the noise-free driven sequence.

    Matches the Bloch-ball maps in ``qubit``: drive rotates about +y at
    2 pi f, pumping is sigma_+ at 2 pi gamma_pump, and dephasing sigma_z at
    pi gamma_phi (so coherences decay at 2 pi gamma_phi).
    """
    h = np.pi * drive_mhz * SY
    ops = [(SIGMA_PLUS, 2 * np.pi * gamma_pump), (SZ, np.pi * gamma_phi)]
    return ChannelSpec(h, ops, tau1_us)
