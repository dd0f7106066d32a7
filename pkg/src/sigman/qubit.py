"""Single-qubit states and exact per-step channels on the Bloch ball.

Conventions
-----------
* rho = (I + a . sigma) / 2 with Bloch vector a = (a_x, a_y, a_z).
* The ground state (pumping fixed point) is the +z pole.
* Rotations are right-handed: rotating (1, 0, 0) about +y by pi/2 gives
  (0, 0, -1).  This is the Bloch action of U = exp(-i angle n.sigma / 2).
* Rates are cyclic (MHz); the 2 pi conversion happens here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)
PAULIS = (SX, SY, SZ)

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class QubitState:
    bloch: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.bloch, dtype=float).reshape(3)
        if np.linalg.norm(v) > 1 + 1e-9:
            raise ValueError(f"Bloch vector {v} lies outside the unit ball")
        object.__setattr__(self, "bloch", v)

    @classmethod
    def from_rho(cls, rho) -> "QubitState":
        rho = np.asarray(rho, dtype=complex)
        if abs(np.trace(rho) - 1) > 1e-12:
            raise ValueError("density matrix must have unit trace")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
            raise ValueError("density matrix must be Hermitian")
        return cls(np.array([np.trace(p @ rho).real for p in PAULIS]))

    @classmethod
    def plus_x(cls) -> "QubitState":
        return cls(np.array([1.0, 0.0, 0.0]))

    @property
    def rho(self) -> np.ndarray:
        ax, ay, az = self.bloch
        return 0.5 * (ID2 + ax * SX + ay * SY + az * SZ)


def purity(state: QubitState) -> float:
    return 0.5 * (1 + float(np.dot(state.bloch, state.bloch)))


def purity_loss(state: QubitState) -> float:
    return 1 - purity(state)


def projection_fidelity(state: QubitState) -> float:
    """<sigma_x>, the fidelity convention used for R_k throughout."""
    return float(state.bloch[0])


def trace_fidelity(state: QubitState, reference: QubitState) -> float:
    """tr(rho_ref rho) for a pure reference."""
    if purity(reference) < 1 - 1e-9:
        raise ValueError("trace fidelity needs a pure reference state")
    return 0.5 * (1 + float(np.dot(reference.bloch, state.bloch)))


def projection_to_trace(r_proj):
    """Map <sigma_x> to tr(rho_0 rho) for the +x reference state."""
    return (1 + np.asarray(r_proj)) / 2


def rotate_bloch(v: np.ndarray, axis: np.ndarray, angle) -> np.ndarray:
    """Rodrigues rotation of Bloch vectors ``v`` (..., 3) about unit ``axis`` (..., 3)."""
    c = np.cos(angle)[..., None] if np.ndim(angle) else np.cos(angle)
    s = np.sin(angle)[..., None] if np.ndim(angle) else np.sin(angle)
    ndotv = np.sum(axis * v, axis=-1, keepdims=True)
    return v * c + np.cross(axis, v) * s + axis * ndotv * (1 - c)


def dissipate_bloch(v: np.ndarray, gamma_pump: float, gamma_phi: float, dt: float) -> np.ndarray:
    """Exact amplitude damping toward +z composed with pure dephasing over dt.

    Transverse components shrink by exp(-2 pi (gamma_pump/2 + gamma_phi) dt);
    a_z relaxes toward +1 with factor exp(-2 pi gamma_pump dt).
    """
    transverse = np.exp(-TWO_PI * (gamma_pump / 2 + gamma_phi) * dt)
    longitudinal = np.exp(-TWO_PI * gamma_pump * dt)
    out = np.empty_like(v)
    out[..., 0] = v[..., 0] * transverse
    out[..., 1] = v[..., 1] * transverse
    out[..., 2] = 1 - (1 - v[..., 2]) * longitudinal
    return out


def apply_unitary_step(state: QubitState, axis, angle: float) -> QubitState:
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1) > 1e-9:
        raise ValueError("rotation axis must be a unit vector")
    return QubitState(rotate_bloch(state.bloch, axis, angle))


def apply_dissipative_step(state: QubitState, gamma_pump: float, gamma_phi: float, dt: float) -> QubitState:
    if gamma_pump < 0 or gamma_phi < 0:
        raise ValueError("rates must be non-negative")
    return QubitState(dissipate_bloch(state.bloch, gamma_pump, gamma_phi, dt))


@dataclass(frozen=True)
class ChannelStep:
    axis: tuple[float, float, float]
    angle: float
    gamma_pump: float
    gamma_phi: float
    dt: float

    def __post_init__(self):
        if self.gamma_pump < 0 or self.gamma_phi < 0:
            raise ValueError("rates must be non-negative")
        if abs(np.linalg.norm(self.axis) - 1) > 1e-9:
            raise ValueError("rotation axis must be a unit vector")

    def apply(self, state: QubitState) -> QubitState:
        """Strang split: half dissipation, rotation, half dissipation."""
        half = self.dt / 2
        v = dissipate_bloch(state.bloch, self.gamma_pump, self.gamma_phi, half)
        v = rotate_bloch(v, np.asarray(self.axis, float), self.angle)
        return QubitState(dissipate_bloch(v, self.gamma_pump, self.gamma_phi, half))
