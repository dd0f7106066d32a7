"""Finite-difference weights for the repeated-evolution estimator.

The weights a_k^(n) are the derivative row of the inverse Vandermonde matrix
on the nodes 0, 1, ..., n.  They are computed in exact rational arithmetic and
only converted to floats when combined with measured fidelities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

MAX_ORDER = 12


@dataclass(frozen=True)
class WeightVector:
    order: int
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.weights) != self.order + 1:
            raise ValueError(
                f"expected {self.order + 1} weights for order {self.order}, "
                f"got {len(self.weights)}"
            )

    def as_floats(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])

    def __iter__(self):
        return iter(self.weights)

    def __len__(self):
        return len(self.weights)


def _check_order(n):
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        raise ValueError(f"order must be an integer, got {n!r}")
    if not 1 <= n <= MAX_ORDER:
        raise ValueError(f"order must be in [1, {MAX_ORDER}], got {n}")


def vandermonde_matrix(n: int) -> list[list[int]]:
    """Vandermonde matrix on nodes 0..n; row i is [i**0, i**1, ..., i**n]."""
    _check_order(n)
    return [[i ** j for j in range(n + 1)] for i in range(n + 1)]


def _invert_exact(m: list[list[int]]) -> list[list[Fraction]]:
    """Gauss-Jordan inversion over the rationals."""
    size = len(m)
    aug = [
        [Fraction(v) for v in row] + [Fraction(int(i == j)) for j in range(size)]
        for i, row in enumerate(m)
    ]
    for col in range(size):
        pivot = next(r for r in range(col, size) if aug[r][col] != 0)
        aug[col], aug[pivot] = aug[pivot], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(size):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [row[size:] for row in aug]


def sigma_weights(n: int) -> WeightVector:
    """Weights a_0..a_n of the order-n estimator.

    Row index 1 (0-based) of the inverse Vandermonde matrix, i.e. the
    coefficients of the linear term of the interpolating polynomial, which
    are the first-derivative finite-difference weights at node 0.

    >>> [str(w) for w in sigma_weights(2)]
    ['-3/2', '2', '-1/2']
    """
    _check_order(n)
    inv = _invert_exact(vandermonde_matrix(n))
    return WeightVector(order=n, weights=tuple(inv[1]))


def weight_denominator_bound(n: int) -> int:
    """lcm(1..n); every weight of order n has a denominator dividing it."""
    _check_order(n)
    return math.lcm(*range(1, n + 1))


def combine_sigma(
    weights: WeightVector,
    r_values: Sequence[float],
    uncertainties: Sequence[float] | None = None,
):
    """Return sum_k a_k R_k.

    If per-R_k standard errors are given, returns ``(sigma, u_sigma)`` with
    ``u_sigma = sqrt(sum a_k^2 u_k^2)`` (independent measurements).
    """
    r = np.asarray(r_values, dtype=float)
    if r.shape[0] != weights.order + 1:
        raise ValueError(
            f"order {weights.order} needs {weights.order + 1} fidelities, got {r.shape[0]}"
        )
    a = weights.as_floats()
    sigma = float(np.dot(a, r)) if r.ndim == 1 else np.tensordot(a, r, axes=1)
    if uncertainties is None:
        return sigma
    u = np.asarray(uncertainties, dtype=float)
    if u.shape != r.shape:
        raise ValueError("uncertainties must match r_values in shape")
    u_sigma = np.sqrt(np.tensordot(a**2, u**2, axes=1))
    return sigma, (float(u_sigma) if r.ndim == 1 else u_sigma)
