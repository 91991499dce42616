"""Coordinate arithmetic in the eigenbasis of the covariance operator.

Every problem in this package stores its covariance through the spectrum
(eigenvalues in non-increasing order), so norms, risks and trace
functionals all reduce to weighted sums over coordinates.  Nothing here
knows about dense matrices; the helpers are pure functions of 1-d arrays.
"""

from __future__ import annotations

import numpy as np

__all__ = ["quad_form", "excess_risk", "trace_power", "KahanSum"]


def _coords(v, d: int | None = None) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d coordinate vector, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise ValueError(
            f"dimension mismatch: vector has {arr.shape[0]} coordinates, spectrum has {d}"
        )
    return arr


def quad_form(v, spectrum, power: float = 1.0) -> float:
    """Weighted squared norm ``sum_i s_i**power * v_i**2``.

    Args:
        v: coordinates of a vector in the eigenbasis of the covariance.
        spectrum: eigenvalues, strictly positive, non-increasing.
        power: exponent applied to each eigenvalue.  ``power=0`` gives the
            plain squared Euclidean norm, negative powers are allowed
            because eigenvalues are positive.

    Returns:
        The (non-negative) weighted sum as a float.
    """
    s = np.asarray(spectrum, dtype=float)
    arr = _coords(v, s.shape[0])
    if power == 0.0:
        return float(arr @ arr)
    return float(np.sum(s**power * arr * arr))


def excess_risk(theta, problem) -> float:
    """Prediction suboptimality of ``theta`` on a quadratic objective.

    Equals ``0.5 * ||Sigma^{1/2}(theta - theta_star)||^2``; zero exactly at
    the optimum.  ``problem`` only needs ``spectrum`` and ``theta_star``
    attributes, so any problem-like object works.
    """
    star = np.asarray(problem.theta_star, dtype=float)
    diff = _coords(theta, star.shape[0]) - star
    return 0.5 * quad_form(diff, problem.spectrum, 1.0)


def trace_power(spectrum, b: float) -> float:
    """``sum_i s_i**b`` for b in [0, 1]; at b=0 this is the dimension."""
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"trace exponent must lie in [0, 1], got {b}")
    s = np.asarray(spectrum, dtype=float)
    if b == 0.0:
        return float(s.shape[0])
    return float(np.sum(s**b))


class KahanSum:
    """Compensated running sum, elementwise over an array of fixed shape.

    numpy's reductions are pairwise and fine for one-shot sums, but the
    sequential accumulators in the exact-risk recursions add one term per
    iteration for up to 10^5+ iterations, where naive accumulation loses
    digits that the rate-fitting tolerances care about.
    """

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self._comp = np.zeros(shape)

    def add(self, term) -> None:
        y = term - self._comp
        t = self.total + y
        self._comp = (t - self.total) - y
        self.total = t
