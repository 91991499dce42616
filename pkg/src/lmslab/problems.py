"""Synthetic least-squares problems with controlled spectrum decay and noise.

A problem is stored in the eigenbasis of its covariance: the spectrum plus
the optimum and starting point as coordinate vectors.  Generators cover the
polynomial-decay benchmark family (eigenvalues 1/i^3 with a random unit
displacement) and source-condition families where the displacement decay is
tied to a regularity exponent r and the spectrum decay to a capacity
exponent b.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import quad_form, trace_power

SCHEMA_VERSION = 1

__all__ = [
    "SpectralProblem",
    "SourceCondition",
    "make_fig1_problem",
    "make_source_problem",
    "effective_constants",
    "estimate_kurtosis_bound",
    "rotation_matrix",
    "to_dense",
    "save_problem",
    "load_problem",
]


@dataclass
class SpectralProblem:
    """A quadratic objective in its own eigenbasis.

    Attributes:
        spectrum: eigenvalues of the covariance, strictly positive and
            non-increasing.
        theta_star: coordinates of the optimum.
        theta0: coordinates of the starting point.
        sigma2: residual variance of the observation model (response noise).
        tau2: scale of the additive gradient-noise model; the noise
            covariance is ``tau2 * diag(spectrum)``.
        kurtosis: fourth-moment ratio of the input law (3 for Gaussians).
        seed: generation seed, kept for provenance.
        label: free-form tag.
    """

    spectrum: np.ndarray
    theta_star: np.ndarray
    theta0: np.ndarray
    sigma2: float = 1.0
    tau2: float = 1.0
    kurtosis: float = 3.0
    seed: int | None = None
    label: str = ""

    def __post_init__(self):
        self.spectrum = np.asarray(self.spectrum, dtype=float)
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        self.theta0 = np.asarray(self.theta0, dtype=float)
        if self.spectrum.ndim != 1 or self.spectrum.size == 0:
            raise ValueError("spectrum must be a non-empty 1-d array")
        if np.any(self.spectrum <= 0.0):
            raise ValueError("spectrum entries must be strictly positive")
        if np.any(np.diff(self.spectrum) > 0.0):
            raise ValueError("spectrum must be sorted in non-increasing order")
        d = self.spectrum.shape[0]
        if self.theta_star.shape != (d,) or self.theta0.shape != (d,):
            raise ValueError("theta_star and theta0 must match the spectrum dimension")
        if self.sigma2 < 0.0 or self.tau2 < 0.0:
            raise ValueError("noise levels must be non-negative")
        if self.kurtosis < 1.0:
            raise ValueError("kurtosis ratio must be >= 1")

    @property
    def d(self) -> int:
        return int(self.spectrum.shape[0])

    @property
    def delta0(self) -> np.ndarray:
        """Initial displacement theta0 - theta_star."""
        return self.theta0 - self.theta_star

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "spectrum": self.spectrum.tolist(),
            "theta_star": self.theta_star.tolist(),
            "theta0": self.theta0.tolist(),
            "sigma2": self.sigma2,
            "tau2": self.tau2,
            "kurtosis": self.kurtosis,
            "seed": self.seed,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SpectralProblem":
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported problem schema version: {version!r}")
        return cls(
            spectrum=np.array(doc["spectrum"], dtype=float),
            theta_star=np.array(doc["theta_star"], dtype=float),
            theta0=np.array(doc["theta0"], dtype=float),
            sigma2=float(doc["sigma2"]),
            tau2=float(doc["tau2"]),
            kurtosis=float(doc["kurtosis"]),
            seed=doc.get("seed"),
            label=doc.get("label", ""),
        )

    @property
    def problem_id(self) -> str:
        """Short content hash used in run records."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.md5(blob).hexdigest()[:12]


@dataclass
class SourceCondition:
    """Realized regularity/capacity exponents and the norms they control.

    norm_r is ``||Sigma^{r/2}(theta0 - theta_star)||^2`` and trace_b is
    ``tr Sigma^b``, both for the finite generated problem.
    """

    r: float
    b: float
    norm_r: float
    trace_b: float


def save_problem(problem: SpectralProblem, path) -> None:
    Path(path).write_text(json.dumps(problem.to_dict(), indent=2, sort_keys=True) + "\n")


def load_problem(path) -> SpectralProblem:
    return SpectralProblem.from_dict(json.loads(Path(path).read_text()))


def make_fig1_problem(d: int, seed: int = 0) -> SpectralProblem:
    """Polynomial-decay benchmark: eigenvalues 1/i^3, unit displacement.

    The optimum is a random unit vector and the starting point sits at unit
    distance from it along a random direction; response noise defaults to
    sigma2 = 1 = tau2 (experiments override per sub-protocol).  Draw order
    is theta_star first (d normals), then the displacement direction
    (d normals), so problems with the same seed are identical.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    spectrum = 1.0 / np.arange(1, d + 1, dtype=float) ** 3
    rng = np.random.default_rng(seed)
    star = rng.standard_normal(d)
    star /= np.linalg.norm(star)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    return SpectralProblem(
        spectrum=spectrum,
        theta_star=star,
        theta0=star + direction,
        sigma2=1.0,
        tau2=1.0,
        kurtosis=3.0,
        seed=seed,
        label=f"fig1-d{d}",
    )


def make_source_problem(
    d: int, b: float, r: float, seed: int = 0
) -> tuple[SpectralProblem, SourceCondition]:
    """Source-condition family: spectrum i^{-1/b}, displacement tied to r.

    The squared displacement coordinates are ``s_i^{-r} * i^{-1.01}`` so
    that the weighted norm with eigenvalue power r' converges (as d grows)
    exactly when r' >= r, making r the critical regularity exponent.  The
    top eigenvalue is 1 by construction, so step-size constraints do not
    move with (b, r).  Signs of the displacement come from the seed and are
    prefix-stable: the first d coordinates of a larger problem with the
    same seed are identical.

    Returns the problem together with its realized finite-d source
    condition (norm_r, trace_b).
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if not 0.0 < b <= 1.0:
        raise ValueError(f"capacity exponent b must lie in (0, 1], got {b}")
    if not -1.0 <= r <= 1.0:
        raise ValueError(f"regularity exponent r must lie in [-1, 1], got {r}")
    idx = np.arange(1, d + 1, dtype=float)
    spectrum = idx ** (-1.0 / b)
    rng = np.random.default_rng(seed)
    signs = 2.0 * rng.integers(0, 2, size=d) - 1.0
    delta = signs * spectrum ** (-r / 2.0) * idx ** (-0.505)
    theta_star = np.zeros(d)
    problem = SpectralProblem(
        spectrum=spectrum,
        theta_star=theta_star,
        theta0=delta,
        sigma2=1.0,
        tau2=1.0,
        kurtosis=3.0,
        seed=seed,
        label=f"source-b{b}-r{r}-d{d}",
    )
    cond = SourceCondition(
        r=r,
        b=b,
        norm_r=quad_form(delta, spectrum, r),
        trace_b=trace_power(spectrum, b),
    )
    return problem, cond


def effective_constants(problem: SpectralProblem, lam: float = 0.0) -> dict:
    """Constants governing admissible step sizes.

    R2 is the kurtosis-weighted trace (the radius constant of the input
    law), L the top eigenvalue.  gamma_max_additive is the stability limit
    1/(L+lam) of the regularized deterministic map; gamma_max_stochastic
    the 1/(2 R2) limit required with single-sample gradients.
    """
    trace = float(np.sum(problem.spectrum))
    r2 = problem.kurtosis * trace
    top = float(problem.spectrum[0])
    return {
        "R2": r2,
        "L": top,
        "trace": trace,
        "gamma_max_additive": 1.0 / (top + lam),
        "gamma_max_stochastic": 1.0 / (2.0 * r2),
    }


def estimate_kurtosis_bound(
    problem: SpectralProblem, samples: int = 100_000, seed: int = 0
) -> float:
    """Monte Carlo probe of the fourth-moment ratio of the input law.

    Draws Gaussian inputs with the problem covariance and returns the max,
    over a small fixed probe set of directions z, of
    ``mean(<z, x>^4) / (z' Sigma z)^2``.  For Gaussian inputs the population
    value is 3 in every direction.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples for a meaningful ratio")
    d = problem.d
    s = problem.spectrum
    sqrt_s = np.sqrt(s)
    rng = np.random.default_rng(seed)

    probes = [np.eye(d)[0], np.eye(d)[d - 1], np.ones(d) / np.sqrt(d)]
    z = rng.standard_normal(d)
    probes.append(z / np.linalg.norm(z))

    fourth = np.zeros(len(probes))
    done = 0
    block = 100_000
    while done < samples:
        m = min(block, samples - done)
        x = rng.standard_normal((m, d)) * sqrt_s
        for j, p in enumerate(probes):
            t = x @ p
            fourth[j] += np.sum(t**4)
        done += m
    fourth /= samples

    ratios = [fourth[j] / quad_form(p, s, 1.0) ** 2 for j, p in enumerate(probes)]
    return float(max(ratios))


def rotation_matrix(d: int, seed: int = 0) -> np.ndarray:
    """Seeded random orthogonal matrix (QR of a Gaussian, signs fixed)."""
    rng = np.random.default_rng(seed)
    q, rr = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(rr))


def to_dense(problem: SpectralProblem, rotation: np.ndarray | None = None):
    """Materialize the problem in an arbitrary orthonormal basis.

    Returns (Sigma, theta_star, theta0) as dense arrays.  With
    rotation=None the covariance is just diag(spectrum).  Useful only for
    basis-independence checks; the library itself never leaves the
    eigenbasis.
    """
    if rotation is None:
        return np.diag(problem.spectrum), problem.theta_star.copy(), problem.theta0.copy()
    q = np.asarray(rotation, dtype=float)
    if q.shape != (problem.d, problem.d):
        raise ValueError("rotation shape does not match problem dimension")
    sigma = (q * problem.spectrum) @ q.T
    return sigma, q @ problem.theta_star, q @ problem.theta0
