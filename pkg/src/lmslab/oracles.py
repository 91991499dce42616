"""Stochastic first-order oracles for the quadratic objective.

Three oracle kinds are supported.  The multiplicative oracle is the
single-sample least-mean-squares gradient (noise scales with the current
error).  The additive oracles assume the covariance itself is known and
only the cross term is noisy: either resampled from observations
(AdditiveSampled) or replaced by an exactly Gaussian perturbation with
covariance tau2 * Sigma (AdditiveGaussian).  The Gaussian variant is what
the exact risk oracles in :mod:`lmslab.analytic` model, so it is the
default wherever simulated and analytic results are compared.

Noise stream contract
---------------------
Replication streams are derived as
``default_rng(SeedSequence(entropy=base_seed, spawn_key=(cell_id, rep)))``
so that any (cell, replication) pair owns an independent stream no matter
in which order cells execute.  Within a stream, one iteration consumes:

* ``d + 1`` standard normals for observation-based oracles (features
  first, response noise last), regardless of sigma2;
* ``d`` standard normals for AdditiveGaussian when tau2 > 0, none when
  tau2 == 0.

Batched runners draw the same variates in the same order (row-major
blocks), so vectorized and one-step-at-a-time execution see identical
noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "OracleKind",
    "Observation",
    "replication_rng",
    "sample_observation",
    "additive_gradient",
    "additive_gaussian_gradient",
    "stochastic_gradient",
]


class OracleKind(Enum):
    ADDITIVE_SAMPLED = "additive_sampled"
    ADDITIVE_GAUSSIAN = "additive_gaussian"
    MULTIPLICATIVE = "multiplicative"

    @classmethod
    def parse(cls, name: "OracleKind | str") -> "OracleKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown oracle {name!r}; expected one of: {valid}") from None


@dataclass
class Observation:
    """One (input, response) pair in eigenbasis coordinates."""

    x: np.ndarray
    y: float


def replication_rng(base_seed: int, cell_id: int = 0, rep: int = 0) -> np.random.Generator:
    """Independent generator for one replication of one experiment cell."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(cell_id, rep))
    return np.random.default_rng(ss)


def sample_observation(problem, rng: np.random.Generator) -> Observation:
    """Draw one observation from the well-specified Gaussian model.

    Features have independent eigenbasis coordinates with variances given
    by the spectrum; the response is the optimal linear predictor plus
    centered noise of variance sigma2.  Consumes exactly d+1 normals.
    """
    d = problem.d
    z = rng.standard_normal(d + 1)
    x = np.sqrt(problem.spectrum) * z[:d]
    eps = np.sqrt(problem.sigma2) * z[d]
    return Observation(x=x, y=float(x @ problem.theta_star + eps))


def additive_gradient(theta, obs: Observation, problem) -> np.ndarray:
    """Known-covariance gradient with a sampled cross term.

    Returns ``Sigma theta - y x`` coordinate-wise; its conditional mean
    over the observation is the exact gradient Sigma (theta - theta_star).
    """
    return problem.spectrum * np.asarray(theta, dtype=float) - obs.y * obs.x


def additive_gaussian_gradient(theta, problem, rng: np.random.Generator) -> np.ndarray:
    """Exact gradient perturbed by Gaussian noise with covariance tau2*Sigma."""
    s = problem.spectrum
    grad = s * (np.asarray(theta, dtype=float) - problem.theta_star)
    if problem.tau2 > 0.0:
        grad = grad - np.sqrt(problem.tau2 * s) * rng.standard_normal(problem.d)
    return grad


def stochastic_gradient(theta, obs: Observation) -> np.ndarray:
    """Single-sample least-squares gradient ``(<x, theta> - y) x``."""
    theta = np.asarray(theta, dtype=float)
    return (float(obs.x @ theta) - obs.y) * obs.x
