"""Periodic Gaussian random field initial conditions.

Draws are ``u0(x) = g(sin^2(x/2))`` with ``g`` a zero-mean Gaussian process
with squared-exponential covariance.  Because ``sin^2(x/2)`` is 2*pi-periodic
(and symmetric about pi), every draw is periodic by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .quadrature import TWO_PI

__all__ = [
    "GrfSampler",
    "uniform_sensors",
    "squared_exponential",
    "jittered_cholesky",
    "sample_initial_condition",
]

log = logging.getLogger(__name__)

_JITTER_START = 1e-10
_JITTER_MAX = 1e-6
# transformed coordinates closer than this are treated as one point
_MERGE_DECIMALS = 13


def uniform_sensors(n: int = 128) -> np.ndarray:
    """``n`` equally spaced points on [0, 2*pi)."""
    return TWO_PI * np.arange(n) / n


def squared_exponential(z1, z2, length_scale: float) -> np.ndarray:
    d = np.subtract.outer(np.asarray(z1, float), np.asarray(z2, float))
    return np.exp(-(d**2) / (2.0 * length_scale**2))


def jittered_cholesky(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K``, adding diagonal jitter when needed.

    Jitter starts at 1e-10 and grows by 10x up to 1e-6.  Returns the factor
    and the jitter actually used (0.0 if none was needed).
    """
    try:
        return np.linalg.cholesky(K), 0.0
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(K.shape[0])
    jitter = _JITTER_START
    while jitter <= _JITTER_MAX * (1 + 1e-12):
        try:
            return np.linalg.cholesky(K + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise np.linalg.LinAlgError(
        f"kernel matrix not positive definite even with jitter {_JITTER_MAX:g}"
    )


@dataclass(frozen=True)
class GrfSampler:
    """Sampler for periodic GRF initial conditions at fixed sensors."""

    length_scale: float = 0.5
    sensor_locations: np.ndarray = None
    seed: int = 0

    def __post_init__(self):
        if self.length_scale <= 0:
            raise ValueError("length_scale must be positive")
        x = uniform_sensors() if self.sensor_locations is None else self.sensor_locations
        x = np.array(x, dtype=np.float64)
        if x.ndim != 1 or x.size < 2:
            raise ValueError("need at least two sensor locations")
        x.setflags(write=False)
        object.__setattr__(self, "sensor_locations", x)

    @property
    def transformed(self) -> np.ndarray:
        return np.sin(0.5 * self.sensor_locations) ** 2

    def kernel(self) -> np.ndarray:
        z = self.transformed
        return squared_exponential(z, z, self.length_scale)

    def _factor(self):
        # x and 2*pi - x map to the same z; sample once per distinct z so that
        # periodicity (and the reflection symmetry) hold exactly
        z = np.round(self.transformed, _MERGE_DECIMALS)
        unique, inverse = np.unique(z, return_inverse=True)
        K = squared_exponential(unique, unique, self.length_scale)
        chol, jitter = jittered_cholesky(K)
        if jitter:
            log.debug("GRF kernel needed jitter %.1e", jitter)
        return chol, inverse

    def stream(self, index: int) -> "GrfSampler":
        """Independent sampler for parallel stream ``index`` (seed + index)."""
        return GrfSampler(self.length_scale, self.sensor_locations, self.seed + index)


def sample_initial_condition(sampler: GrfSampler, count: int) -> np.ndarray:
    """``count`` reproducible draws, one row per draw, one column per sensor."""
    if count < 1:
        raise ValueError("count must be at least 1")
    chol, inverse = sampler._factor()
    rng = np.random.default_rng(sampler.seed)
    xi = rng.standard_normal((chol.shape[0], count))
    g = chol @ xi
    return np.ascontiguousarray(g[inverse].T)
