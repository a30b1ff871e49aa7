"""Discretized Euler sampling: sigma schedule, input scaling, steps and inversion.

Latents follow the variance-exploding convention ``z_t = x + sigma_t * eps``.
The denoiser is always queried on the descaled latent
``z_t / sqrt(sigma_t**2 + 1)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from hqnoise.errors import ConfigError, DimensionError


class PredictionType(str, enum.Enum):
    V_PREDICTION = "v_prediction"
    EPSILON = "epsilon"


@dataclass(frozen=True)
class SigmaSchedule:
    """Noise levels ``sigma_T ... sigma_0`` (last entry exactly zero)."""

    sigmas: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=np.float64)
        if s.ndim != 1 or s.size < 2:
            raise ConfigError("schedule needs at least two sigmas")
        if s[-1] != 0.0 or np.any(s < 0):
            raise ConfigError("sigmas must be non-negative and end at 0")
        if np.any(np.diff(s) >= 0):
            raise ConfigError("sigmas must be strictly decreasing")
        s.setflags(write=False)
        object.__setattr__(self, "sigmas", s)

    @property
    def steps(self) -> int:
        return self.sigmas.size - 1

    @property
    def q(self) -> float:
        """Initial noise scale, ``max_t sqrt(sigma_t**2 + 1)``."""
        return float(np.sqrt(self.sigmas[0] ** 2 + 1.0))

    def pairs(self, n=None):
        """Yield ``(sigma_t, sigma_{t-1})`` for the first ``n`` denoising steps."""
        n = self.steps if n is None else n
        if not 1 <= n <= self.steps:
            raise ConfigError(f"n={n} outside 1..{self.steps}")
        for i in range(n):
            yield float(self.sigmas[i]), float(self.sigmas[i + 1])


def build_schedule(steps=50, sigma_min=0.002, sigma_max=700.0, rho=7.0) -> SigmaSchedule:
    """Karras rho-ramp from ``sigma_max`` down to ``sigma_min`` with a trailing zero."""
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    if sigma_min <= 0:
        raise ConfigError(f"sigma_min must be positive, got {sigma_min}")
    if sigma_max <= sigma_min:
        raise ConfigError("sigma_max must exceed sigma_min")
    if steps == 1:
        return SigmaSchedule(np.array([sigma_max, 0.0]))
    ramp = np.linspace(0.0, 1.0, steps)
    lo = sigma_min ** (1.0 / rho)
    hi = sigma_max ** (1.0 / rho)
    sigmas = (hi + ramp * (lo - hi)) ** rho
    sigmas[0], sigmas[-1] = sigma_max, sigma_min
    return SigmaSchedule(np.append(sigmas, 0.0))


def sigma_max_for_q(q: float) -> float:
    """Invert ``q = sqrt(sigma_max**2 + 1)``."""
    if q <= 1.0:
        raise ConfigError(f"q must exceed 1, got {q}")
    return math.sqrt(q * q - 1.0)


def descale(z, sigma_t):
    if sigma_t < 0:
        raise ConfigError(f"sigma must be non-negative, got {sigma_t}")
    return np.asarray(z, dtype=np.float64) / math.sqrt(sigma_t * sigma_t + 1.0)


def initial_noise(shape, seed, q) -> np.ndarray:
    """``q`` times standard normal draws from a generator seeded by ``seed``."""
    if q <= 0:
        raise ConfigError(f"q must be positive, got {q}")
    rng = np.random.default_rng(seed)
    return q * rng.standard_normal(shape)


def _check(z, out):
    if np.shape(z) != np.shape(out):
        raise DimensionError(f"latent shape {np.shape(z)} != model output shape {np.shape(out)}")


def _kind(kind) -> PredictionType:
    return kind if isinstance(kind, PredictionType) else PredictionType(kind)


def step_coefficients(sigma_t, sigma_prev, kind):
    """``(a, b)`` with ``z_prev = a * z_t + b * model_out``."""
    if _kind(kind) is PredictionType.EPSILON:
        return 1.0, sigma_prev - sigma_t
    s2 = sigma_t * sigma_t + 1.0
    return (1.0 + sigma_t * sigma_prev) / s2, (sigma_prev - sigma_t) / math.sqrt(s2)


def euler_step(z_t, model_out, sigma_t, sigma_prev, kind=PredictionType.EPSILON):
    """One denoising step from ``sigma_t`` to ``sigma_prev``."""
    _check(z_t, model_out)
    if sigma_prev > sigma_t:
        raise ConfigError("sigma_prev must not exceed sigma_t")
    a, b = step_coefficients(sigma_t, sigma_prev, kind)
    return a * z_t + b * model_out


def invert_step(z_prev, model_out, sigma_t, sigma_prev, kind=PredictionType.EPSILON):
    """Exact algebraic inverse of :func:`euler_step` for a given ``model_out``."""
    _check(z_prev, model_out)
    if sigma_prev > sigma_t:
        raise ConfigError("sigma_prev must not exceed sigma_t")
    if _kind(kind) is PredictionType.EPSILON:
        return z_prev - (sigma_prev - sigma_t) * model_out
    s2 = sigma_t * sigma_t + 1.0
    denom = 1.0 + sigma_t * sigma_prev
    return (s2 / denom) * z_prev - (math.sqrt(s2) / denom) * (sigma_prev - sigma_t) * model_out
