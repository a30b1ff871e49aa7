"""Classifier-free guidance and per-view guidance-scale schedules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hqnoise.errors import ConfigError, DimensionError


def empty_prompt(c):
    """The null prompt: zeros with the shape of ``c``."""
    return np.zeros_like(np.asarray(c, dtype=np.float64))


def combine_cfg(mu_cond, mu_uncond, gamma):
    """``mu_uncond + gamma * (mu_cond - mu_uncond)``.

    Evaluated as ``(1 - gamma) * mu_uncond + gamma * mu_cond`` so that
    ``gamma`` of 0 and 1 return the inputs bit for bit. ``gamma`` may be a scalar or an array broadcastable against the
    predictions (one scale per view).
    """
    if np.shape(mu_cond) != np.shape(mu_uncond):
        raise DimensionError(
            f"conditional {np.shape(mu_cond)} vs unconditional {np.shape(mu_uncond)}"
        )
    return (1.0 - gamma) * mu_uncond + gamma * mu_cond


@dataclass(frozen=True)
class CfgSchedule:
    mode: str = "constant"
    gamma_front: float = 1.0
    gamma_back: float = 1.0

    def __post_init__(self):
        if self.mode not in ("constant", "triangular"):
            raise ConfigError(f"unknown CFG mode {self.mode!r}")

    @classmethod
    def constant(cls, gamma):
        return cls("constant", float(gamma), float(gamma))

    @classmethod
    def triangular(cls, front, back):
        return cls("triangular", float(front), float(back))

    def values(self, num_views):
        return np.array([gamma_at_view(self, i, num_views) for i in range(num_views)])

    def min(self, num_views=2):
        return float(self.values(num_views).min())

    def describe(self):
        if self.mode == "constant":
            return f"constant:{self.gamma_front:g}"
        return f"triangular:{self.gamma_front:g}->{self.gamma_back:g}"

    @classmethod
    def parse(cls, text):
        """Inverse of :meth:`describe`; also accepts a bare number."""
        text = str(text).strip()
        if ":" not in text:
            return cls.constant(float(text))
        mode, rest = text.split(":", 1)
        if mode == "constant":
            return cls.constant(float(rest))
        if mode == "triangular":
            front, back = rest.split("->")
            return cls.triangular(float(front), float(back))
        raise ConfigError(f"cannot parse CFG schedule {text!r}")


def gamma_at_view(schedule: CfgSchedule, view_index: int, num_views: int) -> float:
    """Guidance scale for one view.

    Triangular mode runs linearly from ``gamma_front`` at view 0 to
    ``gamma_back`` at view ``num_views // 2`` and back again, so that
    ``gamma(i) == gamma(num_views - i)``. For odd view counts the two
    middle views both sit at ``gamma_back``.
    """
    if not 0 <= view_index < num_views:
        raise IndexError(f"view {view_index} outside 0..{num_views - 1}")
    if schedule.mode == "constant":
        return schedule.gamma_front
    if num_views < 2:
        raise ConfigError("triangular CFG needs at least two views")
    back = num_views // 2
    d = min(view_index, num_views - view_index) / back
    return schedule.gamma_front + (schedule.gamma_back - schedule.gamma_front) * d
