"""Numerical checks of the inference-inversion roundtrip identities.

One guided Euler step with noise prediction ``eps1`` followed by one
inversion step with ``eps2`` moves the latent by

    coefficient * (eps1 - eps2)

where the coefficient is ``sigma_prev - sigma_t`` for epsilon prediction and
``sqrt(sigma_t**2 + 1) * (sigma_prev - sigma_t) / (1 + sigma_t * sigma_prev)``
for v-prediction. With guided predictions the difference reduces to
``(gamma1 - gamma2) * (mu_cond - mu_uncond)`` whenever the predictor does not
depend on its input.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from hqnoise.collector import CollectionConfig, inference_phase, inversion_phase
from hqnoise.errors import VerificationError
from hqnoise.guidance import CfgSchedule
from hqnoise.scheduler import PredictionType, SigmaSchedule, _kind, euler_step, invert_step, step_coefficients
from hqnoise.testbed import MockPredictor, PromptContext


def roundtrip_coefficient(sigma_t, sigma_prev, kind):
    if _kind(kind) is PredictionType.EPSILON:
        return sigma_prev - sigma_t
    return math.sqrt(sigma_t**2 + 1.0) * (sigma_prev - sigma_t) / (1.0 + sigma_t * sigma_prev)


def roundtrip_delta(z_t, eps1, eps2, sigma_t, sigma_prev, kind):
    """``invert(step(z_t, eps1), eps2) - z_t``."""
    z_prev = euler_step(z_t, eps1, sigma_t, sigma_prev, kind)
    return invert_step(z_prev, eps2, sigma_t, sigma_prev, kind) - z_t


def semantic_injection_term(mu_cond, mu_uncond, gamma1, gamma2):
    return (gamma1 - gamma2) * (np.asarray(mu_cond) - np.asarray(mu_uncond))


def _one_step_schedule(sigma_t, sigma_prev):
    if sigma_prev == 0.0:
        return SigmaSchedule(np.array([sigma_t, 0.0]))
    return SigmaSchedule(np.array([sigma_t, sigma_prev, 0.0]))


@dataclass
class AppendixReport:
    kind: str
    measured: np.ndarray
    predicted: np.ndarray
    max_deviation: float
    relative_deviation: float
    tolerance: float
    params: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.relative_deviation < self.tolerance

    def summary(self):
        return {
            "kind": self.kind,
            "max_deviation": self.max_deviation,
            "relative_deviation": self.relative_deviation,
            "tolerance": self.tolerance,
            "passed": self.passed,
            **self.params,
        }

    def text(self):
        status = "PASS" if self.passed else "FAIL"
        p = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in self.params.items())
        return (
            f"[{status}] {self.kind}: max|delta - predicted| = {self.max_deviation:.3e} "
            f"(relative {self.relative_deviation:.3e}, tol {self.tolerance:.0e}) {p}"
        )


def _relative(measured, predicted):
    # relative to the predicted drift, absolute once the drift is below unit
    # scale (a zero prediction leaves only round-off to measure)
    dev = float(np.max(np.abs(measured - predicted)))
    return dev, dev / max(float(np.max(np.abs(predicted))), 1.0)


def verify_appendix(z_t, mock: MockPredictor, gamma1, gamma2, sigma_t, sigma_prev, kind,
                    tol=1e-10, coefficient=roundtrip_coefficient, strict=True):
    """Run one inference + inversion step through the collector (no alignment)
    and compare with the closed form ``coefficient * (gamma1 - gamma2) * (mu_c - mu_u)``.
    """
    kind = _kind(kind)
    z_t = np.asarray(z_t, dtype=np.float64)
    config = CollectionConfig(n=1, gamma1=CfgSchedule.constant(gamma1), gamma2=gamma2,
                              kind=kind, align=False)
    schedule = _one_step_schedule(sigma_t, sigma_prev)
    prompt = PromptContext(np.ones(z_t.shape), None)
    z_low, stats = inference_phase(z_t, prompt, mock, schedule, config)
    z_tilde = inversion_phase(z_low, stats, prompt, mock, schedule, config)
    measured = z_tilde - z_t
    predicted = coefficient(sigma_t, sigma_prev, kind) * semantic_injection_term(
        np.broadcast_to(mock.mu_cond, z_t.shape), np.broadcast_to(mock.mu_uncond, z_t.shape),
        gamma1, gamma2,
    )
    dev, rel = _relative(measured, predicted)
    report = AppendixReport(
        kind.value, measured, predicted, dev, rel, tol,
        {"gamma1": float(gamma1), "gamma2": float(gamma2),
         "sigma_t": float(sigma_t), "sigma_prev": float(sigma_prev)},
    )
    if strict and not report.passed:
        raise VerificationError(report.text())
    return report


def multistep_closed_form(schedule: SigmaSchedule, n, delta_eps, kind):
    """Total drift after ``n`` steps down and back with a constant prediction gap.

    Each step's drift is carried up through the remaining inversion steps,
    which for v-prediction rescale it by ``1 / a`` (``a`` the step's latent
    coefficient); for epsilon prediction the drifts simply add.
    """
    total = np.zeros_like(np.asarray(delta_eps, dtype=np.float64))
    carry = 1.0
    for sigma_t, sigma_prev in schedule.pairs(n):
        a, _ = step_coefficients(sigma_t, sigma_prev, kind)
        total = total + carry * roundtrip_coefficient(sigma_t, sigma_prev, kind) * delta_eps
        carry /= a
    return total


def verify_multistep(z_T, mock: MockPredictor, gamma1, gamma2, schedule, n, kind, tol=1e-10,
                     strict=True):
    kind = _kind(kind)
    z_T = np.asarray(z_T, dtype=np.float64)
    config = CollectionConfig(n=n, gamma1=CfgSchedule.constant(gamma1), gamma2=gamma2,
                              kind=kind, align=False)
    prompt = PromptContext(np.ones(z_T.shape), None)
    z_low, stats = inference_phase(z_T, prompt, mock, schedule, config)
    measured = inversion_phase(z_low, stats, prompt, mock, schedule, config) - z_T
    gap = semantic_injection_term(np.broadcast_to(mock.mu_cond, z_T.shape),
                                  np.broadcast_to(mock.mu_uncond, z_T.shape), gamma1, gamma2)
    predicted = multistep_closed_form(schedule, n, gap, kind)
    dev, rel = _relative(measured, predicted)
    report = AppendixReport(f"{kind.value}/n={n}", measured, predicted, dev, rel, tol,
                            {"gamma1": float(gamma1), "gamma2": float(gamma2)})
    if strict and not report.passed:
        raise VerificationError(report.text())
    return report


def first_order_ladder(z_t, predictor, prompt, gamma1, gamma2, sigma_t, step_sizes, kind):
    """Deviation from the closed form for an input-dependent predictor.

    For each step size ``h`` runs one step from ``sigma_t`` to ``sigma_t - h``
    and back, and returns ``max|measured - predicted| / h`` where the
    prediction evaluates ``mu_cond - mu_uncond`` at the starting latent. The
    ratio should shrink as ``h`` does.
    """
    kind = _kind(kind)
    z_t = np.asarray(z_t, dtype=np.float64)
    out = []
    for h in step_sizes:
        sigma_prev = sigma_t - h
        schedule = _one_step_schedule(sigma_t, sigma_prev)
        config = CollectionConfig(n=1, gamma1=CfgSchedule.constant(gamma1), gamma2=gamma2,
                                  kind=kind, align=False)
        z_low, stats = inference_phase(z_t, prompt, predictor, schedule, config)
        measured = inversion_phase(z_low, stats, prompt, predictor, schedule, config) - z_t
        zs = z_t / math.sqrt(sigma_t**2 + 1.0)
        gap = semantic_injection_term(predictor(zs, sigma_t, prompt),
                                      predictor(zs, sigma_t, prompt.null()), gamma1, gamma2)
        predicted = roundtrip_coefficient(sigma_t, sigma_prev, kind) * gap
        out.append(float(np.max(np.abs(measured - predicted))) / h)
    return np.array(out)


def random_trials(n_trials, rng, kinds=(PredictionType.EPSILON, PredictionType.V_PREDICTION),
                  shape=(4, 8, 8), tol=1e-10, coefficient=roundtrip_coefficient):
    """Randomized appendix checks with constant mock predictors."""
    reports = []
    for i in range(n_trials):
        kind = kinds[i % len(kinds)]
        sigma_t = float(rng.uniform(0.05, 50.0))
        sigma_prev = float(rng.uniform(0.0, sigma_t))
        gamma2 = float(rng.uniform(0.0, 5.0))
        gamma1 = gamma2 + float(rng.uniform(0.0, 10.0))
        mock = MockPredictor(rng.standard_normal(shape), rng.standard_normal(shape))
        z = rng.standard_normal(shape) * math.sqrt(sigma_t**2 + 1.0)
        reports.append(verify_appendix(z, mock, gamma1, gamma2, sigma_t, sigma_prev, kind,
                                       tol=tol, coefficient=coefficient, strict=False))
    return reports


def write_report(reports, text_path, json_path):
    lines = [r.text() for r in reports]
    failed = sum(not r.passed for r in reports)
    lines.append(f"{len(reports) - failed}/{len(reports)} checks passed")
    with open(text_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    summary = {
        "passed": failed == 0,
        "checks": len(reports),
        "failed": failed,
        "worst_relative_deviation": max((r.relative_deviation for r in reports), default=0.0),
        "kinds": sorted({r.kind.split("/")[0] for r in reports}),
    }
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary
