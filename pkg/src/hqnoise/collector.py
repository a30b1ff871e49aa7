"""Inference-inversion noise pair collection.

Starting from random noise ``z_T``, run ``n`` guided Euler steps with scale
``gamma1``, then invert the same ``n`` steps with scale ``gamma2``. Because
``gamma1 > gamma2`` the roundtrip does not return to ``z_T``; the residual
carries the difference between conditional and unconditional predictions.
Statistics recorded on the way down are used to re-align the intermediate
tensors on the way back up.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from hqnoise.errors import ConfigError, DegenerateInputError, HQNoiseError, ProtocolError
from hqnoise.guidance import CfgSchedule, combine_cfg
from hqnoise.scheduler import (
    PredictionType,
    SigmaSchedule,
    _kind,
    descale,
    euler_step,
    initial_noise,
    invert_step,
)
from hqnoise.testbed import PromptContext, ToyDenoiser, ToyWorld

log = logging.getLogger(__name__)


def moments(x):
    """Population mean and std over every element."""
    x = np.asarray(x, dtype=np.float64)
    return float(x.mean()), float(x.std())


def align(z, target_mean, target_std):
    """Affinely map ``z`` onto the given mean and standard deviation."""
    z = np.asarray(z, dtype=np.float64)
    mu, sd = moments(z)
    if sd == 0.0:
        raise DegenerateInputError("cannot align a constant tensor")
    return target_std * (z - mu) / sd + target_mean


def align_to(z, x):
    return align(z, *moments(x))


@dataclass
class StepStats:
    z: tuple
    z_scaled: tuple
    mu_cond: tuple
    mu_uncond: tuple


@dataclass
class StatRecord:
    """Per-step ``(mean, std)`` pairs, in inference order (``t = T`` first)."""

    steps: list = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    def __getitem__(self, i) -> StepStats:
        try:
            return self.steps[i]
        except IndexError:
            raise ProtocolError(f"no recorded statistics for step {i}") from None


@dataclass(frozen=True)
class CollectionConfig:
    n: int = 16
    gamma1: CfgSchedule = field(default_factory=lambda: CfgSchedule.triangular(6.0, 2.5))
    gamma2: float = 0.0
    kind: PredictionType = PredictionType.EPSILON
    align: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        object.__setattr__(self, "kind", _kind(self.kind))
        if self.gamma1.mode == "constant":
            low = self.gamma1.gamma_front
        else:
            low = min(self.gamma1.gamma_front, self.gamma1.gamma_back)
        if low < self.gamma2:
            raise ConfigError(f"gamma1 (min {low}) must not be below gamma2 ({self.gamma2})")

    def gamma1_for(self, num_views):
        """Scalar, or a ``(V, 1, ..)`` array broadcasting over a view stack."""
        if num_views is None:
            return self.gamma1.gamma_front
        return self.gamma1.values(num_views)


def _gamma_array(gamma, ndim):
    g = np.asarray(gamma, dtype=np.float64)
    if g.ndim == 0:
        return float(g)
    return g.reshape((-1,) + (1,) * (ndim - 1))


@dataclass
class NoisePair:
    z_T: np.ndarray
    z_tilde_T: np.ndarray
    I: np.ndarray
    seed: int
    n: int
    gamma1: str
    gamma2: float
    s_rd: float | None = None
    s_hq: float | None = None

    @property
    def semantic(self):
        """Ground-truth semantic information ``z_tilde_T - z_T``."""
        return self.z_tilde_T - self.z_T


def inference_phase(z_T, prompt, predictor, schedule: SigmaSchedule, config: CollectionConfig,
                    gamma1=None):
    """Run ``config.n`` guided Euler steps; return ``(z_{T-n}, stats)``."""
    if config.n > schedule.steps:
        raise ConfigError(f"n={config.n} exceeds schedule length {schedule.steps}")
    z = np.asarray(z_T, dtype=np.float64)
    gamma = _gamma_array(config.gamma1.gamma_front if gamma1 is None else gamma1, z.ndim)
    null = prompt.null()
    stats = StatRecord()
    for sigma_t, sigma_prev in schedule.pairs(config.n):
        zs = descale(z, sigma_t)
        mu_c = predictor(zs, sigma_t, prompt)
        mu_u = predictor(zs, sigma_t, null)
        stats.steps.append(StepStats(moments(z), moments(zs), moments(mu_c), moments(mu_u)))
        eps = combine_cfg(mu_c, mu_u, gamma)
        z = euler_step(z, eps, sigma_t, sigma_prev, config.kind)
    return z, stats


def inversion_phase(z_low, stats: StatRecord, prompt, predictor, schedule: SigmaSchedule,
                    config: CollectionConfig, trace=None):
    """Invert ``config.n`` steps with scale ``gamma2``, re-aligning as recorded.

    Step ``i`` of the inversion undoes inference step ``n - 1 - i`` and reuses
    the statistics recorded at that same timestep. When ``trace`` is a list,
    every ``z_tilde_t`` is appended to it.
    """
    if len(stats) < config.n:
        raise ProtocolError(f"expected {config.n} recorded steps, found {len(stats)}")
    pairs = list(schedule.pairs(config.n))
    z = np.asarray(z_low, dtype=np.float64)
    null = prompt.null()
    for i in reversed(range(config.n)):
        sigma_t, sigma_prev = pairs[i]
        st = stats[i]
        # queried at timestep t, so descale with sigma_t
        zs = descale(z, sigma_t)
        if config.align:
            zs = align(zs, *st.z_scaled)
        mu_c = predictor(zs, sigma_t, prompt)
        mu_u = predictor(zs, sigma_t, null)
        if config.align:
            mu_c = align(mu_c, *st.mu_cond)
            mu_u = align(mu_u, *st.mu_uncond)
        eps = combine_cfg(mu_c, mu_u, config.gamma2)
        z = invert_step(z, eps, sigma_t, sigma_prev, config.kind)
        if config.align:
            z = align(z, *st.z)
        if trace is not None:
            trace.append(z)
    return z


def collect_pair(seed, world: ToyWorld, config: CollectionConfig, schedule: SigmaSchedule,
                 predictor=None) -> NoisePair:
    """Full collection for one seed: object choice, noise draw, roundtrip."""
    predictor = ToyDenoiser(world, config.kind) if predictor is None else predictor
    k = world.object_for_seed(seed)
    ref = world.reference(k)
    prompt = PromptContext(ref, None)
    z_T = initial_noise(world.views_shape, seed, schedule.q)
    z_low, stats = inference_phase(
        z_T, prompt, predictor, schedule, config, gamma1=config.gamma1_for(world.num_views)
    )
    z_tilde = inversion_phase(z_low, stats, prompt, predictor, schedule, config)
    return NoisePair(
        z_T=z_T,
        z_tilde_T=z_tilde,
        I=ref,
        seed=int(seed),
        n=config.n,
        gamma1=config.gamma1.describe(),
        gamma2=float(config.gamma2),
    )


def _collect_one(args):
    seed, world, config, schedule = args
    try:
        return seed, collect_pair(seed, world, config, schedule), None
    except HQNoiseError as exc:
        return seed, None, f"{type(exc).__name__}: {exc}"
    except FloatingPointError as exc:
        return seed, None, f"FloatingPointError: {exc}"


def collect_many(seeds, world, config, schedule, workers=1):
    """Collect pairs for many seeds; failures are isolated per seed.

    Returns ``(pairs, failures)`` with pairs in seed order and failures as
    ``(seed, message)`` tuples.
    """
    jobs = [(int(s), world, config, schedule) for s in seeds]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_collect_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_collect_one(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    pairs = [r[1] for r in results if r[1] is not None]
    failures = [(r[0], r[2]) for r in results if r[1] is None]
    for seed, msg in failures:
        log.warning("seed %d failed: %s", seed, msg)
    return pairs, failures


def with_scores(pair: NoisePair, s_rd, s_hq) -> NoisePair:
    return replace(pair, s_rd=float(s_rd), s_hq=float(s_hq))


def generate(z_T, prompt, predictor, schedule: SigmaSchedule, gamma, kind=PredictionType.EPSILON,
             n=None):
    """Guided Euler sampling from ``z_T`` over ``n`` steps (default: all)."""
    z = np.asarray(z_T, dtype=np.float64)
    gamma = _gamma_array(gamma, z.ndim)
    null = prompt.null()
    for sigma_t, sigma_prev in schedule.pairs(n):
        zs = descale(z, sigma_t)
        eps = combine_cfg(predictor(zs, sigma_t, prompt), predictor(zs, sigma_t, null), gamma)
        z = euler_step(z, eps, sigma_t, sigma_prev, kind)
    return z
