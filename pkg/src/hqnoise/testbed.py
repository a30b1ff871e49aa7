"""Closed-form stand-in for a multi-view diffusion denoiser.

The data distribution for view ``p`` is a Gaussian mixture whose component
means are fixed patterns rolled along the width axis by ``p * view_shift``
columns, mimicking an object seen from successive azimuths. The image
prompt ``c`` is a component's view-0 mean and selects that component; the
null prompt marginalizes over all components. With noisy latents
``z = x + sigma * eps`` the optimal denoiser is available in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import logsumexp

from hqnoise.errors import ConfigError, DimensionError, ScheduleMisuseError
from hqnoise.guidance import empty_prompt
from hqnoise.scheduler import PredictionType, _kind


@dataclass(frozen=True)
class ComponentSpec:
    """Recipe for a smooth random pattern, stored instead of raw arrays."""

    seed: int
    std: float = 0.5
    weight: float = 1.0
    amplitude: float = 1.0
    offset: float = 0.0
    smoothing: float = 1.5


def make_pattern(spec: ComponentSpec, shape) -> np.ndarray:
    """Low-pass filtered Gaussian field with unit spatial std times ``amplitude``."""
    rng = np.random.default_rng(spec.seed)
    raw = rng.standard_normal(shape)
    axes_sigma = [0.0] * (len(shape) - 2) + [spec.smoothing, spec.smoothing]
    smooth = gaussian_filter(raw, sigma=axes_sigma, mode="wrap")
    smooth = (smooth - smooth.mean()) / smooth.std()
    return spec.amplitude * smooth + spec.offset


@dataclass(frozen=True)
class ToyWorld:
    specs: tuple
    shape: tuple = (4, 16, 16)
    num_views: int = 1
    view_shift: int = 1
    means: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        specs = tuple(self.specs)
        if not specs:
            raise ConfigError("world needs at least one component")
        w = np.array([s.weight for s in specs], dtype=np.float64)
        if np.any(w <= 0):
            raise ConfigError("component weights must be positive")
        if any(s.std <= 0 for s in specs):
            raise ConfigError("component stds must be positive")
        if self.num_views < 1:
            raise ConfigError("num_views must be >= 1")
        object.__setattr__(self, "specs", specs)
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        means = np.stack([make_pattern(s, self.shape) for s in specs])
        means.setflags(write=False)
        object.__setattr__(self, "means", means)

    @classmethod
    def from_arrays(cls, means, stds, weights, num_views=1, view_shift=1):
        """World with explicit view-0 means (used for small analytic checks)."""
        means = np.asarray(means, dtype=np.float64)
        specs = tuple(
            ComponentSpec(seed=-1, std=float(s), weight=float(w)) for s, w in zip(stds, weights)
        )
        world = object.__new__(cls)
        w = np.array(weights, dtype=np.float64)
        if np.any(w <= 0):
            raise ConfigError("component weights must be positive")
        object.__setattr__(world, "specs", specs)
        object.__setattr__(world, "shape", means.shape[1:])
        object.__setattr__(world, "num_views", num_views)
        object.__setattr__(world, "view_shift", view_shift)
        means = means.copy()
        means.setflags(write=False)
        object.__setattr__(world, "means", means)
        return world

    @property
    def num_components(self):
        return len(self.specs)

    @property
    def weights(self):
        w = np.array([s.weight for s in self.specs], dtype=np.float64)
        return w / w.sum()

    @property
    def stds(self):
        return np.array([s.std for s in self.specs], dtype=np.float64)

    @property
    def views_shape(self):
        return (self.num_views,) + self.shape

    def view_mean(self, k, p):
        if len(self.shape) < 1 or p == 0:
            return self.means[k]
        return np.roll(self.means[k], p * self.view_shift, axis=-1)

    def view_means(self, k):
        """All views of component ``k`` stacked as ``(V, *shape)``."""
        return np.stack([self.view_mean(k, p) for p in range(self.num_views)])

    def reference(self, k):
        """Image prompt for component ``k``: its view-0 mean."""
        return self.means[k].copy()

    def component_for(self, c) -> int:
        c = np.asarray(c, dtype=np.float64)
        if c.shape != self.shape:
            raise DimensionError(f"prompt shape {c.shape} != world latent shape {self.shape}")
        d = ((self.means - c) ** 2).reshape(self.num_components, -1).sum(axis=1)
        return int(np.argmin(d))

    def object_for_seed(self, seed) -> int:
        """Which component a seed's object belongs to (weighted, deterministic)."""
        rng = np.random.default_rng([int(seed), 0x0B1EC7])
        return int(rng.choice(self.num_components, p=self.weights))

    def sample(self, k, rng, views=True):
        """Draw one clean latent from component ``k``."""
        mean = self.view_means(k) if views else self.means[k]
        return mean + self.specs[k].std * rng.standard_normal(mean.shape)

    def to_dict(self):
        return {
            "shape": list(self.shape),
            "num_views": self.num_views,
            "view_shift": self.view_shift,
            "components": [vars(s).copy() for s in self.specs],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            specs=tuple(ComponentSpec(**c) for c in d["components"]),
            shape=tuple(d.get("shape", (4, 16, 16))),
            num_views=int(d.get("num_views", 1)),
            view_shift=int(d.get("view_shift", 1)),
        )


def two_component_world(shape=(4, 16, 16), num_views=6, view_shift=None, std=0.5, seed=0):
    """Default 2-component world used by the demos and acceptance checks."""
    if view_shift is None:
        view_shift = max(1, shape[-1] // max(num_views, 1))
    specs = (
        ComponentSpec(seed=1000 + seed, std=std, weight=0.5),
        ComponentSpec(seed=2000 + seed, std=std, weight=0.5),
    )
    return ToyWorld(specs, shape=shape, num_views=num_views, view_shift=view_shift)


def gaussian_posterior_mean(z, sigma, mean, std):
    """``E[x | z]`` for ``x ~ N(mean, std^2 I)`` and ``z = x + sigma * eps``."""
    if sigma < 0 or std <= 0:
        raise ConfigError("need sigma >= 0 and std > 0")
    s2, v = std * std, sigma * sigma
    return (mean * v + z * s2) / (s2 + v)


def _responsibilities(z, sigma, means, stds, weights, event_axes):
    var = stds**2 + sigma**2
    var = var.reshape((-1,) + (1,) * (means.ndim - 1 - len(event_axes)))
    d = int(np.prod([z.shape[a - 1] for a in event_axes]))
    sq = ((z[None] - means) ** 2).sum(axis=event_axes)
    logp = np.log(weights).reshape(var.shape) - 0.5 * d * np.log(2 * np.pi * var) - sq / (2 * var)
    return np.exp(logp - logsumexp(logp, axis=0, keepdims=True))


def mixture_posterior_mean(z, sigma, world: ToyWorld, view=0):
    """Responsibility-weighted component posteriors.

    ``view`` is an int for a single ``world.shape`` latent, or ``None`` for a
    ``(V, *shape)`` stack where each view is treated independently.
    """
    z = np.asarray(z, dtype=np.float64)
    k = world.num_components
    if view is None:
        means = np.stack([world.view_means(j) for j in range(k)])
        event_axes = tuple(range(2, means.ndim))
    else:
        means = np.stack([world.view_mean(j, view) for j in range(k)])
        event_axes = tuple(range(1, means.ndim))
    if z.shape != means.shape[1:]:
        raise DimensionError(f"latent {z.shape} does not match world {means.shape[1:]}")
    r = _responsibilities(z, sigma, means, world.stds, world.weights, event_axes)
    post = np.stack(
        [gaussian_posterior_mean(z, sigma, means[j], world.stds[j]) for j in range(k)]
    )
    r = r.reshape(r.shape + (1,) * len(event_axes))
    return (r * post).sum(axis=0)


@dataclass(frozen=True)
class PromptContext:
    c: np.ndarray
    p: int | None = None
    is_null: bool = False

    def null(self) -> "PromptContext":
        return PromptContext(empty_prompt(self.c), self.p, True)


def v_from_epsilon(z, eps, sigma):
    """v-target equivalent to ``eps`` under the Euler step coefficients.

    ``z`` is the un-descaled latent at noise level ``sigma``.
    """
    if np.shape(z) != np.shape(eps):
        raise DimensionError(f"latent {np.shape(z)} vs eps {np.shape(eps)}")
    s = math.sqrt(sigma * sigma + 1.0)
    return s * eps - sigma * z / s


def epsilon_from_v(z, v, sigma):
    s = math.sqrt(sigma * sigma + 1.0)
    return (v + sigma * z / s) / s


def denoised(prompt: PromptContext, z, sigma, world: ToyWorld):
    """Closed-form ``E[x | z]`` under the prompt (``z`` un-descaled)."""
    view = prompt.p
    if prompt.is_null:
        return mixture_posterior_mean(z, sigma, world, view=view)
    k = world.component_for(prompt.c)
    mean = world.view_means(k) if view is None else world.view_mean(k, view)
    return gaussian_posterior_mean(z, sigma, mean, world.stds[k])


def predict(prompt: PromptContext, z_scaled, sigma, kind, world: ToyWorld):
    """Noise prediction from the descaled latent ``z_scaled``."""
    if sigma <= 0:
        raise ScheduleMisuseError("noise prediction requested at sigma == 0")
    z = np.asarray(z_scaled, dtype=np.float64) * math.sqrt(sigma * sigma + 1.0)
    eps = (z - denoised(prompt, z, sigma, world)) / sigma
    if _kind(kind) is PredictionType.EPSILON:
        return eps
    return v_from_epsilon(z, eps, sigma)


class ToyDenoiser:
    """Predictor callable ``(z_scaled, sigma, prompt) -> model output``."""

    def __init__(self, world: ToyWorld, kind=PredictionType.EPSILON):
        self.world = world
        self.kind = _kind(kind)

    def __call__(self, z_scaled, sigma, prompt: PromptContext):
        return predict(prompt, z_scaled, sigma, self.kind, self.world)


class MockPredictor:
    """Input-independent predictor returning fixed conditional/unconditional outputs."""

    def __init__(self, mu_cond, mu_uncond):
        self.mu_cond = np.asarray(mu_cond, dtype=np.float64)
        self.mu_uncond = np.asarray(mu_uncond, dtype=np.float64)
        if self.mu_cond.shape != self.mu_uncond.shape:
            raise DimensionError("mock outputs must share a shape")

    def __call__(self, z_scaled, sigma, prompt: PromptContext):
        out = self.mu_uncond if prompt.is_null else self.mu_cond
        return np.broadcast_to(out, np.shape(z_scaled)).copy()


class TinyConvDenoiser:
    """Two-layer convolutional denoiser trained at a single noise level.

    Input is the descaled latent concatenated with the prompt ``c`` along
    channels; output is the estimate of the clean latent. Used to check the
    pipeline with a learned, nonlinear predictor in place of the closed form.
    """

    def __init__(self, channels, sigma, hidden=16, seed=0):
        from hqnoise.nn import ELU, Conv2d, Sequential

        rng = np.random.default_rng(seed)
        self.sigma = float(sigma)
        self.net = Sequential(
            Conv2d(2 * channels, hidden, 3, padding=1, rng=rng),
            ELU(),
            Conv2d(hidden, channels, 3, padding=1, rng=rng),
        )

    def _inputs(self, z, c):
        zs = z / math.sqrt(self.sigma**2 + 1.0)
        c = np.broadcast_to(c, z.shape)
        return np.concatenate([zs, c], axis=1)

    def denoise(self, z, c):
        """Clean-latent estimate for a batch ``z`` of shape ``(N, C, H, W)``."""
        return self.net.forward(self._inputs(np.asarray(z, dtype=np.float64), c))

    def fit(self, world: ToyWorld, steps=1500, batch=32, lr=3e-3, seed=1):
        """Denoising score matching: regress clean samples from noisy ones."""
        from hqnoise.nn import Adam

        rng = np.random.default_rng(seed)
        opt = Adam(list(self.net.parameters()), lr=lr)
        losses = []
        for _ in range(steps):
            ks = rng.choice(world.num_components, size=batch, p=world.weights)
            x = np.stack([world.sample(k, rng, views=False) for k in ks])
            c = world.means[ks]
            z = x + self.sigma * rng.standard_normal(x.shape)
            out = self.net.forward(self._inputs(z, c))
            diff = out - x
            losses.append(float(np.mean(diff**2)))
            opt.zero_grad()
            self.net.backward(2.0 * diff / diff.size)
            opt.step()
        return np.array(losses)

    def __call__(self, z_scaled, sigma, prompt: PromptContext):
        if not math.isclose(sigma, self.sigma, rel_tol=1e-9):
            raise ScheduleMisuseError(f"denoiser trained at sigma={self.sigma}, queried at {sigma}")
        if prompt.is_null:
            raise ValueError("the tiny denoiser is conditional only")
        z = np.asarray(z_scaled, dtype=np.float64) * math.sqrt(sigma * sigma + 1.0)
        single = z.ndim == 3
        zb = z[None] if single else z
        d = self.denoise(zb, prompt.c)
        d = d[0] if single else d
        return (z - d) / sigma
