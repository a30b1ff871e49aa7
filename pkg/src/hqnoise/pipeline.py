"""Generation, scoring and paired comparison on the toy world.

These helpers glue the sampler, collector, EDN and metrics together the way
the batch commands use them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import binomtest

from hqnoise.collector import NoisePair, collect_pair, generate
from hqnoise.edn import apply_edn
from hqnoise.quality import filter_pair, perceptual_score, psnr, ssim, ssim_proxy
from hqnoise.scheduler import initial_noise
from hqnoise.testbed import PromptContext, ToyDenoiser

MODES = ("standard", "inversion", "with-edn")


@dataclass(frozen=True)
class Scene:
    """Everything needed to generate and score one seed's object."""

    world: object
    config: object
    schedule: object
    dynamic_range: float = 4.0

    def predictor(self):
        return ToyDenoiser(self.world, self.config.kind)

    def gamma(self):
        return self.config.gamma1_for(self.world.num_views)

    def ground_truth(self, seed):
        return self.world.view_means(self.world.object_for_seed(seed))

    def reference(self, seed):
        return self.world.reference(self.world.object_for_seed(seed))

    def generate(self, z_T, seed):
        prompt = PromptContext(self.reference(seed), None)
        return generate(z_T, prompt, self.predictor(), self.schedule, self.gamma(), self.config.kind)

    def score(self, z_T, seed):
        """Mean per-view perceptual proxy of the generation from ``z_T``."""
        out = self.generate(z_T, seed)
        return perceptual_score(out, self.ground_truth(seed), dynamic_range=self.dynamic_range)

    def view_metrics(self, z_T, seed):
        out = self.generate(z_T, seed)
        gt = self.ground_truth(seed)
        rows = []
        for v in range(out.shape[0]):
            rows.append(
                {
                    "view": v,
                    "psnr": psnr(out[v], gt[v], self.dynamic_range),
                    "ssim": ssim(out[v], gt[v], self.dynamic_range),
                    "proxy": ssim_proxy(out[v], gt[v], self.dynamic_range),
                }
            )
        return out, rows


def score_pair(scene: Scene, pair: NoisePair):
    """``(s_rd, s_hq)`` for a collected pair."""
    return scene.score(pair.z_T, pair.seed), scene.score(pair.z_tilde_T, pair.seed)


def filter_pairs(pairs, m=0.0, scene: Scene | None = None, external=None, warn=None):
    """Split pairs into retained ones (scores attached) and a skip list.

    Scores come from ``external`` (``seed -> (s_rd, s_hq)``) when given,
    otherwise from the pair itself if already scored, otherwise from
    ``scene``.
    """
    kept, skipped = [], []
    for p in pairs:
        if external is not None:
            if p.seed not in external:
                skipped.append(p.seed)
                if warn:
                    warn(f"seed {p.seed}: no external score, skipped")
                continue
            s_rd, s_hq = external[p.seed]
        elif p.s_rd is not None and p.s_hq is not None:
            s_rd, s_hq = p.s_rd, p.s_hq
        else:
            s_rd, s_hq = score_pair(scene, p)
        p.s_rd, p.s_hq = float(s_rd), float(s_hq)
        if filter_pair(p.s_rd, p.s_hq, m):
            kept.append(p)
    return kept, skipped


def initial_for_mode(scene: Scene, seed, mode, model=None):
    z_T = initial_noise(scene.world.views_shape, seed, scene.schedule.q)
    if mode == "standard":
        return z_T
    if mode == "inversion":
        return collect_pair(seed, scene.world, scene.config, scene.schedule).z_tilde_T
    if mode == "with-edn":
        if model is None:
            raise ValueError("with-edn mode needs a trained model")
        return apply_edn(model, z_T, scene.reference(seed))
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


@dataclass
class Comparison:
    seeds: list
    scores: dict

    def mean(self, mode):
        return float(np.mean(self.scores[mode]))

    def wins(self, mode, baseline="standard"):
        """Number of seeds where ``mode`` scores strictly lower (better)."""
        return int(np.sum(np.array(self.scores[mode]) < np.array(self.scores[baseline])))

    def sign_test(self, mode, baseline="standard"):
        """One-sided sign test p-value that ``mode`` beats ``baseline``; ties dropped."""
        a = np.array(self.scores[mode])
        b = np.array(self.scores[baseline])
        better = int(np.sum(a < b))
        worse = int(np.sum(a > b))
        if better + worse == 0:
            return 1.0
        return float(binomtest(better, better + worse, 0.5, alternative="greater").pvalue)


def compare_modes(scene: Scene, seeds, model=None, modes=MODES):
    scores = {m: [] for m in modes}
    for seed in seeds:
        for mode in modes:
            scores[mode].append(scene.score(initial_for_mode(scene, seed, mode, model), seed))
    return Comparison(list(seeds), scores)
