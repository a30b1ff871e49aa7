"""Run configuration: one JSON document plus command-line overrides.

Schema (every key optional; defaults shown by ``hqnoise config --show``)::

    {
      "master_seed": 0,
      "workers": 1,
      "schedule":   {"steps": 25, "sigma_min": 0.002, "sigma_max": 700.0, "rho": 7.0},
      "collection": {"n": 16, "gamma1": "triangular:6->2.5", "gamma2": 0.0,
                     "prediction": "epsilon", "align": true, "seeds": [1, 64]},
      "world":      {"shape": [4, 16, 16], "num_views": 6, "view_shift": 1,
                     "components": [{"seed": 1000, "std": 0.5, "weight": 0.5}, ...]},
      "filter":     {"m": 0.0, "scores": null},
      "edn":        {"channels": [16, 16, 32], "upsample": "pixel_shuffle"},
      "train":      {"lr": 0.0003, "batch_size": 8, "decay": 0.8, "decay_every": 200,
                     "epochs": 600, "shuffle": true},
      "metrics":    {"dynamic_range": 4.0}
    }

``schedule`` may give ``q`` instead of ``sigma_max``. ``seeds`` is an
inclusive ``[first, last]`` range; ``collection.seed_list`` replaces it with
an explicit list.

Randomness: the initial noise for a seed is drawn from a generator seeded
with that seed alone, so any subset of seeds can be regenerated in any
order or process. EDN initialization and batch shuffling draw from
``SeedSequence([master_seed, 1])`` and ``SeedSequence([master_seed, 2])``.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field

import numpy as np

from hqnoise.collector import CollectionConfig
from hqnoise.edn import EdnConfig, TrainConfig
from hqnoise.errors import ConfigError
from hqnoise.guidance import CfgSchedule
from hqnoise.scheduler import build_schedule, sigma_max_for_q
from hqnoise.testbed import ToyWorld, two_component_world

WORKERS_ENV = "HQNOISE_WORKERS"

DEFAULTS = {
    "master_seed": 0,
    "workers": 1,
    "schedule": {"steps": 25, "sigma_min": 0.002, "sigma_max": 700.0, "rho": 7.0},
    "collection": {
        "n": 16,
        "gamma1": "triangular:6->2.5",
        "gamma2": 0.0,
        "prediction": "epsilon",
        "align": True,
        "seeds": [1, 64],
    },
    "world": two_component_world(num_views=6, view_shift=1).to_dict(),
    "filter": {"m": 0.0, "scores": None},
    "edn": {"channels": [16, 16, 32], "upsample": "pixel_shuffle"},
    "train": {
        "lr": 3e-4,
        "batch_size": 8,
        "decay": 0.8,
        "decay_every": 200,
        "epochs": 600,
        "shuffle": True,
    },
    "metrics": {"dynamic_range": 4.0},
}

PRESETS = {
    "default": {},
    # 21 views, q = 700.0007, n = 16, triangular 6.0 -> 2.5, gamma2 = 0
    "sv3d": {
        "schedule": {"steps": 25, "sigma_max": 700.0},
        "collection": {"n": 16, "gamma1": "triangular:6->2.5", "gamma2": 0.0},
        "world": two_component_world(num_views=21, view_shift=1).to_dict(),
    },
    # 6 views, q = 36.4351, n = 25, gamma1 = 13, gamma2 = 0
    "mvadapter": {
        "schedule": {"steps": 30, "q": 36.4351},
        "collection": {"n": 25, "gamma1": "constant:13", "gamma2": 0.0},
        "world": two_component_world(num_views=6, view_shift=1).to_dict(),
    },
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "world":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _seed_state(master, stream):
    return int(np.random.SeedSequence([int(master), stream]).generate_state(1)[0])


@dataclass
class RunConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    cli_workers: int | None = None

    @classmethod
    def load(cls, path=None, preset="default", overrides=None, workers=None):
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        raw = _merge(DEFAULTS, PRESETS[preset])
        if path is not None:
            try:
                with open(path) as fh:
                    raw = _merge(raw, json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        raw = _merge(raw, overrides)
        cfg = cls(raw, workers)
        cfg.validate()
        return cfg

    def validate(self):
        schedule = self.schedule()
        if self.collection().n > schedule.steps:
            raise ConfigError(f"n={self.collection().n} exceeds the {schedule.steps}-step schedule")
        self.world()
        if self.filter_m < 0:
            raise ConfigError("filter threshold m must be >= 0")
        self.train_config()
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def dump(self):
        return json.dumps(self.raw, indent=2, sort_keys=True)

    @property
    def master_seed(self):
        return int(self.raw.get("master_seed", 0))

    @property
    def workers(self):
        """Command-line flag, then the environment variable, then the file."""
        if self.cli_workers is not None:
            return int(self.cli_workers)
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                return int(env)
            except ValueError as exc:
                raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from exc
        return int(self.raw.get("workers", 1))

    def schedule(self):
        s = dict(self.raw["schedule"])
        if "q" in s:
            s["sigma_max"] = sigma_max_for_q(float(s.pop("q")))
        return build_schedule(
            int(s.get("steps", 25)),
            float(s.get("sigma_min", 0.002)),
            float(s.get("sigma_max", 700.0)),
            float(s.get("rho", 7.0)),
        )

    def collection(self):
        c = self.raw["collection"]
        return CollectionConfig(
            n=int(c["n"]),
            gamma1=CfgSchedule.parse(c["gamma1"]),
            gamma2=float(c["gamma2"]),
            kind=c.get("prediction", "epsilon"),
            align=bool(c.get("align", True)),
        )

    def seeds(self):
        c = self.raw["collection"]
        if c.get("seed_list"):
            return [int(x) for x in c["seed_list"]]
        first, last = c["seeds"]
        if last < first:
            raise ConfigError(f"empty seed range {first}..{last}")
        return list(range(int(first), int(last) + 1))

    def world(self) -> ToyWorld:
        return ToyWorld.from_dict(self.raw["world"])

    @property
    def filter_m(self):
        return float(self.raw["filter"].get("m", 0.0))

    @property
    def score_file(self):
        return self.raw["filter"].get("scores")

    @property
    def dynamic_range(self):
        return float(self.raw["metrics"].get("dynamic_range", 4.0))

    def edn_config(self, scale):
        e = self.raw["edn"]
        return EdnConfig(
            latent_shape=tuple(self.raw["world"].get("shape", (4, 16, 16))),
            channels=tuple(e.get("channels", (16, 16, 32))),
            upsample=e.get("upsample", "pixel_shuffle"),
            scale=float(scale),
            seed=_seed_state(self.master_seed, 1),
        )

    def train_config(self):
        t = self.raw["train"]
        try:
            return TrainConfig(
                lr=float(t["lr"]),
                batch_size=int(t["batch_size"]),
                decay=float(t["decay"]),
                decay_every=int(t["decay_every"]),
                epochs=int(t["epochs"]),
                seed=_seed_state(self.master_seed, 2),
                shuffle=bool(t.get("shuffle", True)),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
