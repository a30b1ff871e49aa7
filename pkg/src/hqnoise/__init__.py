"""Noise optimization for multi-view diffusion: collect inference/inversion
noise pairs, filter them, and learn a direct noise-to-noise mapping."""

from hqnoise.collector import (
    CollectionConfig,
    NoisePair,
    align,
    collect_many,
    collect_pair,
    inference_phase,
    inversion_phase,
)
from hqnoise.edn import EdnConfig, EdnModel, TrainConfig, apply_edn, train_edn
from hqnoise.guidance import CfgSchedule, combine_cfg, gamma_at_view
from hqnoise.quality import filter_pair, filtering_rate, psnr, ssim, ssim_proxy
from hqnoise.scheduler import (
    PredictionType,
    SigmaSchedule,
    build_schedule,
    descale,
    euler_step,
    initial_noise,
    invert_step,
)
from hqnoise.testbed import PromptContext, ToyDenoiser, ToyWorld, two_component_world

__version__ = "0.1.0"
