# %% [markdown]
# # Scoring and filtering pairs
#
# Each noise is scored by generating all views and comparing them with the
# object's ground truth. The proxy score `(1 - SSIM) / 2` is lower-is-better.
# A pair survives the filter when `s_rd > s_hq + m`.

# %%
from hqnoise.collector import CollectionConfig, collect_pair
from hqnoise.pipeline import Scene, filter_pairs
from hqnoise.quality import filter_pair, format_rate, psnr
from hqnoise.scheduler import build_schedule
from hqnoise.testbed import two_component_world

import numpy as np

print("PSNR of unit error at max 255: %.4f dB" % psnr(np.ones((4, 4)), np.zeros((4, 4)), 255.0))
print("equal scores rejected:", not filter_pair(0.3, 0.3, 0.0))
print("rate formatting:", format_rate(359, 1765))

# %%
world = two_component_world(num_views=6, view_shift=1)
scene = Scene(world, CollectionConfig(n=16), build_schedule(25))
pairs = [collect_pair(s, world, scene.config, scene.schedule) for s in range(1, 13)]
for m in (0.0, 0.01, 0.05):
    kept, _ = filter_pairs(pairs, m, scene)
    print(f"m={m}: retained {format_rate(len(kept), len(pairs))}")
