# %% [markdown]
# # Collecting noise pairs
#
# For each seed the collector runs `n` guided steps down (strong guidance),
# then `n` inversion steps back up (weak guidance), aligning mean and std to
# the statistics recorded on the way down. The result is a pair
# `(z_T, z_tilde_T)` whose difference carries semantic information.

# %%
import numpy as np

from hqnoise.collector import CollectionConfig, collect_pair
from hqnoise.scheduler import build_schedule
from hqnoise.testbed import two_component_world

world = two_component_world(num_views=6, view_shift=1)
sched = build_schedule(25)
cfg = CollectionConfig(n=16)
pair = collect_pair(7, world, cfg, sched)
print("gamma1:", pair.gamma1, "gamma2:", pair.gamma2, "n:", pair.n)
print("z_T std %.2f, z_tilde_T std %.2f" % (pair.z_T.std(), pair.z_tilde_T.std()))
print("relative shift |S| / |z_T| = %.3f" % (np.linalg.norm(pair.semantic) / np.linalg.norm(pair.z_T)))

# %% [markdown]
# The shift correlates with the difference between object 1 and object 0
# patterns, pulling the noise toward the prompted object.

# %%
k = world.object_for_seed(7)
direction = world.view_means(k) - world.view_means(1 - k)
cos = np.vdot(pair.semantic, direction) / (np.linalg.norm(pair.semantic) * np.linalg.norm(direction))
print("object", k, "cosine(shift, object direction) = %.3f" % cos)
