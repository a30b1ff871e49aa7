# %% [markdown]
# # A toy world with a closed-form denoiser
#
# Two Gaussian components of smooth 4x16x16 patterns stand in for objects.
# Views are the pattern rolled along the width. Because the prior is a
# Gaussian mixture, the posterior mean is exact, so the "denoiser" is
# Bayes optimal at every noise level.

# %%
import numpy as np

from hqnoise.collector import generate
from hqnoise.scheduler import build_schedule, initial_noise
from hqnoise.testbed import PromptContext, ToyDenoiser, two_component_world

world = two_component_world(num_views=6, view_shift=1)
print("views shape:", world.views_shape, "weights:", world.weights)
print("objects for seeds 1..10:", [world.object_for_seed(s) for s in range(1, 11)])

# %% [markdown]
# Sampling from pure noise with the prompt of object 1 lands near its
# view means.

# %%
sched = build_schedule(25)
den = ToyDenoiser(world)
z_T = initial_noise(world.views_shape, 3, sched.q)
out = generate(z_T, PromptContext(world.reference(1)), den, sched, 6.0)
for k in range(2):
    print(f"mean |x - object {k}| = {np.abs(out - world.view_means(k)).mean():.3f}")
