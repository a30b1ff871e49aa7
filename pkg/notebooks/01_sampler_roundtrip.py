# %% [markdown]
# # Euler sampler and its exact inverse
#
# Latents follow the variance-exploding convention `z = x + sigma * eps`.
# The network sees `z / sqrt(sigma^2 + 1)`, and each Euler step has an
# algebraic inverse when the same model output is reused.

# %%
import numpy as np

from hqnoise.scheduler import PredictionType, build_schedule, descale, euler_step, invert_step

sched = build_schedule(25, sigma_max=700.0)
print("first sigmas:", np.round(sched.sigmas[:5], 3))
print("q = sqrt(sigma_max^2 + 1) =", round(sched.q, 7))

# %% [markdown]
# Descaling brings the initial noise to unit variance.

# %%
rng = np.random.default_rng(0)
z_T = rng.standard_normal((4, 16, 16)) * sched.q
print("std raw %.2f, descaled %.4f" % (z_T.std(), descale(z_T, sched.sigmas[0]).std()))

# %% [markdown]
# One step down and back up returns the input to round-off for both
# prediction types.

# %%
for kind in PredictionType:
    out = rng.standard_normal(z_T.shape)
    z_prev = euler_step(z_T, out, sched.sigmas[0], sched.sigmas[1], kind)
    back = invert_step(z_prev, out, sched.sigmas[0], sched.sigmas[1], kind)
    print(f"{kind.value:>13}: max |back - z| / max |z| = {np.abs(back - z_T).max() / np.abs(z_T).max():.1e}")
