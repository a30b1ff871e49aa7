# %% [markdown]
# # Classifier-free guidance and per-view scales
#
# Guidance mixes the conditional and unconditional predictions. Multi-view
# models use a scale that is large at the front view and small at the back.

# %%
import numpy as np

from hqnoise.guidance import CfgSchedule, combine_cfg, gamma_at_view

rng = np.random.default_rng(1)
mu_c, mu_u = rng.standard_normal((2, 3))
for g in (0.0, 1.0, 6.0):
    print(f"gamma={g}: {np.round(combine_cfg(mu_c, mu_u, g), 3)}")
print("gamma=0 gives mu_uncond exactly:", np.array_equal(combine_cfg(mu_c, mu_u, 0.0), mu_u))

# %% [markdown]
# Triangular schedule over 21 views, front 6.0 and back 2.5.

# %%
tri = CfgSchedule.triangular(6.0, 2.5)
print(tri.describe())
print([round(gamma_at_view(tri, i, 21), 3) for i in range(21)])
