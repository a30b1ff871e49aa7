# %% [markdown]
# # Training the encoder-decoder network
#
# The network maps `[z_T / scale, I]` to the shift `S`. A realizable target
# (a fixed convolution of the input) shows the optimizer and backward pass
# at work; a short run keeps this script quick.

# %%
import numpy as np

from hqnoise.edn import EdnConfig, EdnModel, TrainConfig, evaluate_loss, linear_task_pairs, train_edn

pairs, kernel = linear_task_pairs(count=16)
model = EdnModel(EdnConfig(channels=(16, 16, 32), seed=0))
before = evaluate_loss(model, pairs)
result = train_edn(pairs, model, TrainConfig(lr=1e-3, epochs=60, batch_size=8, seed=0))
print("loss before %.4f, after 60 epochs %.4f" % (before, result.losses[-1]))
print("learning rate at epochs 0, 200, 400:", [TrainConfig().lr_at(e) for e in (0, 200, 400)])

# %% [markdown]
# A zero-initialized network leaves the noise unchanged, which is the
# baseline the trained network must beat.

# %%
from hqnoise.edn import apply_edn

zero = EdnModel(EdnConfig(scale=700.0)).zero_()
z = np.random.default_rng(0).standard_normal((6, 4, 16, 16)) * 700
print("zero EDN is identity:", np.array_equal(apply_edn(zero, z, z[0]), z))
