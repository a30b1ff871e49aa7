# %% [markdown]
# # Why the roundtrip injects semantics
#
# With constant predictions, one step down with guidance gamma1 and back
# with gamma2 moves the latent by
# `coefficient * (gamma1 - gamma2) * (mu_cond - mu_uncond)`.
# The check runs through the real collector code path.

# %%
import numpy as np

from hqnoise.scheduler import PredictionType, build_schedule
from hqnoise.testbed import MockPredictor
from hqnoise.theory import random_trials, roundtrip_coefficient, verify_appendix, verify_multistep

mock = MockPredictor(np.array([2.0]), np.array([1.0]))
rep = verify_appendix(np.array([0.5]), mock, 6.0, 3.0, 2.0, 1.0, PredictionType.EPSILON)
print(rep.text())
print("v coefficient sigma 1 -> 0:", roundtrip_coefficient(1.0, 0.0, PredictionType.V_PREDICTION))

# %%
reports = random_trials(200, np.random.default_rng(0))
print("random draws passed:", sum(r.passed for r in reports), "/", len(reports))
rng = np.random.default_rng(1)
mock = MockPredictor(rng.standard_normal((4, 8, 8)), rng.standard_normal((4, 8, 8)))
sched = build_schedule(25)
for kind in PredictionType:
    print(verify_multistep(rng.standard_normal((4, 8, 8)) * sched.q, mock, 6.0, 0.0, sched, 16, kind).text())

# %% [markdown]
# A perturbed coefficient is caught, so the check is not vacuous.

# %%
bad = random_trials(10, np.random.default_rng(2), coefficient=lambda s, p, k: 1.01 * roundtrip_coefficient(s, p, k))
print("perturbed draws passed:", sum(r.passed for r in bad), "/", len(bad))
