"""
Choosing lambda
===============

The fairness-optimal lambda solves a cubic in alpha0.  More privacy noise
moves it towards local training.  Coupling that lambda with the bound gives
a joint choice of (T, lambda).
"""

# %%
import numpy as np

from dpditto import blr, bounds, dp, fairness as F, lambdaopt as LO
from dpditto.core import seeded_rng

params = blr.BlrParams(n=5, b=10, d=3, rho=8.0, zeta2=0.5, sigma2=0.5)
inst = blr.generate_instance(params, rng=seeded_rng(0))
s1 = F.s1_value(5, 0.5, 8.0, 0.5)
clip_c = 0.5 * np.sqrt(3) / (2 * 5 * s1)
print("unique stationary point:", LO.uniqueness_condition(clip_c, 3, 5, s1))

# %%
for sz2 in (0.0, 0.1, 1.0, 10.0, 100.0):
    fp = F.fairness_params_from_instance(inst, sz2)
    print(f"sigma_z^2={sz2:7.1f}  lambda*={LO.optimal_lambda(fp):.5f}")

# %%
a = blr.assumption_params(inst)
bp = bounds._derive(a, 0.5 / a.l_smooth, 0.05, 1.0, 5, 3, dp.sensitivity(clip_c, 10), 5.0, 0.01)
res = LO.joint_search(bp, F.fairness_params_from_instance(inst, 0.0), t_max=60)
print("T*:", res.t_star, "lambda*:", round(res.lambda_star, 5), "h*:", round(res.h_star, 5))
