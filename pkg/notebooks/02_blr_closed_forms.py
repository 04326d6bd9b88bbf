"""
Bayesian linear regression clients
==================================

A synthetic population where every optimum has a closed form: the global
optimum, each client's least-squares estimate and the personalized optimum
for any regularization weight.
"""

# %%
import numpy as np

from dpditto import blr
from dpditto.core import seeded_rng

params = blr.BlrParams(n=5, b=10, d=3, rho=8.0, zeta2=0.5, sigma2=0.5)
inst = blr.generate_instance(params, rng=seeded_rng(0))
print("omega*:", inst.omega_star)
print("client estimates:\n", inst.u_hat)

# %% [markdown]
# Moving lambda from 0 to 2 slides each personalized optimum from the
# client's own estimate towards the (noisy) global mean.

# %%
z = np.random.default_rng(1).normal(0, 0.3, size=(5, 3))
for lam in (0.0, 0.5, 1.0, 1.5, 2.0):
    p = blr.perturbed_personalized_optimum(inst, lam, z)
    spread = np.linalg.norm(p - p.mean(axis=0), axis=1).mean()
    print(f"lambda={lam:.1f}  mean distance to centroid={spread:.4f}")

# %%
print("sigma_w^2:", blr.sigma_w2(params))
print("problem constants (mu, L):", blr.problem_constants(inst))
print(blr.assumption_params(inst))
