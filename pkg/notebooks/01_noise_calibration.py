"""
Calibrating client noise
========================

How much Gaussian noise each client adds before uploading, and how the
aggregate noise grows with the number of rounds it has to cover.
"""

# %%
import numpy as np

from dpditto import dp

# Sensitivity of a clipped model trained on a client's local set.
clip_c, local_size = 20.0, 100
delta_s = dp.sensitivity(clip_c, local_size)
print("sensitivity:", delta_s)

# %% [markdown]
# The budget covers all T uploads, so both standard deviations grow like sqrt(T).

# %%
for t in (1, 10, 30, 100):
    cal = dp.calibrate(delta_s, t, n=20, eps=10.0, delta=0.01)
    print(f"T={t:4d}  sigma_u={cal.sigma_u:.5f}  sigma_z={cal.sigma_z:.5f}  "
          f"N*sigma_u^2/sigma_z^2={20 * cal.sigma_u ** 2 / cal.sigma_z2:.12f}")

# %%
# Clipping then perturbing one upload.
rng = np.random.default_rng(0)
u = rng.normal(size=5) * 30
clipped = dp.clip_model(u, clip_c)
noisy = dp.perturb(clipped, dp.calibrate(delta_s, 30, 20, 10.0, 0.01).sigma_u, rng)
print(np.linalg.norm(u), np.linalg.norm(clipped), noisy - clipped)
