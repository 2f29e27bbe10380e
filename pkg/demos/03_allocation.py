"""
How much time should go to direct imaging?
==========================================

The first stage only has to locate the centroid well enough to align the
sorter. Splitting photons trades alignment quality against sorter counts.
"""

import numpy as np

from twostage_spade.information import optimal_alpha, two_stage_variance
from twostage_spade.models import TWO_POINT

n = 1e4
alphas = np.linspace(0.05, 1.0, 20)
v = [two_stage_variance(a, 0.3, n, 0.0, TWO_POINT) * n / 4 for a in alphas]
print("variance (units of 4sigma^2/N) vs alpha at theta=0.3:")
for a, vi in zip(alphas, v):
    print(f"  {a:4.2f}  {vi:8.3f}")

# The optimal split is small below the Rayleigh limit and jumps to 1
# (all direct imaging) once direct detection is the better measurement.
for theta in [0.005, 0.05, 0.3, 1.0, 2.0, 2.5, 3.0]:
    print(f"alpha*({theta:5.3f}) = {optimal_alpha(theta, n, 0.0, TWO_POINT):.3f}")

# Pointing error makes alignment less valuable.
for s in [0.0, 0.05, 0.1]:
    print(f"sigma_s={s:4.2f}: alpha*(0.3) = {optimal_alpha(0.3, n, s, TWO_POINT):.3f}")
