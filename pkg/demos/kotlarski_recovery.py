"""
Recovering a measurement-error distribution from two noisy readings
===================================================================

Two error-ridden measures of the same latent regressor pin down the
distribution of the latent variable and of the error, with no side
information. Here everything is Gaussian so we can compare to the truth.
"""

import numpy as np

from latentad import FreqGrid, Sample, estimate_cfs
from latentad.simulate import standard_normals, stream

n = 100_000
xstar, u, eps, nu = standard_normals(stream(0, 1), (4, n))
sample = Sample(y=xstar + u, x=xstar + eps, w=xstar + nu)

# frequency grid on [-2, 2]
cfs = estimate_cfs(sample, FreqGrid(2.0, 401))
t = cfs.grid.values
truth = np.exp(-0.5 * t**2)

for label, est in (("latent X*", cfs.f_ft), ("error eps", cfs.feps_ft)):
    print(f"{label:10s} max |estimate - truth| = {np.max(np.abs(est - truth)):.4f}")

# a few values side by side
for k in range(0, len(t), 50):
    print(f"t = {t[k]:+.2f}   truth {truth[k]:.4f}   eps {cfs.feps_ft[k].real:.4f}")

# the deconvolved density of X* at a handful of points
from latentad import FLAT_TOP, deconv_density

b = sample.x.std() * n ** (-1 / 6)
cfs = estimate_cfs(sample, FreqGrid.for_bandwidth(b))
xs = np.linspace(-2, 2, 5)
dens = deconv_density(sample.x, FLAT_TOP, cfs, b, xs)
print("\nx      deconvolved   N(0,1) density")
for x, d in zip(xs, dens):
    print(f"{x:+.1f}   {d:.4f}        {np.exp(-x * x / 2) / np.sqrt(2 * np.pi):.4f}")
