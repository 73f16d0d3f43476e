"""Extend a band-limited datum and recover its fractional Laplacian from the Neumann trace."""

import numpy as np

from fracext import (ExtensionGrid, PeriodicGrid, extend, fractional_laplacian, l2_norm,
                     neumann_trace, random_bandlimited)

rng = np.random.default_rng(0)
grid = PeriodicGrid(1, 64)
f = random_bandlimited(grid, 8, rng)

for gamma in (0.3, 0.5, 1.5, 2.5):
    ext = extend(f, gamma, ExtensionGrid(grid, y_min=1e-5, y_max=4.0, M=128))
    target = fractional_laplacian(f, gamma)
    approx = neumann_trace(ext)
    err = l2_norm(type(f)(grid, approx.values - target.values)) / l2_norm(target)
    print(f"gamma = {gamma:4.2f}   relative Neumann-trace error = {err:.2e}")
