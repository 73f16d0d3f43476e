"""Build Carleman weights for random sparse sequences and audit them."""

import numpy as np

from fracext import WeightSpec, build_weight, check_weight, spherical_spectrum
from fracext.carleman import random_sequence

rng = np.random.default_rng(1)
spectrum = spherical_spectrum(1, 0.0, 16)
print("first eigenvalues:", np.round(spectrum.eigenvalues[:5], 6))

for tau in (16.0, 128.0, 1024.0):
    rep = check_weight(build_weight(WeightSpec(random_sequence(rng), tau)), spectrum)
    print(f"tau = {tau:6.0f}  ok = {rep.ok}  C = {rep.C:.3f}  min gap = {rep.min_gap:.3f}")
