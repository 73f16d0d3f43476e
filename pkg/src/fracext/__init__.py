"""Numerical toolkit for extensions of (higher-order) fractional Laplacians.

Submodules
----------
grid
    Periodic grids, spectral fields and Fourier multipliers.
bessel
    Modified Bessel functions of the second kind and Poisson kernels.
extension
    The extension tower, its traces and the weighted operator.
varcoef
    Variable-coefficient operators, fractional powers and heat extensions.
carleman
    Carleman weights, the weighted spherical spectrum and Carleman ratios.
ucp
    Unique-continuation experiments.
io, cli
    File formats and the command line front end.
"""

from .order import FractionalOrder, as_order
from .grid import (PeriodicGrid, SpectralField, forward_transform, fractional_laplacian,
                   inverse_transform, l2_norm, random_bandlimited, sobolev_norm)
from .bessel import (QuadratureError, bessel_k, kernel_tail_mass, periodized_poisson_kernel,
                     phi, poisson_kernel)
from .extension import (ExtensionField, ExtensionGrid, apply_Lb, bulk_energy, derived_field,
                        extend, neumann_trace, system_residual)
from .varcoef import (DiscreteOperator, MetricField, assemble_operator, fractional_power_apply,
                      heat_extension, heat_semigroup_apply, validate_metric)
from .carleman import (CarlemanWeight, WeightSpec, build_weight, carleman_ratio, check_weight,
                       mode_commutator_check, spherical_spectrum)
from .io import read_field, write_field

__version__ = "0.1.0"

__all__ = [
    "FractionalOrder", "as_order",
    "PeriodicGrid", "SpectralField", "forward_transform", "inverse_transform",
    "fractional_laplacian", "l2_norm", "random_bandlimited", "sobolev_norm",
    "QuadratureError", "bessel_k", "kernel_tail_mass", "periodized_poisson_kernel", "phi",
    "poisson_kernel",
    "ExtensionField", "ExtensionGrid", "apply_Lb", "bulk_energy", "derived_field", "extend",
    "neumann_trace", "system_residual",
    "DiscreteOperator", "MetricField", "assemble_operator", "fractional_power_apply",
    "heat_extension", "heat_semigroup_apply", "validate_metric",
    "CarlemanWeight", "WeightSpec", "build_weight", "carleman_ratio", "check_weight",
    "mode_commutator_check", "spherical_spectrum",
    "read_field", "write_field",
]
