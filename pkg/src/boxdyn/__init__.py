"""Quantum particle in a box with moving walls: exact and numerical dynamics."""
__version__ = "0.1.0"

from .model import (BasisIndex, Domain, Grid, Parity, PhysicalParams, Variant, WallTrajectory, WaveField,
                    eigenstate, eigenvalue, phase_integral, wall_length, wall_velocity)
from .theta import jacobi_transform_theta2, theta2, theta4
from .analytic import (GaussianParams, SpectralCoefficients, basis_physical, basis_tilde, expand_initial,
                       gaussian_closed_form, gaussian_coefficients, gaussian_initial, propagate_spectral,
                       ratio_static_moving, rebase_at_reversal)
from .numeric import PropagatorConfig, propagate_numeric, propagate_series, to_physical, to_transformed
from .observables import (ProbePoint, bohm_trajectory, bohm_velocity, current, current_basis_closed, density,
                          light_cone_time, weak_momentum, weak_scan)

__all__ = [name for name in dir() if not name.startswith("_")]
