"""Radial cubic-quintic NLS laboratory.

Ground states of -Lap Q + w Q = Q^3 + Q^5 in three dimensions, their
linearization and unstable internal mode, the symplectic modulation
decomposition, a conservative time integrator with blow-up and scattering
detectors, and the special threshold solutions converging to the orbit.
"""

from .errors import (CQNLSError, ConfigurationError, GaugeDegenerate, GridMismatch, NoGroundState,
                     NumericError, ProjectionError, ResonanceError, SpectralFailure, StepReject)
from .evolution import EvolveConfig, TrajectoryRecord, evolve, localized_virial, step
from .functionals import (FunctionalValues, action, dist_to_orbit, energy, evaluate, mass, scale,
                          sobolev_constant, virial_K)
from .ground_state import (CUBIC_ONLY, CUBIC_QUINTIC, GroundState, GroundStateBranch, continue_branch,
                           default_grid, frequency_tangent, solve_ground_state)
from .linearized import (InternalMode, LinearizedOperators, check_spectral_inequalities,
                         dense_internal_mode, nonlinear_remainder, solve_internal_mode)
from .modulation import ModulationConfig, ModulationContext, ModulationState, decompose, reconstruct
from .radial import NormReport, RadialGrid, build_grid
from .special import (ClassificationResult, ClassifyConfig, SeriesProfile, build_profile_series, classify,
                      fit_decay_rate, make_special_initial_data, threshold_projection)

__version__ = "0.1.0"
