"""Parisi and TAP free energies for mixed p-spin models."""
__version__ = "0.1.0"

from .mixture import (MixtureSpec, bernoulli_entropy, mixture_eval, onsager_C,
                      plefka_condition, theta)
from .profiles import StepProfile, evaluate, restrict_to_gamma, support_max, weighted_integral
from .pde import (Boundary, GridConfig, PdeSolution, constrained_functional,
                  magnetization_fixed_point, pair_identity_residual, parisi_functional,
                  soft_boundary_f, solve_parisi)
from .optimize import (MinimizeResult, minimize_constrained, minimize_parisi, rs_fixed_point,
                       rs_free_energy, tap_limit_curve)
from .sde import (SdeRun, delta_and_energy, directional_derivative_constrained,
                  directional_derivative_unconstrained, optimality_profile, pure_state_moments,
                  simulate)
from .finite import (FiniteInstance, TapPoint, entropy_discrepancy, exact_free_energy,
                     gibbs_statistics, hamiltonian, maximize_tap, pure_state_barycentre,
                     pure_state_gap, sample_instance, tap_gradient, tap_value)
