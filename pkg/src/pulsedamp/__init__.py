"""Time-dependent damping profiles for modal oscillators, with decay certificates."""

from .analysis import (DecayCertificate, Envelope, EnvelopeBound, ExponentialBound, NoDecay,
                       certify, construct_slow_solution, energy_lower_bound, random_states)
from .core import (Constant, DampingProfile, ModeState, Ramp, Smooth, Spectrum,
                   constant_matrix, energy, propagate_constant, propagate_modes,
                   propagate_profile, propagate_segment, segment_matrix)
from .design import (Design, calibrate_bipulse, design_lipschitz, design_ode_any_rate,
                     design_ode_exponential, design_pde_exponential, design_pde_ultra,
                     design_system, mollify, verify_coercive_decay)
from .errors import (CalibrationError, DesignError, HypothesisViolated, IntegrationStalled,
                     NonFiniteState, PulsedampError)
from .spectra import ModelOperator, growth_order_check, model_spectrum, pde_schedule_table

__version__ = "0.1.0"

__all__ = [
    "DecayCertificate", "Envelope", "EnvelopeBound", "ExponentialBound", "NoDecay",
    "certify", "construct_slow_solution", "energy_lower_bound", "random_states", "Constant",
    "DampingProfile", "ModeState", "Ramp", "Smooth", "Spectrum", "constant_matrix",
    "energy", "propagate_constant", "propagate_modes", "propagate_profile",
    "propagate_segment", "segment_matrix", "Design", "calibrate_bipulse",
    "design_lipschitz", "design_ode_any_rate", "design_ode_exponential",
    "design_pde_exponential", "design_pde_ultra", "design_system", "mollify",
    "verify_coercive_decay", "CalibrationError", "DesignError", "HypothesisViolated",
    "IntegrationStalled", "NonFiniteState", "PulsedampError", "ModelOperator",
    "growth_order_check", "model_spectrum", "pde_schedule_table",
]
