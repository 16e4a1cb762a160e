"""Mean-field photon tunnelling between the two halves of a membrane-in-the-middle cavity.

The state is (x, p, z, phi, q): membrane position and momentum, photon
inversion, relative phase and total photon fraction.
"""
from .exceptions import (ConvergenceError, DivergenceError, DomainError, EigensolverError,
                         IntegrationError, OptoJosephsonError, SpecHashMismatch, StiffnessError,
                         UnsupportedConfigurationError)
from .integrate import (Crossing, IntegratorConfig, SectionSpec, Trajectory, integrate,
                        integrate_cartesian_oracle, section_crossings)
from .model import (ControlParams, State, StateDerivative, SystemParams, apply_symmetry,
                    control_params, derivatives, divergence, energy, jacobian)
from .scenarios import SCENARIOS, Scenario, get_scenario
from .sweep import PhaseDiagram, SweepSpec, resume_sweep, run_sweep

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "DivergenceError", "DomainError", "EigensolverError", "IntegrationError",
    "OptoJosephsonError", "SpecHashMismatch", "StiffnessError", "UnsupportedConfigurationError",
    "Crossing", "IntegratorConfig", "SectionSpec", "Trajectory", "integrate",
    "integrate_cartesian_oracle", "section_crossings",
    "ControlParams", "State", "StateDerivative", "SystemParams", "apply_symmetry",
    "control_params", "derivatives", "divergence", "energy", "jacobian",
    "SCENARIOS", "Scenario", "get_scenario",
    "PhaseDiagram", "SweepSpec", "resume_sweep", "run_sweep",
]
