"""Output-feedback control of Markov jump linear systems over lossy channels."""
__version__ = "0.1.0"

from .channels import MarkovChannel, stationary_distribution, validate_channel
from .closedloop import build_closed_loop, check_separation, empirical_moments, simulate
from .control_care import solve_control_care
from .errors import JumpCtlError, SolverError, ValidationError
from .filter_care import solve_filter_care, verify_lmi_feasibility
from .model import MjlsModel, validate_model

__all__ = [
    "MarkovChannel", "MjlsModel", "JumpCtlError", "SolverError", "ValidationError",
    "build_closed_loop", "check_separation", "empirical_moments", "simulate",
    "solve_control_care", "solve_filter_care", "stationary_distribution",
    "validate_channel", "validate_model", "verify_lmi_feasibility",
]
