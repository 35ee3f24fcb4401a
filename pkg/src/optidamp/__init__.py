"""Optimal viscous damping of vibrational systems via structured Lyapunov solves."""
from .errors import (BasePointError, DefectiveBaseError, InputError, LineSearchError,
                     NearDefectiveError, NumericalError, OptiDampError, StabilityError,
                     StructuralError)
from .model import (PRESETS, ModalModel, SecondOrderModel, analyze_stability, assemble_A,
                    build_problem, modal_transform)
from .spectral import eig_A, eig_count
from .lyapunov import base_solutions, dense_lyapunov_oracle, shifted_base
from .objective import DampingObjective, kkt_residual

__version__ = "0.1.0"
