"""Linearize-and-contract solver for fully nonlinear even-order parabolic systems on flat tori."""
from .fixed_point import (BallSpec, ContractionTrace, SolveResult, bootstrap_diagnostic, contraction_map,
                          measure_contraction, solve_nonlinear, verify_uniqueness)
from .holder import (ChristoffelSpec, HolderNormReport, SpaceTimeSection, parabolic_holder_norm,
                     parallel_transport, verify_interpolation)
from .jet_core import (Jet, LinearOperatorSpec, NonlinearOperatorSpec, TorusGrid, check_strong_ellipticity,
                       evaluate_operator, linearize, principal_symbol, spectral_jet)
from .linear_solver import (LinearProblem, StepperConfig, check_garding, gronwall_check, schauder_ratio,
                            solve_linear, solve_principal)
from .problems import catalog, get_card, manufacture

__version__ = "0.1.0"
