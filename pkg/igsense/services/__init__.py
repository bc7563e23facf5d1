"""Services module - modelos diretos, inferência, sensibilidade e oráculos."""

from .bayes import InverseProblem, information_gain_at
from .factory import ProblemSetup, build_problem
from .hdsa import SensitivityReport, info_gain_gradient

__all__ = [
    "InverseProblem",
    "information_gain_at",
    "ProblemSetup",
    "build_problem",
    "SensitivityReport",
    "info_gain_gradient",
]
