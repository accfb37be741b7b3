"""Decentralized stochastic saddle-point optimization with pairwise
proximity constraints between neighboring agents.
"""

from .errors import GenerationFailure, InvalidArgument, NumericFailure
from .graph import Network, fiedler_value, make_grid, make_random_geometric, match_fiedler
from .engine import (Ball, Box, Constant, HorizonConstant, Hybrid, SaddleProblem, Trajectory,
                     Unconstrained, check_lemma1, dual_step, primal_step_decentralized, run,
                     step_centralized, time_average)
from .problems import LseRange, QuadraticObjective, QuadraticProximity, SrlsObjective
from .experiments import (FieldScenario, LocalizationScenario, run_field_experiment,
                          run_localization_experiment)

__version__ = "0.1.0"

__all__ = [
    "GenerationFailure", "InvalidArgument", "NumericFailure",
    "Network", "fiedler_value", "make_grid", "make_random_geometric", "match_fiedler",
    "Ball", "Box", "Constant", "HorizonConstant", "Hybrid", "SaddleProblem", "Trajectory",
    "Unconstrained", "check_lemma1", "dual_step", "primal_step_decentralized", "run",
    "step_centralized", "time_average",
    "LseRange", "QuadraticObjective", "QuadraticProximity", "SrlsObjective",
    "FieldScenario", "LocalizationScenario", "run_field_experiment",
    "run_localization_experiment",
]
