"""Online resource allocation with non-stationary arrivals and unknown click-through rates."""

__version__ = "0.1.0"

from .exceptions import ConfigError, DomainError, KbsimError, PolicyError
from .lp import (LinearProgram, LpSolution, LpStatus, benchmark_jd, build_optimistic_lp,
                 build_param_lp, solve)
from .model import (ArrivalSchedule, Context, ProblemInstance, ResourceSpec, build_theta_space,
                    optimistic_prob, psi, purchase_prob)
from .policies import (ConfidenceState, Decision, PolicyParams, PolicyState, SwitchMonitor,
                       alg_adv_step, alg_lp_step, check_switch, ulwe_step, update_confidence)
from .simulator import (EpisodeTrace, RegretTrace, SimulationConfig, Summary, draw_arrival,
                        replicate, run_episode)

__all__ = [
    "ArrivalSchedule", "ConfidenceState", "ConfigError", "Context", "Decision", "DomainError",
    "EpisodeTrace", "KbsimError", "LinearProgram", "LpSolution", "LpStatus", "PolicyError",
    "PolicyParams", "PolicyState", "ProblemInstance", "RegretTrace", "ResourceSpec",
    "SimulationConfig", "Summary", "SwitchMonitor", "alg_adv_step", "alg_lp_step",
    "benchmark_jd", "build_optimistic_lp", "build_param_lp", "build_theta_space",
    "check_switch", "draw_arrival", "optimistic_prob", "psi", "purchase_prob", "replicate",
    "run_episode", "solve", "ulwe_step", "update_confidence",
]
