"""Courtesy-aware longitudinal planning and simulation in mixed traffic.

An automated vehicle plans its longitudinal motion while anticipating
how the human driver behind it will respond, blending its own cost with
the follower's through an orientation angle.  The package bundles the
planner, the modeled driver and its inverse-learning fit, a small
platoon simulation, dataset ingestion, and a CLI for running episodes
and sweeps.
"""

from .cli_io import (ARTIFACT_VERSION, ExperimentConfig, cli_main,
                     export_results, extract_ngsim_vehicle,
                     load_pv_profile_csv, load_trace_csv)
from .controller import (AvConstraints, EgoisticParams, OuterSettings,
                         PlanResult, SvoConfig, egoistic_plan, plan,
                         svo_weights)
from .driver_model import (BestResponse, Demonstration, DriverWeights,
                           FitResult, HumanConstraints, fit_weights_maxent,
                           respond_to_leader)
from .dynamics import (DiscreteDynamics, LongitudinalState, build_continuous,
                       discretize_zoh, step)
from .errors import (CollisionError, FitDivergenceError,
                     InvalidParameterError, SimulationError, TraceParseError)
from .simulation import (EpisodeTrace, Scenario, TrafficMetrics,
                         compute_metrics, default_scenario, run_episode,
                         sweep_svo, synthetic_pv_profile)
from .traffic_flow import IdmParams, equilibrium_gap, idm_accel, step_fleet

__version__ = ARTIFACT_VERSION

__all__ = [
    "ARTIFACT_VERSION",
    "AvConstraints",
    "BestResponse",
    "CollisionError",
    "Demonstration",
    "DiscreteDynamics",
    "DriverWeights",
    "EgoisticParams",
    "EpisodeTrace",
    "ExperimentConfig",
    "FitDivergenceError",
    "FitResult",
    "HumanConstraints",
    "IdmParams",
    "InvalidParameterError",
    "LongitudinalState",
    "OuterSettings",
    "PlanResult",
    "Scenario",
    "SimulationError",
    "SvoConfig",
    "TraceParseError",
    "TrafficMetrics",
    "build_continuous",
    "cli_main",
    "compute_metrics",
    "default_scenario",
    "discretize_zoh",
    "egoistic_plan",
    "equilibrium_gap",
    "export_results",
    "extract_ngsim_vehicle",
    "fit_weights_maxent",
    "idm_accel",
    "load_pv_profile_csv",
    "load_trace_csv",
    "plan",
    "respond_to_leader",
    "run_episode",
    "step",
    "step_fleet",
    "svo_weights",
    "sweep_svo",
    "synthetic_pv_profile",
]
