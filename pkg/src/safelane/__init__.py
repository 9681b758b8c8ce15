"""Safety-verified interactive lane changing: neural planners wrapped by a
proceed/hesitate/abort layer that certifies a worst-case evasion trajectory,
with aggressiveness assessment of the interacting follower, plus the Monte
Carlo harness used to evaluate everything."""

from ._accel import NUMBA_ENABLED
from .core import Action, Geometry, KinematicState, Limits, WorldState, collision, step_kinematics
from .safety import EvasionProfile, FollowerMode, safe_evasion_exists
from .decision import DecisionState, Strategy, decide
from .sim import EpisodeResult, Metrics, Scenario, run_episode, run_batch, aggregate

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED",
    "Action",
    "Geometry",
    "KinematicState",
    "Limits",
    "WorldState",
    "collision",
    "step_kinematics",
    "EvasionProfile",
    "FollowerMode",
    "safe_evasion_exists",
    "DecisionState",
    "Strategy",
    "decide",
    "EpisodeResult",
    "Metrics",
    "Scenario",
    "run_episode",
    "run_batch",
    "aggregate",
    "__version__",
]
