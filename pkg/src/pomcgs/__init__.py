"""Monte-Carlo graph search for POMDPs, compiled into finite-state controllers."""

from .belief import BeliefHistogram, ParticleBelief, build_beliefs, histogram, l1_distance
from .core import (
    BoxActions,
    ContractViolation,
    DiscreteActions,
    GenerativeModel,
    GridDiscretizer,
    ProblemMetadata,
    horizon_exceeded,
    max_depth,
)
from .estimator import POMCGS
from .fsc import Fsc, PolicyExecutor, export_dot, load, prune, run_episodes, save
from .heuristics import QLearningConfig, VTable, belief_vmdp, blind_value, train_vmdp
from .index import BeliefIndex, LinearIndex
from .solver import BoundPair, Planner, SolverConfig, evaluate_fsc, solve

__version__ = "0.1.0"

__all__ = [
    "BeliefHistogram", "ParticleBelief", "build_beliefs", "histogram", "l1_distance",
    "BoxActions", "ContractViolation", "DiscreteActions", "GenerativeModel", "GridDiscretizer",
    "ProblemMetadata", "horizon_exceeded", "max_depth",
    "POMCGS",
    "Fsc", "PolicyExecutor", "export_dot", "load", "prune", "run_episodes", "save",
    "QLearningConfig", "VTable", "belief_vmdp", "blind_value", "train_vmdp",
    "BeliefIndex", "LinearIndex",
    "BoundPair", "Planner", "SolverConfig", "evaluate_fsc", "solve",
]
