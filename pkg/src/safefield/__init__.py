"""Resilient distributed field estimation under measurement attacks.

Agents estimate only the field components they care about, exchanging
censored estimates with neighbours and clipping local innovations at a
decaying threshold so that compromised measurement streams have bounded
influence.
"""

from .attack import AttackScenario, Constant, Gaussian, Ramp, Table, apply_attack
from .estimator import FieldEstimator, Problem, WeightSchedule, run
from .field import AgentSpec, EntryLayout, FieldParameter, GridScenarioConfig, StreamIndex, build_grid_scenario
from .network import TopologyModel, complete, mesh
from .resilience import attack_amplification, check_resilience

__all__ = [
    "AgentSpec", "AttackScenario", "Constant", "EntryLayout", "FieldEstimator", "FieldParameter",
    "Gaussian", "GridScenarioConfig", "Problem", "Ramp", "StreamIndex", "Table", "TopologyModel",
    "WeightSchedule", "apply_attack", "attack_amplification", "build_grid_scenario",
    "check_resilience", "complete", "mesh", "run",
]
__version__ = "0.1.0"
