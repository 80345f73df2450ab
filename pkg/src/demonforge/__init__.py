"""Thermodynamic bookkeeping for measurement and feedback on bipartite quantum systems."""
from .bounds import InequalityRecord, evaluate
from .kernels import BACKEND
from .measurement import IndirectMeasurement, KrausFamily, MemoryModel
from .protocol import (
    ConsistencyError,
    ErasureModel,
    FeedbackPlan,
    InitialState,
    RunLedger,
    Scenario,
    ScenarioError,
    SecondRound,
    run,
)
from .qlinalg import DensityOperator, HermitianOperator, QuantumStateError
from .scenario_io import load_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConsistencyError",
    "DensityOperator",
    "ErasureModel",
    "FeedbackPlan",
    "HermitianOperator",
    "IndirectMeasurement",
    "InequalityRecord",
    "InitialState",
    "KrausFamily",
    "MemoryModel",
    "QuantumStateError",
    "RunLedger",
    "Scenario",
    "ScenarioError",
    "SecondRound",
    "evaluate",
    "load_scenario",
    "run",
    "save_scenario",
]
