"""Identification of discrete-time linear-threshold rate networks."""
__version__ = "0.1.0"

from .errors import (DataError, InfeasibleDataError, LtnError, PartitionError, RankDeficiencyError,
                     SolverError)
from .types import DataBatch, DataSample, IdentResult, LtnModel, Partition, SaturationPattern, build_batch
from .simulate import GenerationConfig, add_noise, discretize, generate_synthetic, simulate_trajectory, step
from .partition import alpha_max, build_partition, classify, next_critical_point
from .lsq import constrained_ls
from .solver import algorithm1, algorithm2, identify, objective_J, rmse_h
from .validation import check_assumption1, grid_oracle, prop2_bound

__all__ = [
    "DataError", "InfeasibleDataError", "LtnError", "PartitionError", "RankDeficiencyError", "SolverError",
    "DataBatch", "DataSample", "IdentResult", "LtnModel", "Partition", "SaturationPattern", "build_batch",
    "GenerationConfig", "add_noise", "discretize", "generate_synthetic", "simulate_trajectory", "step",
    "alpha_max", "build_partition", "classify", "next_critical_point", "constrained_ls",
    "algorithm1", "algorithm2", "identify", "objective_J", "rmse_h",
    "check_assumption1", "grid_oracle", "prop2_bound",
]
