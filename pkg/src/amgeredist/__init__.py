"""Element-agglomeration AMGe hierarchies with coarse-level redistribution,
driving multilevel Monte Carlo for mixed Darcy flow."""

from .amge import Hierarchy, HierarchyConfig, build_hierarchy, plan_hierarchy
from .darcy import BoundaryConfig, DarcyOperator, SolveError
from .kernels import BACKEND
from .meshtopo import build_dofs, build_mesh
from .mlmc import (MlmcProblem, classify_regime, fit_rates, mc_estimate, mc_sample_requirement, mlmc_estimate,
                   optimal_samples, run_mlmc, scaled_root_cost, total_cost)
from .partitioner import PartitionSpec, partition_graph
from .relmat import Relation, SparseMatrix, bool_multiply, multiply
from .sampler import FieldParams, FieldSampler

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BoundaryConfig", "DarcyOperator", "FieldParams", "FieldSampler", "Hierarchy", "HierarchyConfig",
    "MlmcProblem", "PartitionSpec", "Relation", "SolveError", "SparseMatrix", "bool_multiply", "build_dofs",
    "build_hierarchy", "build_mesh", "classify_regime", "fit_rates", "mc_estimate", "mc_sample_requirement",
    "mlmc_estimate", "multiply", "optimal_samples", "partition_graph", "plan_hierarchy", "run_mlmc",
    "scaled_root_cost", "total_cost",
]
