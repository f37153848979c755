"""Bayesian inversion of elliptic PDE parameters on a disk, accelerated by a
surrogate forward map built from a small set of precomputed exact solves."""

from .fem import ConductivityField, FieldSolution, Inclusion
from .mesh import Mesh, generate_disk_mesh, refine_uniform
from .oracle import CenteredInclusionProblem, exact_boundary_cos4, exact_boundary_series
from .surrogate import (
    Design,
    DiskDomain,
    Interval,
    ModelStructure,
    SurrogateStore,
    error_bound,
    evaluate_surrogate,
    preprocess,
)

__all__ = [
    "ConductivityField",
    "FieldSolution",
    "Inclusion",
    "Mesh",
    "generate_disk_mesh",
    "refine_uniform",
    "CenteredInclusionProblem",
    "exact_boundary_cos4",
    "exact_boundary_series",
    "Design",
    "DiskDomain",
    "Interval",
    "ModelStructure",
    "SurrogateStore",
    "error_bound",
    "evaluate_surrogate",
    "preprocess",
]
