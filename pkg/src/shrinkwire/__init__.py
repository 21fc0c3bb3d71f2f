"""Spectral tools for shrinking and rewiring graph convolutional networks."""

from .errors import (
    DegenerateDegreeError,
    DivergenceError,
    FormatError,
    InputError,
    PreconditionError,
    UnsupportedError,
)
from .graph import WeightedGraph, fiedler, laplacian
from .gnn import GnnModel, TrainConfig, init_model, prune_pipeline, train
from .lowrank import WidthPlan, complete_matrix, estimate_rank, plan_widths
from .data import generate_sbm, load_citation, split
from .rewiring import CoupledRewireHook, rewire
from .consensus import ConsensusSystem, run_to_consensus

__version__ = "0.1.0"
