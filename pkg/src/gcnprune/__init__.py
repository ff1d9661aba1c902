"""Sparse two-layer GCNs: prune the graph, the weights and the hidden embedding,
retrain, and account for the multiply-accumulate cost of what is left."""

__version__ = "0.1.0"

from .cost import (
    CostReport,
    LayerDims,
    SparsityTriple,
    compression_ratio,
    dense_layer_macs,
    param_count,
    reduction_factor_bound,
    sparse_layer_macs_bound,
)
from .estimator import AdjacencyNormalizer, AdjacencyPruner, SparseGCNClassifier
from .exceptions import (
    ConfigError,
    DegenerateInputError,
    GcnPruneError,
    ParseError,
    ShapeError,
    TrainingError,
    ValidationError,
)
from .graphs import GraphDataset, NormalizedAdjacency, Split, build_normalized_adjacency, load_dataset
from .pruning import PruneOutcome, PruneSpec, prune_adjacency, prune_mask
from .tensor import CsrMatrix, OpCounter
from .workflow import ExperimentConfig, grid_search, iterative_sparsify

__all__ = [
    "AdjacencyNormalizer", "AdjacencyPruner", "ConfigError", "CostReport", "CsrMatrix",
    "DegenerateInputError", "ExperimentConfig", "GcnPruneError", "GraphDataset", "LayerDims",
    "NormalizedAdjacency", "OpCounter", "ParseError", "PruneOutcome", "PruneSpec", "ShapeError",
    "SparseGCNClassifier", "SparsityTriple", "Split", "TrainingError", "ValidationError",
    "build_normalized_adjacency", "compression_ratio", "dense_layer_macs", "grid_search",
    "iterative_sparsify", "load_dataset", "param_count", "prune_adjacency", "prune_mask",
    "reduction_factor_bound", "sparse_layer_macs_bound",
]
