"""Hypergraph representation learning with tuple-wise attention scoring.

Feature generation (biased hypergraph walks + skip-gram, or a tied-weight
adjacency encoder), variable-size hyperedge scoring, link prediction, node
classification, and outsider detection, with a deterministic CLI.
"""

__version__ = "1.0.0"

from .errors import CheckpointError, DataError, DivergenceError
from .hypergraph import (Hyperedge, Hypergraph, Node, TupleSample,
                         build_hypergraph, decompose_pairwise, downsample,
                         edge_key, sample_negatives, split_train_test)
from .model import (FEATURE_MODES, POOL_MODES, VARIANTS, ModelConfig,
                    ModelParams, batch_probs, score_tuple, total_loss)
from .skipgram import (EmbeddingTable, SkipGramConfig, features_for_graph,
                       train_skipgram)
from .training import (Adam, Checkpoint, EpochStats, TrainConfig,
                       fine_tune_min_pool, load_checkpoint, predict_outsider,
                       save_checkpoint, train)
from .walks import WalkConfig, isolated_nodes, simulate_walks

__all__ = [
    "CheckpointError", "DataError", "DivergenceError",
    "Hyperedge", "Hypergraph", "Node", "TupleSample",
    "build_hypergraph", "decompose_pairwise", "downsample", "edge_key",
    "sample_negatives", "split_train_test",
    "FEATURE_MODES", "POOL_MODES", "VARIANTS",
    "ModelConfig", "ModelParams", "batch_probs", "score_tuple", "total_loss",
    "EmbeddingTable", "SkipGramConfig", "features_for_graph",
    "train_skipgram",
    "Adam", "Checkpoint", "EpochStats", "TrainConfig", "fine_tune_min_pool",
    "load_checkpoint", "predict_outsider", "save_checkpoint", "train",
    "WalkConfig", "isolated_nodes", "simulate_walks",
    "__version__",
]
