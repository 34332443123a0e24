from .base import (BatchSampler, GradientDirection, NetworkProblem, ObjectiveOracle,
                   apply_direction, draw_batch, sample_stochastic_gradient)
from .idx import Dataset, load_idx, read_header
from .mlp import ClassificationProblem, MLPClassifier, MLPOracle, make_mlp_classifier
from .partition import DataPartition, partition
from .synthetic import SYNTHETIC_NAMES, SyntheticOracle, SyntheticProblem, make_synthetic

__all__ = [
    "BatchSampler", "ClassificationProblem", "DataPartition", "Dataset", "GradientDirection",
    "MLPClassifier", "MLPOracle", "NetworkProblem", "ObjectiveOracle", "SYNTHETIC_NAMES",
    "SyntheticOracle", "SyntheticProblem", "apply_direction", "draw_batch", "load_idx",
    "make_mlp_classifier", "make_synthetic", "partition", "read_header",
    "sample_stochastic_gradient",
]
