"""geoprior: feature-distribution geometry for long-tailed classification.

Per-class covariance eigen-geometries and their similarity, closed-form
angle/inner-product distributions of random unit vectors, feature
uncertainty perturbation guided by head-class geometry, and a three-stage
training scheme, all verified at desk scale on synthetic long-tailed data.
"""

__version__ = "0.1.0"

from .dataio import FeatureSet, SynthConfig, generate_longtailed, load_features, save_features
from .fur import AugmentedBatch, FurConfig, compose_balanced_batch, fur_perturb
from .geometry import (
    ClassSimilarityTable,
    GeometryBasis,
    alignment_matrix,
    class_similarity_table,
    geometry_of,
    geometry_similarity,
    most_similar_head,
    top_k_eigenvalue_ratio,
)
from .linalg import EigenDecomposition, covariance, sym_eigen
from .model import Model, TrainConfig, evaluate, forward, load_model, save_model, train_step
from .pipeline import ModelConfig, RunReport, run_three_stage

__all__ = [
    "AugmentedBatch",
    "ClassSimilarityTable",
    "EigenDecomposition",
    "FeatureSet",
    "FurConfig",
    "GeometryBasis",
    "Model",
    "ModelConfig",
    "RunReport",
    "SynthConfig",
    "TrainConfig",
    "alignment_matrix",
    "class_similarity_table",
    "compose_balanced_batch",
    "covariance",
    "evaluate",
    "forward",
    "fur_perturb",
    "generate_longtailed",
    "geometry_of",
    "geometry_similarity",
    "load_features",
    "load_model",
    "most_similar_head",
    "run_three_stage",
    "save_features",
    "save_model",
    "sym_eigen",
    "top_k_eigenvalue_ratio",
    "train_step",
]
