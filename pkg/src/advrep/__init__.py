"""Domain-adversarial representation learning with layer-aware attribution
manifolds: adversarial training, Shapley / integrated-gradients attribution,
neighbor embeddings, clustering metrics, and Leiden stratification."""

from .autodiff import ComputeGraph, Tensor, backward, finite_diff_grad
from .attribution import (
    AttributionMatrix,
    BackgroundSet,
    integrated_gradients,
    select_background,
    surrogate_attributions,
    train_surrogate,
    vanilla_explain,
    violin_transform,
)
from .boosting import GradientBoostedClassifier
from .data import Dataset, SynthConfig, collapse_duplicate_genes, log_transform, synth_generate
from .embedding import Embedding2D, embed_2d, pca
from .estimators import DannClassifier, LeidenClustering, NeighborEmbedding2D
from .graph import ClusterAssignment, KnnGraph, knn_graph, leiden, rb_quality
from .metrics import (
    ScoreCurve,
    calinski_harabasz,
    lowess,
    minmax_normalize,
    score_series,
    silhouette,
)
from .nn import (
    CAPTURE_LAYERS,
    ActivationMatrix,
    DannConfig,
    DannParams,
    capture_activations,
    forward_full,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .optim import OptimizerState, adamw_step
from .training import (
    EpochRecord,
    TrainConfig,
    TrainingRecord,
    dann_batch_loss,
    run_cv,
    run_training_with_snapshots,
    stratified_kfold,
    train_epoch,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationMatrix", "AttributionMatrix", "BackgroundSet", "CAPTURE_LAYERS",
    "ComputeGraph", "Tensor", "backward", "finite_diff_grad",
    "ClusterAssignment", "DannClassifier", "DannConfig", "DannParams", "Dataset",
    "Embedding2D", "EpochRecord", "GradientBoostedClassifier", "KnnGraph",
    "LeidenClustering", "NeighborEmbedding2D", "OptimizerState", "ScoreCurve",
    "SynthConfig", "TrainConfig", "TrainingRecord", "adamw_step",
    "calinski_harabasz", "capture_activations", "collapse_duplicate_genes",
    "dann_batch_loss", "embed_2d", "forward_full", "init_params",
    "integrated_gradients", "knn_graph", "leiden", "load_checkpoint",
    "log_transform", "lowess", "minmax_normalize", "pca", "rb_quality",
    "run_cv", "run_training_with_snapshots", "save_checkpoint",
    "score_series", "select_background", "silhouette", "stratified_kfold",
    "surrogate_attributions", "synth_generate", "train_epoch",
    "train_surrogate", "vanilla_explain", "violin_transform",
]
