"""Segmentation-free niche detection from spatial point clouds and stain morphology."""

from .benchmark import DropoutResult, DropoutRow, dropout_benchmark, dropout_svg
from .cluster import (
    FusedMatrix,
    KMeansResult,
    MergeTree,
    SeededKMeans,
    WardCentroidMerge,
    assemble,
    cluster_pixels,
    hierarchical_merge,
    labels_to_map,
    run_kmeans,
)
from .density import (
    GeneExpressionMap,
    GridSpec,
    compose_normalize,
    foreground_mask,
    gaussian_smooth,
    rasterize_points,
)
from .io import (
    FeatureTensor,
    FormatError,
    GrayImage,
    LabelMap,
    ParseError,
    PointCloud,
    load_gray_image,
    load_sft,
    parse_points,
    points_to_csv,
    read_feature_tensor,
    read_label_pgm,
    save_sft,
    write_feature_tensor,
    write_label_pgm,
)
from .metrics import AriScore, adjusted_rand_index, cluster_mean_expression
from .morphology import (
    ReducedFeatures,
    VarianceThresholdPCA,
    apply_pca,
    builtin_features,
    fit_pca,
    resample_to_grid,
)
from .synth import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "AriScore",
    "DropoutResult",
    "DropoutRow",
    "FeatureTensor",
    "FormatError",
    "FusedMatrix",
    "GeneExpressionMap",
    "GrayImage",
    "GridSpec",
    "KMeansResult",
    "LabelMap",
    "MergeTree",
    "ParseError",
    "PointCloud",
    "ReducedFeatures",
    "SeededKMeans",
    "SynthConfig",
    "VarianceThresholdPCA",
    "WardCentroidMerge",
    "adjusted_rand_index",
    "apply_pca",
    "assemble",
    "builtin_features",
    "cluster_mean_expression",
    "cluster_pixels",
    "compose_normalize",
    "dropout_benchmark",
    "dropout_svg",
    "fit_pca",
    "foreground_mask",
    "gaussian_smooth",
    "generate",
    "hierarchical_merge",
    "labels_to_map",
    "load_gray_image",
    "load_sft",
    "parse_points",
    "points_to_csv",
    "rasterize_points",
    "read_feature_tensor",
    "read_label_pgm",
    "resample_to_grid",
    "run_kmeans",
    "save_sft",
    "write_feature_tensor",
    "write_label_pgm",
]
