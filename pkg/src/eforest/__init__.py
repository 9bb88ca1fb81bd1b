"""eforest: a tree-ensemble autoencoder.

Forests of axis-aligned decision trees encode an instance as the vector of
leaf ordinals it reaches, one per tree. Decoding intersects the decision-path
rules of those leaves into the maximal compatible rule and returns a
representative point of that region.
"""

from .codec import EncodingMatrix, TreeMask, decode, decode_batch, decode_region, encode_batch
from .data import (
    AttributeKind,
    Bounds,
    Categorical,
    Dataset,
    Numeric,
    Schema,
    load_csv,
    load_idx,
    merge_channels,
    save_csv,
    split_channels,
)
from .errors import (
    ConfigError,
    ContradictionError,
    CorruptModelError,
    EForestError,
    EmptyDataError,
    EmptyMCRError,
    FormatError,
    InvalidModelError,
    LeafIndexError,
    MetricDomainError,
    MissingLabelsError,
    ModelMismatchError,
    ParseError,
    SchemaMismatchError,
    ShapeError,
    UnknownCategoryError,
    VersionError,
)
from .forest import (
    Forest,
    NodeTest,
    Tree,
    depth_stats,
    forest_encode,
    get_path,
    path_to_rule,
    tree_encode,
)
from .metrics import ReconReport, cosine_distance, damage_curve, mse, reconstruction_report
from .persistence import load_encodings, load_model, save_encodings, save_model
from .rules import (
    CategorySet,
    Interval,
    Rule,
    calculate_mcr,
    contains,
    predicate_to_constraint,
    representative,
    rule_to_json,
    simplify,
)
from .training import SplitCandidate, TrainConfig, build_supervised_node, build_unsupervised_node, information_gain, train_forest

__version__ = "0.1.0"

__all__ = [
    "AttributeKind",
    "Bounds",
    "Categorical",
    "CategorySet",
    "ConfigError",
    "ContradictionError",
    "CorruptModelError",
    "Dataset",
    "EForestError",
    "EmptyDataError",
    "EmptyMCRError",
    "EncodingMatrix",
    "Forest",
    "FormatError",
    "Interval",
    "InvalidModelError",
    "LeafIndexError",
    "MetricDomainError",
    "MissingLabelsError",
    "ModelMismatchError",
    "NodeTest",
    "Numeric",
    "ParseError",
    "ReconReport",
    "Rule",
    "Schema",
    "SchemaMismatchError",
    "ShapeError",
    "SplitCandidate",
    "TrainConfig",
    "Tree",
    "TreeMask",
    "UnknownCategoryError",
    "VersionError",
    "calculate_mcr",
    "contains",
    "cosine_distance",
    "damage_curve",
    "decode",
    "decode_batch",
    "decode_region",
    "depth_stats",
    "encode_batch",
    "forest_encode",
    "get_path",
    "information_gain",
    "load_csv",
    "load_encodings",
    "load_idx",
    "load_model",
    "merge_channels",
    "mse",
    "path_to_rule",
    "predicate_to_constraint",
    "reconstruction_report",
    "representative",
    "rule_to_json",
    "save_csv",
    "save_encodings",
    "save_model",
    "simplify",
    "split_channels",
    "train_forest",
    "tree_encode",
    "build_supervised_node",
    "build_unsupervised_node",
]
