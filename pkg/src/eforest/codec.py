"""Forest autoencoding: instances to leaf-ordinal vectors and back.

Encoding is the forward pass of every tree. Decoding intersects the decision
path rules of the leaves named by an encoding into the maximal compatible
rule and returns a representative point of that region. Decoding under a
tree mask uses only the kept trees, which models operating a damaged model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Schema
from .errors import (
    ConfigError,
    EmptyMCRError,
    LeafIndexError,
    ModelMismatchError,
    SchemaMismatchError,
)
from .forest import Forest, get_path, path_to_rule
from .persistence import forest_hex_id
from .rng import permutation
from .rules import Rule, calculate_mcr, pick_interval_batch, representative


@dataclass(frozen=True)
class TreeMask:
    """Sorted, duplicate-free set of tree indexes to keep while decoding."""

    keep: tuple[int, ...]

    def __post_init__(self):
        keep = tuple(int(i) for i in self.keep)
        if not keep:
            raise ConfigError("a tree mask must keep at least one tree")
        if any(i < 0 for i in keep):
            raise ConfigError("tree indexes must be >= 0")
        if len(set(keep)) != len(keep):
            raise ConfigError("tree mask holds duplicate indexes")
        object.__setattr__(self, "keep", tuple(sorted(keep)))

    def __len__(self) -> int:
        return len(self.keep)

    @classmethod
    def from_fraction(cls, n_trees: int, keep_fraction: float, seed: int) -> "TreeMask":
        """Keep a seeded random ceil(fraction * n_trees) subset of trees.

        The same seed yields one permutation for every fraction, so masks for
        increasing fractions are nested.
        """
        if not 0.0 < keep_fraction <= 1.0:
            raise ConfigError(f"keep fraction must be in (0, 1], got {keep_fraction}")
        if keep_fraction * n_trees < 1.0:
            raise ConfigError(
                f"keep fraction {keep_fraction} of {n_trees} trees keeps none"
            )
        k = math.ceil(keep_fraction * n_trees)
        return cls(tuple(permutation(seed, n_trees)[:k]))


@dataclass(frozen=True)
class EncodingMatrix:
    """Leaf ordinals of n instances under T trees, tied to a model by its hash."""

    leaf_ids: np.ndarray
    forest_id: str

    def __post_init__(self):
        arr = np.asarray(self.leaf_ids, dtype=np.int32)
        if arr.ndim != 2:
            raise ValueError("leaf_ids must be a 2-d array")
        object.__setattr__(self, "leaf_ids", arr)

    @property
    def n(self) -> int:
        return self.leaf_ids.shape[0]

    @property
    def T(self) -> int:
        return self.leaf_ids.shape[1]


def _check_schema(model: Schema, data: Schema, reuse: bool) -> None:
    if reuse:
        if model.d != data.d:
            raise SchemaMismatchError(
                f"model expects d={model.d}, data has d={data.d}"
            )
        for j, (mk, dk) in enumerate(zip(model.kinds, data.kinds)):
            if type(mk) is not type(dk):
                raise SchemaMismatchError(
                    f"attribute {j}: model kind {mk!r} vs data kind {dk!r}"
                )
            if hasattr(mk, "size") and mk.size != dk.size:
                raise SchemaMismatchError(
                    f"attribute {j}: model has {mk.size} categories, data {dk.size}"
                )
    elif model != data:
        raise SchemaMismatchError("dataset schema differs from the model schema")


def _resolve_mask(mask: TreeMask | None, n_trees: int) -> tuple[int, ...]:
    if mask is None:
        return tuple(range(n_trees))
    if mask.keep[-1] >= n_trees:
        raise ConfigError(
            f"tree mask index {mask.keep[-1]} out of range for {n_trees} trees"
        )
    return mask.keep


def encode_batch(forest: Forest, dataset: Dataset, reuse: bool = False) -> EncodingMatrix:
    """Encode every instance; column t holds tree t's leaf ordinals.

    With ``reuse`` the dataset only needs positionally compatible attribute
    kinds, not the schema the model was trained on.
    """
    _check_schema(forest.schema, dataset.schema, reuse)
    cols = [tree.encode_batch(dataset.X) for tree in forest.trees]
    leaf_ids = np.column_stack(cols).astype(np.int32, copy=False)
    return EncodingMatrix(leaf_ids, forest_hex_id(forest))


def _validate_encoding(forest: Forest, enc: np.ndarray) -> None:
    if enc.shape != (forest.T,):
        raise LeafIndexError(
            f"encoding has {enc.shape} entries, forest has {forest.T} trees"
        )
    for t, tree in enumerate(forest.trees):
        if not 0 <= enc[t] < tree.leaf_count:
            raise LeafIndexError(
                f"tree {t}: leaf ordinal {enc[t]} out of range "
                f"(tree has {tree.leaf_count} leaves)"
            )


def decode_region(forest: Forest, encoding, mask: TreeMask | None = None) -> Rule:
    """Maximal compatible rule of an encoding: the intersection of every kept
    tree's decision-path rule, clamped to the training bounds."""
    enc = np.asarray(encoding, dtype=np.int64)
    _validate_encoding(forest, enc)
    keep = _resolve_mask(mask, forest.T)
    rules = [
        path_to_rule(get_path(forest.trees[t], int(enc[t])), forest.schema)
        for t in keep
    ]
    return calculate_mcr(rules, forest.bounds, forest.schema)


def decode(
    forest: Forest,
    encoding,
    strategy: str = "min",
    mask: TreeMask | None = None,
) -> np.ndarray:
    """Reconstruct one instance from its encoding via the rule algebra."""
    return representative(decode_region(forest, encoding, mask), strategy)


def _decode_batch_numeric(
    forest: Forest, leaf_ids: np.ndarray, strategy: str, keep: tuple[int, ...]
) -> np.ndarray:
    """Vectorized all-numeric decode; exactly equivalent to per-row decode().

    Rows are grouped by leaf per tree so each distinct path rule is extracted
    once and applied to its whole group.
    """
    n = leaf_ids.shape[0]
    d = forest.d
    lo = np.full((n, d), -np.inf)
    hi = np.full((n, d), np.inf)
    for t in keep:
        tree = forest.trees[t]
        col = leaf_ids[:, t]
        order = np.argsort(col, kind="stable")
        sorted_leaves = col[order]
        starts = np.flatnonzero(
            np.concatenate(([True], sorted_leaves[1:] != sorted_leaves[:-1]))
        )
        ends = np.append(starts[1:], n)
        for s, e in zip(starts, ends):
            attrs, glo, ghi = tree.leaf_interval_arrays(int(sorted_leaves[s]))
            if not len(attrs):
                continue
            idx = (order[s:e, None], attrs[None, :])
            lo[idx] = np.maximum(lo[idx], glo)
            hi[idx] = np.minimum(hi[idx], ghi)
    hi_open = hi != np.inf
    lo = np.where(lo == -np.inf, forest.bounds.lo, lo)
    hi = np.where(hi_open, hi, forest.bounds.hi)
    empty = (lo > hi) | ((lo == hi) & hi_open)
    if empty.any():
        i, j = np.argwhere(empty)[0]
        raise EmptyMCRError(
            f"row {i}, attribute {forest.schema.names[j]}: rule intersection is empty"
        )
    return pick_interval_batch(lo, hi, hi_open, strategy)


def decode_batch(
    forest: Forest,
    matrix: EncodingMatrix,
    strategy: str = "min",
    mask: TreeMask | None = None,
) -> Dataset:
    """Reconstruct every encoded instance as a dataset over the model schema."""
    if matrix.forest_id != forest_hex_id(forest):
        raise ModelMismatchError(
            f"encodings were produced by model {matrix.forest_id}, "
            f"decoding with {forest_hex_id(forest)}"
        )
    if matrix.T != forest.T:
        raise LeafIndexError(
            f"encoding matrix has {matrix.T} columns, forest has {forest.T} trees"
        )
    leaf_ids = matrix.leaf_ids
    for t, tree in enumerate(forest.trees):
        col = leaf_ids[:, t]
        if len(col) and (col.min() < 0 or col.max() >= tree.leaf_count):
            raise LeafIndexError(f"tree {t}: leaf ordinal out of range")
    keep = _resolve_mask(mask, forest.T)
    if matrix.n == 0:
        X = np.zeros((0, forest.d))
    elif forest.schema.all_numeric:
        X = _decode_batch_numeric(forest, leaf_ids, strategy, keep)
    else:
        X = np.stack(
            [decode(forest, leaf_ids[i], strategy, mask) for i in range(matrix.n)]
        )
    return Dataset(forest.schema, X)
