"""Forest training: supervised (information gain) and completely random trees.

Both modes grow axis-aligned binary trees. Supervised trees draw a bootstrap
sample, inspect ceil(sqrt(d)) attributes per node, and take the candidate
split with the highest information gain. Unsupervised trees use all rows,
pick one attribute uniformly among those not constant in the node, and split
at a uniform random point inside the node's value range. All randomness comes
from one splitmix64 stream per tree, so a seed fixes the forest exactly.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import Categorical, Dataset, Schema
from .errors import ConfigError, EmptyDataError, MissingLabelsError
from .forest import CAT, Forest, LEAF, NUM, NodeTest, Tree
from .rng import SplitMix64, tree_stream

MODES = ("supervised", "unsupervised")


@dataclass
class TrainConfig:
    """Training parameters; bootstrap defaults to true only for supervised mode."""

    mode: str
    n_trees: int
    seed: int = 0
    min_node_size: int = 2
    max_depth_cap: int | None = None
    bootstrap: bool | None = None
    threads: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_node_size < 1:
            raise ConfigError(f"min_node_size must be >= 1, got {self.min_node_size}")
        if self.max_depth_cap is not None and self.max_depth_cap < 0:
            raise ConfigError("max_depth_cap must be >= 0")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")

    @property
    def resolved_bootstrap(self) -> bool:
        if self.bootstrap is None:
            return self.mode == "supervised"
        return self.bootstrap

    def to_meta(self) -> dict:
        """Training summary persisted with the model; excludes execution details."""
        return {
            "mode": self.mode,
            "n_trees": self.n_trees,
            "seed": self.seed,
            "min_node_size": self.min_node_size,
            "max_depth_cap": self.max_depth_cap,
            "bootstrap": self.resolved_bootstrap,
        }


@dataclass(frozen=True)
class SplitCandidate:
    """A node test together with the information gain it achieves."""

    test: NodeTest
    gain: float


def entropy(labels) -> float:
    """Shannon entropy in bits of a label multiset."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        return 0.0
    counts = np.bincount(labels)
    counts = counts[counts > 0]
    p = counts / len(labels)
    return float(-(p * np.log2(p)).sum())


def information_gain(parent, left, right) -> float:
    """Entropy of the parent minus the size-weighted entropy of the children."""
    parent = np.asarray(parent, dtype=np.int64)
    n = len(parent)
    if n == 0 or len(parent) != len(left) + len(right):
        raise ValueError("children must partition the parent")
    wl = len(left) / n
    wr = len(right) / n
    return entropy(parent) - wl * entropy(left) - wr * entropy(right)


def _xlogx_table(n: int) -> np.ndarray:
    """table[m] = m * log2(m), table[0] = 0; lets gain sweeps stay in integer counts."""
    table = np.zeros(n + 1)
    if n >= 1:
        m = np.arange(1, n + 1, dtype=np.float64)
        table[1:] = m * np.log2(m)
    return table


# -- unsupervised splits ------------------------------------------------------

_REJECT_ROUNDS = 16
_THRESHOLD_ROUNDS = 8


def _unsup_split(XT, rows, stream: SplitMix64, schema: Schema):
    """Pick (test, true-branch mask) for one node, or None if no attribute varies.

    The attribute is uniform over attributes not constant within the node:
    rejection sampling over all attributes, falling back to an exact scan of
    the node after repeated misses, keeps the choice uniform either way.
    """
    d = XT.shape[0]
    j = -1
    col = None
    for _ in range(_REJECT_ROUNDS):
        cand = stream.below(d)
        c = XT[cand][rows]
        if c.min() < c.max():
            j, col = cand, c
            break
    if j < 0:
        sub = XT[:, rows]
        varying = np.nonzero(sub.min(axis=1) < sub.max(axis=1))[0]
        if len(varying) == 0:
            return None
        j = int(varying[stream.below(len(varying))])
        col = sub[j]
    kind = schema.kinds[j]
    if isinstance(kind, Categorical):
        present = np.unique(col)
        v = float(present[stream.below(len(present))])
        return NodeTest(j, category=int(v)), col == v
    lo = float(col.min())
    hi = float(col.max())
    thr = None
    for _ in range(_THRESHOLD_ROUNDS):
        t = lo + stream.f01() * (hi - lo)
        if lo < t < hi:
            thr = t
            break
    if thr is None:
        thr = math.nextafter(lo, hi)
    return NodeTest(j, threshold=thr), col >= thr


def build_unsupervised_node(
    X: np.ndarray, rows: np.ndarray, rng: SplitMix64, schema: Schema, min_node_size: int = 2
) -> NodeTest | None:
    """Completely random node test for a row subset, or None to declare a leaf."""
    rows = np.asarray(rows, dtype=np.int64)
    if len(rows) <= min_node_size:
        return None
    picked = _unsup_split(np.asarray(X, dtype=np.float64).T, rows, rng, schema)
    return picked[0] if picked else None


# -- supervised splits --------------------------------------------------------


def _best_numeric_splits(sub, y, n_classes, xlogx):
    """Per-attribute best (scaled gain, sorted-position) over a value-sorted sweep.

    ``sub`` is (attrs, rows). Gains are n_rows * gain so candidates compare
    without a division; -inf marks positions that are not value boundaries.
    Returns (gains, positions, sorted_values).
    """
    a, nn = sub.shape
    order = np.argsort(sub, axis=1)
    sv = np.take_along_axis(sub, order, axis=1)
    sy = y[order]
    onehot = sy[:, :, None] == np.arange(n_classes)
    cum = np.cumsum(onehot, axis=1, dtype=np.int64)
    total = cum[:, -1, :]
    n_parent_term = xlogx[nn] - xlogx[total].sum(axis=1)
    left = cum[:, :-1, :]
    right = total[:, None, :] - left
    nl = np.arange(1, nn, dtype=np.int64)
    nr = nn - nl
    left_term = xlogx[nl][None, :] - xlogx[left].sum(axis=2)
    right_term = xlogx[nr][None, :] - xlogx[right].sum(axis=2)
    gains = n_parent_term[:, None] - left_term - right_term
    boundary = sv[:, :-1] != sv[:, 1:]
    gains = np.where(boundary, gains, -np.inf)
    pos = np.argmax(gains, axis=1)
    return gains[np.arange(a), pos], pos, sv


def _numeric_threshold(sv_row, pos: int) -> float:
    """Midpoint between adjacent distinct values, nudged up if rounding hits the left."""
    lo = float(sv_row[pos])
    hi = float(sv_row[pos + 1])
    mid = 0.5 * (lo + hi)
    return mid if mid > lo else hi


def _best_categorical_split(col, y, nn, n_classes, xlogx, size):
    """Best (scaled gain, value) for one categorical attribute, or None."""
    vals = col.astype(np.int64)
    counts = np.zeros((size, n_classes), dtype=np.int64)
    np.add.at(counts, (vals, y), 1)
    count_v = counts.sum(axis=1)
    usable = (count_v > 0) & (count_v < nn)
    if not usable.any():
        return None
    total = counts.sum(axis=0)
    n_parent_term = xlogx[nn] - xlogx[total].sum()
    left_term = xlogx[count_v] - xlogx[counts].sum(axis=1)
    right = total[None, :] - counts
    right_term = xlogx[nn - count_v] - xlogx[right].sum(axis=1)
    gains = n_parent_term - left_term - right_term
    gains = np.where(usable, gains, -np.inf)
    v = int(np.argmax(gains))
    return float(gains[v]), v


def _sup_split(XT, rows, y, stream: SplitMix64, schema: Schema, n_classes, xlogx, n_sample):
    """Best gain split over a random attribute sample, or None if no gain is positive.

    Ties go to the lowest attribute index, then the lowest threshold or
    category value.
    """
    d = XT.shape[0]
    nn = len(rows)
    attrs = np.sort(stream.sample_without_replacement(d, n_sample))
    numeric_attrs = [int(a) for a in attrs if not isinstance(schema.kinds[a], Categorical)]
    best_gain = 0.0
    best_test: NodeTest | None = None

    num_results = {}
    if numeric_attrs:
        sub = XT[np.ix_(numeric_attrs, rows)]
        gains, positions, sv = _best_numeric_splits(sub, y, n_classes, xlogx)
        for i, a in enumerate(numeric_attrs):
            num_results[a] = (gains[i], i, positions[i], sv)

    for a in attrs:
        a = int(a)
        kind = schema.kinds[a]
        if isinstance(kind, Categorical):
            found = _best_categorical_split(XT[a][rows], y, nn, n_classes, xlogx, kind.size)
            if found is None:
                continue
            gain, v = found
            test = NodeTest(a, category=v)
        else:
            gain, i, pos, sv = num_results[a]
            if gain == -np.inf:
                continue
            test = NodeTest(a, threshold=_numeric_threshold(sv[i], pos))
        if gain > best_gain:
            best_gain = gain
            best_test = test
    if best_test is None:
        return None
    if best_test.is_categorical:
        mask = XT[best_test.attr][rows] == best_test.category
    else:
        mask = XT[best_test.attr][rows] >= best_test.threshold
    return SplitCandidate(best_test, best_gain / nn), mask


def attribute_sample_size(d: int) -> int:
    """ceil(sqrt(d)) attributes inspected per supervised node."""
    return min(d, math.ceil(math.sqrt(d)))


def build_supervised_node(
    X: np.ndarray,
    rows: np.ndarray,
    labels: np.ndarray,
    rng: SplitMix64,
    schema: Schema,
    min_node_size: int = 2,
) -> SplitCandidate | None:
    """Best-gain node split for a row subset, or None to declare a leaf.

    A leaf is declared when the node is label-pure, has at most
    ``min_node_size`` rows, or no sampled candidate achieves positive gain.
    """
    rows = np.asarray(rows, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(rows) <= min_node_size:
        return None
    y = labels[rows]
    if (y == y[0]).all():
        return None
    XT = np.asarray(X, dtype=np.float64).T
    n_classes = int(labels.max()) + 1
    xlogx = _xlogx_table(len(rows))
    picked = _sup_split(
        XT, rows, y, rng, schema, n_classes, xlogx, attribute_sample_size(XT.shape[0])
    )
    return picked[0] if picked else None


# -- tree growth --------------------------------------------------------------


class _TreeBuilder:
    """Accumulates node records in depth-first pre-order, false branch first."""

    def __init__(self):
        self.kind: list[int] = []
        self.attr: list[int] = []
        self.param: list[float] = []
        self.false_child: list[int] = []
        self.true_child: list[int] = []
        self.leaf_ordinal: list[int] = []
        self.parent: list[int] = []
        self.parent_branch: list[bool] = []
        self.depth: list[int] = []
        self.leaf_nodes: list[int] = []

    def add(self, parent: int, branch: bool, depth: int) -> int:
        idx = len(self.kind)
        self.kind.append(LEAF)
        self.attr.append(-1)
        self.param.append(0.0)
        self.false_child.append(-1)
        self.true_child.append(-1)
        self.leaf_ordinal.append(-1)
        self.parent.append(parent)
        self.parent_branch.append(branch)
        self.depth.append(depth)
        if parent >= 0:
            if branch:
                self.true_child[parent] = idx
            else:
                self.false_child[parent] = idx
        return idx

    def set_leaf(self, idx: int) -> None:
        self.leaf_ordinal[idx] = len(self.leaf_nodes)
        self.leaf_nodes.append(idx)

    def set_test(self, idx: int, test: NodeTest) -> None:
        if test.is_categorical:
            self.kind[idx] = CAT
            self.param[idx] = float(test.category)
        else:
            self.kind[idx] = NUM
            self.param[idx] = float(test.threshold)
        self.attr[idx] = test.attr

    def build(self) -> Tree:
        return Tree(
            np.asarray(self.kind, dtype=np.int8),
            np.asarray(self.attr, dtype=np.int32),
            np.asarray(self.param, dtype=np.float64),
            np.asarray(self.false_child, dtype=np.int32),
            np.asarray(self.true_child, dtype=np.int32),
            np.asarray(self.leaf_ordinal, dtype=np.int32),
            np.asarray(self.parent, dtype=np.int32),
            np.asarray(self.parent_branch, dtype=np.bool_),
            np.asarray(self.depth, dtype=np.int32),
            np.asarray(self.leaf_nodes, dtype=np.int32),
        )


def _grow_tree(XT, labels, rows0, stream, schema, cfg: TrainConfig, xlogx, n_classes) -> Tree:
    supervised = cfg.mode == "supervised"
    n_sample = attribute_sample_size(XT.shape[0]) if supervised else 0
    b = _TreeBuilder()
    stack = [(rows0, 0, -1, False)]
    while stack:
        rows, depth, parent, branch = stack.pop()
        idx = b.add(parent, branch, depth)
        picked = None
        at_cap = cfg.max_depth_cap is not None and depth >= cfg.max_depth_cap
        if len(rows) > cfg.min_node_size and not at_cap:
            if supervised:
                y = labels[rows]
                if not (y == y[0]).all():
                    found = _sup_split(XT, rows, y, stream, schema, n_classes, xlogx, n_sample)
                    if found is not None:
                        picked = (found[0].test, found[1])
            else:
                picked = _unsup_split(XT, rows, stream, schema)
        if picked is None:
            b.set_leaf(idx)
            continue
        test, mask = picked
        b.set_test(idx, test)
        stack.append((rows[mask], depth + 1, idx, True))
        stack.append((rows[~mask], depth + 1, idx, False))
    return b.build()


def _train_one(t: int, XT, labels, n, cfg: TrainConfig, schema, xlogx, n_classes) -> Tree:
    stream = tree_stream(cfg.seed, t)
    if cfg.resolved_bootstrap:
        rows0 = stream.below_block(n, n)
    else:
        rows0 = np.arange(n, dtype=np.int64)
    return _grow_tree(XT, labels, rows0, stream, schema, cfg, xlogx, n_classes)


_FORK_PAYLOAD: dict = {}


def _train_worker(t: int) -> list:
    p = _FORK_PAYLOAD
    tree = _train_one(
        t, p["XT"], p["labels"], p["n"], p["cfg"], p["schema"], p["xlogx"], p["n_classes"]
    )
    return [getattr(tree, name) for name in Tree.__slots__ if name != "max_depth"]


def train_forest(dataset: Dataset, config: TrainConfig) -> Forest:
    """Train a forest on a dataset; identical seeds give identical forests.

    Tree ``t`` consumes only its own random stream, so results do not depend
    on the thread count and trees always come back ordered by index.
    """
    if dataset.n == 0:
        raise EmptyDataError("cannot train on an empty dataset")
    labels = dataset.labels
    n_classes = 0
    if config.mode == "supervised":
        if labels is None:
            raise MissingLabelsError("supervised training requires labels")
        n_classes = int(labels.max()) + 1
    XT = np.ascontiguousarray(dataset.X.T)
    xlogx = _xlogx_table(dataset.n) if config.mode == "supervised" else np.zeros(1)
    n = dataset.n

    if config.threads > 1 and hasattr(os, "fork"):
        import multiprocessing

        _FORK_PAYLOAD.update(
            XT=XT,
            labels=labels,
            n=n,
            cfg=config,
            schema=dataset.schema,
            xlogx=xlogx,
            n_classes=n_classes,
        )
        try:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=config.threads, mp_context=ctx) as pool:
                raw = list(pool.map(_train_worker, range(config.n_trees)))
            trees = [Tree(*arrays) for arrays in raw]
        finally:
            _FORK_PAYLOAD.clear()
    else:
        trees = [
            _train_one(t, XT, labels, n, config, dataset.schema, xlogx, n_classes)
            for t in range(config.n_trees)
        ]
    return Forest(
        trees,
        dataset.schema,
        dataset.bounds,
        kind=config.mode,
        seed=config.seed,
        config=config.to_meta(),
    )
