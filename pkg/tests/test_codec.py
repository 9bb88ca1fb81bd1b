"""Encoding and decoding: mask handling, region extraction, representative
reconstruction on both code paths, and every mismatch error."""

import numpy as np
import pytest

from eforest.codec import (
    EncodingMatrix,
    TreeMask,
    decode,
    decode_batch,
    decode_region,
    encode_batch,
)
from eforest.data import Bounds, Categorical, Dataset, Numeric, Schema
from eforest.errors import (
    ConfigError,
    EmptyMCRError,
    LeafIndexError,
    ModelMismatchError,
    SchemaMismatchError,
)
from eforest.forest import Forest, NodeTest
from eforest.persistence import forest_hex_id
from eforest.rules import Interval, contains
from eforest.training import TrainConfig, train_forest

from synthdata import random_mixed, tree_from_path

NUM1 = Schema.numeric(["x"])


def numeric_dataset(seed=0, n=80, d=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(0, 2, (n, d)).round(2)
    return Dataset(
        Schema.numeric([f"v{j}" for j in range(d)]),
        X,
        labels=rng.integers(0, 3, n),
    )


def single_path_forest(steps, schema, bounds):
    """Forest of one chain tree plus the encoding that selects the path end."""
    tree, end = tree_from_path(steps, schema)
    forest = Forest((tree,), schema, bounds, "unsupervised", 0)
    return forest, np.array([end])


class TestTreeMask:
    def test_sorted_unique(self):
        m = TreeMask((4, 1, 2))
        assert m.keep == (1, 2, 4)
        assert len(m) == 3

    def test_rejects_empty(self):
        with pytest.raises(ConfigError):
            TreeMask(())

    def test_rejects_negative(self):
        with pytest.raises(ConfigError):
            TreeMask((0, -1))

    def test_rejects_duplicates(self):
        with pytest.raises(ConfigError):
            TreeMask((1, 1))

    def test_from_fraction_counts(self):
        assert len(TreeMask.from_fraction(100, 1.0, 0)) == 100
        assert len(TreeMask.from_fraction(100, 0.25, 0)) == 25
        assert len(TreeMask.from_fraction(10, 0.21, 0)) == 3

    def test_from_fraction_bounds(self):
        with pytest.raises(ConfigError):
            TreeMask.from_fraction(100, 0.0, 0)
        with pytest.raises(ConfigError):
            TreeMask.from_fraction(100, 1.1, 0)
        with pytest.raises(ConfigError):
            TreeMask.from_fraction(100, 0.001, 0)

    def test_same_seed_masks_nest(self):
        small = set(TreeMask.from_fraction(60, 0.2, 9).keep)
        mid = set(TreeMask.from_fraction(60, 0.5, 9).keep)
        full = set(TreeMask.from_fraction(60, 1.0, 9).keep)
        assert small < mid < full
        assert full == set(range(60))

    def test_different_seeds_differ(self):
        a = TreeMask.from_fraction(60, 0.3, 1).keep
        b = TreeMask.from_fraction(60, 0.3, 2).keep
        assert a != b


class TestEncodingMatrix:
    def test_shape_properties(self):
        m = EncodingMatrix(np.zeros((3, 5), dtype=np.int32), "ab" * 8)
        assert m.n == 3 and m.T == 5

    def test_rejects_non_2d(self):
        with pytest.raises(ValueError):
            EncodingMatrix(np.zeros(3, dtype=np.int32), "ab" * 8)


class TestEncodeBatch:
    def test_columns_match_scalar_encode(self):
        ds = random_mixed(41)
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=5, seed=1))
        matrix = encode_batch(forest, ds)
        assert matrix.n == ds.n and matrix.T == 5
        for i in range(0, ds.n, 7):
            assert matrix.leaf_ids[i].tolist() == forest.encode(ds.X[i]).tolist()

    def test_strict_schema_equality(self):
        ds = numeric_dataset()
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=2, seed=0))
        renamed = Dataset(
            Schema.numeric([f"w{j}" for j in range(ds.d)]), ds.X
        )
        with pytest.raises(SchemaMismatchError):
            encode_batch(forest, renamed)
        # the same data under reuse is fine: kinds line up positionally
        assert encode_batch(forest, renamed, reuse=True).n == ds.n

    def test_reuse_requires_same_width(self):
        ds = numeric_dataset(d=4)
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=2, seed=0))
        narrow = Dataset(Schema.numeric(["a", "b"]), np.zeros((3, 2)))
        with pytest.raises(SchemaMismatchError):
            encode_batch(forest, narrow, reuse=True)

    def test_reuse_requires_matching_kinds(self):
        schema = Schema(("a", "c"), (Numeric(), Categorical(("x", "y"))))
        ds = Dataset(schema, np.array([[0.0, 0], [1.0, 1], [2.0, 0], [3.0, 1]]))
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=2, seed=0))
        flipped = Dataset(
            Schema(("a", "c"), (Categorical(("x", "y")), Numeric())),
            np.array([[0.0, 5.0]]),
        )
        with pytest.raises(SchemaMismatchError):
            encode_batch(forest, flipped, reuse=True)

    def test_reuse_requires_same_category_count(self):
        schema = Schema(("c",), (Categorical(("x", "y")),))
        ds = Dataset(schema, np.array([[0.0], [1.0]]))
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=1, seed=0))
        wider = Dataset(
            Schema(("c",), (Categorical(("x", "y", "z")),)), np.array([[2.0]])
        )
        with pytest.raises(SchemaMismatchError):
            encode_batch(forest, wider, reuse=True)


class TestDecodeRegion:
    def test_instance_lies_in_own_region(self):
        ds = random_mixed(43)
        for mode in ("supervised", "unsupervised"):
            forest = train_forest(ds, TrainConfig(mode=mode, n_trees=7, seed=2))
            for x in ds.X[:25]:
                region = decode_region(forest, forest.encode(x))
                assert contains(region, x)

    def test_region_is_complete(self):
        ds = random_mixed(44)
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=3, seed=0))
        region = decode_region(forest, forest.encode(ds.X[0]))
        assert sorted(region.keys()) == list(range(ds.d))

    def test_masked_region_is_wider(self):
        ds = numeric_dataset(seed=5)
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=10, seed=3))
        enc = forest.encode(ds.X[0])
        full = decode_region(forest, enc)
        part = decode_region(forest, enc, mask=TreeMask((0, 1, 2)))
        for j in range(ds.d):
            assert part[j].lo <= full[j].lo
            assert part[j].hi >= full[j].hi

    def test_mask_out_of_range(self):
        ds = numeric_dataset()
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=3, seed=0))
        with pytest.raises(ConfigError):
            decode_region(forest, forest.encode(ds.X[0]), mask=TreeMask((3,)))

    def test_bad_encoding_shape(self):
        ds = numeric_dataset()
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=3, seed=0))
        with pytest.raises(LeafIndexError):
            decode_region(forest, np.array([0, 0]))

    def test_bad_leaf_ordinal(self):
        ds = numeric_dataset()
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=3, seed=0))
        enc = forest.encode(ds.X[0]).copy()
        enc[1] = forest.trees[1].leaf_count
        with pytest.raises(LeafIndexError):
            decode_region(forest, enc)

    def test_disjoint_paths_are_empty(self):
        bounds = Bounds(np.zeros(1), np.full(1, 10.0))
        above, e_above = tree_from_path([(NodeTest(0, threshold=5.0), True)], NUM1)
        below, e_below = tree_from_path([(NodeTest(0, threshold=5.0), False)], NUM1)
        forest = Forest((above, below), NUM1, bounds, "unsupervised", 0)
        with pytest.raises(EmptyMCRError):
            decode_region(forest, np.array([e_above, e_below]))


class TestDecode:
    def test_decoded_point_satisfies_region(self):
        ds = random_mixed(47)
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=6, seed=4))
        for strategy in ("min", "mean", "max"):
            for x in ds.X[:15]:
                enc = forest.encode(x)
                region = decode_region(forest, enc)
                assert contains(region, decode(forest, enc, strategy))

    def test_median_of_bounds_alias(self):
        ds = numeric_dataset()
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=4, seed=1))
        enc = forest.encode(ds.X[3])
        alias = decode(forest, enc, "median-of-bounds")
        assert alias.tolist() == decode(forest, enc, "mean").tolist()

    def test_out_of_bounds_lower_end_is_preserved(self):
        # a finite path threshold below the data range survives decoding;
        # only infinite ends clamp to the training bounds
        bounds = Bounds(np.zeros(1), np.full(1, 10.0))
        forest, enc = single_path_forest(
            [(NodeTest(0, threshold=-5.0), True)], NUM1, bounds
        )
        region = decode_region(forest, enc)
        assert region[0] == Interval(-5.0, 10.0)
        assert decode(forest, enc, "min")[0] == -5.0

    def test_out_of_bounds_upper_end_is_preserved(self):
        bounds = Bounds(np.zeros(1), np.full(1, 10.0))
        forest, enc = single_path_forest(
            [(NodeTest(0, threshold=15.0), False)], NUM1, bounds
        )
        region = decode_region(forest, enc)
        assert region[0] == Interval(0.0, 15.0, lo_closed=True, hi_closed=False)
        assert decode(forest, enc, "min")[0] == 0.0
        assert decode(forest, enc, "max")[0] == 15.0 - 1e-9 * 15.0

    def test_unreachable_path_collapses(self):
        # a path claiming x >= 15 cannot meet bounds clamped at 10
        bounds = Bounds(np.zeros(1), np.full(1, 10.0))
        forest, enc = single_path_forest(
            [(NodeTest(0, threshold=15.0), True)], NUM1, bounds
        )
        with pytest.raises(EmptyMCRError):
            decode(forest, enc, "min")


class TestDecodeBatch:
    @pytest.mark.parametrize("strategy", ["min", "mean", "max"])
    def test_numeric_fast_path_matches_scalar(self, strategy):
        ds = numeric_dataset(seed=11, n=60)
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=8, seed=5))
        matrix = encode_batch(forest, ds)
        batch = decode_batch(forest, matrix, strategy)
        for i in range(ds.n):
            row = decode(forest, matrix.leaf_ids[i], strategy)
            assert batch.X[i].tobytes() == row.tobytes()

    @pytest.mark.parametrize("strategy", ["min", "mean", "max"])
    def test_fast_path_matches_scalar_out_of_bounds(self, strategy):
        # hand-built trees whose thresholds fall outside the training bounds
        bounds = Bounds(np.zeros(2), np.full(2, 10.0))
        schema = Schema.numeric(["x", "y"])
        t1, e1 = tree_from_path(
            [(NodeTest(0, threshold=-5.0), True), (NodeTest(1, threshold=20.0), False)],
            schema,
        )
        t2, e2 = tree_from_path(
            [(NodeTest(1, threshold=-3.0), True), (NodeTest(0, threshold=4.0), True)],
            schema,
        )
        forest = Forest((t1, t2), schema, bounds, "unsupervised", 0)
        matrix = EncodingMatrix(
            np.array([[e1, e2]], dtype=np.int32), forest_hex_id(forest)
        )
        batch = decode_batch(forest, matrix, strategy)
        row = decode(forest, matrix.leaf_ids[0], strategy)
        assert batch.X[0].tobytes() == row.tobytes()

    def test_masked_batch_matches_masked_scalar(self):
        ds = numeric_dataset(seed=13)
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=9, seed=6))
        matrix = encode_batch(forest, ds)
        mask = TreeMask.from_fraction(9, 0.5, 3)
        batch = decode_batch(forest, matrix, "min", mask=mask)
        for i in range(0, ds.n, 11):
            row = decode(forest, matrix.leaf_ids[i], "min", mask=mask)
            assert batch.X[i].tolist() == row.tolist()

    def test_mixed_schema_route(self):
        ds = random_mixed(49)
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=5, seed=7))
        matrix = encode_batch(forest, ds)
        batch = decode_batch(forest, matrix, "mean")
        assert batch.n == ds.n
        for i in range(0, ds.n, 9):
            assert batch.X[i].tolist() == decode(forest, matrix.leaf_ids[i], "mean").tolist()

    def test_batch_empty_region_raises(self):
        bounds = Bounds(np.zeros(1), np.full(1, 10.0))
        above, e_above = tree_from_path([(NodeTest(0, threshold=5.0), True)], NUM1)
        below, e_below = tree_from_path([(NodeTest(0, threshold=5.0), False)], NUM1)
        forest = Forest((above, below), NUM1, bounds, "unsupervised", 0)
        matrix = EncodingMatrix(
            np.array([[e_above, e_below]], dtype=np.int32), forest_hex_id(forest)
        )
        with pytest.raises(EmptyMCRError):
            decode_batch(forest, matrix, "min")

    def test_model_mismatch(self):
        ds = numeric_dataset(seed=17)
        a = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=3, seed=1))
        b = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=3, seed=2))
        matrix = encode_batch(forest=a, dataset=ds)
        with pytest.raises(ModelMismatchError):
            decode_batch(b, matrix)

    def test_wrong_column_count(self):
        ds = numeric_dataset(seed=19)
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=3, seed=1))
        bad = EncodingMatrix(
            np.zeros((2, 2), dtype=np.int32), forest_hex_id(forest)
        )
        with pytest.raises(LeafIndexError):
            decode_batch(forest, bad)

    def test_out_of_range_ordinal(self):
        ds = numeric_dataset(seed=23)
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=3, seed=1))
        matrix = encode_batch(forest, ds)
        bad_ids = matrix.leaf_ids.copy()
        bad_ids[0, 0] = forest.trees[0].leaf_count
        bad = EncodingMatrix(bad_ids, matrix.forest_id)
        with pytest.raises(LeafIndexError):
            decode_batch(forest, bad)

    def test_empty_matrix(self):
        ds = numeric_dataset(seed=29)
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=3, seed=1))
        empty = EncodingMatrix(
            np.zeros((0, 3), dtype=np.int32), encode_batch(forest, ds).forest_id
        )
        out = decode_batch(forest, empty)
        assert out.n == 0 and out.d == ds.d

    def test_decoded_categories_are_valid(self):
        ds = random_mixed(53)
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=4, seed=8))
        out = decode_batch(forest, encode_batch(forest, ds), "min")
        # Dataset construction validates category ranges; spot-check one column
        for j in range(ds.d):
            if ds.schema.is_categorical(j):
                col = out.X[:, j]
                assert (col == np.floor(col)).all()
