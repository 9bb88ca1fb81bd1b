"""Model and encoding files: canonical bytes, content hashing, damage
detection and tolerance, and every file-format error path."""

import json

import numpy as np
import pytest

from eforest.codec import EncodingMatrix, encode_batch
from eforest.data import Categorical, Dataset, Numeric, Schema
from eforest.errors import (
    CorruptModelError,
    FormatError,
    InvalidModelError,
    ShapeError,
    VersionError,
)
from eforest.persistence import (
    MODEL_VERSION,
    _fnv1a64_py,
    _fnv_kernel,
    atomic_write_bytes,
    canonical_json_bytes,
    fnv1a64,
    forest_hex_id,
    forest_record,
    load_encodings,
    load_model,
    save_encodings,
    save_model,
)
from eforest.training import TrainConfig, train_forest

from synthdata import random_mixed

# Published FNV-1a 64-bit reference digests.
FNV_VECTORS = {
    b"": 0xCBF29CE484222325,
    b"a": 0xAF63DC4C8601EC8C,
    b"foobar": 0x85944171F73967E8,
}


def small_forest(seed=1, mode="unsupervised", n_trees=3):
    rng = np.random.default_rng(7)
    ds = Dataset(
        Schema.numeric(["a", "b", "c"]),
        rng.normal(0, 1, (40, 3)).round(2),
        labels=rng.integers(0, 2, 40),
    )
    return train_forest(ds, TrainConfig(mode=mode, n_trees=n_trees, seed=seed)), ds


class TestFnv:
    def test_reference_vectors(self):
        for data, expect in FNV_VECTORS.items():
            assert fnv1a64(data) == expect
            assert _fnv1a64_py(data) == expect

    def test_kernel_matches_pure_python(self):
        if _fnv_kernel is None:
            pytest.skip("accelerated hash kernel not available")
        rng = np.random.default_rng(0)
        for size in (0, 1, 100, 65535, 65536, 200_000):
            data = rng.integers(0, 256, size, dtype=np.uint8).tobytes()
            assert int(_fnv_kernel(np.frombuffer(data, dtype=np.uint8))) == _fnv1a64_py(
                data
            )

    def test_large_input_route(self):
        data = bytes(range(256)) * 512
        assert len(data) >= 65536
        assert fnv1a64(data) == _fnv1a64_py(data)


class TestCanonicalJson:
    def test_sorted_compact_ascii(self):
        got = canonical_json_bytes({"b": 1, "a": [1.5, "xé"]})
        assert got == b'{"a":[1.5,"x\\u00e9"],"b":1}'

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            canonical_json_bytes({"v": float("nan")})

    def test_stable_across_key_insertion_order(self):
        a = canonical_json_bytes({"x": 1, "y": 2})
        b = canonical_json_bytes({"y": 2, "x": 1})
        assert a == b


class TestAtomicWrite:
    def test_overwrites_existing(self, tmp_path):
        p = tmp_path / "f.bin"
        atomic_write_bytes(p, b"one")
        atomic_write_bytes(p, b"two")
        assert p.read_bytes() == b"two"
        leftovers = [q for q in tmp_path.iterdir() if q != p]
        assert leftovers == []


class TestModelRoundTrip:
    def test_save_load_save_is_byte_stable(self, tmp_path):
        forest, ds = small_forest()
        p1, p2 = tmp_path / "m1.json", tmp_path / "m2.json"
        h1 = save_model(forest, p1)
        loaded = load_model(p1)
        h2 = save_model(loaded, p2)
        assert h1 == h2
        assert p1.read_bytes() == p2.read_bytes()

    def test_loaded_forest_encodes_identically(self, tmp_path):
        forest, ds = small_forest(seed=5)
        p = tmp_path / "m.json"
        save_model(forest, p)
        loaded = load_model(p)
        assert encode_batch(loaded, ds).leaf_ids.tolist() == (
            encode_batch(forest, ds).leaf_ids.tolist()
        )
        assert loaded.kind == forest.kind
        assert loaded.seed == forest.seed
        assert loaded.config == forest.config
        assert loaded.bounds.lo.tolist() == forest.bounds.lo.tolist()

    def test_hash_is_cached_and_matches(self, tmp_path):
        forest, _ = small_forest(seed=9)
        p = tmp_path / "m.json"
        written = save_model(forest, p)
        assert written == forest_hex_id(forest)
        record = json.loads(p.read_text())
        assert record["hash"] == written
        assert forest_hex_id(load_model(p)) == written

    def test_categorical_schema_round_trip(self, tmp_path):
        ds = random_mixed(61)
        forest = train_forest(ds, TrainConfig(mode="unsupervised", n_trees=2, seed=0))
        p = tmp_path / "m.json"
        save_model(forest, p)
        loaded = load_model(p)
        assert loaded.schema == ds.schema

    def test_file_shape(self, tmp_path):
        forest, _ = small_forest()
        p = tmp_path / "m.json"
        save_model(forest, p)
        blob = p.read_bytes()
        assert blob.endswith(b"\n")
        record = json.loads(blob)
        assert set(record.keys()) == {
            "version", "kind", "seed", "schema", "bounds", "config", "trees", "hash"
        }
        assert record["version"] == MODEL_VERSION

    def test_single_leaf_tree_record(self):
        ds = Dataset(Schema.numeric(["a"]), np.array([[1.0], [2.0]]))
        forest = train_forest(
            ds, TrainConfig(mode="unsupervised", n_trees=1, seed=0, max_depth_cap=0)
        )
        record = forest_record(forest)
        assert record["trees"] == [{"nodes": [{"t": "leaf", "id": 0}]}]


def rewrite_with_fresh_hash(path, mutate):
    """Apply a structural edit and restamp the content hash so only the
    structure, not the checksum, is wrong."""
    record = json.loads(path.read_text())
    record.pop("hash")
    mutate(record)
    record["hash"] = f"{fnv1a64(canonical_json_bytes(record)):016x}"
    path.write_bytes(canonical_json_bytes(record) + b"\n")


class TestModelDamage:
    def test_tampered_file_is_detected(self, tmp_path):
        forest, _ = small_forest()
        p = tmp_path / "m.json"
        save_model(forest, p)
        record = json.loads(p.read_text())
        record["seed"] = record["seed"] + 1
        p.write_bytes(canonical_json_bytes(record) + b"\n")
        with pytest.raises(CorruptModelError):
            load_model(p)
        # the same file loads when damage is tolerated
        assert load_model(p, tolerate_damage=True).seed == forest.seed + 1

    def test_structurally_broken_tree_strict(self, tmp_path):
        forest, _ = small_forest()
        p = tmp_path / "m.json"
        save_model(forest, p)
        rewrite_with_fresh_hash(
            p, lambda r: r["trees"][1]["nodes"][0].update({"tr": 99999})
        )
        with pytest.raises(InvalidModelError):
            load_model(p)

    def test_damage_tolerant_load_drops_broken_trees(self, tmp_path):
        forest, ds = small_forest(n_trees=4)
        p = tmp_path / "m.json"
        save_model(forest, p)
        rewrite_with_fresh_hash(
            p, lambda r: r["trees"][2]["nodes"][0].update({"tr": 99999})
        )
        loaded = load_model(p, tolerate_damage=True)
        assert loaded.T == 3
        assert loaded.config["dropped_trees"] == [2]
        # surviving trees are the original ones, in order, with index 2 gone
        kept = [t.node_records() for t in loaded.trees]
        orig = [t.node_records() for t in forest.trees]
        assert kept == [orig[0], orig[1], orig[3]]

    def test_all_trees_broken_fails_even_tolerantly(self, tmp_path):
        forest, _ = small_forest(n_trees=2)
        p = tmp_path / "m.json"
        save_model(forest, p)

        def wreck(record):
            for trec in record["trees"]:
                trec["nodes"] = []

        rewrite_with_fresh_hash(p, wreck)
        with pytest.raises(InvalidModelError):
            load_model(p, tolerate_damage=True)


class TestModelFormatErrors:
    def make_saved(self, tmp_path):
        forest, _ = small_forest()
        p = tmp_path / "m.json"
        save_model(forest, p)
        return p

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            load_model(tmp_path / "absent.json")

    def test_not_json(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text("{broken")
        with pytest.raises(FormatError):
            load_model(p)

    def test_wrong_top_keys(self, tmp_path):
        p = self.make_saved(tmp_path)
        record = json.loads(p.read_text())
        record["extra"] = 1
        p.write_bytes(canonical_json_bytes(record))
        with pytest.raises(FormatError):
            load_model(p)

    def test_unsupported_version(self, tmp_path):
        p = self.make_saved(tmp_path)
        rewrite_with_fresh_hash(p, lambda r: r.update({"version": MODEL_VERSION + 1}))
        with pytest.raises(VersionError):
            load_model(p)

    def test_unknown_kind(self, tmp_path):
        p = self.make_saved(tmp_path)
        rewrite_with_fresh_hash(p, lambda r: r.update({"kind": "reinforced"}))
        with pytest.raises(InvalidModelError):
            load_model(p)

    def test_non_integer_seed(self, tmp_path):
        p = self.make_saved(tmp_path)
        rewrite_with_fresh_hash(p, lambda r: r.update({"seed": "zero"}))
        with pytest.raises(InvalidModelError):
            load_model(p)

    def test_bad_bounds(self, tmp_path):
        p = self.make_saved(tmp_path)
        rewrite_with_fresh_hash(p, lambda r: r["bounds"].pop("hi"))
        with pytest.raises(InvalidModelError):
            load_model(p)

    def test_bounds_length_mismatch(self, tmp_path):
        p = self.make_saved(tmp_path)
        rewrite_with_fresh_hash(
            p, lambda r: r["bounds"].update({"lo": [0.0], "hi": [1.0]})
        )
        with pytest.raises(InvalidModelError):
            load_model(p)

    def test_bad_schema(self, tmp_path):
        p = self.make_saved(tmp_path)
        rewrite_with_fresh_hash(
            p, lambda r: r["schema"]["kinds"][0].update({"kind": "complex"})
        )
        with pytest.raises(InvalidModelError):
            load_model(p)

    def test_config_not_object(self, tmp_path):
        p = self.make_saved(tmp_path)
        rewrite_with_fresh_hash(p, lambda r: r.update({"config": [1, 2]}))
        with pytest.raises(InvalidModelError):
            load_model(p)

    def test_empty_tree_list(self, tmp_path):
        p = self.make_saved(tmp_path)
        rewrite_with_fresh_hash(p, lambda r: r.update({"trees": []}))
        with pytest.raises(InvalidModelError):
            load_model(p)

    def test_bad_tree_wrapper(self, tmp_path):
        p = self.make_saved(tmp_path)
        rewrite_with_fresh_hash(
            p, lambda r: r["trees"].__setitem__(0, {"nodes": [], "extra": 1})
        )
        with pytest.raises(InvalidModelError):
            load_model(p)


class TestEncodingsFile:
    def make_matrix(self):
        forest, ds = small_forest(seed=3)
        return encode_batch(forest, ds)

    def test_round_trip(self, tmp_path):
        matrix = self.make_matrix()
        p = tmp_path / "enc.txt"
        save_encodings(matrix, p)
        back = load_encodings(p)
        assert back.forest_id == matrix.forest_id
        assert back.leaf_ids.tolist() == matrix.leaf_ids.tolist()

    def test_header_format(self, tmp_path):
        matrix = self.make_matrix()
        p = tmp_path / "enc.txt"
        save_encodings(matrix, p)
        first = p.read_text().splitlines()[0]
        assert first == (
            f"eforest-enc v1 n={matrix.n} T={matrix.T} forest={matrix.forest_id}"
        )

    def test_empty_matrix_round_trip(self, tmp_path):
        matrix = EncodingMatrix(np.zeros((0, 4), dtype=np.int32), "0" * 16)
        p = tmp_path / "enc.txt"
        save_encodings(matrix, p)
        back = load_encodings(p)
        assert back.n == 0 and back.T == 4

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            load_encodings(tmp_path / "absent.txt")

    def test_empty_file(self, tmp_path):
        p = tmp_path / "enc.txt"
        p.write_text("")
        with pytest.raises(FormatError):
            load_encodings(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "enc.txt"
        p.write_text("eforest-enc v2 n=1 T=1 forest=" + "0" * 16 + "\n0\n")
        with pytest.raises(FormatError):
            load_encodings(p)

    def test_row_count_mismatch(self, tmp_path):
        matrix = self.make_matrix()
        p = tmp_path / "enc.txt"
        save_encodings(matrix, p)
        lines = p.read_text().splitlines()
        p.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ShapeError):
            load_encodings(p)

    def test_row_width_mismatch(self, tmp_path):
        matrix = self.make_matrix()
        p = tmp_path / "enc.txt"
        save_encodings(matrix, p)
        lines = p.read_text().splitlines()
        lines[1] = lines[1] + ",7"
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(ShapeError):
            load_encodings(p)

    def test_non_integer_cell(self, tmp_path):
        p = tmp_path / "enc.txt"
        p.write_text("eforest-enc v1 n=1 T=2 forest=" + "a" * 16 + "\n0,x\n")
        with pytest.raises(FormatError):
            load_encodings(p)

    def test_negative_ordinal(self, tmp_path):
        p = tmp_path / "enc.txt"
        p.write_text("eforest-enc v1 n=1 T=2 forest=" + "a" * 16 + "\n0,-1\n")
        with pytest.raises(FormatError):
            load_encodings(p)
