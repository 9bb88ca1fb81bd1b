"""Versioned model and encoding files with content hashing.

Model files are canonical UTF-8 JSON: sorted keys, compact separators, and
floats printed as the shortest decimal that round-trips to the same 64-bit
value. The embedded hash is 64-bit FNV-1a over the canonical bytes of the
record without its hash field, so equal forests always produce equal bytes
and equal hashes.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .data import Bounds, Categorical, Numeric, Schema
from .errors import (
    CorruptModelError,
    FormatError,
    InvalidModelError,
    ShapeError,
    VersionError,
)
from .forest import Forest, Tree

MODEL_VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def _fnv1a64_py(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def _make_fnv_kernel():
    # optional JIT for hashing large model files; falls back to pure Python
    try:
        from numba import njit
    except Exception:
        return None

    @njit(cache=True, nogil=True)
    def kernel(buf):
        h = np.uint64(_FNV_OFFSET)
        p = np.uint64(_FNV_PRIME)
        for i in range(buf.size):
            h = (h ^ np.uint64(buf[i])) * p
        return h

    return kernel


_fnv_kernel = _make_fnv_kernel()


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    if _fnv_kernel is not None and len(data) >= 65536:
        return int(_fnv_kernel(np.frombuffer(data, dtype=np.uint8)))
    return _fnv1a64_py(data)


def canonical_json_bytes(obj) -> bytes:
    """Canonical serialization: sorted keys, no whitespace, shortest floats."""
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False
    ).encode("ascii")


def atomic_write_bytes(path: Path, blob: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _schema_record(schema: Schema) -> dict:
    kinds = []
    for k in schema.kinds:
        if isinstance(k, Categorical):
            kinds.append({"kind": "cat", "values": list(k.values)})
        else:
            kinds.append({"kind": "num"})
    return {"names": list(schema.names), "kinds": kinds}


def _schema_from_record(rec) -> Schema:
    try:
        names = tuple(str(n) for n in rec["names"])
        kinds = []
        for k in rec["kinds"]:
            if k["kind"] == "num":
                kinds.append(Numeric())
            elif k["kind"] == "cat":
                kinds.append(Categorical(tuple(str(v) for v in k["values"])))
            else:
                raise ValueError(f"unknown attribute kind {k['kind']!r}")
        return Schema(names, tuple(kinds))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidModelError(f"bad schema record: {exc}") from None


def forest_record(forest: Forest) -> dict:
    """Hashable model record; everything but the hash field."""
    return {
        "version": MODEL_VERSION,
        "kind": forest.kind,
        "seed": forest.seed,
        "schema": _schema_record(forest.schema),
        "bounds": {
            "lo": [float(v) for v in forest.bounds.lo],
            "hi": [float(v) for v in forest.bounds.hi],
        },
        "config": forest.config,
        "trees": [{"nodes": t.node_records()} for t in forest.trees],
    }


def forest_hex_id(forest: Forest) -> str:
    """Content hash of a forest as 16 hex digits; cached on the forest."""
    cached = forest._hex_id
    if cached is None:
        cached = f"{fnv1a64(canonical_json_bytes(forest_record(forest))):016x}"
        forest._hex_id = cached
    return cached


def save_model(forest: Forest, path) -> str:
    """Write the canonical model file atomically; returns the content hash."""
    record = forest_record(forest)
    content_hash = forest_hex_id(forest)
    record["hash"] = content_hash
    try:
        atomic_write_bytes(Path(path), canonical_json_bytes(record) + b"\n")
    except OSError as exc:
        raise FormatError(f"cannot write model file {path}: {exc}") from exc
    return content_hash


_TOP_KEYS = {"version", "kind", "seed", "schema", "bounds", "config", "trees", "hash"}


def load_model(path, tolerate_damage: bool = False):
    """Load and validate a model file.

    With ``tolerate_damage`` the content hash is not enforced and trees whose
    records fail validation are dropped (their indexes are listed in the
    forest config under ``dropped_trees``); at least one tree must survive.
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read model file {path}: {exc}") from exc
    try:
        record = json.loads(blob)
    except ValueError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(record, dict) or set(record.keys()) != _TOP_KEYS:
        raise FormatError(f"{path}: model file must hold exactly keys {sorted(_TOP_KEYS)}")
    version = record["version"]
    if version != MODEL_VERSION:
        raise VersionError(f"{path}: unsupported model version {version!r}")

    stated_hash = record.pop("hash")
    actual_hash = f"{fnv1a64(canonical_json_bytes(record)):016x}"
    if not tolerate_damage and stated_hash != actual_hash:
        raise CorruptModelError(
            f"{path}: content hash {actual_hash} does not match stated {stated_hash}"
        )

    schema = _schema_from_record(record["schema"])
    try:
        bounds = Bounds(
            np.asarray(record["bounds"]["lo"], dtype=np.float64),
            np.asarray(record["bounds"]["hi"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidModelError(f"{path}: bad bounds record: {exc}") from None
    if bounds.d != schema.d:
        raise InvalidModelError(f"{path}: bounds length differs from schema")
    kind = record["kind"]
    if kind not in ("supervised", "unsupervised"):
        raise InvalidModelError(f"{path}: unknown forest kind {kind!r}")
    if not isinstance(record["seed"], int):
        raise InvalidModelError(f"{path}: seed must be an integer")
    if not isinstance(record["config"], dict):
        raise InvalidModelError(f"{path}: config must be an object")
    tree_records = record["trees"]
    if not isinstance(tree_records, list) or not tree_records:
        raise InvalidModelError(f"{path}: model holds no trees")

    trees = []
    dropped = []
    for i, trec in enumerate(tree_records):
        try:
            if not isinstance(trec, dict) or set(trec.keys()) != {"nodes"}:
                raise InvalidModelError(f"tree {i}: expected a {{'nodes': [...]}} record")
            trees.append(Tree.from_records(trec["nodes"], schema))
        except InvalidModelError:
            if not tolerate_damage:
                raise
            dropped.append(i)
    if not trees:
        raise InvalidModelError(f"{path}: no valid trees survived damage-tolerant load")

    config = dict(record["config"])
    if dropped:
        config["dropped_trees"] = dropped
    forest = Forest(trees, schema, bounds, kind=kind, seed=record["seed"], config=config)
    if not dropped and stated_hash == actual_hash:
        forest._hex_id = actual_hash
    return forest


_ENC_HEADER = re.compile(r"^eforest-enc v1 n=(\d+) T=(\d+) forest=([0-9a-f]{16})$")


def save_encodings(matrix, path) -> None:
    """Write an encoding matrix: a header line, then one CSV row per instance."""
    lines = [f"eforest-enc v1 n={matrix.n} T={matrix.T} forest={matrix.forest_id}"]
    leaf_ids = matrix.leaf_ids
    for i in range(matrix.n):
        lines.append(",".join(str(int(v)) for v in leaf_ids[i]))
    atomic_write_bytes(Path(path), ("\n".join(lines) + "\n").encode("ascii"))


def load_encodings(path):
    """Read an encoding matrix; header shape must match the body exactly."""
    from .codec import EncodingMatrix

    path = Path(path)
    try:
        text = path.read_text("ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read encodings file {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: empty encodings file")
    m = _ENC_HEADER.match(lines[0])
    if not m:
        raise FormatError(f"{path}: bad encodings header {lines[0]!r}")
    n, T = int(m.group(1)), int(m.group(2))
    body = [ln for ln in lines[1:] if ln]
    if len(body) != n:
        raise ShapeError(f"{path}: header promises {n} rows, file has {len(body)}")
    leaf_ids = np.zeros((n, T), dtype=np.int32)
    for i, ln in enumerate(body):
        parts = ln.split(",")
        if len(parts) != T:
            raise ShapeError(f"{path}: row {i} has {len(parts)} entries, expected {T}")
        try:
            leaf_ids[i] = [int(p) for p in parts]
        except ValueError as exc:
            raise FormatError(f"{path}: row {i}: {exc}") from None
    if (leaf_ids < 0).any():
        raise FormatError(f"{path}: negative leaf ordinal")
    return EncodingMatrix(leaf_ids, m.group(3))
