"""Schemas, datasets, and loaders for IDX and CSV inputs.

A dataset stores every attribute as float64. Categorical attributes hold the
integer index of the value within the attribute's declared value tuple, so a
single matrix carries mixed schemas without object arrays.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    FormatError,
    ParseError,
    ShapeError,
    UnknownCategoryError,
)


@dataclass(frozen=True)
class Numeric:
    """Marker for a real-valued attribute."""

    def __repr__(self) -> str:
        return "Numeric()"


@dataclass(frozen=True)
class Categorical:
    """Finite unordered value set; cells are stored as indexes into ``values``."""

    values: tuple[str, ...]

    def __post_init__(self):
        if not self.values:
            raise ValueError("categorical attribute needs at least one value")
        if len(set(self.values)) != len(self.values):
            raise ValueError("categorical values must be unique")

    @property
    def size(self) -> int:
        return len(self.values)


AttributeKind = Union[Numeric, Categorical]


@dataclass(frozen=True)
class Schema:
    """Ordered attribute names and kinds shared by datasets and models."""

    names: tuple[str, ...]
    kinds: tuple[AttributeKind, ...]

    def __post_init__(self):
        if len(self.names) != len(self.kinds):
            raise ValueError("names and kinds must have equal length")
        if not self.names:
            raise ValueError("schema needs at least one attribute")
        if len(set(self.names)) != len(self.names):
            raise ValueError("attribute names must be unique")

    @property
    def d(self) -> int:
        return len(self.names)

    @property
    def all_numeric(self) -> bool:
        return all(isinstance(k, Numeric) for k in self.kinds)

    def is_categorical(self, j: int) -> bool:
        return isinstance(self.kinds[j], Categorical)

    def category_count(self, j: int) -> int:
        kind = self.kinds[j]
        if not isinstance(kind, Categorical):
            raise ValueError(f"attribute {j} is numeric")
        return kind.size

    @classmethod
    def numeric(cls, names: Sequence[str]) -> "Schema":
        return cls(tuple(names), tuple(Numeric() for _ in names))


def _frozen_array(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr:
        out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Bounds:
    """Per-attribute closed value range observed in a training set."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _frozen_array(np.asarray(self.lo, dtype=np.float64))
        hi = _frozen_array(np.asarray(self.hi, dtype=np.float64))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be two 1-d arrays of equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("bounds must be finite")
        if (lo > hi).any():
            raise ValueError("bounds lower ends must not exceed upper ends")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def d(self) -> int:
        return len(self.lo)


def compute_bounds(schema: Schema, X: np.ndarray) -> Bounds:
    """Observed min/max per numeric attribute; full index range per categorical one."""
    d = schema.d
    lo = np.zeros(d)
    hi = np.zeros(d)
    for j, kind in enumerate(schema.kinds):
        if isinstance(kind, Categorical):
            lo[j], hi[j] = 0.0, float(kind.size - 1)
        elif len(X):
            lo[j], hi[j] = X[:, j].min(), X[:, j].max()
    return Bounds(lo, hi)


class Dataset:
    """Immutable instance matrix with schema, optional labels, and bounds."""

    __slots__ = ("schema", "X", "labels", "bounds")

    def __init__(
        self,
        schema: Schema,
        X: np.ndarray,
        labels: np.ndarray | None = None,
        bounds: Bounds | None = None,
        validate: bool = True,
    ):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != schema.d:
            raise ShapeError(
                f"instance matrix must be (n, {schema.d}), got {X.shape}"
            )
        self.schema = schema
        self.X = _frozen_array(X)
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (len(X),):
                raise ShapeError(
                    f"labels must be ({len(X)},), got {labels.shape}"
                )
            labels = _frozen_array(labels)
        self.labels = labels
        if validate:
            self._check_values()
        self.bounds = bounds if bounds is not None else compute_bounds(schema, self.X)
        if self.bounds.d != schema.d:
            raise ShapeError("bounds length does not match schema")

    def _check_values(self) -> None:
        if not np.isfinite(self.X).all():
            raise ShapeError("instance matrix contains non-finite values")
        for j, kind in enumerate(self.schema.kinds):
            if isinstance(kind, Categorical):
                col = self.X[:, j]
                if len(col) and (
                    (col != np.floor(col)).any()
                    or col.min() < 0
                    or col.max() >= kind.size
                ):
                    raise UnknownCategoryError(
                        f"attribute {self.schema.names[j]} holds a value outside "
                        f"its {kind.size} declared categories"
                    )

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def d(self) -> int:
        return self.schema.d

    def instance(self, i: int) -> np.ndarray:
        return self.X[i]

    def take(self, rows: np.ndarray) -> "Dataset":
        """Row subset as a new dataset; bounds are recomputed from the subset."""
        labels = self.labels[rows] if self.labels is not None else None
        return Dataset(self.schema, self.X[rows], labels)


# IDX container layout (big-endian):
#   offset 0: 2 zero bytes, 1 type byte (0x08 = unsigned byte), 1 dimension byte
#   offset 4: one 4-byte size per dimension
#   then:     raw item bytes in row-major order
_IDX_UBYTE = 0x08


def _read_idx(path: Path, expect_ndim: int) -> tuple[tuple[int, ...], np.ndarray]:
    blob = path.read_bytes()
    if len(blob) < 4:
        raise FormatError(f"{path}: too short for an idx header")
    zero, dtype, ndim = struct.unpack(">HBB", blob[:4])
    if zero != 0 or dtype != _IDX_UBYTE:
        raise FormatError(f"{path}: bad idx magic {blob[:4].hex()}")
    if ndim != expect_ndim:
        raise FormatError(f"{path}: expected {expect_ndim} dimensions, file has {ndim}")
    header_len = 4 + 4 * ndim
    if len(blob) < header_len:
        raise FormatError(f"{path}: truncated dimension table")
    dims = struct.unpack(f">{ndim}I", blob[4:header_len])
    count = int(np.prod(dims)) if dims else 0
    body = blob[header_len:]
    if len(body) != count:
        raise FormatError(
            f"{path}: dimension table promises {count} bytes, file has {len(body)}"
        )
    return dims, np.frombuffer(body, dtype=np.uint8)


def load_idx(images_path, labels_path=None) -> Dataset:
    """Load an idx3-ubyte image file, optionally paired with idx1-ubyte labels.

    Pixels become numeric attributes named p0..p{d-1} in row-major order, with
    values in [0, 255].
    """
    images_path = Path(images_path)
    dims, raw = _read_idx(images_path, expect_ndim=3)
    n, h, w = dims
    d = h * w
    if d == 0:
        raise FormatError(f"{images_path}: zero-sized images")
    X = raw.astype(np.float64).reshape(n, d)
    labels = None
    if labels_path is not None:
        labels_path = Path(labels_path)
        (ln,), lraw = _read_idx(labels_path, expect_ndim=1)
        if ln != n:
            raise ShapeError(
                f"{labels_path}: {ln} labels for {n} images"
            )
        labels = lraw.astype(np.int64)
    schema = Schema.numeric([f"p{i}" for i in range(d)])
    return Dataset(schema, X, labels)


def parse_kind_spec(spec: str) -> tuple[AttributeKind, ...]:
    """Parse a compact attribute-kind string.

    Comma-separated entries; ``num`` is numeric, ``cat:A|B|C`` is categorical
    with those values, and a ``*k`` suffix repeats an entry k times
    (e.g. ``num*784`` or ``num*2,cat:YES|NO``).
    """
    kinds: list[AttributeKind] = []
    for entry in spec.split(","):
        entry = entry.strip()
        if not entry:
            raise FormatError("empty entry in attribute kind spec")
        repeat = 1
        if "*" in entry:
            entry, _, count = entry.rpartition("*")
            try:
                repeat = int(count)
            except ValueError:
                raise FormatError(f"bad repeat count {count!r} in kind spec") from None
            if repeat < 1:
                raise FormatError("repeat count must be >= 1")
        if entry == "num":
            kind: AttributeKind = Numeric()
        elif entry.startswith("cat:"):
            values = tuple(v for v in entry[4:].split("|") if v)
            if not values:
                raise FormatError(f"categorical entry {entry!r} has no values")
            kind = Categorical(values)
        else:
            raise FormatError(f"unknown attribute kind {entry!r}")
        kinds.extend([kind] * repeat)
    return tuple(kinds)


def load_csv(
    path,
    kinds: Sequence[AttributeKind],
    label_column: int | str | None = None,
    has_header: bool = False,
) -> Dataset:
    """Load a CSV file against a declared attribute kind list.

    ``kinds`` covers the data columns in file order, excluding the label
    column if one is named. ``label_column`` may be a column index, or a
    header name when ``has_header`` is true.
    """
    path = Path(path)
    kinds = tuple(kinds)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    header: list[str] | None = None
    if has_header:
        if not rows:
            raise FormatError(f"{path}: missing header row")
        header = rows[0]
        rows = rows[1:]
    label_idx: int | None = None
    if label_column is not None:
        if isinstance(label_column, str):
            if header is None:
                raise FormatError("label column by name requires a header")
            try:
                label_idx = header.index(label_column)
            except ValueError:
                raise FormatError(
                    f"{path}: no column named {label_column!r}"
                ) from None
        else:
            label_idx = int(label_column)
    width = len(kinds) + (1 if label_idx is not None else 0)
    if label_idx is not None and not 0 <= label_idx < width:
        raise FormatError(f"label column {label_idx} out of range for width {width}")
    data_cols = [c for c in range(width) if c != label_idx]
    if header is not None:
        names = tuple(header[c] for c in data_cols)
        if len(set(names)) != len(names):
            names = tuple(f"c{c}" for c in data_cols)
    else:
        names = tuple(f"c{c}" for c in data_cols)
    schema = Schema(names, kinds)

    n = len(rows)
    X = np.zeros((n, schema.d))
    labels = np.zeros(n, dtype=np.int64) if label_idx is not None else None
    cat_index = [
        {v: i for i, v in enumerate(k.values)} if isinstance(k, Categorical) else None
        for k in kinds
    ]
    for i, row in enumerate(rows):
        if len(row) != width:
            raise FormatError(
                f"{path}: row {i} has {len(row)} fields, expected {width}"
            )
        for a, c in enumerate(data_cols):
            cell = row[c].strip()
            lookup = cat_index[a]
            if lookup is None:
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: bad numeric cell {cell!r}", i, c) from None
                if not np.isfinite(value):
                    raise ParseError(f"{path}: non-finite cell {cell!r}", i, c)
                X[i, a] = value
            else:
                if cell not in lookup:
                    raise UnknownCategoryError(
                        f"{path}: row {i} col {c}: unknown category {cell!r}"
                    )
                X[i, a] = lookup[cell]
        if labels is not None:
            cell = row[label_idx].strip()
            try:
                labels[i] = int(cell)
            except ValueError:
                raise ParseError(f"{path}: bad label {cell!r}", i, label_idx) from None
    return Dataset(schema, X, labels)


def save_csv(dataset: Dataset, path, header: bool = True, label_name: str | None = None) -> None:
    """Write a dataset as CSV; categorical cells use value names, floats use repr.

    With ``label_name`` and labels present, labels are appended as a final
    column under that name. The output reloads exactly with load_csv.
    """
    path = Path(path)
    schema = dataset.schema
    with_labels = label_name is not None and dataset.labels is not None
    lines = []
    if header:
        cols = list(schema.names) + ([label_name] if with_labels else [])
        lines.append(",".join(cols))
    for i in range(dataset.n):
        cells = []
        for j, kind in enumerate(schema.kinds):
            v = dataset.X[i, j]
            if isinstance(kind, Categorical):
                cells.append(kind.values[int(v)])
            else:
                cells.append(repr(float(v)))
        if with_labels:
            cells.append(str(int(dataset.labels[i])))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def split_channels(dataset: Dataset) -> tuple[Dataset, Dataset, Dataset]:
    """Split an all-numeric dataset whose columns interleave as d/3 blocks.

    Column layout is block-wise (first d/3 columns are channel 0, and so on),
    matching flattened planar color images. Labels are shared by reference.
    """
    d = dataset.d
    if d % 3 != 0:
        raise ShapeError(f"channel split needs d divisible by 3, got {d}")
    if not dataset.schema.all_numeric:
        raise ShapeError("channel split requires an all-numeric schema")
    step = d // 3
    parts = []
    for c in range(3):
        cols = slice(c * step, (c + 1) * step)
        schema = Schema(dataset.schema.names[cols], dataset.schema.kinds[cols])
        parts.append(Dataset(schema, dataset.X[:, cols], dataset.labels))
    return tuple(parts)


def merge_channels(r: Dataset, g: Dataset, b: Dataset) -> Dataset:
    """Inverse of split_channels; requires equal row counts."""
    if not (r.n == g.n == b.n):
        raise ShapeError("channel datasets must have equal row counts")
    names = r.schema.names + g.schema.names + b.schema.names
    kinds = r.schema.kinds + g.schema.kinds + b.schema.kinds
    X = np.hstack([r.X, g.X, b.X])
    return Dataset(Schema(names, kinds), X, r.labels)
