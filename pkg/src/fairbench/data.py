"""Tabular datasets, CSV ingestion, sensitive-feature encodings and splits.

A :class:`TabularDataset` carries the model inputs, the (possibly biased)
training labels, optional less-biased evaluation labels and the raw
categorical sensitive attributes. Group structure is derived on demand with
:func:`encode_sensitive` in one of three formats:

``binary``
    two groups of one designated attribute;
``intersectional``
    one-hot over the observed combinations of all attributes;
``parallel``
    per-attribute one-hot blocks concatenated side by side.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .errors import (
    EmptyDataError,
    FormatError,
    ParseError,
    SchemaError,
    SplitError,
)

logger = logging.getLogger(__name__)

FORMATS = ("binary", "intersectional", "parallel")
ROLES = ("feature", "sensitive", "label", "unbiased_label", "ignore")
BINNED_CATEGORIES = ("below_mean", "above_mean")


@dataclass(frozen=True, eq=False)
class TabularDataset:
    features: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray
    attribute_names: tuple[str, ...]
    attribute_domains: tuple[tuple[str, ...], ...]
    feature_names: tuple[str, ...] = ()
    numeric: np.ndarray | None = None
    unbiased_labels: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features[:, None]
        n = features.shape[0]
        if n < 1:
            raise EmptyDataError("dataset has no rows")
        labels = _as_binary(self.labels, "labels")
        sensitive = np.asarray(self.sensitive, dtype=np.int64)
        if sensitive.ndim == 1:
            sensitive = sensitive[:, None]
        unbiased = None
        if self.unbiased_labels is not None:
            unbiased = _as_binary(self.unbiased_labels, "unbiased_labels")
        weights = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=np.float64)
        numeric = (
            np.zeros(features.shape[1], dtype=bool)
            if self.numeric is None
            else np.asarray(self.numeric, dtype=bool)
        )
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(features.shape[1]))

        for arr, what in [(labels, "labels"), (sensitive, "sensitive"), (weights, "weights")]:
            if arr.shape[0] != n:
                raise ValueError(f"{what} has {arr.shape[0]} rows, features have {n}")
        if unbiased is not None and unbiased.shape[0] != n:
            raise ValueError("unbiased_labels row count differs from features")
        if len(names) != features.shape[1] or numeric.shape != (features.shape[1],):
            raise ValueError("feature metadata does not match the feature matrix width")
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValueError("weights must be strictly positive and finite")
        if sensitive.shape[1] != len(self.attribute_names) or sensitive.shape[1] != len(self.attribute_domains):
            raise ValueError("sensitive columns do not match attribute metadata")
        for k, domain in enumerate(self.attribute_domains):
            col = sensitive[:, k]
            if np.any(col < 0) or np.any(col >= len(domain)):
                raise ValueError(f"sensitive codes of {self.attribute_names[k]!r} outside [0, {len(domain)})")

        for arr in (features, labels, sensitive, weights, numeric):
            arr.setflags(write=False)
        if unbiased is not None:
            unbiased.setflags(write=False)
        set_ = object.__setattr__
        set_(self, "features", features)
        set_(self, "labels", labels)
        set_(self, "sensitive", sensitive)
        set_(self, "unbiased_labels", unbiased)
        set_(self, "weights", weights)
        set_(self, "numeric", numeric)
        set_(self, "feature_names", names)
        set_(self, "attribute_names", tuple(self.attribute_names))
        set_(self, "attribute_domains", tuple(tuple(d) for d in self.attribute_domains))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def m(self) -> int:
        return self.sensitive.shape[1]

    def subset(self, index) -> "TabularDataset":
        index = np.asarray(index)
        return dataclasses.replace(
            self,
            features=self.features[index],
            labels=self.labels[index],
            sensitive=self.sensitive[index],
            unbiased_labels=None if self.unbiased_labels is None else self.unbiased_labels[index],
            weights=self.weights[index],
        )

    def replace(self, **changes) -> "TabularDataset":
        return dataclasses.replace(self, **changes)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.features, self.labels, self.sensitive, self.weights):
            h.update(np.ascontiguousarray(arr).tobytes())
        if self.unbiased_labels is not None:
            h.update(self.unbiased_labels.tobytes())
        return h.hexdigest()[:16]


def _as_binary(values, what):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValueError(f"{what} must be a vector")
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{what} must contain only 0 or 1")
    return arr.astype(np.int64)


@dataclass(frozen=True, eq=False)
class SensitiveEncoding:
    """Group-indicator matrix plus the metadata needed to interpret it.

    ``keys`` identifies each column: ``(attribute_index, code)`` for the
    binary and parallel formats, a tuple of codes (one per attribute) for the
    intersectional format.
    """

    format: str
    indicators: np.ndarray
    group_names: tuple[str, ...]
    axes: tuple[tuple[int, int], ...]
    keys: tuple = ()

    @property
    def n_groups(self) -> int:
        return self.indicators.shape[1]

    def take(self, index) -> "SensitiveEncoding":
        return dataclasses.replace(self, indicators=self.indicators[np.asarray(index)])

    def group_index(self) -> np.ndarray:
        """Column index of each row's group (binary and intersectional only)."""
        if self.format == "parallel":
            raise FormatError("parallel encodings have no single group per row")
        return np.argmax(self.indicators, axis=1)


def bin_numeric_attribute(values) -> np.ndarray:
    """Code 1 for values strictly above the mean, 0 otherwise."""
    values = np.asarray(values, dtype=np.float64)
    codes = (values > values.mean()).astype(np.int64)
    if codes.min() == codes.max():
        logger.warning("binarized attribute is constant; one group will be empty")
    return codes


def encode_sensitive(dataset: TabularDataset, format: str, binary_attr: int = 0, keys=None) -> SensitiveEncoding:
    """Encode the sensitive attributes of ``dataset`` as group indicators.

    Passing the ``keys`` of an existing encoding reproduces its column layout,
    so that resampled or split data stays aligned with the original groups.
    """
    if format not in FORMATS:
        raise FormatError(f"unknown format {format!r}; expected one of {list(FORMATS)}")
    S = dataset.sensitive
    names = dataset.attribute_names
    domains = dataset.attribute_domains

    if format == "binary":
        if keys is None:
            observed = np.unique(S[:, binary_attr])
            if observed.size != 2:
                raise FormatError(
                    f"binary format needs exactly 2 observed categories in "
                    f"{names[binary_attr]!r}, found {observed.size}"
                )
            keys = tuple((binary_attr, int(c)) for c in observed)
        indicators = np.column_stack([(S[:, a] == c) for a, c in keys]).astype(np.float64)
        group_names = tuple(f"{names[a]}={domains[a][c]}" for a, c in keys)
        axes = ((0, len(keys)),)
        _check_partition(indicators, "binary")
    elif format == "intersectional":
        if keys is None:
            keys = tuple(tuple(int(c) for c in row) for row in np.unique(S, axis=0))
        indicators = np.column_stack(
            [np.all(S == np.asarray(key), axis=1) for key in keys]
        ).astype(np.float64)
        group_names = tuple(
            "|".join(f"{names[a]}={domains[a][c]}" for a, c in enumerate(key)) for key in keys
        )
        axes = ((0, len(keys)),)
        _check_partition(indicators, "intersectional")
    else:
        if keys is None:
            keys = tuple((a, c) for a in range(dataset.m) for c in range(len(domains[a])))
        indicators = np.column_stack([(S[:, a] == c) for a, c in keys]).astype(np.float64)
        group_names = tuple(f"{names[a]}={domains[a][c]}" for a, c in keys)
        axes, start = [], 0
        for _, block in itertools.groupby(keys, key=lambda k: k[0]):
            size = len(list(block))
            axes.append((start, start + size))
            start += size
        axes = tuple(axes)

    return SensitiveEncoding(format, indicators, group_names, axes, tuple(keys))


def encode_like(dataset: TabularDataset, reference: SensitiveEncoding) -> SensitiveEncoding:
    return encode_sensitive(dataset, reference.format, keys=reference.keys)


def _check_partition(indicators, format):
    if not np.all(indicators.sum(axis=1) == 1):
        raise FormatError(f"some rows belong to no {format} group of the reference encoding")


# ---------------------------------------------------------------------------
# CSV ingestion


def load_schema(path) -> dict:
    with open(path, encoding="utf-8") as f:
        schema = yaml.safe_load(f)
    if not isinstance(schema, dict) or "columns" not in schema:
        raise SchemaError(f"schema {path} must be a mapping with a 'columns' entry")
    return schema


def _column_specs(schema: Mapping) -> dict[str, dict]:
    specs = {}
    for name, spec in schema["columns"].items():
        if isinstance(spec, str):
            spec = {"role": spec}
        spec = dict(spec)
        role = spec.get("role")
        if role not in ROLES:
            raise SchemaError(f"column {name!r} has invalid role {role!r}; expected one of {list(ROLES)}")
        default_type = "categorical" if role == "sensitive" else "numeric"
        spec.setdefault("type", default_type)
        if spec["type"] not in ("numeric", "categorical"):
            raise SchemaError(f"column {name!r} has invalid type {spec['type']!r}")
        specs[str(name)] = spec
    labels = [c for c, s in specs.items() if s["role"] == "label"]
    if len(labels) != 1:
        raise SchemaError("schema must name exactly one label column")
    return specs


def load_csv(path, schema: Mapping | str | Path) -> TabularDataset:
    """Read a headered UTF-8 CSV into a :class:`TabularDataset`.

    ``schema`` is a mapping (or a path to a YAML/JSON document) of the form::

        columns:
          x1: feature
          job: {role: feature, type: categorical}
          sex: {role: sensitive}
          age: {role: sensitive, type: numeric}
          y: {role: label, positive: "yes"}
        include_sensitive: true

    Numeric features are standardized unless ``standardize: false``, and
    count as continuous (repaired and restandardized downstream) unless
    ``continuous: false``;
    categorical features and sensitive columns (when included in the inputs)
    are one-hot expanded. Numeric sensitive columns are binarized at their
    mean.
    """
    if not isinstance(schema, Mapping):
        schema = load_schema(schema)
    specs = _column_specs(schema)
    include_sensitive = bool(schema.get("include_sensitive", True))

    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise EmptyDataError(f"{path} is empty")
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]
    if not rows:
        raise EmptyDataError(f"{path} has a header but no data rows")
    for name in specs:
        if name not in header:
            raise SchemaError(f"column {name!r} declared in schema is missing from {path}")
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(row)}", row=i)
    cols = {name: [row[header.index(name)].strip() for row in rows] for name in specs}

    blocks, names, numeric = [], [], []
    sens_codes, attr_names, attr_domains = [], [], []
    labels = unbiased = None
    for name, spec in specs.items():
        role, values = spec["role"], cols[name]
        if role == "ignore":
            continue
        if role in ("label", "unbiased_label"):
            y = _parse_label(values, spec.get("positive"))
            if role == "label":
                labels = y
            else:
                unbiased = y
        elif role == "feature":
            if spec["type"] == "numeric":
                x = _parse_reals(values, name)
                if spec.get("standardize", True):
                    x = _standardize(x)
                blocks.append(x[:, None])
                names.append(name)
                numeric.append(bool(spec.get("continuous", True)))
            else:
                codes, cats = _categorize(values, spec.get("categories"), name)
                blocks.append(np.eye(len(cats))[codes])
                names.extend(f"{name}={c}" for c in cats)
                numeric.extend([False] * len(cats))
        else:
            if spec["type"] == "numeric":
                codes = bin_numeric_attribute(_parse_reals(values, name))
                cats = BINNED_CATEGORIES
            else:
                codes, cats = _categorize(values, spec.get("categories"), name)
            sens_codes.append(codes)
            attr_names.append(name)
            attr_domains.append(tuple(cats))
            if include_sensitive:
                blocks.append(np.eye(len(cats))[codes])
                names.extend(f"{name}={c}" for c in cats)
                numeric.extend([False] * len(cats))

    if not attr_names:
        raise SchemaError("schema declares no sensitive column")
    n = len(rows)
    features = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return TabularDataset(
        features=features,
        labels=labels,
        unbiased_labels=unbiased,
        sensitive=np.column_stack(sens_codes),
        attribute_names=tuple(attr_names),
        attribute_domains=tuple(attr_domains),
        feature_names=tuple(names),
        numeric=np.array(numeric, dtype=bool),
    )


def _parse_reals(values, column):
    out = np.empty(len(values))
    for i, v in enumerate(values):
        try:
            out[i] = float(v)
        except ValueError:
            raise ParseError(f"column {column!r}: cannot parse {v!r} as a real", row=i) from None
        if not np.isfinite(out[i]):
            raise ParseError(f"column {column!r}: non-finite value {v!r}", row=i)
    return out


def _parse_label(values, positive):
    y = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values):
        if positive is not None:
            y[i] = int(v == str(positive))
        elif v in ("0", "1"):
            y[i] = int(v)
        else:
            try:
                f = float(v)
            except ValueError:
                f = None
            if f not in (0.0, 1.0):
                raise ParseError(f"label {v!r} is not 0 or 1", row=i)
            y[i] = int(f)
    return y


def _categorize(values, categories, column):
    if categories is None:
        categories = sorted(set(values))
    categories = [str(c) for c in categories]
    lookup = {c: k for k, c in enumerate(categories)}
    codes = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values):
        if v not in lookup:
            raise ParseError(f"column {column!r}: undeclared category {v!r}", row=i)
        codes[i] = lookup[v]
    return codes, categories


def _standardize(x, mean=None, std=None):
    mean = x.mean(axis=0) if mean is None else mean
    std = x.std(axis=0) if std is None else std
    return (x - mean) / np.where(std > 0, std, 1.0)


def write_csv(dataset: TabularDataset, path) -> dict:
    """Write ``dataset`` to CSV and return the schema that reloads it."""
    columns = {}
    header = list(dataset.feature_names)
    for j, name in enumerate(dataset.feature_names):
        columns[name] = {"role": "feature", "type": "numeric", "standardize": False,
                         "continuous": bool(dataset.numeric[j])}
    for a, name in enumerate(dataset.attribute_names):
        columns[name] = {"role": "sensitive", "type": "categorical",
                         "categories": list(dataset.attribute_domains[a])}
        header.append(name)
    columns["label"] = {"role": "label"}
    header.append("label")
    if dataset.unbiased_labels is not None:
        columns["unbiased_label"] = {"role": "unbiased_label"}
        header.append("unbiased_label")
    if len(set(header)) != len(header):
        raise SchemaError("feature and attribute names collide; cannot write unambiguous CSV")

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.features[i]]
            row += [dataset.attribute_domains[a][c] for a, c in enumerate(dataset.sensitive[i])]
            row.append(str(dataset.labels[i]))
            if dataset.unbiased_labels is not None:
                row.append(str(dataset.unbiased_labels[i]))
            writer.writerow(row)
    return {"columns": columns, "include_sensitive": False}


# ---------------------------------------------------------------------------
# Splitting


def split_indices(n: int, fractions: Sequence[float], seed: int) -> tuple[np.ndarray, ...]:
    fractions = np.asarray(fractions, dtype=np.float64)
    if fractions.shape != (3,) or np.any(fractions < 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise SplitError(f"fractions must be three nonnegative values summing to 1, got {list(fractions)}")
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    sizes = (n_train, n_val, n - n_train - n_val)
    if min(sizes) <= 0:
        raise SplitError(f"split of {n} rows with fractions {list(fractions)} leaves an empty part {sizes}")
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum(sizes)[:-1]
    return tuple(np.sort(part) for part in np.split(perm, bounds))


def restandardize(parts: Sequence[TabularDataset]) -> list[TabularDataset]:
    """Standardize numeric features of every part with statistics of the first."""
    train = parts[0]
    cols = np.flatnonzero(train.numeric)
    if cols.size == 0:
        return list(parts)
    mean = train.features[:, cols].mean(axis=0)
    std = train.features[:, cols].std(axis=0)
    out = []
    for part in parts:
        features = part.features.copy()
        features[:, cols] = _standardize(features[:, cols], mean, std)
        out.append(part.replace(features=features))
    return out


def split(dataset: TabularDataset, fractions=(0.6, 0.2, 0.2), seed: int = 0):
    """Deterministic train/val/test partition; standardization refit on train."""
    parts = [dataset.subset(idx) for idx in split_indices(dataset.n, fractions, seed)]
    return tuple(restandardize(parts))


# ---------------------------------------------------------------------------
# Synthetic dual-label data


@dataclass(frozen=True)
class DualLabelConfig:
    """Generator settings for a two-group dataset with biased and true labels.

    Group 0 is advantaged, group 1 disadvantaged. A true positive in the
    disadvantaged group is recorded as negative with probability
    ``flip_rate_disadvantaged``; a true negative in the advantaged group is
    recorded as positive with probability ``flip_rate_advantaged``.
    """

    n_samples: int = 2000
    d_features: int = 5
    group_fractions: tuple[float, float] = (0.5, 0.5)
    flip_rate_disadvantaged: float = 0.3
    flip_rate_advantaged: float = 0.0
    signal_strength: float = 2.0
    seed: int = 0
    include_sensitive: bool = True

    def __post_init__(self):
        object.__setattr__(self, "group_fractions", tuple(float(f) for f in self.group_fractions))
        if self.n_samples < 10:
            raise ValueError("n_samples must be at least 10")
        if self.d_features < 1:
            raise ValueError("d_features must be at least 1")
        fr = self.group_fractions
        if len(fr) != 2 or min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError("group_fractions must be two nonnegative values summing to 1")
        for rate in (self.flip_rate_disadvantaged, self.flip_rate_advantaged):
            if not 0.0 <= rate <= 1.0:
                raise ValueError("flip rates must lie in [0, 1]")
        if self.signal_strength < 0:
            raise ValueError("signal_strength must be nonnegative")


def generate_dual_label(config: DualLabelConfig) -> TabularDataset:
    rng = np.random.default_rng(config.seed)
    n, d = config.n_samples, config.d_features
    x = rng.standard_normal((n, d))
    group = (rng.random(n) >= config.group_fractions[0]).astype(np.int64)
    direction = rng.standard_normal(d)
    direction *= config.signal_strength / np.linalg.norm(direction)
    p_true = 1.0 / (1.0 + np.exp(-(x @ direction)))
    unbiased = (rng.random(n) < p_true).astype(np.int64)

    u = rng.random(n)
    labels = unbiased.copy()
    labels[(group == 1) & (unbiased == 1) & (u < config.flip_rate_disadvantaged)] = 0
    labels[(group == 0) & (unbiased == 0) & (u < config.flip_rate_advantaged)] = 1

    features, names, numeric = x, [f"x{j}" for j in range(d)], [True] * d
    if config.include_sensitive:
        features = np.hstack([x, np.eye(2)[group]])
        names += ["group=advantaged", "group=disadvantaged"]
        numeric += [False, False]
    return TabularDataset(
        features=features,
        labels=labels,
        unbiased_labels=unbiased,
        sensitive=group[:, None],
        attribute_names=("group",),
        attribute_domains=(("advantaged", "disadvantaged"),),
        feature_names=tuple(names),
        numeric=np.array(numeric),
    )
