"""Dataset model, file ingestion, and the synthetic desk-scale generator.

File formats:

* features CSV: ``instance_id,label,f1,...,fd`` (header row required)
* attributes CSV: ``label,a1,...,am`` (header row required), one row per class
* splits JSON: ``{"train": [...], "val": [...], "test_seen": [...],
  "test_unseen": [...]}`` holding instance ids, plus optional
  ``seen_classes`` / ``unseen_classes`` / ``val_classes`` label lists.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

SPLIT_NAMES = ("train", "val", "test_seen", "test_unseen")


class DataError(ValueError):
    pass


class ParseError(DataError):
    pass


class SchemaError(DataError):
    pass


class InvariantError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    attributes: np.ndarray
    class_names: tuple[str, ...]
    seen_classes: frozenset[int]
    unseen_classes: frozenset[int]
    splits: dict[str, np.ndarray]
    instance_ids: np.ndarray
    val_classes: frozenset[int] = field(default_factory=frozenset)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def attribute_dim(self) -> int:
        return self.attributes.shape[1]

    def split(self, name: str) -> np.ndarray:
        return self.splits.get(name, np.empty(0, dtype=int))

    def shots(self) -> int:
        """Support instances per unseen class in the train split (0 for ZSL)."""
        train_labels = self.labels[self.split("train")]
        counts = {c: int(np.sum(train_labels == c)) for c in self.unseen_classes}
        return max(counts.values(), default=0)

    def instances_of(self, cls: int, split: str) -> np.ndarray:
        idx = self.split(split)
        return idx[self.labels[idx] == cls]

    def validate(self) -> list[str]:
        """Check every invariant; raise on the first violation, else return a report."""
        n, C = len(self.labels), self.n_classes
        if self.features.shape[0] != n or self.instance_ids.shape[0] != n:
            raise SchemaError("features, labels and instance ids disagree in length")
        if self.attributes.shape[0] != C:
            raise SchemaError(f"{self.attributes.shape[0]} attribute rows for {C} classes")
        if n and (self.labels.min() < 0 or self.labels.max() >= C):
            raise SchemaError("instance label without an attribute row")
        overlap = self.seen_classes & self.unseen_classes
        if overlap:
            raise InvariantError(f"classes both seen and unseen: {self._names(overlap)}")
        missing = set(range(C)) - self.seen_classes - self.unseen_classes
        if missing:
            raise InvariantError(f"classes neither seen nor unseen: {self._names(missing)}")
        if not self.val_classes <= self.seen_classes:
            raise InvariantError("validation classes must be a subset of seen classes")
        for name, idx in self.splits.items():
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise SchemaError(f"split {name!r} indexes outside the instance table")
        train_labels = self.labels[self.split("train")]
        counts = sorted({int(np.sum(train_labels == c)) for c in self.unseen_classes})
        if counts and counts != [0] and (len(counts) != 1 or counts[0] == 0):
            raise InvariantError(
                f"train split must hold no unseen instances (ZSL) or exactly K per unseen class (FSL); got counts {counts}"
            )
        if set(self.labels[self.split("test_unseen")].tolist()) - self.unseen_classes:
            raise InvariantError("test_unseen split holds seen-class instances")
        if set(self.labels[self.split("test_seen")].tolist()) - self.seen_classes:
            raise InvariantError("test_seen split holds unseen-class instances")
        k = self.shots()
        return [
            f"instances: {n}, feature dim d={self.feature_dim}, attribute dim m={self.attribute_dim}",
            f"classes: {len(self.seen_classes)} seen ({len(self.val_classes)} validation) + {len(self.unseen_classes)} unseen",
            "splits: " + ", ".join(f"{k}={len(v)}" for k, v in self.splits.items()),
            f"setting: {'FSL %d-shot' % k if k else 'ZSL/GZSL (no unseen training instances)'}",
            "all invariants hold",
        ]

    def _names(self, ids) -> list[str]:
        return sorted(self.class_names[i] for i in ids)


# -- file IO -----------------------------------------------------------------------


def _read_rows(path: Path, n_lead: int) -> tuple[list[str], list[list[str]], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        width = len(header)
        lead, vals = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != width:
                raise ParseError(f"{path}:{reader.line_num}: expected {width} fields, got {len(row)}")
            lead.append(row[:n_lead])
            try:
                vals.append([float(v) for v in row[n_lead:]])
            except ValueError as exc:
                raise ParseError(f"{path}:{reader.line_num}: {exc}") from None
    return header, lead, np.asarray(vals, dtype=np.float64).reshape(len(vals), width - n_lead)


def load_attributes(path) -> tuple[tuple[str, ...], np.ndarray]:
    """Class names and the ``[C, m]`` attribute matrix of an attribute CSV."""
    _, lead, attributes = _read_rows(Path(path), 1)
    class_names = tuple(r[0] for r in lead)
    if len(set(class_names)) != len(class_names):
        raise SchemaError(f"{path}: duplicate class rows")
    return class_names, attributes


def write_features(path, instance_ids, label_names, features: np.ndarray) -> None:
    """Feature CSV: ``instance_id,label,f1..fd`` with round-trip float repr.

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        _write_feature_rows(path, instance_ids, label_names, features)
        return
    with open(path, "w", newline="") as fh:
        _write_feature_rows(fh, instance_ids, label_names, features)


def _write_feature_rows(fh, instance_ids, label_names, features) -> None:
    w = csv.writer(fh)
    w.writerow(["instance_id", "label"] + [f"f{i + 1}" for i in range(features.shape[1])])
    for iid, lab, row in zip(instance_ids, label_names, features):
        w.writerow([int(iid), lab] + [repr(float(v)) for v in row])


def load_dataset(features_path, attributes_path, splits_path) -> Dataset:
    class_names, attributes = load_attributes(attributes_path)
    cls_index = {c: i for i, c in enumerate(class_names)}

    _, feat_lead, features = _read_rows(Path(features_path), 2)
    try:
        ids = np.array([int(r[0]) for r in feat_lead], dtype=np.int64)
    except ValueError as exc:
        raise ParseError(f"{features_path}: instance ids must be integers ({exc})") from None
    unknown = sorted({r[1] for r in feat_lead} - set(cls_index))
    if unknown:
        raise SchemaError(f"labels without an attribute row: {unknown[:5]}")
    labels = np.array([cls_index[r[1]] for r in feat_lead], dtype=np.int64)
    if len(set(ids.tolist())) != len(ids):
        raise SchemaError(f"{features_path}: duplicate instance ids")
    row_of = {int(i): r for r, i in enumerate(ids)}

    with open(splits_path) as fh:
        raw = json.load(fh)
    splits = {}
    for name, members in raw.items():
        if name.endswith("_classes"):
            continue
        rows = []
        for iid in members:
            if int(iid) not in row_of:
                raise SchemaError(f"split {name!r} names unknown instance id {iid}")
            rows.append(row_of[int(iid)])
        splits[name] = np.asarray(rows, dtype=np.int64)

    def classes(key, default):
        if key not in raw:
            return frozenset(default)
        bad = [c for c in raw[key] if c not in cls_index]
        if bad:
            raise SchemaError(f"{key} names unknown classes {bad[:5]}")
        return frozenset(cls_index[c] for c in raw[key])

    unseen = classes("unseen_classes", labels[splits.get("test_unseen", [])].tolist())
    seen = classes("seen_classes", set(range(len(class_names))) - unseen)
    ds = Dataset(
        features=features,
        labels=labels,
        attributes=attributes,
        class_names=class_names,
        seen_classes=seen,
        unseen_classes=unseen,
        splits=splits,
        instance_ids=ids,
        val_classes=classes("val_classes", ()),
    )
    ds.validate()
    return ds


def save_dataset(ds: Dataset, directory) -> tuple[Path, Path, Path]:
    """Write the three-file form; floats use shortest round-trip repr."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    fpath, apath, spath = directory / "features.csv", directory / "attributes.csv", directory / "splits.json"
    with open(apath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"a{i + 1}" for i in range(ds.attribute_dim)])
        for name, row in zip(ds.class_names, ds.attributes):
            w.writerow([name] + [repr(float(v)) for v in row])
    write_features(fpath, ds.instance_ids, [ds.class_names[c] for c in ds.labels], ds.features)
    doc = {name: ds.instance_ids[idx].tolist() for name, idx in ds.splits.items()}
    doc["seen_classes"] = ds._names(ds.seen_classes)
    doc["unseen_classes"] = ds._names(ds.unseen_classes)
    if ds.val_classes:
        doc["val_classes"] = ds._names(ds.val_classes)
    with open(spath, "w") as fh:
        json.dump(doc, fh, indent=1)
    return fpath, apath, spath


# -- synthetic data ------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    n_seen: int = 10
    n_unseen: int = 5
    d: int = 32
    m: int = 8
    sigma: float = 0.3
    mixing_seed: int = 0
    per_class: int = 50
    seed: int = 0
    # entries of the attribute->mean map are N(0, mixing_scale^2)
    mixing_scale: float = 0.4
    train_per_class: int = 30
    val_per_class: int = 5

    def __post_init__(self):
        counts = (self.n_seen, self.n_unseen, self.d, self.m, self.per_class)
        if min(counts) <= 0:
            raise ValueError(f"synthetic counts must be positive: {self}")
        if self.sigma <= 0 or self.mixing_scale <= 0:
            raise ValueError("sigma and mixing_scale must be positive")
        if self.train_per_class + self.val_per_class >= self.per_class:
            raise ValueError("per_class must leave room for seen test instances")

    @classmethod
    def from_json(cls, path) -> SyntheticSpec:
        with open(path) as fh:
            return cls(**json.load(fh))


def mixing_matrix(spec: SyntheticSpec) -> np.ndarray:
    """The ``[d, m]`` linear map taking a class attribute vector to its feature mean."""
    rng = np.random.default_rng(spec.mixing_seed)
    return rng.normal(0.0, spec.mixing_scale, size=(spec.d, spec.m))


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    C = spec.n_seen + spec.n_unseen
    attributes = rng.uniform(0.0, 1.0, size=(C, spec.m))
    means = attributes @ mixing_matrix(spec).T
    labels = np.repeat(np.arange(C), spec.per_class)
    features = means[labels] + rng.normal(0.0, spec.sigma, size=(len(labels), spec.d))

    splits: dict[str, list[int]] = {k: [] for k in SPLIT_NAMES}
    for c in range(C):
        rows = np.flatnonzero(labels == c)
        if c >= spec.n_seen:
            splits["test_unseen"].extend(rows.tolist())
            continue
        rows = rng.permutation(rows)
        a, b = spec.train_per_class, spec.train_per_class + spec.val_per_class
        splits["train"].extend(sorted(rows[:a].tolist()))
        splits["val"].extend(sorted(rows[a:b].tolist()))
        splits["test_seen"].extend(sorted(rows[b:].tolist()))

    width = len(str(C - 1))
    ds = Dataset(
        features=features,
        labels=labels,
        attributes=attributes,
        class_names=tuple(f"c{c:0{width}d}" for c in range(C)),
        seen_classes=frozenset(range(spec.n_seen)),
        unseen_classes=frozenset(range(spec.n_seen, C)),
        splits={k: np.asarray(v, dtype=np.int64) for k, v in splits.items()},
        instance_ids=np.arange(len(labels), dtype=np.int64),
    )
    ds.validate()
    return ds


def with_fsl_support(ds: Dataset, k: int, seed: int = 0) -> Dataset:
    """Move ``k`` random instances per unseen class from ``test_unseen`` into ``train``."""
    if ds.shots():
        raise InvariantError("dataset already carries unseen support instances")
    rng = np.random.default_rng(seed)
    test = ds.split("test_unseen")
    moved = []
    for c in sorted(ds.unseen_classes):
        pool = test[ds.labels[test] == c]
        if len(pool) <= k:
            raise InvariantError(f"class {ds.class_names[c]} has only {len(pool)} unseen instances")
        moved.extend(rng.choice(pool, size=k, replace=False).tolist())
    moved_set = set(moved)
    splits = dict(ds.splits)
    splits["train"] = np.concatenate([ds.split("train"), np.asarray(sorted(moved), dtype=np.int64)])
    splits["test_unseen"] = np.asarray([i for i in test if i not in moved_set], dtype=np.int64)
    out = replace(ds, splits=splits)
    out.validate()
    return out


def standardize(ds: Dataset) -> Dataset:
    """Scale features by train-split statistics; L2-normalize attribute rows.

    Zero-variance feature dimensions are centred but left unscaled.
    """
    train = ds.split("train")
    if train.size == 0:
        raise DataError("standardize needs a non-empty train split")
    mu = ds.features[train].mean(axis=0)
    sd = ds.features[train].std(axis=0)
    sd = np.where(sd > 1e-12, sd, 1.0)
    norms = np.linalg.norm(ds.attributes, axis=1, keepdims=True)
    attrs = ds.attributes / np.where(norms > 0, norms, 1.0)
    return replace(ds, features=(ds.features - mu) / sd, attributes=attrs)
