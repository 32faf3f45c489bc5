"""Corpus I/O, split/downsample protocol, dataset-specific preprocessing,
and run configuration.

The interchange format is JSONL, one object per line:
``{"id": ..., "text"?: ..., "features"?: [...], "counts"?: {label: int},
"annotations"?: [{"annotator": ..., "label": ...}]}``.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import DataItem, Dataset, ValidationError
from .learner import LearnerConfig
from .mixing import W_GRID

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    data_path: Optional[str] = None
    label_names: Sequence[str] = ()
    split_seed: int = 0
    split_fractions: tuple = (0.50, 0.25, 0.25)
    downsample_n: int = 2000
    methods: tuple = ("kmeans", "gmm", "fmm", "lda", "nbp")
    w_grid: tuple = W_GRID
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    out_dir: str = "out"

    def __post_init__(self):
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValidationError("split fractions must sum to 1")


_SCALAR_KEYS = {
    "data_path": str,
    "split_seed": int,
    "downsample_n": int,
    "out_dir": str,
}
_LIST_KEYS = {"label_names": str, "methods": str}
_LEARNER_KEYS = {
    "architecture": str, "hidden_dim": int, "dropout": float,
    "learning_rate": float, "batch_size": int, "max_epochs": int,
    "patience": int, "seed": int,
}


def load_config(path) -> RunConfig:
    """Parse the key=value config format; '#' starts a comment, lists are
    comma separated, learner options are prefixed with 'learner.'."""
    values = {}
    learner = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key in _SCALAR_KEYS:
                values[key] = _SCALAR_KEYS[key](value)
            elif key in _LIST_KEYS:
                values[key] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key == "split_fractions":
                values[key] = tuple(float(v) for v in value.split(","))
            elif key == "w_grid":
                values[key] = tuple(float(v) for v in value.split(","))
            elif key.startswith("learner."):
                sub = key[len("learner."):]
                if sub not in _LEARNER_KEYS:
                    raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
                learner[sub] = _LEARNER_KEYS[sub](value)
            else:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
    if learner:
        values["learner"] = LearnerConfig(**learner)
    return RunConfig(**values)


def atomic_write(path, text: str):
    """Write via temp file + rename so partial outputs never appear."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_corpus(path, label_names: Sequence[str],
                split: Optional[str] = None) -> Dataset:
    """Read and validate a JSONL corpus; label order comes from config."""
    label_names = [str(n) for n in label_names]
    index = {name: i for i, name in enumerate(label_names)}
    items = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise ValidationError(f"{path}:{lineno}: malformed JSON ({err})")
            try:
                items.append(_parse_item(obj, index, len(label_names)))
            except ValidationError as err:
                raise ValidationError(f"{path}:{lineno}: {err}")
    if not items:
        raise ValidationError(f"{path}: empty corpus")
    return Dataset(items, label_names, split=split)


def _parse_item(obj: dict, label_index: dict, d: int) -> DataItem:
    if "id" not in obj:
        raise ValidationError("missing 'id'")
    counts = None
    if "counts" in obj:
        counts = np.zeros(d, dtype=int)
        for name, c in obj["counts"].items():
            if name not in label_index:
                raise ValidationError(f"unknown label name {name!r}")
            counts[label_index[name]] = int(c)
    annotations = None
    if "annotations" in obj:
        annotations = []
        for ann in obj["annotations"]:
            name = ann["label"]
            if name not in label_index:
                raise ValidationError(f"unknown label name {name!r}")
            annotations.append((ann["annotator"], label_index[name]))
        if counts is None:
            counts = np.zeros(d, dtype=int)
            for _, l in annotations:
                counts[l] += 1
    if counts is None:
        raise ValidationError(f"item {obj['id']!r}: needs counts or annotations")
    return DataItem(
        id=obj["id"],
        counts=counts,
        features=obj.get("features"),
        text=obj.get("text"),
        annotations=annotations,
    )


def save_corpus(ds: Dataset, path):
    lines = []
    for it in ds.items:
        obj = {"id": it.id}
        if it.text is not None:
            obj["text"] = it.text
        if it.features is not None:
            obj["features"] = it.features.tolist()
        obj["counts"] = {
            ds.label_names[j]: int(c) for j, c in enumerate(it.counts) if c
        }
        if it.annotations is not None:
            obj["annotations"] = [
                {"annotator": a, "label": ds.label_names[l]}
                for a, l in it.annotations
            ]
        lines.append(json.dumps(obj))
    atomic_write(path, "\n".join(lines) + "\n")


def split_downsample(ds: Dataset, cfg: RunConfig):
    """Seeded downsample to cfg.downsample_n, then a seeded shuffle and
    contiguous split by the configured fractions."""
    if len(ds) == 0:
        raise ValidationError("empty dataset")
    rng = np.random.default_rng(cfg.split_seed)
    n = min(len(ds), cfg.downsample_n)
    chosen = rng.choice(len(ds), size=n, replace=False)
    order = rng.permutation(n)
    sample = [ds.items[chosen[i]] for i in order]

    f_train, f_dev, _ = cfg.split_fractions
    n_train = int(f_train * n)
    n_dev = int(f_dev * n)
    parts = (sample[:n_train], sample[n_train:n_train + n_dev],
             sample[n_train + n_dev:])
    if any(len(p) == 0 for p in parts):
        raise ValidationError(
            f"split of {n} items by {cfg.split_fractions} leaves an empty split"
        )
    train, dev, test = (
        Dataset(part, ds.label_names, split=tag)
        for part, tag in zip(parts, ("train", "dev", "test"))
    )
    return train, dev, test


def facebook_preprocess(ds: Dataset, reaction: str = "like") -> Dataset:
    """Drop the dominant reaction dimension, discarding items left with no
    annotations at all."""
    if reaction not in ds.label_names:
        raise ValidationError(f"label {reaction!r} not present in this dataset")
    j = ds.label_names.index(reaction)
    keep_names = [n for n in ds.label_names if n != reaction]
    items = []
    dropped = 0
    for it in ds.items:
        counts = np.delete(it.counts, j)
        if counts.sum() == 0:
            dropped += 1
            continue
        annotations = None
        if it.annotations is not None:
            annotations = [(a, l if l < j else l - 1)
                           for a, l in it.annotations if l != j]
        items.append(DataItem(id=it.id, counts=counts, features=it.features,
                              text=it.text, annotations=annotations))
    if dropped:
        log.info("facebook_preprocess: dropped %d items with only %r reactions",
                 dropped, reaction)
    return Dataset(items, keep_names, split=ds.split)


def save_pooled(pooled, path):
    lines = [
        json.dumps({"id": item_id, "probs": pooled[item_id].probs.tolist()})
        for item_id in sorted(pooled)
    ]
    atomic_write(path, "\n".join(lines) + "\n")


def load_pooled(path):
    from .core import PooledLabels

    by_id = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            by_id[obj["id"]] = np.asarray(obj["probs"], dtype=float)
    if not by_id:
        raise ValidationError(f"{path}: empty pooled-label file")
    return PooledLabels(by_id)
