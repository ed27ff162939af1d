"""Labeled feature matrices and the feature CSV format."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .mfcc import FeatureVector

COMMENT = "#"


@dataclass(frozen=True)
class Dataset:
    """``n x p`` points with integer labels (-1 marks an unlabeled row)."""

    points: np.ndarray
    labels: np.ndarray
    source_ids: tuple[str, ...] = ()
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if points.ndim != 2 or points.shape[1] < 1:
            raise ValueError("points must be an n x p matrix with p >= 1")
        if labels.shape != (points.shape[0],):
            raise ValueError("need exactly one label per point")
        if not np.all(np.isfinite(points)):
            raise ValueError("points contain non-finite values")
        ids = tuple(self.source_ids) or tuple(str(i) for i in range(points.shape[0]))
        if len(ids) != points.shape[0]:
            raise ValueError("need exactly one source id per point")
        cols = tuple(self.columns) or tuple(f"x{j}" for j in range(points.shape[1]))
        if len(cols) != points.shape[1]:
            raise ValueError("need exactly one column name per feature")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "source_ids", ids)
        object.__setattr__(self, "columns", cols)

    def __len__(self):
        return self.points.shape[0]

    @property
    def n_features(self) -> int:
        return self.points.shape[1]

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            self.points[index],
            self.labels[index],
            tuple(self.source_ids[i] for i in index),
            self.columns,
        )

    def truncate(self, q: int) -> "Dataset":
        """Keep the first ``q`` feature columns."""
        if not 1 <= q <= self.n_features:
            raise ValueError(f"cannot keep {q} of {self.n_features} columns")
        return Dataset(self.points[:, :q], self.labels, self.source_ids, self.columns[:q])

    def require_training_labels(self) -> None:
        if np.any(self.labels < 0):
            raise ValueError("dataset has unlabeled rows")
        if self.classes.size < 2:
            raise ValueError("training needs both classes present")

    @classmethod
    def from_vectors(cls, vectors: Sequence[FeatureVector], columns: Sequence[str] = ()) -> "Dataset":
        if not vectors:
            raise ValueError("no feature vectors")
        points = np.vstack([v.values for v in vectors])
        labels = [-1 if v.label is None else v.label for v in vectors]
        return cls(points, np.array(labels), tuple(v.source_id for v in vectors), tuple(columns))


def format_float(x: float) -> str:
    return f"{x:.17g}"


def write_features(path, data: Dataset, header_lines: Sequence[str] = ()) -> None:
    """Write ``source_id,label,c...`` rows; comment lines go first."""
    out = [f"{COMMENT} {line}" for line in header_lines]
    out.append(",".join(("source_id", "label") + data.columns))
    for sid, label, row in zip(data.source_ids, data.labels, data.points):
        lab = "" if label < 0 else str(int(label))
        out.append(",".join([sid, lab] + [format_float(v) for v in row]))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_features(path) -> tuple[Dataset, list[str]]:
    """Return the dataset and the comment lines (without the leading ``#``)."""
    comments = []
    header: Optional[list[str]] = None
    ids, labels, rows = [], [], []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith(COMMENT):
            comments.append(line[1:].strip())
            continue
        parts = line.split(",")
        if header is None:
            if parts[:2] != ["source_id", "label"] or len(parts) < 3:
                raise ValueError(f"{path}: expected header 'source_id,label,c...'")
            header = parts
            continue
        if len(parts) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(parts)}")
        ids.append(parts[0])
        labels.append(int(parts[1]) if parts[1] else -1)
        rows.append([float(v) for v in parts[2:]])
    if header is None or not rows:
        raise ValueError(f"{path}: no feature rows")
    return Dataset(np.array(rows), np.array(labels), tuple(ids), tuple(header[2:])), comments
