"""k-nearest-neighbour majority vote with Euclidean or Manhattan distance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from ..dataset import Dataset

METRICS = ("euclidean", "manhattan")


def knn_distance(metric: str, a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    # Same arithmetic as the batched path so ties resolve identically.
    return float(_exact(metric, a.reshape(1, -1), b.reshape(1, -1))[0])


def pairwise_distances(metric: str, queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    return cdist(queries, points, metric="euclidean" if metric == "euclidean" else "cityblock")


def _exact(metric: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise distance between paired rows of ``a`` and ``b``."""
    d = a - b
    if metric == "euclidean":
        return np.sqrt(np.einsum("ij,ij->i", d, d))
    return np.abs(d).sum(axis=1)


def _smallest(values: np.ndarray, m: int) -> np.ndarray:
    """Column indices of the ``m`` smallest entries per row, unordered past slot ``m-1``."""
    if m > 8:
        return np.argpartition(values, m - 1, axis=1)
    # Repeated argmin is several times cheaper than a partition for small m.
    work = values.copy()
    rows = np.arange(values.shape[0])
    out = np.empty((values.shape[0], m), dtype=np.intp)
    for j in range(m):
        out[:, j] = col = work.argmin(axis=1)
        work[rows, col] = np.inf
    return out


def neighbor_sets(metric: str, queries: np.ndarray, points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest stored points per query, in no particular order.

    For Euclidean distance, points are ranked by ``|p|^2 - 2 q.p`` from a
    matrix product.  A row is accepted when its k-th and (k+1)-th screened
    values are further apart than the rounding-error bound; any other row
    falls back to a stable sort of exactly computed distances.  The set is
    therefore always the one a full stable sort would give, with distance
    ties at the k-th rank going to the lower stored index.
    """
    n = points.shape[0]
    if k >= n:
        return np.broadcast_to(np.arange(n), (queries.shape[0], n)).copy()
    if metric == "euclidean":
        qn = np.einsum("ij,ij->i", queries, queries)
        pn = np.einsum("ij,ij->i", points, points)
        screen = (-2.0 * queries) @ points.T
        screen += pn
        margin = 4.0 * (queries.shape[1] + 4) * np.finfo(np.float64).eps * (qn + pn.max())
    else:
        screen = pairwise_distances(metric, queries, points)
        margin = 0.0
    # Slot k holds the (k+1)-th smallest; slots before it hold the k smallest.
    part = _smallest(screen, k + 1)
    idx = part[:, :k]
    inside = np.take_along_axis(screen, idx, axis=1).max(axis=1)
    outside = np.take_along_axis(screen, part[:, k : k + 1], axis=1)[:, 0]
    for r in np.flatnonzero(outside - inside <= 2.0 * margin):
        idx[r] = np.argsort(_row_distances(metric, queries[r], points), kind="stable")[:k]
    return idx


def _row_distances(metric: str, query: np.ndarray, points: np.ndarray) -> np.ndarray:
    return _exact(metric, np.broadcast_to(query, points.shape), points)


def nearest_neighbors(metric: str, queries: np.ndarray, points: np.ndarray, k: int):
    """The ``k`` nearest stored points per query, ordered by (distance, index).

    Returns ``(indices, distances)``, both ``(n_queries, k)``; the result
    matches a stable sort of :func:`knn_distance` values.
    """
    idx = neighbor_sets(metric, queries, points, k)
    dist = _exact(metric, np.repeat(queries, idx.shape[1], axis=0), points[idx.ravel()]).reshape(idx.shape)
    order = np.lexsort((idx, dist), axis=1)
    return np.take_along_axis(idx, order, axis=1), np.take_along_axis(dist, order, axis=1)


@dataclass(frozen=True)
class KnnModel:
    stored_points: np.ndarray
    stored_labels: np.ndarray
    k: int = 3
    metric: str = "euclidean"
    classes: np.ndarray = field(init=False, repr=False)

    kind = "knn"

    def __post_init__(self):
        n = self.stored_points.shape[0]
        if not 1 <= self.k <= n:
            raise ValueError(f"k={self.k} must lie in [1, {n}]")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        classes = np.unique(self.stored_labels)
        if classes.size == 2 and self.k % 2 == 0:
            raise ValueError(f"k={self.k} must be odd for a two-class problem")
        object.__setattr__(self, "classes", classes)

    @property
    def n_features(self) -> int:
        return self.stored_points.shape[1]

    def predict(self, x) -> np.ndarray:
        return knn_predict(self, x)


def knn_train(data: Dataset, k: int = 3, metric: str = "euclidean") -> KnnModel:
    """Nothing to fit: the model is a copy of the training set."""
    data.require_training_labels()
    return KnnModel(data.points.copy(), data.labels.copy(), int(k), metric)


def _vote(labels: np.ndarray, dists: np.ndarray):
    values, counts = np.unique(labels, return_counts=True)
    best = counts.max()
    tied = values[counts == best]
    if tied.size == 1:
        return tied[0]
    # Majority tie: smaller summed distance, then smaller label.
    totals = np.array([dists[labels == v].sum() for v in tied])
    return tied[np.flatnonzero(totals == totals.min())[0]]


def knn_predict(model: KnnModel, x):
    """Majority label among the ``k`` nearest stored points.

    Distance ties at the k-th rank go to the lower stored index.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("query contains non-finite values")
    nearest = neighbor_sets(model.metric, x, model.stored_points, model.k)
    labels = model.stored_labels[nearest]
    classes = model.classes
    counts = np.stack([np.count_nonzero(labels == c, axis=1) for c in classes], axis=1)
    out = classes[np.argmax(counts, axis=1)]
    if classes.size > 2 or model.k % 2 == 0:
        tied = np.count_nonzero(counts == counts.max(axis=1)[:, None], axis=1) > 1
        for r in np.flatnonzero(tied):
            dists = _exact(model.metric, np.broadcast_to(x[r], (model.k, x.shape[1])), model.stored_points[nearest[r]])
            out[r] = _vote(labels[r], dists)
    return out[0] if single else out
