"""Gaussian discriminant analysis with shared (LDA) or per-class (QDA)
covariance."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..dataset import Dataset

RIDGE_SCALE = 1e-6


class SingularCovarianceError(np.linalg.LinAlgError):
    pass


def default_ridge(cov: np.ndarray) -> float:
    """``1e-6 * trace(cov) / p``, or plain ``1e-6`` for an all-zero covariance."""
    trace = float(np.trace(cov))
    return RIDGE_SCALE * trace / cov.shape[0] if trace > 0 else RIDGE_SCALE


def _regularized_inverse(cov: np.ndarray, ridge: Optional[float], what: str):
    """Add ``ridge * I`` and invert; returns (inverse, log-determinant, ridge used)."""
    if ridge is None:
        ridge = default_ridge(cov)
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    p = cov.shape[0]
    reg = cov + ridge * np.eye(p)
    eig = np.linalg.eigvalsh(reg)
    scale = max(float(np.max(np.abs(eig))), np.finfo(float).tiny)
    deficient = int(np.sum(eig <= scale * p * np.finfo(float).eps))
    if deficient:
        raise SingularCovarianceError(
            f"{what} covariance is singular after ridge={ridge:g}: "
            f"{deficient} of {p} dimensions have no variance"
        )
    inv = np.linalg.inv(reg)
    inv = 0.5 * (inv + inv.T)
    return inv, float(np.sum(np.log(eig))), ridge


def _class_stats(data: Dataset):
    data.require_training_labels()
    classes = data.classes
    groups = [data.points[data.labels == c] for c in classes]
    for c, g in zip(classes, groups):
        if g.shape[0] < 2:
            raise ValueError(f"class {c} needs at least 2 points, has {g.shape[0]}")
    means = np.vstack([g.mean(axis=0) for g in groups])
    counts = np.array([g.shape[0] for g in groups], dtype=np.float64)
    return classes, groups, means, counts


@dataclass(frozen=True)
class LdaModel:
    classes: np.ndarray
    class_means: np.ndarray
    pooled_cov_inverse: np.ndarray
    log_priors: np.ndarray

    kind = "lda"

    @property
    def n_features(self) -> int:
        return self.class_means.shape[1]

    def scores(self, x) -> np.ndarray:
        return lda_score(self, x)

    def predict(self, x) -> np.ndarray:
        return self.classes[discriminant_predict(self.scores(x))]


@dataclass(frozen=True)
class QdaModel:
    classes: np.ndarray
    class_means: np.ndarray
    cov_inverses: np.ndarray
    log_dets: np.ndarray
    log_priors: np.ndarray

    kind = "qda"

    @property
    def n_features(self) -> int:
        return self.class_means.shape[1]

    def scores(self, x) -> np.ndarray:
        return qda_score(self, x)

    def predict(self, x) -> np.ndarray:
        return self.classes[discriminant_predict(self.scores(x))]

    @classmethod
    def from_covariances(cls, classes, means, covs, priors) -> "QdaModel":
        """Build a QDA model from given moments (no ridge is added)."""
        invs, dets = [], []
        for cov in covs:
            inv, logdet, _ = _regularized_inverse(np.asarray(cov, dtype=np.float64), 0.0, "class")
            invs.append(inv)
            dets.append(logdet)
        return cls(
            np.asarray(classes), np.asarray(means, dtype=np.float64), np.array(invs),
            np.array(dets), np.log(np.asarray(priors, dtype=np.float64)),
        )


def lda_train(data: Dataset, ridge: Optional[float] = None) -> LdaModel:
    """Fit class means, pooled covariance (denominator ``n - S``) and priors.

    ``ridge=None`` uses ``1e-6 * trace / p`` of the pooled covariance.
    """
    classes, groups, means, counts = _class_stats(data)
    n, s = counts.sum(), len(classes)
    scatter = sum((g - mu).T @ (g - mu) for g, mu in zip(groups, means))
    pooled = scatter / (n - s)
    inv, _, _ = _regularized_inverse(pooled, ridge, "pooled")
    return LdaModel(classes, means, inv, np.log(counts / n))


def qda_train(data: Dataset, ridge: Optional[float] = None) -> QdaModel:
    """Per-class means and covariances (denominator ``n_k - 1``) plus priors."""
    classes, groups, means, counts = _class_stats(data)
    invs, dets = [], []
    for c, g, mu in zip(classes, groups, means):
        cov = (g - mu).T @ (g - mu) / (g.shape[0] - 1)
        inv, logdet, _ = _regularized_inverse(cov, ridge, f"class {c}")
        invs.append(inv)
        dets.append(logdet)
    return QdaModel(classes, means, np.array(invs), np.array(dets), np.log(counts / counts.sum()))


def _as_queries(x, p: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != p:
        raise ValueError(f"expected {p} features, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("query contains non-finite values")
    return x, single


def lda_score(model: LdaModel, x) -> np.ndarray:
    """Linear discriminants ``x' S^-1 mu_k - mu_k' S^-1 mu_k / 2 + log pi_k``.

    A single query gives an ``(S,)`` vector; a matrix gives ``(n, S)``.
    """
    xs, single = _as_queries(x, model.n_features)
    proj = model.pooled_cov_inverse @ model.class_means.T
    const = -0.5 * np.einsum("kp,pk->k", model.class_means, proj) + model.log_priors
    out = xs @ proj + const
    return out[0] if single else out


def qda_score(model: QdaModel, x) -> np.ndarray:
    """Quadratic discriminants ``-log|S_k|/2 - (x-mu_k)' S_k^-1 (x-mu_k)/2 + log pi_k``."""
    xs, single = _as_queries(x, model.n_features)
    out = np.empty((xs.shape[0], model.classes.size))
    for k in range(model.classes.size):
        d = xs - model.class_means[k]
        maha = np.einsum("ij,jk,ik->i", d, model.cov_inverses[k], d)
        out[:, k] = -0.5 * model.log_dets[k] - 0.5 * maha + model.log_priors[k]
    return out[0] if single else out


def discriminant_predict(scores) -> np.ndarray:
    """Index of the largest score; ties go to the lowest index."""
    scores = np.asarray(scores, dtype=np.float64)
    # np.argmax returns the first maximum, which is the tie rule we want.
    return np.argmax(scores, axis=-1)
