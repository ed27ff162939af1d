"""Binary soft-margin kernel SVM trained by sequential minimal optimization.

The solver works on the dual

    min_a  1/2 a'Qa - e'a   s.t.  y'a = 0,  0 <= a_i <= C,   Q_ij = y_i y_j K_ij

updating two multipliers at a time.  The working pair is the maximal
violating ``i`` plus the ``j`` giving the largest second-order decrease of
the objective.  Training stops once every point satisfies the KKT
conditions to within ``tol`` in terms of ``y_i f(x_i) - 1``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from ..dataset import Dataset

log = logging.getLogger(__name__)

TAU = 1e-12


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """RBF ``exp(-gamma |a-b|^2)`` or polynomial ``(gamma a.b + coef0)^degree``.

    ``gamma`` may be a number, ``"scale"`` for ``1 / (p * Var(X))`` over all
    training entries, or ``"auto"`` for ``1 / p``.  With ``gamma=1`` the
    polynomial kernel is the plain ``(a.b + c)^d``.
    """

    kind: str = "rbf"
    gamma: Union[float, str] = "scale"
    degree: int = 2
    coef0: float = 1.0

    def __post_init__(self):
        if self.kind not in ("rbf", "polynomial"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if isinstance(self.gamma, str):
            if self.gamma not in ("scale", "auto"):
                raise ValueError(f"gamma must be a positive number, 'scale' or 'auto', got {self.gamma!r}")
        elif not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError("degree must be a positive integer")

    def resolved(self, x: np.ndarray) -> "KernelSpec":
        """Replace a symbolic ``gamma`` by its value on training matrix ``x``."""
        if not isinstance(self.gamma, str):
            return self
        x = np.atleast_2d(x)
        p = x.shape[1]
        if self.gamma == "auto":
            gamma = 1.0 / p
        else:
            var = float(x.var())
            gamma = 1.0 / (p * var) if var > 0 else 1.0
        return replace(self, gamma=gamma)

    def matrix(self, a, b) -> np.ndarray:
        """Kernel values between every row of ``a`` and every row of ``b``."""
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        b = np.atleast_2d(np.asarray(b, dtype=np.float64))
        if a.shape[1] != b.shape[1]:
            raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
        if isinstance(self.gamma, str):
            raise ValueError("symbolic gamma; call resolved() with training data first")
        if self.kind == "rbf":
            sq = (
                np.einsum("ij,ij->i", a, a)[:, None]
                + np.einsum("ij,ij->i", b, b)[None, :]
                - 2.0 * (a @ b.T)
            )
            return np.exp(-self.gamma * np.maximum(sq, 0.0))
        return (self.gamma * (a @ b.T) + self.coef0) ** self.degree


def kernel_eval(spec: KernelSpec, a, b) -> float:
    """Exact single-pair kernel value; ``gamma`` must be numeric or ``"auto"``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if spec.gamma == "scale":
        raise ValueError("gamma='scale' needs training data; pass a number")
    gamma = spec.resolved(a[None, :]).gamma
    if spec.kind == "rbf":
        d = a - b
        return float(np.exp(-gamma * np.dot(d, d)))
    return float((gamma * np.dot(a, b) + spec.coef0) ** spec.degree)


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray
    support_labels: np.ndarray
    alphas: np.ndarray
    bias: float
    kernel: KernelSpec
    C: float
    classes: np.ndarray = field(default_factory=lambda: np.array([0, 1]))
    support_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    iterations: int = 0

    kind = "svm"

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[1]}")
        if not np.all(np.isfinite(x)):
            raise ValueError("query contains non-finite values")
        if self.alphas.size:
            k = self.kernel.matrix(x, self.support_vectors)
            f = k @ (self.alphas * self.support_labels) + self.bias
        else:
            f = np.full(x.shape[0], self.bias)
        return f[0] if single else f

    def predict(self, x) -> np.ndarray:
        # Positive side is the second class; an exact zero goes to the first.
        return np.where(self.decision_function(x) > 0, self.classes[1], self.classes[0])


def svm_predict(model: SvmModel, x):
    return model.predict(x)


def _select_pair(grad, alpha, y, C, kdiag, krow_fn):
    """Return ``(i, j, gap)``; ``i``/``j`` are None when nothing violates."""
    # u_t = -y_t G_t; I_up may raise u, I_low may lower it.
    u = -y * grad
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    if not up.any() or not low.any():
        return None, None, 0.0
    u_up = np.where(up, u, -np.inf)
    i = int(np.argmax(u_up))
    m_up = u_up[i]
    m_low = float(np.min(np.where(low, u, np.inf)))
    gap = m_up - m_low
    cand = low & (u < m_up)
    if not cand.any():
        return None, None, gap
    k_i = krow_fn(i)
    quad = kdiag[i] + kdiag - 2.0 * k_i
    quad = np.where(quad > 0, quad, TAU)
    b = m_up - u
    obj = np.where(cand, -(b * b) / quad, np.inf)
    j = int(np.argmin(obj))
    return i, j, gap


def _bias(grad, alpha, y, C) -> float:
    u = -y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(np.mean(u[free]))
    lower = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    upper = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    lo = np.max(u[lower]) if lower.any() else np.min(u[upper])
    hi = np.min(u[upper]) if upper.any() else lo
    return float(0.5 * (lo + hi))


def solve_dual(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_iter: int):
    """SMO on a precomputed Gram matrix.  Returns ``(alpha, bias, iterations, gap)``."""
    n = y.size
    alpha = np.zeros(n)
    grad = -np.ones(n)
    kdiag = np.diag(K).copy()
    # Signed Q rows: Q[t, s] = y_t y_s K[t, s].
    Q = (y[:, None] * y[None, :]) * K
    it = 0
    gap = np.inf
    while True:
        i, j, gap = _select_pair(grad, alpha, y, C, kdiag, lambda r: K[r])
        if i is None or gap <= tol:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"SMO did not converge in {max_iter} iterations; worst KKT violation {gap:.3g}"
            )
        it += 1
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            delta = (-grad[i] - grad[j]) / max(quad, TAU)
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            delta = (grad[i] - grad[j]) / max(quad, TAU)
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        d_i, d_j = ai - alpha[i], aj - alpha[j]
        alpha[i], alpha[j] = ai, aj
        grad += Q[:, i] * d_i + Q[:, j] * d_j
    return alpha, _bias(grad, alpha, y, C), it, gap


def svm_train(
    data: Dataset,
    kernel: KernelSpec = KernelSpec(),
    C: float = 1.0,
    tol: float = 1e-3,
    max_iter: int = 200_000,
    seed: int = 0,
) -> SvmModel:
    """Fit a binary SVM; the larger label maps to ``y = +1``.

    ``seed`` fixes the scan order used to break ties between equally
    violating candidates, so the result is a deterministic function of
    ``(data, kernel, C, tol, seed)``.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    data.require_training_labels()
    classes = data.classes
    if classes.size != 2:
        raise ValueError("SVM is binary; got %d classes" % classes.size)
    kernel = kernel.resolved(data.points)
    order = np.random.default_rng(seed).permutation(len(data))
    x = data.points[order]
    y = np.where(data.labels[order] == classes[1], 1.0, -1.0)
    K = kernel.matrix(x, x)
    alpha, bias, it, gap = solve_dual(K, y, float(C), float(tol), max_iter)
    log.debug("SMO finished after %d iterations, gap %.3g", it, gap)
    sv = alpha > 0
    return SvmModel(
        support_vectors=x[sv],
        support_labels=y[sv],
        alphas=alpha[sv],
        bias=bias,
        kernel=kernel,
        C=float(C),
        classes=classes,
        support_indices=order[sv],
        iterations=it,
    )


def full_alphas(model: SvmModel, n: int) -> np.ndarray:
    """Dual variables for all ``n`` training points (zero off the support)."""
    alpha = np.zeros(n)
    alpha[model.support_indices] = model.alphas
    return alpha


def kkt_residuals(model: SvmModel, data: Dataset) -> np.ndarray:
    """Per-point KKT violation of a trained model on its training data.

    Zero means the condition for that point's ``alpha`` holds exactly:
    margin >= 1 at ``alpha = 0``, margin = 1 when free, margin <= 1 at ``C``.
    """
    alpha = full_alphas(model, len(data))
    y = np.where(data.labels == model.classes[1], 1.0, -1.0)
    margin = y * model.decision_function(data.points)
    res = np.where(alpha == 0, np.maximum(0.0, 1.0 - margin), 0.0)
    free = (alpha > 0) & (alpha < model.C)
    res = np.where(free, np.abs(margin - 1.0), res)
    return np.where(alpha == model.C, np.maximum(0.0, margin - 1.0), res)
