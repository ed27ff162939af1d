"""LDA, QDA, kernel SVM and k-NN behind one ``fit``/``predict`` contract."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Union

from ..dataset import Dataset
from .discriminant import (
    LdaModel,
    QdaModel,
    SingularCovarianceError,
    discriminant_predict,
    lda_score,
    lda_train,
    qda_score,
    qda_train,
)
from .knn import KnnModel, knn_distance, knn_predict, knn_train
from .svm import (
    ConvergenceError,
    KernelSpec,
    SvmModel,
    kernel_eval,
    kkt_residuals,
    svm_predict,
    svm_train,
)

CLASSIFIERS = ("lda", "qda", "svm-rbf", "svm-poly", "knn")
DISPLAY_NAMES = {
    "lda": "LDA",
    "qda": "QDA",
    "svm-rbf": "SVM (RBF)",
    "svm-poly": "SVM (PLY)",
    "knn": "k-NN",
}

TrainedModel = Union[LdaModel, QdaModel, SvmModel, KnnModel]


@dataclass(frozen=True)
class ClassifierSpec:
    """Classifier family plus every hyperparameter the CLI exposes.

    Fields that do not apply to ``name`` are ignored.
    """

    name: str = "knn"
    C: float = 1.0
    gamma: Union[float, str] = "scale"
    degree: int = 2
    coef0: float = 1.0
    k: int = 3
    metric: str = "euclidean"
    ridge: Optional[float] = None
    tol: float = 1e-3
    max_iter: int = 200_000
    seed: int = 0

    def __post_init__(self):
        if self.name not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {self.name!r}; choose from {', '.join(CLASSIFIERS)}")

    @property
    def kernel(self) -> KernelSpec:
        kind = "rbf" if self.name == "svm-rbf" else "polynomial"
        return KernelSpec(kind, self.gamma, self.degree, self.coef0)

    def with_name(self, name: str) -> "ClassifierSpec":
        return ClassifierSpec(**{**asdict(self), "name": name})

    def describe(self) -> str:
        keys = {
            "lda": ("ridge",),
            "qda": ("ridge",),
            "svm-rbf": ("C", "gamma", "tol"),
            "svm-poly": ("C", "gamma", "degree", "coef0", "tol"),
            "knn": ("k", "metric"),
        }[self.name]
        return " ".join([f"classifier={self.name}"] + [f"{k}={getattr(self, k)}" for k in keys])


def fit(spec: ClassifierSpec, data: Dataset) -> TrainedModel:
    if spec.name == "lda":
        return lda_train(data, spec.ridge)
    if spec.name == "qda":
        return qda_train(data, spec.ridge)
    if spec.name == "knn":
        return knn_train(data, spec.k, spec.metric)
    return svm_train(data, spec.kernel, spec.C, spec.tol, spec.max_iter, spec.seed)


def predict(model: TrainedModel, points):
    return model.predict(points)


__all__ = [
    "CLASSIFIERS", "DISPLAY_NAMES", "ClassifierSpec", "TrainedModel", "fit", "predict",
    "LdaModel", "QdaModel", "SvmModel", "KnnModel", "KernelSpec",
    "lda_train", "qda_train", "lda_score", "qda_score", "discriminant_predict",
    "svm_train", "svm_predict", "kernel_eval", "kkt_residuals",
    "knn_train", "knn_predict", "knn_distance",
    "SingularCovarianceError", "ConvergenceError",
]
