"""Repeated stratified holdout cross-validation and the classifier x q grid."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .classifiers import ClassifierSpec, fit
from .dataset import Dataset, format_float

GRID_Q_LEVELS = (12, 19, 26, 33, 39)
MASK64 = (1 << 64) - 1


class CrossValidationError(RuntimeError):
    def __init__(self, rep_index: int, cause: Exception):
        super().__init__(f"repetition {rep_index}: {type(cause).__name__}: {cause}")
        self.rep_index = rep_index
        self.cause = cause


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def rep_seed(master_seed: int, rep_index: int) -> int:
    return splitmix64((splitmix64(master_seed & MASK64) + rep_index) & MASK64)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    repetitions: int = 500
    master_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")

    def describe(self) -> str:
        return f"train_fraction={self.train_fraction} reps={self.repetitions} seed={self.master_seed}"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)


def train_count(n: int, fraction: float) -> int:
    # Guard against products like 0.7 * 30 = 20.999999999999996.
    return int(math.floor(fraction * n + 1e-9))


def stratified_split(data: Dataset, spec: SplitSpec, rep_index: int) -> tuple[Dataset, Dataset]:
    """Shuffle each class with a per-repetition generator and cut it.

    The first ``floor(train_fraction * n_k)`` shuffled points of class ``k``
    train, the rest test.  Both partitions keep the original row order.
    """
    if not 0 <= rep_index < spec.repetitions:
        raise ValueError(f"rep_index {rep_index} outside [0, {spec.repetitions})")
    rng = np.random.default_rng(rep_seed(spec.master_seed, rep_index))
    train, test = [], []
    for c in np.unique(data.labels):
        idx = rng.permutation(np.flatnonzero(data.labels == c))
        n_train = train_count(idx.size, spec.train_fraction)
        if n_train < 1 or n_train >= idx.size:
            raise ValueError(
                f"class {c} has {idx.size} points; fraction {spec.train_fraction} leaves an empty partition"
            )
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    return data.subset(np.sort(np.concatenate(train))), data.subset(np.sort(np.concatenate(test)))


def confusion(preds, truth, positive: int = 1) -> ConfusionCounts:
    """2x2 tally; label 1 (non-US) is the positive class."""
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {truth.shape}")
    p, t = preds == positive, truth == positive
    return ConfusionCounts(
        tp=int(np.sum(p & t)), tn=int(np.sum(~p & ~t)), fp=int(np.sum(p & ~t)), fn=int(np.sum(~p & t))
    )


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise ValueError("accuracy of an empty confusion table")
    return (c.tp + c.tn) / c.total


@dataclass
class CvResult:
    accuracies: np.ndarray
    confusion: ConfusionCounts
    train_seconds: float
    predict_seconds: float

    @property
    def repetitions(self) -> int:
        return self.accuracies.size

    @property
    def mean_accuracy(self) -> float:
        return math.fsum(self.accuracies) / self.accuracies.size

    @property
    def std_accuracy(self) -> float:
        if self.accuracies.size < 2:
            return 0.0
        return float(np.std(self.accuracies, ddof=1))


def _one_rep(data: Dataset, clf: ClassifierSpec, spec: SplitSpec, rep: int):
    try:
        train, test = stratified_split(data, spec, rep)
        t0 = time.perf_counter()
        model = fit(clf, train)
        t1 = time.perf_counter()
        preds = model.predict(test.points)
        t2 = time.perf_counter()
    except Exception as exc:
        raise CrossValidationError(rep, exc) from exc
    return confusion(preds, test.labels), t1 - t0, t2 - t1


def run_cv(data: Dataset, clf: ClassifierSpec, spec: SplitSpec, threads: int = 1) -> CvResult:
    """Train/test over ``spec.repetitions`` stratified holdout splits.

    Accuracies depend only on ``(data, clf, spec)``; only the timings vary
    between runs.  Timings are meaningful only with ``threads=1``.
    """
    data.require_training_labels()
    reps = range(spec.repetitions)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda r: _one_rep(data, clf, spec, r), reps))
    else:
        results = [_one_rep(data, clf, spec, r) for r in reps]
    total = ConfusionCounts()
    accs = np.empty(len(results))
    for r, (cm, _, _) in enumerate(results):
        total = total + cm
        accs[r] = accuracy(cm)
    return CvResult(
        accuracies=accs,
        confusion=total,
        train_seconds=math.fsum(t for _, t, _ in results),
        predict_seconds=math.fsum(t for _, _, t in results),
    )


@dataclass(frozen=True)
class EvalRow:
    classifier: str
    q: int
    mean_acc: float
    std_acc: float
    train_s: float
    predict_s: float
    reps: int

    @property
    def total_s(self) -> float:
        return self.train_s + self.predict_s


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    header: list[str] = field(default_factory=list)

    CSV_COLUMNS = ("classifier", "q", "mean_acc", "std_acc", "train_s", "predict_s", "reps")

    def to_csv(self) -> str:
        lines = [f"# {h}" for h in self.header]
        lines.append(",".join(self.CSV_COLUMNS))
        for r in self.rows:
            lines.append(
                ",".join([
                    r.classifier, str(r.q), format_float(r.mean_acc), format_float(r.std_acc),
                    format_float(r.train_s), format_float(r.predict_s), str(r.reps),
                ])
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "config": self.header,
            "rows": [{**asdict(r), "total_s": r.total_s} for r in self.rows],
        }
        return json.dumps(doc, indent=2) + "\n"

    def accuracy_table(self) -> str:
        """Tall ``classifier,q,mean_acc,std_acc`` table for redrawing accuracy curves."""
        lines = ["classifier,q,mean_acc,std_acc"]
        lines += [f"{r.classifier},{r.q},{format_float(r.mean_acc)},{format_float(r.std_acc)}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def timing_table(self) -> str:
        lines = ["classifier,q,total_s"]
        lines += [f"{r.classifier},{r.q},{format_float(r.total_s)}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def write(self, csv_path, json_path=None, plot_prefix=None) -> None:
        Path(csv_path).write_text(self.to_csv(), encoding="utf-8")
        if json_path is not None:
            Path(json_path).write_text(self.to_json(), encoding="utf-8")
        if plot_prefix is not None:
            Path(f"{plot_prefix}_accuracy.csv").write_text(self.accuracy_table(), encoding="utf-8")
            Path(f"{plot_prefix}_time.csv").write_text(self.timing_table(), encoding="utf-8")

    def get(self, classifier: str, q: int) -> EvalRow:
        for r in self.rows:
            if r.classifier == classifier and r.q == q:
                return r
        raise KeyError((classifier, q))

    def total_time(self, classifier: str) -> float:
        return math.fsum(r.total_s for r in self.rows if r.classifier == classifier)

    def pivot(self, value: str = "mean_acc") -> str:
        """Human-readable grid with q down the side and classifiers across."""
        names = list(dict.fromkeys(r.classifier for r in self.rows))
        qs = sorted({r.q for r in self.rows})
        width = max(10, *(len(n) + 2 for n in names))
        out = ["# MFCCs".ljust(8) + "".join(n.rjust(width) for n in names)]
        for q in qs:
            cells = []
            for n in names:
                r = self.get(n, q)
                v = r.total_s if value == "total_s" else getattr(r, value)
                cells.append(f"{v:.4f}".rjust(width) if value != "total_s" else f"{v:.3f}".rjust(width))
            out.append(str(q).ljust(8) + "".join(cells))
        return "\n".join(out)


def benchmark_grid(
    data: Dataset,
    q_levels: Sequence[int],
    classifiers: Sequence[ClassifierSpec],
    spec: SplitSpec,
    threads: int = 1,
    progress: Optional[Callable[[EvalRow], None]] = None,
) -> EvalReport:
    """``run_cv`` for every ``(q, classifier)`` pair, q-major.

    ``data`` must carry at least ``max(q_levels)`` columns; each level uses
    the leading ``q`` of them.
    """
    if not q_levels or not classifiers:
        raise ValueError("grid needs at least one q level and one classifier")
    if max(q_levels) > data.n_features:
        raise ValueError(f"q={max(q_levels)} exceeds the {data.n_features} available coefficients")
    report = EvalReport(header=[spec.describe()])
    for q in q_levels:
        sub = data.truncate(q)
        for clf in classifiers:
            res = run_cv(sub, clf, spec, threads)
            row = EvalRow(
                clf.name, q, res.mean_accuracy, res.std_accuracy,
                res.train_seconds, res.predict_seconds, res.repetitions,
            )
            report.rows.append(row)
            if progress is not None:
                progress(row)
    return report
