"""Plain-text model files.

Layout::

    accent-mfcc-model 1
    kind=svm
    <key>=<value>
    ...
    matrix <name> <rows> <cols>
    <row of whitespace separated floats>
    ...

Floats are written with 17 significant digits so a reloaded model gives
bit-identical predictions.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .discriminant import LdaModel, QdaModel
from .knn import KnnModel
from .svm import KernelSpec, SvmModel

MAGIC = "accent-mfcc-model"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _matrix_lines(name: str, m) -> list[str]:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    lines = [f"matrix {name} {m.shape[0]} {m.shape[1]}"]
    lines += [" ".join(_fmt(v) for v in row) for row in m]
    return lines


def dumps(model, header: Sequence[str] = ()) -> str:
    lines = [f"{MAGIC} {FORMAT_VERSION}"]
    lines += [f"# {h}" for h in header]
    classes = " ".join(str(int(c)) for c in model.classes) if hasattr(model, "classes") else None
    if isinstance(model, LdaModel):
        lines += ["kind=lda", f"classes={classes}"]
        lines += _matrix_lines("class_means", model.class_means)
        lines += _matrix_lines("pooled_cov_inverse", model.pooled_cov_inverse)
        lines += _matrix_lines("log_priors", model.log_priors)
    elif isinstance(model, QdaModel):
        lines += ["kind=qda", f"classes={classes}"]
        lines += _matrix_lines("class_means", model.class_means)
        for k, inv in enumerate(model.cov_inverses):
            lines += _matrix_lines(f"cov_inverse_{k}", inv)
        lines += _matrix_lines("log_dets", model.log_dets)
        lines += _matrix_lines("log_priors", model.log_priors)
    elif isinstance(model, SvmModel):
        kern = model.kernel
        lines += [
            "kind=svm",
            f"classes={classes}",
            f"kernel={kern.kind}",
            f"gamma={_fmt(kern.gamma)}",
            f"degree={kern.degree}",
            f"coef0={_fmt(kern.coef0)}",
            f"C={_fmt(model.C)}",
            f"bias={_fmt(model.bias)}",
            f"n_features={model.n_features}",
        ]
        if model.alphas.size:
            lines += _matrix_lines("support_vectors", model.support_vectors)
            lines += _matrix_lines("support_labels", model.support_labels)
            lines += _matrix_lines("alphas", model.alphas)
    elif isinstance(model, KnnModel):
        lines += ["kind=knn", f"k={model.k}", f"metric={model.metric}"]
        lines += _matrix_lines("stored_points", model.stored_points)
        lines += _matrix_lines("stored_labels", model.stored_labels)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return "\n".join(lines) + "\n"


def loads(text: str):
    lines = text.splitlines()
    if not lines or not lines[0].startswith(MAGIC):
        raise ModelFormatError("not a model file")
    try:
        version = int(lines[0].split()[1])
    except (IndexError, ValueError):
        raise ModelFormatError("model file has no version") from None
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unknown model version {version} (this build reads {FORMAT_VERSION})")
    keys, mats = {}, {}
    pos = 1
    while pos < len(lines):
        line = lines[pos].strip()
        pos += 1
        if not line or line.startswith("#"):
            continue
        if line.startswith("matrix "):
            _, name, rows, cols = line.split()
            rows, cols = int(rows), int(cols)
            block = [lines[pos + r].split() for r in range(rows)]
            pos += rows
            m = np.array(block, dtype=np.float64).reshape(rows, cols)
            mats[name] = m
        else:
            key, sep, value = line.partition("=")
            if not sep:
                raise ModelFormatError(f"malformed line {line!r}")
            keys[key] = value
    kind = keys.get("kind")
    classes = np.array([int(c) for c in keys.get("classes", "0 1").split()])
    if kind == "lda":
        return LdaModel(classes, mats["class_means"], mats["pooled_cov_inverse"], mats["log_priors"][0])
    if kind == "qda":
        invs = np.array([mats[f"cov_inverse_{k}"] for k in range(classes.size)])
        return QdaModel(classes, mats["class_means"], invs, mats["log_dets"][0], mats["log_priors"][0])
    if kind == "svm":
        kernel = KernelSpec(keys["kernel"], float(keys["gamma"]), int(keys["degree"]), float(keys["coef0"]))
        p = int(keys["n_features"])
        if "alphas" in mats:
            sv, sl, al = mats["support_vectors"], mats["support_labels"][0], mats["alphas"][0]
        else:
            sv, sl, al = np.zeros((0, p)), np.zeros(0), np.zeros(0)
        return SvmModel(sv, sl, al, float(keys["bias"]), kernel, float(keys["C"]), classes)
    if kind == "knn":
        labels = mats["stored_labels"][0].astype(np.int64)
        return KnnModel(mats["stored_points"], labels, int(keys["k"]), keys["metric"])
    raise ModelFormatError(f"unknown model kind {kind!r}")


def save_model(path, model, header: Sequence[str] = ()) -> None:
    Path(path).write_text(dumps(model, header), encoding="utf-8")


def load_model(path):
    return loads(Path(path).read_text(encoding="utf-8"))
