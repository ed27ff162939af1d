"""Command-line entry point: ``accent-mfcc <subcommand> ...``.

Subcommands
-----------
synth      write a seeded synthetic two-accent WAV corpus plus manifest
extract    manifest of WAV files -> mean-MFCC feature CSV
train      feature CSV -> model file
predict    model file + feature CSV -> ``source_id,predicted_label`` CSV
evaluate   repeated stratified holdout on one classifier (or ``--grid``)
benchmark  the full q-level x classifier grid with timing tables

Every file written carries ``#`` header lines holding the settings that
produced it.  The exit status is 0 only if all requested work succeeded.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

from . import __version__
from .audio import load_manifest, load_wav, resolve_entry
from .classifiers import CLASSIFIERS, DISPLAY_NAMES, ClassifierSpec, fit
from .classifiers.io import FORMAT_VERSION as MODEL_FORMAT_VERSION
from .classifiers.io import load_model, save_model
from .dataset import Dataset, read_features, write_features
from .evaluation import GRID_Q_LEVELS, EvalReport, EvalRow, SplitSpec, benchmark_grid, run_cv
from .mfcc import MfccConfig, coefficient_names, extract_features

log = logging.getLogger("accent_mfcc")

FEATURE_FORMAT = "accent-mfcc-features 1"
# Grid defaults: 40 filters so that q=39 fits below the DCT length.
GRID_NUM_FILTERS = 40
GRID_NUM_COEFFS = 39


class CliError(Exception):
    pass


def _atomic_write(path, writer) -> None:
    """Call ``writer(tmp_path)`` then move the result into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _gamma(text: str):
    if text in ("scale", "auto"):
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("gamma must be a positive number, 'scale' or 'auto'") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("gamma must be positive")
    return value


def _q_levels(text: str) -> tuple[int, ...]:
    try:
        levels = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers") from None
    if not levels or min(levels) < 1:
        raise argparse.ArgumentTypeError("q levels must be positive")
    return levels


def _add_mfcc_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("MFCC settings")
    g.add_argument("--alpha", type=float, default=0.97, help="pre-emphasis coefficient (default 0.97)")
    g.add_argument("--frame-ms", type=float, default=25.0)
    g.add_argument("--hop-ms", type=float, default=10.0)
    g.add_argument("--num-filters", type=int, default=GRID_NUM_FILTERS, help="mel filters M (default 40)")
    g.add_argument("--num-coeffs", type=int, default=GRID_NUM_COEFFS, help="coefficients q (default 39)")
    g.add_argument("--f-low", type=float, default=0.0)
    g.add_argument("--f-high", type=float, default=None, help="upper edge in Hz (default Nyquist)")
    g.add_argument("--no-c0", dest="include_c0", action="store_false", help="drop c0 and return c1..cq")


def _add_classifier_flags(p: argparse.ArgumentParser, single: bool = True) -> None:
    g = p.add_argument_group("classifier settings")
    if single:
        g.add_argument("--classifier", choices=CLASSIFIERS, default="knn")
    g.add_argument("--C", type=float, default=1.0, help="SVM box constraint")
    g.add_argument("--gamma", type=_gamma, default="scale",
                   help="kernel gamma: number, 'scale' (1/(p*Var X), default) or 'auto' (1/p)")
    g.add_argument("--degree", type=int, default=2, help="polynomial kernel degree")
    g.add_argument("--coef0", type=float, default=1.0, help="polynomial kernel offset c")
    g.add_argument("--k", type=int, default=3, help="k-NN neighbour count")
    g.add_argument("--metric", choices=("euclidean", "manhattan"), default="euclidean")
    g.add_argument("--ridge", type=float, default=None, help="covariance ridge (default 1e-6*trace/p)")
    g.add_argument("--tol", type=float, default=1e-3, help="SVM KKT tolerance")
    g.add_argument("--max-iter", type=int, default=200_000, help="SVM iteration cap")


def _add_split_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("cross-validation")
    g.add_argument("--seed", type=int, required=True, help="master seed (required)")
    g.add_argument("--reps", type=int, default=500, help="holdout repetitions (default 500)")
    g.add_argument("--train-fraction", type=float, default=0.7)
    g.add_argument("--threads", type=int, default=1, help="worker threads; use 1 for timing runs")


def _classifier_spec(args, name: str) -> ClassifierSpec:
    return ClassifierSpec(
        name=name, C=args.C, gamma=args.gamma, degree=args.degree, coef0=args.coef0,
        k=args.k, metric=args.metric, ridge=args.ridge, tol=args.tol, max_iter=args.max_iter,
        seed=getattr(args, "seed", 0) or 0,
    )


def _mfcc_config(args) -> MfccConfig:
    return MfccConfig(
        alpha=args.alpha, frame_ms=args.frame_ms, hop_ms=args.hop_ms,
        num_filters=args.num_filters, num_coeffs=args.num_coeffs,
        f_low=args.f_low, f_high=args.f_high, include_c0=args.include_c0,
    )


def _feature_provenance(comments: Sequence[str]) -> list[str]:
    return [f"features: {c}" for c in comments]


def _load_features(path) -> tuple[Dataset, list[str]]:
    try:
        return read_features(path)
    except OSError as exc:
        raise CliError(f"cannot read features {path}: {exc}") from exc


# subcommands


def cmd_synth(args) -> int:
    from .synth import CorpusLayout, write_corpus

    layout = CorpusLayout(
        speakers_per_accent=args.speakers, female_per_accent=(args.speakers + 1) // 2, words=args.words
    )
    manifest = write_corpus(args.out, args.seed, layout)
    print(f"wrote {manifest}")
    return 0


def _extract_one(manifest_path, entry, config):
    path, label = entry
    clip = load_wav(resolve_entry(manifest_path, path))
    vec = extract_features(clip, config, label)
    return path, vec


def cmd_extract(args) -> int:
    config = _mfcc_config(args)
    manifest = load_manifest(args.manifest)
    entries = list(manifest.entries)

    def work(entry):
        try:
            return _extract_one(args.manifest, entry, config), None
        except Exception as exc:
            return None, f"{entry[0]}: {exc}"

    if args.threads > 1:
        with ThreadPoolExecutor(args.threads) as pool:
            results = list(pool.map(work, entries))
    else:
        results = [work(e) for e in entries]
    failures = [err for _, err in results if err is not None]
    if failures:
        for err in failures:
            print(f"error: {err}", file=sys.stderr)
        raise CliError(f"{len(failures)} of {len(entries)} clips failed; no feature file written")
    vectors = [vec for (path, vec), _ in results]
    ids = [path for (path, _), _ in results]
    data = Dataset(
        [v.values for v in vectors], [v.label for v in vectors], tuple(ids), tuple(coefficient_names(config))
    )
    header = [
        FEATURE_FORMAT,
        f"command: extract --manifest {args.manifest}",
        f"mfcc: {config.to_text()}",
    ]
    _atomic_write(args.out, lambda tmp: write_features(tmp, data, header))
    print(f"wrote {len(data)} feature rows x {data.n_features} coefficients to {args.out}")
    return 0


def _truncate(data: Dataset, q) -> Dataset:
    if q is None:
        return data
    if q > data.n_features:
        raise CliError(f"--q {q} exceeds the {data.n_features} coefficients in the feature file")
    return data.truncate(q)


def cmd_train(args) -> int:
    data, comments = _load_features(args.features)
    data = _truncate(data, args.q)
    spec = _classifier_spec(args, args.classifier)
    model = fit(spec, data)
    header = _feature_provenance(comments) + [
        f"command: train --features {args.features}",
        spec.describe() + f" seed={spec.seed}",
        f"q={data.n_features}",
    ]
    _atomic_write(args.model, lambda tmp: save_model(tmp, model, header))
    print(f"trained {DISPLAY_NAMES[spec.name]} on {len(data)} points x {data.n_features} features")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    data, _ = _load_features(args.features)
    if data.n_features != model.n_features:
        raise CliError(
            f"dimension mismatch: model expects {model.n_features} features, "
            f"{args.features} has {data.n_features}"
        )
    preds = model.predict(data.points)
    lines = [f"# model: {args.model}", f"# features: {args.features}", "source_id,predicted_label"]
    lines += [f"{sid},{int(p)}" for sid, p in zip(data.source_ids, preds)]
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        _atomic_write(args.out, lambda tmp: Path(tmp).write_text(text, encoding="utf-8"))
    return 0


def _run_header(args, comments, classifiers, split: SplitSpec) -> list[str]:
    header = _feature_provenance(comments)
    header.append(f"command: {args.command} --features {args.features}")
    header.append(split.describe() + f" threads={args.threads}")
    header += [c.describe() for c in classifiers]
    return header


def _write_report(args, report: EvalReport) -> None:
    _atomic_write(args.report, lambda tmp: Path(tmp).write_text(report.to_csv(), encoding="utf-8"))
    if args.json:
        _atomic_write(args.json, lambda tmp: Path(tmp).write_text(report.to_json(), encoding="utf-8"))
    if args.plot_data:
        for suffix, text in (("accuracy", report.accuracy_table()), ("time", report.timing_table())):
            Path(f"{args.plot_data}_{suffix}.csv").write_text(text, encoding="utf-8")


def _write_failure(args, header: list[str], exc: Exception) -> None:
    report = EvalReport(header=header + [f"status: failed: {exc}"])
    Path(args.report).write_text(report.to_csv(), encoding="utf-8")


def _evaluate(args, grid: bool) -> int:
    data, comments = _load_features(args.features)
    split = SplitSpec(args.train_fraction, args.reps, args.seed)
    if grid:
        names = args.classifiers.split(",") if args.classifiers else list(CLASSIFIERS)
        unknown = [n for n in names if n not in CLASSIFIERS]
        if unknown:
            raise CliError(f"unknown classifier(s): {', '.join(unknown)}")
        classifiers = [_classifier_spec(args, n) for n in names]
        q_levels = args.q_levels
    else:
        classifiers = [_classifier_spec(args, args.classifier)]
        q_levels = (args.q or data.n_features,)
    header = _run_header(args, comments, classifiers, split)
    header.append("q_levels=" + ",".join(str(q) for q in q_levels))

    def progress(row: EvalRow):
        log.info("%s q=%d mean=%.4f std=%.4f time=%.3fs", row.classifier, row.q, row.mean_acc, row.std_acc, row.total_s)

    try:
        if max(q_levels) > data.n_features:
            raise CliError(f"q={max(q_levels)} exceeds the {data.n_features} coefficients in {args.features}")
        if grid:
            report = benchmark_grid(data, q_levels, classifiers, split, args.threads, progress)
        else:
            sub = data.truncate(q_levels[0])
            res = run_cv(sub, classifiers[0], split, args.threads)
            report = EvalReport(rows=[EvalRow(
                classifiers[0].name, q_levels[0], res.mean_accuracy, res.std_accuracy,
                res.train_seconds, res.predict_seconds, res.repetitions,
            )])
    except Exception as exc:
        _write_failure(args, header, exc)
        raise
    report.header = header
    _write_report(args, report)
    print(report.pivot("mean_acc"))
    if grid:
        print()
        print("total seconds (train + predict)")
        print(report.pivot("total_s"))
        totals = {n: report.total_time(n) for n in dict.fromkeys(r.classifier for r in report.rows)}
        print("grid totals: " + ", ".join(f"{DISPLAY_NAMES[n]}={t:.3f}s" for n, t in totals.items()))
    return 0


def cmd_evaluate(args) -> int:
    return _evaluate(args, args.grid)


def cmd_benchmark(args) -> int:
    return _evaluate(args, True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="accent-mfcc", description="Accent recognition from mean MFCC features."
    )
    parser.add_argument(
        "--version", action="version",
        version=f"%(prog)s {__version__} ({FEATURE_FORMAT}, model format {MODEL_FORMAT_VERSION})",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a seeded synthetic two-accent corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--speakers", type=int, default=11, help="speakers per accent (default 11)")
    p.add_argument("--words", type=int, default=15, help="words per speaker (default 15)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="WAV manifest -> feature CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    _add_mfcc_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="feature CSV -> model file")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True, help="output model path")
    p.add_argument("--q", type=int, default=None, help="keep only the first q coefficients")
    p.add_argument("--seed", type=int, default=0, help="SVM working-set tie-break seed")
    _add_classifier_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="model + feature CSV -> predictions")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", default=None, help="prediction CSV (default stdout)")
    p.set_defaults(func=cmd_predict)

    for name, helptext in (("evaluate", "cross-validate one classifier (or --grid)"),
                           ("benchmark", "full q-level x classifier grid")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--features", required=True)
        p.add_argument("--report", required=True, help="report CSV path")
        p.add_argument("--json", default=None, help="also write a JSON report here")
        p.add_argument("--plot-data", default=None, metavar="PREFIX",
                       help="write PREFIX_accuracy.csv and PREFIX_time.csv")
        p.add_argument("--q-levels", type=_q_levels, default=GRID_Q_LEVELS,
                       help="grid q levels (default 12,19,26,33,39)")
        p.add_argument("--classifiers", default=None, help="comma-separated grid subset (default all)")
        if name == "evaluate":
            p.add_argument("--grid", action="store_true", help="run the q-level x classifier grid")
            p.add_argument("--q", type=int, default=None, help="coefficients to use (default all)")
        _add_classifier_flags(p, single=(name == "evaluate"))
        _add_split_flags(p)
        p.set_defaults(func=cmd_evaluate if name == "evaluate" else cmd_benchmark)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
