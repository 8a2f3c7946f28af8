"""Command-line interface: ``drpt select|synth|eval|stability``.

Exit codes: 0 success, 2 usage or input error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .data import knn_impute, load_csv, stratified_split, write_csv
from .errors import InputError, NumericalError
from .evaluation import prefix_accuracy, stability_study
from .selector import DrptConfig, run_pipeline
from .synth import PlantedSpec, paper_synthetic, planted

log = logging.getLogger("drpt")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


def _bins(value: str):
    if value == "auto":
        return value
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a positive integer, got {value!r}")
    if n < 1:
        raise argparse.ArgumentTypeError("bins must be positive")
    return n


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Append ``(default: ...)`` unless the flag is required or states its own default."""

    def _get_help_string(self, action):
        if action.required or "default" in (action.help or ""):
            return action.help
        return super()._get_help_string(action)


def _add_input(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("input")
    g.add_argument("--input", required=True, help="CSV file with features and a label column")
    g.add_argument("--label", default="last", help="label column: header name, zero-based index, or 'last'")
    g.add_argument("--no-header", action="store_true", help="the CSV has no header row")
    g.add_argument(
        "--continuous-label",
        action="store_true",
        help="treat the label as a real-valued target (class codes from a median split)",
    )
    g.add_argument("--impute-k", type=int, default=5, help="neighbours for kNN imputation of empty cells")


def _add_selector(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("selector")
    g.add_argument("--k", type=int, default=50, help="number of features to return")
    g.add_argument("--s", type=int, default=3, help="perturbation exponent: ||E||_2 = 10^-s sigma_min")
    g.add_argument("--smooth-window", type=int, default=7, help="Savitzky-Golay window (odd)")
    g.add_argument("--smooth-order", type=int, default=2, help="Savitzky-Golay polynomial order")
    g.add_argument("--bins", type=_bins, default="auto", help="entropy bins ('auto' = ceil(sqrt(m)))")
    g.add_argument(
        "--cluster-epsilon", type=float, default=0.2, help="plateau gap as a fraction of the delta-x range"
    )
    g.add_argument("--seed", type=int, default=0, help="seed for the perturbation and any split")
    g.add_argument(
        "--paper-literal-e",
        action="store_true",
        help="scale E entrywise by 10^-s sigma_min instead of rescaling its spectral norm",
    )
    g.add_argument("--minmax", action="store_true", help="min-max scale features to [0, 1] before unit-norm scaling")


def _add_eval(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("evaluation")
    g.add_argument("--classifier", choices=["knn", "centroid"], default="knn", help="stand-in classifier")
    g.add_argument("--knn-k", type=int, default=5, help="neighbours for the knn classifier")
    g.add_argument("--train-fraction", type=float, default=0.7, help="per-class training fraction")


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    parser = argparse.ArgumentParser(
        prog="drpt", description="Feature selection by least squares and matrix perturbation.", formatter_class=fmt
    )
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="rank features of a CSV dataset", formatter_class=fmt)
    _add_input(p)
    _add_selector(p)
    p.add_argument("--output", default="drpt_report.json", help="JSON report path")
    p.add_argument(
        "--features-csv", default=None, help="ranked feature CSV path (default: <output stem>.features.csv)"
    )
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("synth", help="write a synthetic dataset as CSV", formatter_class=fmt)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--paper", action="store_true", help="the 100 x 22 worked example")
    src.add_argument("--spec", default=None, help="JSON file describing a planted dataset (default: none)")
    p.add_argument("--seed", type=int, default=0, help="generator seed for --paper (a planted recipe carries its own seed)")
    p.add_argument("--output", "--out", dest="output", default="synth.csv", help="CSV output path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="select on a stratified split and score prefix accuracy", formatter_class=fmt)
    _add_input(p)
    _add_selector(p)
    _add_eval(p)
    p.add_argument("--output", default="drpt_eval.json", help="JSON output path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stability", help="repeat eval over row-shuffled copies", formatter_class=fmt)
    _add_input(p)
    _add_selector(p)
    _add_eval(p)
    p.add_argument("--runs", type=int, default=10, help="number of shuffled runs (>= 2)")
    p.add_argument("--output", default="drpt_stability.json", help="JSON output path")
    p.set_defaults(func=cmd_stability)
    return parser


def _config(args) -> DrptConfig:
    return DrptConfig(
        s=args.s,
        smooth_window=args.smooth_window,
        smooth_order=args.smooth_order,
        entropy_bins=args.bins,
        cluster_epsilon=args.cluster_epsilon,
        seed=args.seed,
        k=args.k,
        rescale_e_to_spectral=not args.paper_literal_e,
        minmax_scale=args.minmax,
    )


def _load(args):
    label = int(args.label) if args.label.lstrip("-").isdigit() and args.no_header else args.label
    d = load_csv(args.input, label, has_header=not args.no_header, continuous_label=args.continuous_label)
    if d.has_missing:
        log.info("imputing missing cells with k=%d", args.impute_k)
        d = knn_impute(d, args.impute_k)
    return d


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def cmd_select(args) -> int:
    cfg = _config(args)
    d = _load(args)
    report = run_pipeline(d, cfg)
    out = Path(args.output)
    _write_json(out, report.to_dict())
    feats = Path(args.features_csv) if args.features_csv else out.with_name(out.stem + ".features.csv")
    with feats.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "rank", "weight", "delta_x", "entropy"])
        for f in report.ranked:
            w.writerow([f.name, f.rank, repr(f.weight), repr(f.delta_x), repr(f.entropy)])
    print(f"selected {len(report.ranked)} of {d.n} features (seed {cfg.seed}) -> {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.paper:
        d = paper_synthetic(args.seed)
    else:
        try:
            obj = json.loads(Path(args.spec).read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.spec}: invalid JSON ({exc})") from exc
        d = planted(PlantedSpec.from_dict(obj))
    write_csv(d, args.output)
    print(f"wrote {d.m}x{d.n} dataset plus label -> {args.output}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    d = _load(args)
    split = stratified_split(d, args.train_fraction, seed=cfg.seed)
    report = run_pipeline(d.take_rows(split.train_rows), cfg)
    ev = prefix_accuracy(d, report, split, args.classifier, cfg.k, args.knn_k)
    _write_json(
        args.output,
        {
            "split": split.to_dict(),
            "selection": report.to_dict(),
            "evaluation": ev.to_dict(),
        },
    )
    print(
        f"{ev.classifier}: best accuracy {ev.best_accuracy:.4f} with the first {ev.best_t} "
        f"of {len(ev.curve)} features (seed {cfg.seed})"
    )
    return EXIT_OK


def cmd_stability(args) -> int:
    if args.runs < 2:
        raise InputError(f"--runs must be at least 2, got {args.runs}")
    cfg = _config(args)
    d = _load(args)
    res = stability_study(d, cfg, args.runs, args.classifier, args.knn_k, args.train_fraction)
    _write_json(
        args.output,
        {"config": {**cfg.to_dict(), "classifier": args.classifier, "knn_k": args.knn_k,
                    "train_fraction": args.train_fraction}, **res.to_dict()},
    )
    print(
        f"{res.runs} runs: accuracy {res.mean_accuracy:.4f} +/- {res.sd_accuracy:.4f}, "
        f"size {res.mean_size:.1f} +/- {res.sd_size:.1f}, Jaccard {res.mean_jaccard:.3f} (seed {cfg.seed})"
    )
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"drpt: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InputError as exc:
        print(f"drpt: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"drpt: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
