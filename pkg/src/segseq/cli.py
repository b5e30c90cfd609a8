"""Command-line entry point: ``segseq generate | fit | segment | features``.

Exit codes: 0 success, 2 bad config/schema/arguments, 3 I/O failure, 130 interrupted.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import io
from .features import feature_rows, save_features_csv
from .generator import sample_dataset, spec_from_dict
from .model import Hyperparams, InvalidArgument
from .trainer import fit, segment

log = logging.getLogger("segseq")

EXIT_CONFIG = 2
EXIT_IO = 3


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("SEGSEQ_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CLIError(EXIT_CONFIG, f"SEGSEQ_THREADS must be an integer, got {env!r}") from None
    return 1


def _check_out_dir(path: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(d):
        raise CLIError(EXIT_IO, f"output directory does not exist: {d}")


def _read_json(path: str):
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as err:
        raise CLIError(EXIT_CONFIG, f"{path}: not valid JSON ({err})") from None


def _load_hp(path, seed):
    hp = io.load_hyperparams(path) if path else Hyperparams()
    if seed is not None:
        hp = replace(hp, seed=seed)
    return hp


def cmd_generate(args) -> int:
    cfg = _read_json(args.config)
    spec = spec_from_dict(cfg)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    truth_path = args.truth or os.path.splitext(args.output)[0] + ".truth.json"
    _check_out_dir(args.output)
    _check_out_dir(truth_path)
    data, truths = sample_dataset(spec, np.random.default_rng(spec.seed))
    if args.output.lower().endswith(".csv"):
        io.save_dataset_csv(args.output, data)
    else:
        io.save_dataset(args.output, data)
    io.save_truth(truth_path, truths)
    print(f"wrote {len(data)} sequences to {args.output} and ground truth to {truth_path}")
    return 0


def cmd_fit(args) -> int:
    hp = _load_hp(args.config, args.seed)
    data = io.load_dataset(args.data)
    if not data:
        raise CLIError(EXIT_CONFIG, f"{args.data}: dataset has no sequences")
    diag = args.diagnostics or os.path.splitext(args.model_out)[0] + ".diagnostics.jsonl"
    _check_out_dir(args.model_out)
    _check_out_dir(diag)
    res = fit(data, hp, threads=_threads(args), checkpoint_path=args.model_out, diagnostics_path=diag)
    io.save_checkpoint(args.model_out, res.state, hp, scaling=res.scaling)
    last = res.diagnostics[-1]
    print(f"active_kernels={last['active_kernels']} objective={last['objective']:.6f} rounds={len(res.diagnostics)}")
    return 0


def cmd_segment(args) -> int:
    state, hp, scaling = io.load_checkpoint(args.model)
    if args.seed is not None:
        hp = replace(hp, seed=args.seed)
    data = io.load_dataset(args.data)
    if not data:
        raise CLIError(EXIT_CONFIG, f"{args.data}: dataset has no sequences")
    if args.samples is not None and args.samples < 1:
        raise CLIError(EXIT_CONFIG, "--samples must be >= 1")
    _check_out_dir(args.out)
    result = segment(data, state, hp, num_samples=args.samples, threads=_threads(args), scaling=scaling)
    io.save_report(args.out, result, state.M)
    if args.plot:
        from .plotting import plot_report

        _check_out_dir(args.plot)
        truths = io.load_truth(args.truth) if args.truth else None
        for p in plot_report(args.plot, data, result, state.M, truths):
            print(f"wrote {p}")
    print(f"segmented {len(data)} sequences -> {args.out}")
    return 0


def cmd_features(args) -> int:
    if args.window < 1:
        raise CLIError(EXIT_CONFIG, f"--window must be >= 1, got {args.window}")
    report = io.load_report(args.report)
    if args.model:
        state, _, _ = io.load_checkpoint(args.model)
        if state.M != report["M"]:
            raise CLIError(EXIT_CONFIG, f"M mismatch: report has M={report['M']}, model has M={state.M}")
    _check_out_dir(args.out)
    rows = feature_rows(report, args.window)
    save_features_csv(args.out, rows, report["M"])
    print(f"wrote features for {len(rows)} sequences to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="segseq", description="Shared multi-sequence GP segmentation")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a synthetic dataset from a generator config")
    g.add_argument("config")
    g.add_argument("output", help="dataset path (.json, or .csv)")
    g.add_argument("--truth", help="ground-truth JSON path (default: <output>.truth.json)")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="train a model")
    f.add_argument("data")
    f.add_argument("model_out")
    f.add_argument("--config", help="hyperparameter JSON (default: built-in defaults)")
    f.add_argument("--diagnostics", help="JSON-lines path (default: <model_out>.diagnostics.jsonl)")
    f.add_argument("--seed", type=int)
    f.add_argument("--threads", type=int)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("segment", help="segment data with a trained model")
    s.add_argument("data")
    s.add_argument("model")
    s.add_argument("out")
    s.add_argument("--samples", type=int, help="number of retained Gibbs samples L")
    s.add_argument("--plot", help="SVG path (one file per sequence when several)")
    s.add_argument("--truth", help="ground-truth JSON to overlay on plots")
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_segment)

    x = sub.add_parser("features", help="cluster strings and frequency vectors from a report")
    x.add_argument("report")
    x.add_argument("out")
    x.add_argument("--window", type=int, default=10)
    x.add_argument("--model", help="checkpoint to cross-check M against")
    x.set_defaults(func=cmd_features)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except InvalidArgument as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (KeyError, TypeError, ValueError) as err:
        print(f"error: malformed input ({err!r})", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"error: {err.strerror or err}: {err.filename or ''}", file=sys.stderr)
        return EXIT_IO
    except KeyboardInterrupt:
        print("interrupted; last completed round's checkpoint is kept", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
