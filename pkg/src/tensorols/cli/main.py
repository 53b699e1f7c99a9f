"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..approx import Activation, DegreeBudgetError
from ..data_io import IdxError, PairingError, load_dataset, save_dataset, synth_teacher_dataset
from ..distributions import InvalidMeasureError, MeasureSpec, support_cardinality
from ..imaging import ImageDataset, StackedClassifier, train_batched
from ..networks import RowNorm, random_teacher
from ..tensorize import FeatureBudgetError, Ordering, build_multiplicities
from ..tols import Predictor, assemble, fit, predict, read_matrix
from .config import ConfigError, parse_config, read_config_file, version_string
from .experiments import condnum_row, noise_sweep, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_BUDGET = 0, 2, 3, 4

log = logging.getLogger("tensorols")


def _measure_arg(text: str) -> MeasureSpec:
    """``rademacher``, ``uniform``, a JSON object, or comma-separated support points."""
    text = text.strip()
    if text in ("rademacher", "uniform"):
        return MeasureSpec.from_config({"kind": text})
    if text.startswith("{"):
        return MeasureSpec.from_config(json.loads(text))
    return MeasureSpec.discrete_uniform([float(v) for v in text.split(",")])


def _write_json(obj, out) -> None:
    text = json.dumps(obj, indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        print(text)


def cmd_tols_fit(args) -> int:
    xs, ys, meta = load_dataset(args.data)
    if args.support_card is not None:
        card = args.support_card
    elif "measure" in meta:
        card = support_cardinality(MeasureSpec.from_config(meta["measure"]))
    else:
        card = float("inf")
    mset = build_multiplicities(xs.shape[1], args.degree, card, Ordering(args.ordering))
    pred = fit(assemble(xs, mset), ys, rcond=args.rcond)
    out = Path(args.out or "predictor.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    pred.save(out)
    log.info("fitted %d coefficients, rank %d", len(mset), pred.diagnostics["rank"])
    print(json.dumps(pred.diagnostics))
    return EXIT_OK


def cmd_tols_predict(args) -> int:
    pred = Predictor.load(args.model)
    if args.data:
        xs = load_dataset(args.data)[0]
    else:
        xs = read_matrix(args.matrix)
    ys = predict(pred, xs)
    lines = "\n".join(repr(float(v)) for v in ys) + "\n"
    if args.out:
        Path(args.out).write_text("prediction\n" + lines)
    else:
        sys.stdout.write("prediction\n" + lines)
    return EXIT_OK


def cmd_condnum(args) -> int:
    spec = _measure_arg(args.measure)
    row = condnum_row(spec, args.d, args.k)
    report = {"c": row["c"], "f": row["f"], "C": row["C"], "lambda_min_lb": row["lb"],
              "lambda_max_ub": row["ub"], "kappa_ub": row["kappa_ub"],
              "kappa_ub_claimed": row["kappa_claimed"], "lambda_min_exact": row["lambda_min"],
              "lambda_max_exact": row["lambda_max"], "kappa_exact": row["kappa"]}
    _write_json(report, args.out)
    return EXIT_OK


def cmd_experiment_run(args) -> int:
    raw = read_config_file(args.config_path or args.config)
    cfg = parse_config(raw, seed=args.seed, out=args.out, workers=args.workers)
    report = run_experiment(cfg)
    print(json.dumps(report.summary, default=float))
    return EXIT_OK


def cmd_mnist_train(args) -> int:
    ds = ImageDataset.from_idx(args.train_images, args.train_labels)
    clf = train_batched(ds, args.batches, args.batch_size, args.seed or 0, args.r, workers=args.workers)
    out = Path(args.out or "model.npz")
    out.parent.mkdir(parents=True, exist_ok=True)
    clf.save(out)
    print(json.dumps({"model": str(out), "features_nonbias": clf.index_map.n_nonbias}))
    return EXIT_OK


def cmd_mnist_eval(args) -> int:
    clf = StackedClassifier.load(args.model)
    ds = ImageDataset.from_idx(args.test_images, args.test_labels)
    _write_json({"accuracy": clf.accuracy(ds), "n": len(ds)}, args.out)
    return EXIT_OK


def cmd_mnist_noise(args) -> int:
    clf = StackedClassifier.load(args.model)
    ds = ImageDataset.from_idx(args.test_images, args.test_labels)
    if args.n_eval:
        ds = ds.subset(np.arange(min(args.n_eval, len(ds))))
    sigmas = [float(v) for v in args.sigmas.split(",")] if args.sigmas else []
    areas = [float(v) for v in args.areas.split(",")] if args.areas else []
    rows = noise_sweep(clf, ds, sigmas, areas, args.seed or 0)
    text = "attack,level,accuracy\n" + "".join(f"{a},{lv!r},{acc!r}\n" for a, lv, acc in rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_dataset_synth(args) -> int:
    spec = _measure_arg(args.measure)
    act = Activation.from_dict(json.loads(args.activation) if args.activation.startswith("{")
                               else {"kind": args.activation})
    seed = args.seed or 0
    teacher = random_teacher(args.d, args.L, args.m, act, seed, RowNorm(args.norm), args.nonneg)
    xs, ys = synth_teacher_dataset(spec, teacher, args.N, seed)
    stem = Path(args.out or "dataset")
    stem.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(stem, xs, ys, {"measure": spec.to_config(), "seed": seed,
                                "teacher": teacher.to_dict(), "version": version_string()})
    print(json.dumps({"dataset": str(stem), "rows": len(xs)}))
    return EXIT_OK


def _shared_flags(default) -> argparse.ArgumentParser:
    """Flags accepted before or after the subcommand.

    Subcommand copies use ``SUPPRESS`` defaults so they never overwrite a value
    given at the top level.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=default, help="base random seed")
    common.add_argument("--workers", type=int, default=default, help="parallel trials")
    common.add_argument("--out", default=default, help="output file or directory")
    common.add_argument("--config", default=default, help="experiment config (JSON or TOML)")
    common.add_argument("-v", "--verbose", action="store_true",
                        default=False if default is None else default)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _shared_flags(argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="tensorols", parents=[_shared_flags(None)],
                                     description="Tensorized least squares for learning networks.")
    parser.add_argument("--version", action="version", version=version_string())
    sub = parser.add_subparsers(dest="command", required=True)

    tols = sub.add_parser("tols", help="fit or apply a polynomial predictor").add_subparsers(
        dest="action", required=True)
    p = tols.add_parser("fit", parents=[common])
    p.add_argument("--data", required=True, help="dataset stem written by 'dataset synth'")
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--support-card", type=float, default=None)
    p.add_argument("--ordering", default=Ordering.GRADED_DESCENDING.value,
                   choices=[o.value for o in Ordering])
    p.add_argument("--rcond", type=float, default=1e-10)
    p.set_defaults(func=cmd_tols_fit)
    p = tols.add_parser("predict", parents=[common])
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data")
    src.add_argument("--matrix", help="binary matrix dump of inputs")
    p.set_defaults(func=cmd_tols_predict)

    p = sub.add_parser("condnum", parents=[common], help="exact spectrum vs bounds")
    p.add_argument("--measure", default="rademacher")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_condnum)

    exp = sub.add_parser("experiment", help="run a configured experiment").add_subparsers(
        dest="action", required=True)
    p = exp.add_parser("run", parents=[common])
    p.add_argument("config_path", nargs="?", default=None)
    p.set_defaults(func=cmd_experiment_run)

    mn = sub.add_parser("mnist", help="image classifier").add_subparsers(dest="action", required=True)
    p = mn.add_parser("train", parents=[common])
    p.add_argument("--train-images", required=True)
    p.add_argument("--train-labels", required=True)
    p.add_argument("--batches", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=1000)
    p.add_argument("--r", type=int, default=2)
    p.set_defaults(func=cmd_mnist_train)
    p = mn.add_parser("eval", parents=[common])
    p.add_argument("--model", required=True)
    p.add_argument("--test-images", required=True)
    p.add_argument("--test-labels", required=True)
    p.set_defaults(func=cmd_mnist_eval)
    p = mn.add_parser("noise", parents=[common])
    p.add_argument("--model", required=True)
    p.add_argument("--test-images", required=True)
    p.add_argument("--test-labels", required=True)
    p.add_argument("--sigmas", default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8")
    p.add_argument("--areas", default="")
    p.add_argument("--n-eval", type=int, default=None)
    p.set_defaults(func=cmd_mnist_noise)

    ds = sub.add_parser("dataset", help="synthetic data").add_subparsers(dest="action", required=True)
    p = ds.add_parser("synth", parents=[common])
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--L", type=int, default=1)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--activation", default="relu", help="relu, sigmoid or a JSON descriptor")
    p.add_argument("--measure", default="uniform")
    p.add_argument("--norm", default=RowNorm.L1_ROWS.value, choices=[n.value for n in RowNorm])
    p.add_argument("--nonneg", action="store_true")
    p.set_defaults(func=cmd_dataset_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "experiment" and not (args.config_path or args.config):
        parser.error("experiment run needs a config path")
    try:
        return args.func(args)
    except (ConfigError, InvalidMeasureError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FeatureBudgetError, DegreeBudgetError, OverflowError) as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (OSError, IdxError, PairingError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
