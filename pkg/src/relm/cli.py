"""Command-line driver: train, evaluate, stream, drift, synth."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import __version__
from .cmaes import CmaesError
from .config import ConfigError, RelmConfig, load_config
from .controller import (DRIFT_KINDS, TrainingError, drift_check, generate_synthetic_drift,
                         metrics_csv, stream_step, train_initial)
from .environment import WindowError
from .evaluator import MetricError, RECALIBRATE, WARN, accuracy, f1, log_loss
from .ingest import DataError, Dataset, load_csv, write_csv
from .latent import EncoderError
from .modelio import ModelFileError, load_model, save_model
from .policy import PolicyError
from .util import atomic_write

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_MODEL = 4
EXIT_CONFIG = 5
EXIT_TRAINING = 6
EXIT_DRIFT_WARN = 10
EXIT_DRIFT_RECALIBRATE = 20

EXIT_TABLE = """\
exit codes:
  0   success (drift: verdict none)
  1   unexpected internal error
  2   invalid command-line usage
  3   input data error (missing/unreadable CSV, schema mismatch, bad cell)
  4   model file error (missing, wrong magic/version, checksum mismatch)
  5   configuration error (unknown key, bad value, missing config file)
  6   training error (single-label data, optimizer or encoder failure)
  10  drift: verdict warn
  20  drift: verdict recalibrate
"""

log = logging.getLogger("relm")

_ERRORS = [
    (ConfigError, EXIT_CONFIG),
    (ModelFileError, EXIT_MODEL),
    (DataError, EXIT_DATA),
    ((TrainingError, CmaesError, EncoderError, WindowError, MetricError, PolicyError),
     EXIT_TRAINING),
]


def _config(args) -> RelmConfig:
    overrides = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    cfg = load_config(args.config, overrides)
    if args.seed is not None:
        cfg.cmaes.seed = args.seed
    if args.workers is not None:
        cfg.runtime.workers = args.workers
    return cfg


def _hints(cfg: RelmConfig) -> dict:
    ing = cfg.ingest
    return {"label": ing.label, "timestamp": ing.timestamp, "discrete": ing.discrete}


def _load(path, schema="auto", **hints) -> Dataset:
    data = load_csv(path, schema, **hints)
    if len(data) == 0:
        raise DataError(f"{path}: no data rows")
    return data


def _batches(data: Dataset, batch_rows: int) -> list[Dataset]:
    if data.schema.timestamp is not None:
        return [d for _, d in data.by_period()]
    return [data.take(np.arange(i, min(i + batch_rows, len(data))))
            for i in range(0, len(data), batch_rows)]


def cmd_train(args) -> int:
    cfg = _config(args)
    data = _load(args.data, **_hints(cfg))
    checkpoint = (lambda m: save_model(m, args.checkpoint)) if args.checkpoint else None
    model = train_initial(cfg, data, on_improve=checkpoint)
    save_model(model, args.model_out)
    atomic_write(args.metrics_out, metrics_csv(model.history))
    print(f"trained {len(model.history)} generations; baseline accuracy "
          f"{model.baselines[0]:.4f}, f1 {model.baselines[1]:.4f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    model = load_model(args.model)
    data = _load(args.data, model.schema)
    probs = model.predict_proba(data)
    preds = (probs >= cfg.evaluator.threshold).astype(np.int64)
    text = ("accuracy,f1,log_loss\n"
            f"{accuracy(preds, data.labels)!r},{f1(preds, data.labels)!r},"
            f"{log_loss(probs, data.labels, cfg.evaluator.eps)!r}\n")
    if args.report_out:
        atomic_write(args.report_out, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_stream(args) -> int:
    cfg = _config(args)
    model = load_model(args.model)
    data = _load(args.data, model.schema)
    checkpoint = (lambda m: save_model(m, args.checkpoint)) if args.checkpoint else None
    n_recal = 0
    for batch in _batches(data, args.batch_rows):
        _, report, model = stream_step(model, batch, cfg, on_improve=checkpoint)
        n_recal += report.verdict == RECALIBRATE
    save_model(model, args.model_out)
    atomic_write(args.metrics_out, metrics_csv(model.history))
    print(f"streamed {len(data)} rows; {n_recal} recalibration(s)")
    return EXIT_OK


def cmd_drift(args) -> int:
    cfg = _config(args)
    model = load_model(args.model)
    data = _load(args.data, model.schema)
    report = drift_check(model, data, cfg)
    text = report.to_text()
    if args.report_out:
        atomic_write(args.report_out, text)
    sys.stdout.write(text)
    return {RECALIBRATE: EXIT_DRIFT_RECALIBRATE, WARN: EXIT_DRIFT_WARN}.get(report.verdict, EXIT_OK)


def cmd_synth(args) -> int:
    try:
        data = generate_synthetic_drift(args.blobs, args.rows_per_period, args.periods,
                                        args.drift_kind, args.magnitude, args.seed or 0,
                                        dim=args.dim, separation=args.separation,
                                        drift_period=args.drift_period)
    except ValueError as exc:
        raise DataError(f"invalid synthetic spec: {exc}") from None
    if args.train_out:
        if not 0 < args.train_periods < args.periods:
            raise DataError("--train-periods must be between 1 and periods - 1")
        cut = int(np.searchsorted(data.period, args.train_periods))
        write_csv(data.take(np.arange(cut)), args.train_out)
        data = data.take(np.arange(cut, len(data)))
    write_csv(data, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="relm", description="Self-recalibrating classifier trained by CMA-ES.",
        epilog=EXIT_TABLE, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file of 'section.key = value' lines")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable), e.g. cmaes.sigma0=0.5")
    common.add_argument("--seed", type=int, help="random seed (overrides cmaes.seed)")
    common.add_argument("--workers", type=int,
                        help="parallel fitness evaluators (default: available cores)")
    common.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for per-generation detail")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_,
                            epilog=EXIT_TABLE, formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(func=func)
        return sp

    sp = add("train", cmd_train, "train a model from a labelled CSV")
    sp.add_argument("--data", required=True, help="training CSV with header")
    sp.add_argument("--model-out", required=True, help="model file to write")
    sp.add_argument("--metrics-out", required=True, help="metrics CSV to write")
    sp.add_argument("--checkpoint", help="save the model here on every fitness improvement")

    sp = add("evaluate", cmd_evaluate, "score a model on a labelled CSV")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--report-out", help="also write the metrics CSV here")

    sp = add("stream", cmd_stream, "stream labelled batches through a model, recalibrating on drift")
    sp.add_argument("--model", required=True, help="model file to start from")
    sp.add_argument("--data", required=True, help="stream CSV; split by its period column if any")
    sp.add_argument("--model-out", required=True)
    sp.add_argument("--metrics-out", required=True, help="metrics CSV (full history) to write")
    sp.add_argument("--batch-rows", type=int, default=500,
                    help="rows per stream step when the CSV has no period column (default 500)")
    sp.add_argument("--checkpoint", help="save the model here on every fitness improvement")

    sp = add("drift", cmd_drift, "drift report for one batch; exit code carries the verdict")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--report-out", help="write the report CSV here")

    sp = add("synth", cmd_synth, "generate a synthetic drifting blob dataset")
    sp.add_argument("--out", required=True, help="CSV to write (rows after --train-periods if split)")
    sp.add_argument("--blobs", type=int, default=2)
    sp.add_argument("--rows-per-period", type=int, default=500)
    sp.add_argument("--periods", type=int, default=6)
    sp.add_argument("--drift-kind", choices=DRIFT_KINDS, default="rotation")
    sp.add_argument("--magnitude", type=float, default=90.0,
                    help="degrees (rotation), shift length (mean-shift) or flip probability")
    sp.add_argument("--drift-period", type=int, help="first drifted period (default periods // 2)")
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--separation", type=float, default=3.0,
                    help="blob center radius in standard deviations")
    sp.add_argument("--train-out", help="write the first --train-periods periods here instead")
    sp.add_argument("--train-periods", type=int, default=1)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        for types_, code in _ERRORS:
            if isinstance(exc, types_):
                print(f"relm {args.command}: error: {exc}", file=sys.stderr)
                return code
        log.exception("unexpected failure")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
