"""``nlcs`` command line: train, reconstruct, eval, selfcheck.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 invariant failure.
"""

import argparse
import csv
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .affinity import export_affinity
from .checkpoint import CheckpointError, load_checkpoint
from .config import DESK_MODEL, ConfigError, ModelConfig, TrainConfig, format_config, load_config_file
from .metrics import PSNR_CAP_DB, capped_psnr, ssim
from .pgm import PGMError, read_pgm, write_pgm
from .selfcheck import run_selfcheck
from .training import TrainingDivergedError, list_images, model_from_checkpoint, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3

METRIC_COLUMNS = ("image_id", "rate", "psnr_db", "ssim")

PRESETS = {
    "desk": dict(model=DESK_MODEL, train=dict()),
    "paper": dict(model=dict(), train=dict(patch_size=128, batch_size=8, epochs=200, iterations_per_epoch=1000)),
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="nlcs", description="Block compressed sensing with non-local reconstruction.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model and write checkpoints plus a loss log")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk", help="base hyperparameters (default: desk)")
    p.add_argument("--data", help="directory of .pgm training images")
    p.add_argument("--rate", type=float)
    p.add_argument("--seed", type=int, help="run seed (NLCS_SEED overrides)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--iterations", type=int, help="iterations per epoch")
    p.add_argument("--lr", type=float, help="base learning rate")
    p.add_argument("--matrix", choices=("fixed", "learned"))
    p.add_argument("--resume", help="checkpoint to continue from")
    for name in ("coupling", "nlm", "msn", "nlf"):
        p.add_argument(f"--no-{name}", action="store_true", help=f"disable {name.upper()} (ablation)")

    p = sub.add_parser("reconstruct", help="sample and reconstruct one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True, help="input .pgm")
    p.add_argument("--out", required=True, help="output .pgm")
    p.add_argument("--rate", type=float, help="expected sampling rate; must match the checkpoint")
    p.add_argument("--dump-affinity", metavar="DIR", help="write every affinity matrix as CSV + PGM")

    p = sub.add_parser("eval", help="PSNR/SSIM of reconstructions over a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="metrics CSV")

    sub.add_parser("selfcheck", help="run gradient and oracle checks")
    return parser


# -- train ----------------------------------------------------------------


def resolve_train_config(args, environ=os.environ):
    preset = PRESETS[args.preset]
    model = dict(preset["model"])
    train_kw = dict(preset["train"])
    if args.config:
        try:
            m, t = load_config_file(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
        except ConfigError as exc:
            raise UsageError(f"{args.config}: {exc}") from exc
        model.update(m)
        train_kw.update(t)
    if args.rate is not None:
        if not 0 < args.rate <= 1:
            raise UsageError(f"--rate must lie in (0, 1], got {args.rate}")
        model["rate"] = args.rate
    if args.matrix:
        model["matrix"] = args.matrix
    for name in ("coupling", "nlm", "msn", "nlf"):
        if getattr(args, f"no_{name}"):
            model[f"enable_{name}"] = False
    if not model.get("enable_nlm", True) and not model.get("enable_nlf", True) and model.get(
        "enable_coupling", True
    ):
        raise UsageError("--no-nlm with --no-nlf leaves the coupling loss nothing to act on; add --no-coupling")
    if args.epochs is not None:
        if args.epochs < 0:
            raise UsageError("--epochs must be >= 0")
        train_kw["epochs"] = args.epochs
    if args.iterations is not None:
        train_kw["iterations_per_epoch"] = args.iterations
    if args.lr is not None:
        train_kw["base_lr"] = args.lr
    if args.data:
        train_kw["data_dir"] = args.data
    seed = environ.get("NLCS_SEED")
    if seed is not None:
        try:
            train_kw["seed"] = int(seed)
        except ValueError:
            raise UsageError(f"NLCS_SEED must be an integer, got {seed!r}")
    elif args.seed is not None:
        train_kw["seed"] = args.seed
    try:
        return TrainConfig(model=ModelConfig(**model), **train_kw)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def cmd_train(args):
    config = resolve_train_config(args)
    if not config.data_dir and not args.resume:
        raise UsageError("no training data: pass --data or set data_dir in the config file")
    print(format_config(config), end="")
    try:
        result = train(config, out_dir=args.out, resume=args.resume)
    except ConfigError as exc:
        raise DataError(str(exc)) from exc
    if result.losses:
        last = result.losses[-1]
        print(f"finished {last['iteration']} iterations, last L={last['L']:.6g} L_r={last['L_r']:.6g}")
    else:
        print("no iterations run; wrote the initial checkpoint")
    return EXIT_OK


# -- reconstruct ------------------------------------------------------------


def _load_model(path, rate=None):
    try:
        ckpt = load_checkpoint(path)
    except (OSError, CheckpointError) as exc:
        raise DataError(f"cannot load checkpoint {path}: {exc}") from exc
    try:
        model = model_from_checkpoint(ckpt)
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"checkpoint {path} does not match its stored configuration: {exc}") from exc
    if rate is not None and abs(model.config.rate - rate) > 1e-12:
        raise DataError(f"checkpoint was trained at rate {model.config.rate}, but --rate {rate} was requested")
    return model


def cmd_reconstruct(args):
    model = _load_model(args.checkpoint, args.rate)
    try:
        image = read_pgm(args.input)
    except PGMError as exc:
        raise DataError(str(exc)) from exc
    recon, out = model.reconstruct(image)
    try:
        write_pgm(args.out, np.clip(recon, 0.0, 1.0))
    except PGMError as exc:
        raise DataError(str(exc)) from exc
    if args.dump_affinity:
        written = dump_affinities(out, args.dump_affinity)
        print(f"wrote {len(written)} affinity matrices to {args.dump_affinity}")
    return EXIT_OK


def dump_affinities(reconstruction, directory):
    """Export the measurement-domain and every feature-domain affinity matrix."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        if reconstruction.measurement_affinity is not None:
            written.append(export_affinity(reconstruction.measurement_affinity, directory / "measurement"))
        for s, t, r in reconstruction.feature_affinities:
            written.append(export_affinity(r, directory / f"feature_s{s}_t{t}"))
    except OSError as exc:
        raise DataError(str(exc)) from exc
    return written


# -- eval -----------------------------------------------------------------


def evaluate_dataset(model, paths):
    """Per-image rows (image_id, rate, psnr_db, ssim); failures carry None metrics."""
    rows = []
    for path in paths:
        try:
            image = read_pgm(path)
            recon, _ = model.reconstruct(image)
            recon = np.clip(recon, 0.0, 1.0)
            rows.append((path.stem, model.config.rate, capped_psnr(recon, image), ssim(recon, image)))
        except (PGMError, ValueError, FloatingPointError) as exc:
            logging.getLogger(__name__).warning("evaluation of %s failed: %s", path, exc)
            rows.append((path.stem, model.config.rate, None, None))
    return rows


def write_metrics(rows, path):
    ok = [r for r in rows if r[2] is not None]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for image_id, rate, p, s in rows:
            if p is None:
                writer.writerow((image_id, rate, "failed", "failed"))
            else:
                writer.writerow((image_id, rate, f"{p:.6f}", f"{s:.6f}"))
        if ok:
            mean_p = math.fsum(r[2] for r in ok) / len(ok)
            mean_s = math.fsum(r[3] for r in ok) / len(ok)
            writer.writerow(("mean", rows[0][1], f"{mean_p:.6f}", f"{mean_s:.6f}"))
        else:
            writer.writerow(("mean", rows[0][1] if rows else "", "failed", "failed"))


def cmd_eval(args):
    model = _load_model(args.checkpoint)
    try:
        paths = list_images(args.dataset)
    except ConfigError as exc:
        raise DataError(str(exc)) from exc
    if not paths:
        raise DataError(f"no .pgm images in {args.dataset}")
    rows = evaluate_dataset(model, paths)
    write_metrics(rows, args.out)
    failed = sum(r[2] is None for r in rows)
    print(f"evaluated {len(rows) - failed} images ({failed} failed); PSNR capped at {PSNR_CAP_DB:g} dB")
    return EXIT_OK


# -- selfcheck ----------------------------------------------------------------


def cmd_selfcheck(args):
    results = run_selfcheck()
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"selfcheck FAILED: {', '.join(failed)}")
        return EXIT_INVARIANT
    print(f"selfcheck passed ({len(results)} checks)")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "reconstruct": cmd_reconstruct, "eval": cmd_eval, "selfcheck": cmd_selfcheck}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergedError, FloatingPointError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
