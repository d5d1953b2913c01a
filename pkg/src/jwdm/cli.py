"""Command-line entry point: ``jwdm <subcommand> [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  Every subcommand
writes a ``manifest.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import data as data_mod
from .data import KINDS, DomainSpec, gen_domain_pair, load_csv, save_csv
from .metrics import evaluate
from .model import GAN_LOSSES, oracle_bundle
from .synthesis import export_trajectory, interpolate, plot_trajectory
from .trainer import (
    SWEEP_LAMBDA_Z,
    TrainConfig,
    TrainingDiverged,
    lambda_z_sweep,
    load_checkpoint,
    resume,
    save_checkpoint,
    train_state,
)
from .verify import FAMILIES, run_suite

log = logging.getLogger("jwdm")

_D = TrainConfig()

# flag name -> (config field, type, help)
TRAIN_FLAGS = {
    "epochs": ("epochs", int, "total epochs; lr reaches zero at the last one"),
    "decay-start": ("decay_start", int, "epoch at which linear lr decay begins in the reference setup (100 of 200)"),
    "lr": ("lr", float, "Adam base learning rate"),
    "batch-size": ("batch_size", int, "mini-batch size"),
    "lambda-x": ("lambda_x", float, "weight of the source-domain adversarial term"),
    "lambda-y": ("lambda_y", float, "weight of the target-domain adversarial term"),
    "lambda-z": ("lambda_z", float, "weight of the latent adversarial term"),
    "lambda-mix": ("lambda_mix", float, "cycle vs translation weight inside the data-space adversarial terms, in (0, 1)"),
    "latent-dim": ("latent_dim", int, "latent dimension"),
    "hidden": ("hidden", None, "comma-separated hidden layer widths"),
    "leaky-slope": ("leaky_slope", float, "negative slope of leaky ReLU"),
    "beta1": ("beta1", float, "Adam beta1"),
    "beta2": ("beta2", float, "Adam beta2"),
    "gan-loss": ("gan_loss", str, f"generator adversarial form, one of {', '.join(GAN_LOSSES)}"),
    "disc-steps": ("disc_steps", int, "discriminator updates per generator update"),
}


class UsageError(Exception):
    pass


def _default_seed() -> int:
    env = os.environ.get("JDM_SEED")
    return int(env) if env else 0


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _hidden(text) -> tuple[int, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _coerce(field_name: str, value):
    if field_name == "hidden":
        return _hidden(value)
    kind = type(getattr(_D, field_name))
    return kind(value)


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; an optional single section header is ignored."""
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[train]\n" + text
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read_string(text)
    fields = {f.name for f in dataclasses.fields(TrainConfig)} - {"dataset", "output_dir"}
    out = {}
    for section in parser.sections():
        for key, value in parser[section].items():
            name = key.replace("-", "_")
            if name not in fields:
                raise UsageError(f"{path}: unknown config key {key!r}")
            out[name] = _coerce(name, value)
    return out


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training configuration (flags override --config)")
    for flag, (name, kind, text) in TRAIN_FLAGS.items():
        default = getattr(_D, name)
        shown = ",".join(map(str, default)) if name == "hidden" else default
        g.add_argument(f"--{flag}", dest=name, type=kind or _hidden, default=None, help=f"{text} (default: {shown})")
    g.add_argument("--config", type=Path, help="INI-style key = value file with any of the fields above")


def _resolve_config(args, dataset_spec: DomainSpec | None, output_dir: str | None, base: dict | None = None) -> TrainConfig:
    values = dict(base or {})
    if getattr(args, "config", None):
        if not args.config.exists():
            raise UsageError(f"config file {args.config} does not exist")
        values.update(read_config_file(args.config))
    for _, (name, _, _) in TRAIN_FLAGS.items():
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if args.seed is not None:
        values["seed"] = args.seed
    values.setdefault("seed", _default_seed())
    if dataset_spec is not None:
        values["dataset"] = dataset_spec
    values["output_dir"] = output_dir
    try:
        return TrainConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_dataset(path: Path):
    if not path.is_dir():
        raise UsageError(f"dataset directory {path} does not exist")
    try:
        return load_csv(path)
    except (data_mod.DataFormatError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from None


def _point(text: str) -> np.ndarray:
    return np.array(_floats(text))


def _write_manifest(out_dir: Path, manifest: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".manifest")
    with os.fdopen(fd, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    os.replace(tmp, out_dir / "manifest.json")


# ------------------------------------------------------------- subcommands

def cmd_gen_data(args) -> dict:
    params = {}
    for item in args.param or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects key=value, got {item!r}")
        params[key] = json.loads(value)
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    try:
        ds = gen_domain_pair(args.kind, params, args.n, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_csv(ds, args.out)
    return {"config": ds.spec.to_dict(),
            "artifacts": [str(args.out / f) for f in ("x.csv", "y.csv", "spec.json")]}


def cmd_train(args) -> dict:
    ds = _load_dataset(args.data)
    ckpt = args.out / "checkpoint.bin"
    if args.resume:
        if not args.resume.exists():
            raise UsageError(f"checkpoint {args.resume} does not exist")
        state = load_checkpoint(args.resume)
        # the checkpoint's settings apply unless explicitly overridden
        base = {f.name: getattr(state.config, f.name) for f in dataclasses.fields(TrainConfig)}
        cfg = _resolve_config(args, None, str(args.out), base)
        extra = args.extra_epochs if args.extra_epochs is not None else cfg.epochs - state.epoch
        resume(state, extra, cfg, ds)
        epochs_run = extra
    else:
        cfg = _resolve_config(args, ds.spec or DomainSpec(), str(args.out))
        stop = args.stop_epoch
        state, _ = train_state(cfg, ds, stop)
        epochs_run = cfg.epochs if stop is None else stop
        if epochs_run == 0:
            save_checkpoint(state, ckpt)
    print(f"trained {epochs_run} epoch(s); checkpoint {ckpt}")
    return {"config": cfg.to_dict(), "artifacts": [str(ckpt), str(args.out / "train_log.csv")]}


def cmd_synth(args) -> dict:
    if args.n < 2:
        raise UsageError("--n must be >= 2")
    if not args.checkpoint.exists():
        raise UsageError(f"checkpoint {args.checkpoint} does not exist")
    state = load_checkpoint(args.checkpoint)
    traj = interpolate(state.bundle, _point(args.x_begin), _point(args.x_end), args.n, str(args.checkpoint))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    export_trajectory(traj, args.out)
    artifacts = [str(args.out)]
    if args.plot:
        plot_trajectory(traj, args.plot)
        artifacts.append(str(args.plot))
    steps = traj.max_step()
    print(f"{traj.n_frames} frames per domain; max step x={steps['x']:.4g} y={steps['y']:.4g}")
    return {"config": {"n": args.n, "x_begin": args.x_begin, "x_end": args.x_end}, "artifacts": artifacts,
            "manifest_dir": args.out.parent}


def cmd_verify_theorem(args) -> dict:
    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    if args.max_size < 1:
        raise UsageError("--max-size must be >= 1")
    families = ["product"] if args.product_only else list(FAMILIES)
    result = run_suite(args.instances, args.seed, args.max_size, families, args.c1, args.c2, args.dim)
    args.out.mkdir(parents=True, exist_ok=True)
    result.write_csv(args.out / "decomposition.csv")
    summary = result.summary()
    (args.out / "summary.txt").write_text(summary + "\n")
    print(summary)
    return {"config": vars_clean(args), "artifacts": [str(args.out / "decomposition.csv"), str(args.out / "summary.txt")],
            "exit_status": 0 if result.passed else 1}


def cmd_eval(args) -> dict:
    ds = _load_dataset(args.data)
    if args.oracle:
        if ds.truth is None:
            raise UsageError("--oracle needs a dataset with a ground-truth map")
        bundle = oracle_bundle(ds.truth.matrix, ds.truth.offset)
        cfg = TrainConfig(dataset=ds.spec or DomainSpec())
    else:
        if args.checkpoint is None or not args.checkpoint.exists():
            raise UsageError("--checkpoint is required and must exist (or pass --oracle)")
        state = load_checkpoint(args.checkpoint)
        bundle, cfg = state.bundle, state.config
    args.out.parent.mkdir(parents=True, exist_ok=True)
    report = evaluate(bundle, ds, cfg, n_eval=args.n_eval, sample_n=args.sample_n, csv_path=args.out)
    for k, v in dataclasses.asdict(report).items():
        print(f"{k:20s} {v}")
    return {"config": cfg.to_dict(), "artifacts": [str(args.out)], "manifest_dir": args.out.parent}


def cmd_sweep(args) -> dict:
    if not args.values:
        raise UsageError("--values must list at least one lambda_z")
    if args.data is not None:
        ds = _load_dataset(args.data)
        if ds.spec is None:
            raise UsageError("sweep needs a generated dataset (spec.json) so each run can regenerate it")
        spec = ds.spec
    else:
        spec = DomainSpec(args.kind, {}, args.n, _default_seed() if args.seed is None else args.seed)
    cfg = _resolve_config(args, spec, None)
    report = lambda_z_sweep(cfg, args.values, None, args.out, args.workers)
    print(",".join(report.header))
    for row in report.rows:
        print(",".join(row))
    return {"config": cfg.to_dict(), "artifacts": [str(report.csv_path)]}


def vars_clean(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in ("func",)}


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="jwdm", description=__doc__, formatter_class=fmt)
    parser.add_argument("--log-level", default="WARNING", help="logging level")
    sub = parser.add_subparsers(dest="command", required=True)
    seed_help = "random seed (falls back to $JDM_SEED, then 0)"

    p = sub.add_parser("gen-data", help="generate a synthetic domain pair", formatter_class=fmt)
    p.add_argument("--kind", choices=KINDS, default="gauss-mix", help="base distribution")
    p.add_argument("--n", type=int, default=2000, help="samples per domain")
    p.add_argument("--seed", type=int, default=_default_seed(), help=seed_help)
    p.add_argument("--param", action="append", metavar="KEY=JSON",
                   help="generator parameter override, e.g. angle_deg=45 (repeatable)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model bundle", formatter_class=fmt)
    p.add_argument("--data", type=Path, required=True, help="dataset directory from gen-data")
    p.add_argument("--out", type=Path, required=True, help="run directory (checkpoint, log, manifest)")
    p.add_argument("--seed", type=int, default=None, help=seed_help)
    p.add_argument("--stop-epoch", type=int, default=None, help="stop after this many epochs (schedule unchanged)")
    p.add_argument("--resume", type=Path, default=None, help="checkpoint to continue from")
    p.add_argument("--extra-epochs", type=int, default=None, help="epochs to run when resuming (default: to the end)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="interpolate in latent space and decode into both domains", formatter_class=fmt)
    p.add_argument("--checkpoint", type=Path, required=True, help="trained checkpoint")
    p.add_argument("--x-begin", required=True,
                   help="first source point, comma-separated (write --x-begin=-1,0 for a leading minus)")
    p.add_argument("--x-end", required=True, help="last source point, comma-separated")
    p.add_argument("--n", type=int, default=8, help="interpolation steps (n + 1 frames per domain), >= 2")
    p.add_argument("--out", type=Path, required=True, help="trajectory CSV path")
    p.add_argument("--plot", type=Path, default=None, help="optional PNG of both trajectories")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify-theorem", help="check W_c(joint) >= W_c1 + W_c2 on random discrete instances",
                       formatter_class=fmt)
    p.add_argument("--instances", type=int, default=200, help="number of random instances")
    p.add_argument("--max-size", type=int, default=6, help="largest support size per marginal")
    p.add_argument("--dim", type=int, default=1, help="dimension of every point")
    p.add_argument("--c1", choices=("l1", "l2", "sqeuclidean"), default="l1", help="cost on the first coordinates")
    p.add_argument("--c2", choices=("l1", "l2", "sqeuclidean"), default="l1", help="cost on the second coordinates")
    p.add_argument("--product-only", action="store_true", help="only product-measure instances")
    p.add_argument("--seed", type=int, default=_default_seed(), help=seed_help)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_verify_theorem)

    p = sub.add_parser("eval", help="evaluate a checkpoint on held-out data", formatter_class=fmt)
    p.add_argument("--checkpoint", type=Path, default=None, help="trained checkpoint")
    p.add_argument("--oracle", action="store_true", help="evaluate the exact ground-truth bundle instead")
    p.add_argument("--data", type=Path, required=True, help="dataset directory from gen-data")
    p.add_argument("--n-eval", type=int, default=2000, help="held-out samples per domain")
    p.add_argument("--sample-n", type=int, default=64, help="points used by the exact OT metric (<= 64)")
    p.add_argument("--out", type=Path, required=True, help="evaluation CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="lambda_z sweep, one training per value", formatter_class=fmt)
    p.add_argument("--values", type=_floats, default=list(SWEEP_LAMBDA_Z),
                   help="comma-separated lambda_z values")
    p.add_argument("--data", type=Path, default=None, help="dataset directory (else generate with --kind/--n)")
    p.add_argument("--kind", choices=KINDS, default="gauss-mix", help="task when --data is absent")
    p.add_argument("--n", type=int, default=2000, help="samples per domain when --data is absent")
    p.add_argument("--workers", type=int, default=1, help="parallel training threads")
    p.add_argument("--seed", type=int, default=None, help=seed_help)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        result = args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except TrainingDiverged as exc:
        print(f"error: {exc}; last checkpoint retained", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    status = result.pop("exit_status", 0)
    out_dir = Path(result.pop("manifest_dir", None) or args.out)
    _write_manifest(out_dir, {
        "subcommand": args.command,
        "config": result.get("config"),
        "artifacts": result.get("artifacts", []),
        "wall_clock_s": round(time.time() - started, 3),
        "exit_status": status,
    })
    return status


if __name__ == "__main__":
    sys.exit(main())
