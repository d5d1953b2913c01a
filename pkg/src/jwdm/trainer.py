"""Alternating discriminator / generator optimisation with exact resume.

Each step draws one (x, y) batch pair, ascends the weighted discriminator
objective ``disc_steps`` times, then descends the total generator loss once.
Training runs for a fixed epoch budget under the two-phase lr schedule.

Checkpoint layout (little-endian)::

    b"JWDM0001" | u64 header length | UTF-8 JSON header | float64 arrays

The header lists every array by name and shape in storage order.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Graph
from .data import DomainDataset, DomainSpec, batches, gen_domain_pair
from .metrics import EVAL_CSV_FIELDS, EvalReport, evaluate, write_eval_csv
from .model import (
    BREAKDOWN_FIELDS,
    GAN_LOSSES,
    LossBreakdown,
    ModelBundle,
    build_bundle,
    discriminator_objective,
    total_generator_loss,
)
from .nn import AdamState, Layer, LrSchedule, Mlp, adam_step, lr_at

log = logging.getLogger(__name__)

MAGIC = b"JWDM0001"
LOG_FIELDS = ("epoch", "step", "lr", "recon_x", "recon_y", "adv_x", "adv_y", "adv_z1", "adv_z2",
              "disc_x", "disc_y", "disc_z", "total")
SWEEP_LAMBDA_Z = (0.01, 0.1, 1.0, 10.0)


class TrainingDiverged(RuntimeError):
    def __init__(self, term: str, epoch: int, step: int):
        super().__init__(f"non-finite {term} at epoch {epoch}, step {step}")
        self.term = term


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    decay_start: int = 100
    lr: float = 2e-4
    batch_size: int = 64
    lambda_x: float = 0.1
    lambda_y: float = 0.1
    lambda_z: float = 0.1
    lambda_mix: float = 0.5
    latent_dim: int = 8
    hidden: tuple[int, ...] = (64, 64)
    leaky_slope: float = 0.01
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    gan_loss: str = "non_saturating"
    disc_steps: int = 1
    dataset: DomainSpec = field(default_factory=DomainSpec)
    output_dir: str | None = None

    def __post_init__(self):
        if not 0 <= self.decay_start <= self.epochs:
            raise ValueError(f"need 0 <= decay_start <= epochs, got {self.decay_start}, {self.epochs}")
        if self.disc_steps < 1:
            raise ValueError("disc_steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        for name in ("lambda_x", "lambda_y", "lambda_z"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 < self.lambda_mix < 1:
            raise ValueError("lambda_mix must lie in (0, 1)")
        if self.gan_loss not in GAN_LOSSES:
            raise ValueError(f"gan_loss must be one of {GAN_LOSSES}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if isinstance(self.dataset, dict):
            object.__setattr__(self, "dataset", DomainSpec.from_dict(self.dataset))

    @property
    def schedule(self) -> LrSchedule:
        return LrSchedule(self.lr, self.decay_start, self.epochs)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "dataset" in d and isinstance(d["dataset"], dict):
            d["dataset"] = DomainSpec.from_dict(d["dataset"])
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


@dataclass
class TrainState:
    config: TrainConfig
    bundle: ModelBundle
    adam_gen: AdamState
    adam_disc: AdamState
    shuffle_rng: np.random.Generator
    prior_rng: np.random.Generator
    epoch: int = 0
    step: int = 0


def init_state(config: TrainConfig, data_dims: tuple[int, int] = (2, 2)) -> TrainState:
    init_seed, shuffle_seed, prior_seed = np.random.SeedSequence(config.seed).spawn(3)
    bundle = build_bundle(
        data_dims[0], config.latent_dim, config.hidden, int(init_seed.generate_state(1)[0]),
        config.leaky_slope, target_dim=data_dims[1],
    )
    sched = config.schedule
    return TrainState(
        config,
        bundle,
        AdamState(sched, config.beta1, config.beta2),
        AdamState(sched, config.beta1, config.beta2),
        np.random.default_rng(shuffle_seed),
        np.random.default_rng(prior_seed),
    )


def _check_finite(values: dict, epoch: int, step: int) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise TrainingDiverged(name, epoch, step)


def _train_step(state: TrainState, batch_x: np.ndarray, batch_y: np.ndarray) -> dict:
    cfg = state.config
    b = state.bundle
    gen_params = b.parameters("generators")
    disc_params = b.parameters("discriminators")
    for _ in range(cfg.disc_steps):
        g = Graph()
        prior = state.prior_rng.standard_normal((len(batch_x), cfg.latent_dim))
        objective, disc_vals = discriminator_objective(b, (batch_x, batch_y), prior, cfg, graph=g)
        _check_finite(disc_vals, state.epoch, state.step)
        g.backward(-objective)
        grads = g.param_grads()
        lr = adam_step(disc_params, {k: grads[k] for k in disc_params}, state.adam_disc, state.epoch)
    g = Graph()
    total, bd = total_generator_loss(b, (batch_x, batch_y), cfg, graph=g)
    _check_finite({k: v for k, v in bd.as_dict().items() if not k.startswith("disc")}, state.epoch, state.step)
    g.backward(total)
    grads = g.param_grads()
    adam_step(gen_params, {k: grads[k] for k in gen_params}, state.adam_gen, state.epoch)
    bd = dataclasses.replace(bd, **disc_vals)
    row = {"epoch": state.epoch, "step": state.step, "lr": lr}
    row.update({k: getattr(bd, k) for k in BREAKDOWN_FIELDS})
    state.step += 1
    return row


def run_epochs(state: TrainState, dataset: DomainDataset, n_epochs: int, log_path=None) -> list[dict]:
    cfg = state.config
    if state.epoch + n_epochs > cfg.epochs:
        raise ValueError(f"cannot run to epoch {state.epoch + n_epochs}; budget is {cfg.epochs}")
    out_dir = Path(cfg.output_dir) if cfg.output_dir else None
    rows: list[dict] = []
    for _ in range(n_epochs):
        epoch_rows = [_train_step(state, bx, by) for bx, by in batches(dataset, cfg.batch_size, state.shuffle_rng)]
        state.epoch += 1
        rows.extend(epoch_rows)
        if epoch_rows:
            last = epoch_rows[-1]
            log.info("epoch %d/%d total=%.4f recon_x=%.4f recon_y=%.4f",
                     state.epoch, cfg.epochs, last["total"], last["recon_x"], last["recon_y"])
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            append_log(out_dir / "train_log.csv", epoch_rows)
            save_checkpoint(state, out_dir / "checkpoint.bin")
    return rows


def train(
    config: TrainConfig, dataset: DomainDataset, stop_epoch: int | None = None
) -> tuple[ModelBundle, list[dict]]:
    """Train from scratch; ``stop_epoch`` halts early on the same schedule (for later resume)."""
    state, rows = train_state(config, dataset, stop_epoch)
    return state.bundle, rows


def train_state(config: TrainConfig, dataset: DomainDataset, stop_epoch: int | None = None):
    if config.batch_size > min(len(dataset.x_samples), len(dataset.y_samples)):
        raise ValueError("dataset has fewer samples than one batch")
    state = init_state(config, (dataset.x_samples.shape[1], dataset.y_samples.shape[1]))
    if config.output_dir:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "train_log.csv", "w", newline="") as fh:
            csv.writer(fh).writerow(LOG_FIELDS)
    n = config.epochs if stop_epoch is None else stop_epoch
    rows = run_epochs(state, dataset, n)
    return state, rows


def resume(
    checkpoint, extra_epochs: int, config: TrainConfig, dataset: DomainDataset
) -> tuple[ModelBundle, list[dict]]:
    """Continue a run; ``checkpoint`` is a path or a :class:`TrainState`."""
    state = load_checkpoint(checkpoint) if isinstance(checkpoint, (str, os.PathLike)) else checkpoint
    if state.config.config_hash() != config.config_hash():
        raise CheckpointError("checkpoint was produced by a different configuration")
    state.config = config
    rows = run_epochs(state, dataset, extra_epochs)
    return state.bundle, rows


# ------------------------------------------------------------------ logs

def append_log(path: Path, rows: list[dict]) -> None:
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(LOG_FIELDS)
        for r in rows:
            w.writerow([r["epoch"], r["step"]] + [repr(float(r[k])) for k in LOG_FIELDS[2:]])


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k in ("epoch", "step") else float(v)) for k, v in r.items()} for r in rows]


# ------------------------------------------------------------ checkpoints

def _adam_meta(s: AdamState) -> dict:
    return {"beta1": s.beta1, "beta2": s.beta2, "eps": s.eps, "step": s.step,
            "schedule": dataclasses.asdict(s.schedule), "names": sorted(s.m)}


def checkpoint_bytes(state: TrainState) -> bytes:
    arrays: list[tuple[str, np.ndarray]] = []
    nets = {}
    for name, net in state.bundle.nets().items():
        nets[name] = {"activations": [l.activation for l in net.layers], "leaky_slope": net.leaky_slope}
        arrays.extend(sorted(net.parameters().items()))
    for tag, adam in (("gen", state.adam_gen), ("disc", state.adam_disc)):
        for n in sorted(adam.m):
            arrays.append((f"adam.{tag}.m.{n}", adam.m[n]))
            arrays.append((f"adam.{tag}.v.{n}", adam.v[n]))
    config = state.config.to_dict()
    config["output_dir"] = None  # keeps checkpoints independent of where they were written
    header = {
        "format": 1,
        "config": config,
        "config_hash": state.config.config_hash(),
        "epoch": state.epoch,
        "step": state.step,
        "rng": {"shuffle": state.shuffle_rng.bit_generator.state, "prior": state.prior_rng.bit_generator.state},
        "adam": {"gen": _adam_meta(state.adam_gen), "disc": _adam_meta(state.adam_disc)},
        "nets": nets,
        "arrays": [[n, list(a.shape)] for n, a in arrays],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    return MAGIC + struct.pack("<Q", len(head)) + head + body


def save_checkpoint(state: TrainState, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(checkpoint_bytes(state))
    os.replace(tmp, path)


def _rng_from(state_dict: dict) -> np.random.Generator:
    bitgen = getattr(np.random, state_dict["bit_generator"])()
    bitgen.state = state_dict
    return np.random.Generator(bitgen)


def state_from_bytes(raw: bytes) -> TrainState:
    if raw[:8] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:8]!r}; expected {MAGIC!r}")
    if len(raw) < 16:
        raise CheckpointError("checkpoint truncated before its header")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from None
    offset = 16 + hlen
    counts = [int(np.prod(shape)) if shape else 1 for _, shape in header["arrays"]]
    if offset + 8 * sum(counts) != len(raw):
        raise CheckpointError("checkpoint length does not match its header")
    arrays = {}
    for (name, shape), count in zip(header["arrays"], counts):
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shape)
        offset += 8 * count
    config = TrainConfig.from_dict(header["config"])
    if config.config_hash() != header["config_hash"]:
        raise CheckpointError("config hash mismatch inside checkpoint")
    nets = {}
    for name, meta in header["nets"].items():
        layers = [
            Layer(arrays[f"{name}.{k}.weight"], arrays[f"{name}.{k}.bias"], act)
            for k, act in enumerate(meta["activations"])
        ]
        nets[name] = Mlp(name, layers, meta["leaky_slope"])
    bundle = ModelBundle(**nets)

    def adam(tag):
        meta = header["adam"][tag]
        s = AdamState(LrSchedule(**meta["schedule"]), meta["beta1"], meta["beta2"], meta["eps"], meta["step"])
        for n in meta["names"]:
            s.m[n] = arrays[f"adam.{tag}.m.{n}"]
            s.v[n] = arrays[f"adam.{tag}.v.{n}"]
        return s

    return TrainState(
        config, bundle, adam("gen"), adam("disc"),
        _rng_from(header["rng"]["shuffle"]), _rng_from(header["rng"]["prior"]),
        header["epoch"], header["step"],
    )


def load_checkpoint(path) -> TrainState:
    return state_from_bytes(Path(path).read_bytes())


# ----------------------------------------------------------------- sweep

@dataclass
class SweepReport:
    rows: list[list[str]]
    reports: list[tuple[float, str, EvalReport]]
    csv_path: Path | None = None

    header = EVAL_CSV_FIELDS


def lambda_z_sweep(
    config: TrainConfig,
    values=SWEEP_LAMBDA_Z,
    tasks: list[DomainSpec] | None = None,
    out_dir=None,
    workers: int = 1,
) -> SweepReport:
    """Train and evaluate one model per (task, lambda_z); write one CSV row per run."""
    values = list(values)
    if not values:
        raise ValueError("values must be non-empty")
    tasks = list(tasks) if tasks else [config.dataset]
    out = Path(out_dir) if out_dir else None

    def job(task: DomainSpec, lz: float):
        sub = None
        if out is not None:
            sub = str(out / f"{task.kind}_lambda_z={lz:g}")
        cfg = dataclasses.replace(config, lambda_z=float(lz), dataset=task, output_dir=sub)
        data = gen_domain_pair(task.kind, task.params, task.n, task.seed)
        bundle, _ = train(cfg, data)
        return lz, task.kind, evaluate(bundle, data, cfg)

    jobs = [(t, v) for t in tasks for v in values]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda a: job(*a), jobs))
    else:
        results = [job(*a) for a in jobs]
    rows = [rep.csv_row(lz, task) for lz, task, rep in results]
    csv_path = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "sweep.csv"
        write_eval_csv(csv_path, rows)
    return SweepReport(rows, results, csv_path)
