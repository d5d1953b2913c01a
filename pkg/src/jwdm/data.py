"""Synthetic 2-D domain pairs with a known cross-domain map, CSV I/O and batching.

Every generator draws X from a base distribution and builds Y by pushing a
*fresh, independent* X sample through an affine ground-truth map, so the two
sample sets carry no alignment.  ``paired=True`` instead returns
``y[i] = map(x[i])``; only evaluation code should ask for that.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

KINDS = ("gauss-mix", "ring", "two-moons-affine")

DEFAULT_PARAMS = {
    "gauss-mix": {"components": 8, "radius": 1.0, "std": 0.05, "angle_deg": 90.0, "scale": 0.5},
    "ring": {"radius": 1.0, "width": 0.1, "angle_deg": 90.0, "scale": 0.5},
    "two-moons-affine": {"noise": 0.05, "matrix": [[0.8, 0.3], [-0.2, 0.9]], "offset": [0.5, -0.25]},
}


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class AffineMap:
    """y = x @ matrix.T + offset."""

    matrix: np.ndarray
    offset: np.ndarray

    @classmethod
    def rotation_scale(cls, angle_deg: float, scale: float) -> "AffineMap":
        t = math.radians(angle_deg)
        rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        return cls(scale * rot, np.zeros(2))

    def __call__(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.matrix.T + self.offset

    def inverse(self) -> "AffineMap":
        inv = np.linalg.inv(self.matrix)
        return AffineMap(inv, -inv @ self.offset)

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "offset": self.offset.tolist()}


@dataclass(frozen=True)
class DomainSpec:
    kind: str = "gauss-mix"
    params: dict = field(default_factory=dict)
    n: int = 2000
    seed: int = 0

    def resolved_params(self) -> dict:
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        return {**DEFAULT_PARAMS[self.kind], **self.params}

    def truth_map(self) -> AffineMap:
        p = self.resolved_params()
        if self.kind == "two-moons-affine":
            return AffineMap(np.array(p["matrix"], dtype=np.float64), np.array(p["offset"], dtype=np.float64))
        return AffineMap.rotation_scale(p["angle_deg"], p["scale"])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        return cls(d["kind"], dict(d.get("params", {})), int(d["n"]), int(d["seed"]))


@dataclass(frozen=True)
class DomainDataset:
    x_samples: np.ndarray
    y_samples: np.ndarray
    truth: AffineMap | None = None
    spec: DomainSpec | None = None

    def __post_init__(self):
        for name in ("x_samples", "y_samples"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 2 or arr.shape[0] < 1:
                raise ValueError(f"{name} must be a non-empty (n, d) matrix")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.x_samples.shape[1]


def _sample_base(kind: str, p: dict, n: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "gauss-mix":
        k = int(p["components"])
        angles = 2 * np.pi * np.arange(k) / k
        centers = p["radius"] * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        comp = rng.integers(0, k, size=n)
        return centers[comp] + p["std"] * rng.standard_normal((n, 2))
    if kind == "ring":
        r = rng.uniform(p["radius"] - p["width"], p["radius"] + p["width"], size=n)
        t = rng.uniform(0.0, 2 * np.pi, size=n)
        return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    if kind == "two-moons-affine":
        upper = rng.random(n) < 0.5
        t = rng.uniform(0.0, np.pi, size=n)
        pts = np.where(
            upper[:, None],
            np.stack([np.cos(t), np.sin(t)], axis=1),
            np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1),
        )
        return pts + p["noise"] * rng.standard_normal((n, 2))
    raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")


def gen_domain_pair(
    kind: str = "gauss-mix", params: dict | None = None, n: int = 2000, seed: int = 0, paired: bool = False
) -> DomainDataset:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    spec = DomainSpec(kind, dict(params or {}), n, seed)
    p = spec.resolved_params()
    truth = spec.truth_map()
    rx, ry = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)]
    x = _sample_base(kind, p, n, rx)
    source = x if paired else _sample_base(kind, p, n, ry)
    return DomainDataset(x, truth(source), truth, spec)


def heldout_pair(spec: DomainSpec, n: int, stream: int = 1) -> DomainDataset:
    """Paired sample from the same generator on a seed stream disjoint from training."""
    seed = int(np.random.SeedSequence([spec.seed, 0x5EED, stream]).generate_state(1)[0])
    return gen_domain_pair(spec.kind, spec.params, n, seed, paired=True)


def batches(dataset: DomainDataset, batch_size: int, rng: np.random.Generator) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Independently shuffled (x, y) batches; the trailing short batch is dropped."""
    n, m = len(dataset.x_samples), len(dataset.y_samples)
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if batch_size > min(n, m):
        raise ValueError(f"batch_size {batch_size} exceeds domain sizes ({n}, {m})")
    px = rng.permutation(n)
    py = rng.permutation(m)
    for k in range(min(n, m) // batch_size):
        sl = slice(k * batch_size, (k + 1) * batch_size)
        yield dataset.x_samples[px[sl]], dataset.y_samples[py[sl]]


# ----------------------------------------------------------------- CSV I/O

def _write_points(path: Path, pts: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"dim{k}" for k in range(pts.shape[1])])
        for row in pts:
            w.writerow([format(v, ".17g") for v in row])


def _read_points(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = rows[0]
    expected = [f"dim{k}" for k in range(len(header))]
    if header != expected or not header:
        raise DataFormatError(f"{path}:1: header must be dim0,...,dimN, got {','.join(header)!r}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-numeric field in {row!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise DataFormatError(f"{path}:{lineno}: non-finite value")
        out.append(vals)
    if not out:
        raise DataFormatError(f"{path}: no data rows")
    return np.array(out, dtype=np.float64)


def save_csv(dataset: DomainDataset, path) -> None:
    """Write ``x.csv``, ``y.csv`` and ``spec.json`` into directory ``path``."""
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    _write_points(d / "x.csv", dataset.x_samples)
    _write_points(d / "y.csv", dataset.y_samples)
    meta = {
        "spec": dataset.spec.to_dict() if dataset.spec else None,
        "truth": dataset.truth.to_dict() if dataset.truth else None,
    }
    (d / "spec.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_csv(path) -> DomainDataset:
    d = Path(path)
    if not d.is_dir():
        raise FileNotFoundError(f"dataset directory {d} does not exist")
    x = _read_points(d / "x.csv")
    y = _read_points(d / "y.csv")
    truth = spec = None
    meta_path = d / "spec.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        if meta.get("spec"):
            spec = DomainSpec.from_dict(meta["spec"])
        if meta.get("truth"):
            t = meta["truth"]
            truth = AffineMap(np.array(t["matrix"], dtype=np.float64), np.array(t["offset"], dtype=np.float64))
    return DomainDataset(x, y, truth, spec)
