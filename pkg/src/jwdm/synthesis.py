"""Latent interpolation between two source-domain inputs, decoded into both domains."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelBundle

TRAJECTORY_DOMAINS = ("x", "y")


@dataclass
class Trajectory:
    """Frames ordered begin -> end; ``rho[k]`` is the weight on the begin code.

    ``source`` follows the literal output set (raw endpoints, decoded interior
    frames); ``source_recon`` decodes every frame, endpoints included.
    """

    rho: np.ndarray  # (n + 1,), 1 -> 0
    latents: np.ndarray  # (n + 1, latent_dim)
    source: np.ndarray  # (n + 1, dx)
    target: np.ndarray  # (n + 1, dy)
    source_recon: np.ndarray
    x_begin: np.ndarray
    x_end: np.ndarray
    checkpoint_id: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return len(self.rho)

    def max_step(self) -> dict[str, float]:
        """Largest L2 move between consecutive frames, per domain."""
        return {
            "x": float(np.linalg.norm(np.diff(self.source, axis=0), axis=1).max()),
            "y": float(np.linalg.norm(np.diff(self.target, axis=0), axis=1).max()),
        }


def _decode_rows(net, latents: np.ndarray) -> np.ndarray:
    # one row at a time: batched BLAS kernels may round identical rows differently
    return np.vstack([net.predict(z[None, :]) for z in latents])


def interpolate(bundle: ModelBundle, x_begin, x_end, n: int, checkpoint_id: str | None = None) -> Trajectory:
    if n < 2:
        raise ValueError(f"need n >= 2 interpolation steps, got {n}")
    xb = np.asarray(x_begin, dtype=np.float64).reshape(1, -1)
    xe = np.asarray(x_end, dtype=np.float64).reshape(1, -1)
    z_begin = bundle.E1.predict(xb)[0]
    z_end = bundle.E1.predict(xe)[0]
    rho = np.array([(n - k) / n for k in range(n + 1)])
    # z_end + rho (z_begin - z_end) is exactly constant when the endpoints coincide
    interior = z_end[None, :] + rho[1:-1, None] * (z_begin - z_end)[None, :]
    latents = np.vstack([z_begin, interior, z_end])
    decoded_x = _decode_rows(bundle.G1, latents)
    source = np.vstack([xb, decoded_x[1:-1], xe])
    target = _decode_rows(bundle.G2, latents)
    return Trajectory(rho, latents, source, target, decoded_x, xb[0], xe[0], checkpoint_id)


def export_trajectory(traj: Trajectory, path) -> None:
    """CSV ``frame,rho,domain,dim0,...``: one row per (frame, domain)."""
    if not str(path):
        raise ValueError("empty output path")
    path = Path(path)
    d = traj.source.shape[1]
    if traj.target.shape[1] != d:
        raise ValueError("domains of different dimension cannot share one CSV layout")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "rho", "domain"] + [f"dim{k}" for k in range(d)])
        for k in range(traj.n_frames):
            for dom, pts in (("x", traj.source), ("y", traj.target)):
                w.writerow([k, repr(float(traj.rho[k])), dom] + [repr(float(v)) for v in pts[k]])


def load_trajectory(path) -> dict[str, np.ndarray]:
    """Read an exported CSV back into ``{"rho", "x", "y"}`` arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    body = rows[1:]
    frames = sorted({int(r[0]) for r in body})
    rho = np.zeros(len(frames))
    out = {dom: np.zeros((len(frames), len(rows[0]) - 3)) for dom in TRAJECTORY_DOMAINS}
    for r in body:
        k = int(r[0])
        rho[k] = float(r[1])
        out[r[2]][k] = [float(v) for v in r[3:]]
    out["rho"] = rho
    return out


def plot_trajectory(traj: Trajectory, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    for pts, color, label in ((traj.source, "tab:blue", "source"), (traj.target, "tab:orange", "target")):
        ax.plot(pts[:, 0], pts[:, 1], "-o", color=color, ms=3, label=label)
        ax.scatter(pts[[0, -1], 0], pts[[0, -1], 1], color=color, s=40, edgecolor="k", zorder=3)
    ax.set_aspect("equal")
    ax.legend()
    fig.savefig(path, dpi=100)
    plt.close(fig)
