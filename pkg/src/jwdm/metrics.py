"""Evaluation of a trained bundle on 2-D domains.

* Gaussian Frechet distance between translated and real samples (the FID
  formula applied directly to the points);
* RMSE against the ground-truth map, when the dataset has one;
* cycle L1 error;
* exact squared-L2 Wasserstein distance on a small subsample.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DomainDataset, heldout_pair
from .model import ModelBundle
from .ot import DiscreteDistribution, cost_matrix, exact_wasserstein

EIG_FLOOR = 1e-12
MAX_OT_SAMPLES = 64

EVAL_CSV_FIELDS = ("lambda_z", "task", "frechet_x", "frechet_y", "corr_rmse", "cycle_l1_x", "cycle_l1_y", "w2_x", "w2_y")


def _moments(sample) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(sample, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError(f"sample must be (n, d), got shape {s.shape}")
    n, d = s.shape
    if n < d + 1:
        raise ValueError(f"need at least {d + 1} samples in {d} dimensions, got {n}")
    return s.mean(axis=0), np.cov(s, rowvar=False, ddof=1).reshape(d, d)


def _trace_sqrt_product(sa: np.ndarray, sb: np.ndarray) -> float:
    """tr((sa @ sb)^(1/2)) for SPD sa, sb."""
    prod = sa @ sb
    if prod.shape == (2, 2):
        # eigenvalues l1, l2 >= 0: (sqrt l1 + sqrt l2)^2 = tr + 2 sqrt(det)
        det = max(float(np.linalg.det(prod)), EIG_FLOOR ** 2)
        return math.sqrt(max(float(np.trace(prod)) + 2.0 * math.sqrt(det), 0.0))
    eig = np.linalg.eigvals(prod).real
    return float(np.sqrt(np.maximum(eig, EIG_FLOOR)).sum())


def gaussian_frechet(sample_a, sample_b) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)) with unbiased covariances."""
    mu_a, sa = _moments(sample_a)
    mu_b, sb = _moments(sample_b)
    if mu_a.shape != mu_b.shape:
        raise ValueError(f"dimension mismatch: {mu_a.shape[0]} vs {mu_b.shape[0]}")
    if np.array_equal(mu_a, mu_b) and np.array_equal(sa, sb):
        return 0.0
    diff = mu_a - mu_b
    value = float(diff @ diff) + float(np.trace(sa) + np.trace(sb)) - 2.0 * _trace_sqrt_product(sa, sb)
    return max(value, 0.0)


def translate(bundle: ModelBundle, points, direction: str) -> np.ndarray:
    if direction == "x2y":
        return bundle.G2.predict(bundle.E1.predict(points))
    if direction == "y2x":
        return bundle.G1.predict(bundle.E2.predict(points))
    raise ValueError(f"direction must be 'x2y' or 'y2x', got {direction!r}")


def cycle(bundle: ModelBundle, points, domain: str) -> np.ndarray:
    if domain == "x":
        return translate(bundle, translate(bundle, points, "x2y"), "y2x")
    if domain == "y":
        return translate(bundle, translate(bundle, points, "y2x"), "x2y")
    raise ValueError(f"domain must be 'x' or 'y', got {domain!r}")


def cycle_l1(bundle: ModelBundle, points, domain: str) -> float:
    pts = np.asarray(points, dtype=np.float64)
    return float(np.abs(pts - cycle(bundle, pts, domain)).sum(axis=1).mean())


def correspondence_rmse(bundle: ModelBundle, dataset: DomainDataset, direction: str = "x2y") -> float:
    """Root mean squared distance between translations and the ground-truth images."""
    if dataset.truth is None:
        raise ValueError("dataset has no ground-truth map")
    if direction == "x2y":
        src, target = dataset.x_samples, dataset.truth(dataset.x_samples)
    elif direction == "y2x":
        src, target = dataset.y_samples, dataset.truth.inverse()(dataset.y_samples)
    else:
        raise ValueError(f"direction must be 'x2y' or 'y2x', got {direction!r}")
    err = translate(bundle, src, direction) - target
    return math.sqrt(float((err * err).sum(axis=1).mean()))


def ot_distribution_distance(
    bundle: ModelBundle, dataset: DomainDataset, direction: str = "x2y", sample_n: int = MAX_OT_SAMPLES
) -> float:
    """Exact OT (squared-L2 cost) between the first ``sample_n`` translated and real target points."""
    if not 1 <= sample_n <= MAX_OT_SAMPLES:
        raise ValueError(f"sample_n must be in [1, {MAX_OT_SAMPLES}], got {sample_n}")
    if direction == "x2y":
        src, real = dataset.x_samples, dataset.y_samples
    elif direction == "y2x":
        src, real = dataset.y_samples, dataset.x_samples
    else:
        raise ValueError(f"direction must be 'x2y' or 'y2x', got {direction!r}")
    n = min(sample_n, len(src), len(real))
    fake = translate(bundle, src[:n], direction)
    mu = DiscreteDistribution.uniform(fake)
    nu = DiscreteDistribution.uniform(real[:n])
    value, _ = exact_wasserstein(mu, nu, cost_matrix(mu.points, nu.points, "sqeuclidean"))
    return value


@dataclass(frozen=True)
class EvalReport:
    frechet_x: float
    frechet_y: float
    correspondence_rmse: float | None
    cycle_l1_x: float
    cycle_l1_y: float
    exact_w2_x: float | None
    exact_w2_y: float | None

    def csv_row(self, lambda_z: float, task: str) -> list[str]:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return [
            repr(float(lambda_z)), task, fmt(self.frechet_x), fmt(self.frechet_y), fmt(self.correspondence_rmse),
            fmt(self.cycle_l1_x), fmt(self.cycle_l1_y), fmt(self.exact_w2_x), fmt(self.exact_w2_y),
        ]


def evaluation_sample(dataset: DomainDataset, n_eval: int = 2000) -> DomainDataset:
    """Held-out paired sample when the generator spec is known, else the dataset itself."""
    if dataset.spec is not None:
        return heldout_pair(dataset.spec, n_eval)
    return dataset


def evaluate(
    bundle: ModelBundle,
    dataset: DomainDataset,
    config=None,
    n_eval: int = 2000,
    sample_n: int = MAX_OT_SAMPLES,
    csv_path=None,
    task: str | None = None,
) -> EvalReport:
    held = evaluation_sample(dataset, n_eval)
    x, y = held.x_samples, held.y_samples
    report = EvalReport(
        frechet_x=gaussian_frechet(translate(bundle, y, "y2x"), x),
        frechet_y=gaussian_frechet(translate(bundle, x, "x2y"), y),
        correspondence_rmse=correspondence_rmse(bundle, held, "x2y") if held.truth is not None else None,
        cycle_l1_x=cycle_l1(bundle, x, "x"),
        cycle_l1_y=cycle_l1(bundle, y, "y"),
        exact_w2_x=ot_distribution_distance(bundle, held, "y2x", sample_n) if sample_n else None,
        exact_w2_y=ot_distribution_distance(bundle, held, "x2y", sample_n) if sample_n else None,
    )
    if csv_path is not None:
        lambda_z = getattr(config, "lambda_z", float("nan"))
        name = task or (dataset.spec.kind if dataset.spec else "custom")
        write_eval_csv(csv_path, [report.csv_row(lambda_z, name)])
    return report


def write_eval_csv(path, rows) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVAL_CSV_FIELDS)
        w.writerows(rows)
