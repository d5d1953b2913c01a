"""Random discrete instances for checking W_c(joint) against W_c1 + W_c2.

Three instance families:

``product``        both joints are product measures; the gap must vanish.
``deterministic``  both joints are graphs of maps, (X, f(X)) and (X', h(X')).
``general``        arbitrary joints on small random supports.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ot import DecompositionReport, DiscreteDistribution, JointPairDistribution, decomposition_report

FAMILIES = ("product", "deterministic", "general")
GAP_TOL = 1e-9


def _random_dist(rng: np.random.Generator, max_size: int, dim: int) -> DiscreteDistribution:
    k = int(rng.integers(1, max_size + 1))
    w = rng.random(k) + 0.05
    return DiscreteDistribution(rng.normal(size=(k, dim)), w / w.sum())


def _uniform_dist(rng: np.random.Generator, max_size: int, dim: int) -> DiscreteDistribution:
    k = int(rng.integers(1, max_size + 1))
    return DiscreteDistribution.uniform(rng.normal(size=(k, dim)))


def random_instance(
    rng: np.random.Generator, family: str, max_size: int = 6, dim: int = 1
) -> tuple[JointPairDistribution, JointPairDistribution]:
    """Return (PA, PB): PA is the law of (X, Y'), PB of (X', Y)."""
    if family == "product":
        return (
            JointPairDistribution.product(_random_dist(rng, max_size, dim), _random_dist(rng, max_size, dim)),
            JointPairDistribution.product(_random_dist(rng, max_size, dim), _random_dist(rng, max_size, dim)),
        )
    if family == "deterministic":
        joints = []
        for _ in range(2):
            p = _uniform_dist(rng, max_size, dim) if rng.random() < 0.5 else _random_dist(rng, max_size, dim)
            # images drawn from a small pool so that f may merge atoms
            pool = rng.normal(size=(max(1, len(p) - int(rng.integers(0, 2))), dim))
            images = pool[rng.integers(0, len(pool), size=len(p))]
            joints.append(JointPairDistribution.pushforward(p, images))
        return joints[0], joints[1]
    if family == "general":
        joints = []
        for _ in range(2):
            first_pool = rng.normal(size=(int(rng.integers(1, max_size + 1)), dim))
            second_pool = rng.normal(size=(int(rng.integers(1, max_size + 1)), dim))
            k = int(rng.integers(1, max_size + 1))
            w = rng.random(k) + 0.05
            joints.append(JointPairDistribution(
                first_pool[rng.integers(0, len(first_pool), size=k)],
                second_pool[rng.integers(0, len(second_pool), size=k)],
                w / w.sum(),
            ))
        return joints[0], joints[1]
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def adversarial_instance() -> tuple[JointPairDistribution, JointPairDistribution]:
    """y' = x against y = 1 - x' on {0, 1}: each marginal pair matches exactly
    yet the joints disagree, so the gap is strictly positive."""
    p = DiscreteDistribution.uniform([[0.0], [1.0]])
    return (
        JointPairDistribution.pushforward(p, p.points),
        JointPairDistribution.pushforward(p, 1.0 - p.points),
    )


@dataclass
class SuiteResult:
    reports: list[tuple[str, DecompositionReport]]

    @property
    def min_gap(self) -> float:
        return min(r.gap for _, r in self.reports)

    @property
    def max_product_gap(self) -> float:
        gaps = [abs(r.gap) for fam, r in self.reports if fam == "product"]
        return max(gaps) if gaps else 0.0

    @property
    def passed(self) -> bool:
        return self.min_gap >= -GAP_TOL and self.max_product_gap <= GAP_TOL

    def summary(self) -> str:
        n_prod = sum(1 for fam, _ in self.reports if fam == "product")
        n_pos = sum(1 for _, r in self.reports if r.gap > GAP_TOL)
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{verdict}: {len(self.reports)} instances, min gap {self.min_gap:.3e}, "
            f"max |gap| over {n_prod} product instances {self.max_product_gap:.3e}, "
            f"{n_pos} strictly positive gaps"
        )

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("instance",) + DecompositionReport.CSV_FIELDS + ("family",))
            for k, (fam, r) in enumerate(self.reports):
                w.writerow([k] + r.csv_row() + [fam])


def run_suite(
    instances: int,
    seed: int = 0,
    max_size: int = 6,
    families=FAMILIES,
    c1: str = "l1",
    c2: str = "l1",
    dim: int = 1,
) -> SuiteResult:
    if instances < 1:
        raise ValueError("need at least one instance")
    rng = np.random.default_rng(seed)
    families = tuple(families)
    reports = []
    for k in range(instances):
        fam = families[k % len(families)]
        PA, PB = random_instance(rng, fam, max_size, dim)
        reports.append((fam, decomposition_report(PA, PB, c1, c2)))
    return SuiteResult(reports)
