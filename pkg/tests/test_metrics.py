import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jwdm.data import AffineMap, DomainDataset, gen_domain_pair, heldout_pair
from jwdm.metrics import (
    EVAL_CSV_FIELDS,
    correspondence_rmse,
    cycle_l1,
    evaluate,
    gaussian_frechet,
    ot_distribution_distance,
    translate,
)
from jwdm.model import build_bundle, oracle_bundle

from helpers import brute_force_assignment


def _eig_sqrt(m):
    w, v = np.linalg.eigh(m)
    return v @ np.diag(np.sqrt(np.maximum(w, 0))) @ v.T


def frechet_oracle(a, b):
    """Trace of the product square root via symmetric eigendecompositions."""
    mu_a, mu_b = a.mean(0), b.mean(0)
    sa, sb = np.cov(a, rowvar=False), np.cov(b, rowvar=False)
    r = _eig_sqrt(sa)
    cross = _eig_sqrt(r @ sb @ r)
    return float(((mu_a - mu_b) ** 2).sum() + np.trace(sa) + np.trace(sb) - 2 * np.trace(cross))


def test_identical_samples_are_zero():
    a = np.random.default_rng(0).normal(size=(100, 2))
    assert gaussian_frechet(a, a) == 0.0
    assert gaussian_frechet(a, a.copy()) < 1e-10


def test_mean_offset_gives_squared_distance():
    a = np.random.default_rng(1).normal(size=(500, 2))
    assert gaussian_frechet(a, a + [3.0, 4.0]) == pytest.approx(25.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_matches_eigendecomposition_oracle(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(50, 2)) @ rng.normal(size=(2, 2)) + rng.normal(size=2)
    b = rng.normal(size=(40, 2)) @ rng.normal(size=(2, 2))
    assert abs(gaussian_frechet(a, b) - frechet_oracle(a, b)) < 1e-8
    assert abs(gaussian_frechet(a, b) - gaussian_frechet(b, a)) < 1e-10


def test_higher_dimension_uses_eigenvalues():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(80, 3)), rng.normal(size=(80, 3)) * 2
    assert abs(gaussian_frechet(a, b) - frechet_oracle(a, b)) < 1e-8


def test_degenerate_covariance():
    a = np.column_stack([np.linspace(0, 1, 20), np.zeros(20)])
    b = np.column_stack([np.zeros(20), np.linspace(0, 1, 20)])
    v = gaussian_frechet(a, b)
    assert np.isfinite(v) and v >= 0


def test_frechet_input_validation():
    with pytest.raises(ValueError):
        gaussian_frechet(np.zeros((2, 2)), np.zeros((5, 2)))
    with pytest.raises(ValueError):
        gaussian_frechet(np.zeros((5, 2)), np.zeros((5, 3)))
    with pytest.raises(ValueError):
        gaussian_frechet(np.zeros(5), np.zeros(5))


def _oracle_for(ds):
    return oracle_bundle(ds.truth.matrix, ds.truth.offset)


@pytest.mark.parametrize("kind", ["gauss-mix", "ring", "two-moons-affine"])
def test_oracle_bundle_has_zero_errors(kind):
    ds = gen_domain_pair(kind, n=300, seed=0)
    rep = evaluate(_oracle_for(ds), ds, n_eval=500)
    for name in ("frechet_x", "frechet_y", "correspondence_rmse", "cycle_l1_x", "cycle_l1_y",
                 "exact_w2_x", "exact_w2_y"):
        assert abs(getattr(rep, name)) < 1e-9, name


def test_zero_network_rmse_is_rms_of_target_norms():
    b = build_bundle(seed=0)
    for arr in b.parameters("generators").values():
        arr[:] = 0.0
    x = np.random.default_rng(3).normal(size=(30, 2))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    ds = DomainDataset(x, x, AffineMap(np.eye(2), np.zeros(2)))
    assert correspondence_rmse(b, ds) == pytest.approx(1.0, abs=1e-12)


def test_rmse_matches_recomputation():
    b = build_bundle(seed=4, hidden=(8,))
    ds = gen_domain_pair(n=50, seed=1, paired=True)
    pred = b.G2.predict(b.E1.predict(ds.x_samples))
    expected = math.sqrt(((pred - ds.truth(ds.x_samples)) ** 2).sum(axis=1).mean())
    assert correspondence_rmse(b, ds) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ValueError):
        correspondence_rmse(b, DomainDataset(ds.x_samples, ds.y_samples))
    with pytest.raises(ValueError):
        correspondence_rmse(b, ds, "sideways")


def test_cycle_l1_matches_recomputation():
    b = build_bundle(seed=5, hidden=(8,))
    x = np.random.default_rng(5).normal(size=(20, 2))
    back = translate(b, translate(b, x, "x2y"), "y2x")
    assert cycle_l1(b, x, "x") == pytest.approx(np.abs(x - back).sum(axis=1).mean(), rel=1e-14)


def test_ot_distance_matches_brute_force_small():
    b = build_bundle(seed=6, hidden=(8,))
    ds = gen_domain_pair(n=6, seed=2)
    fake = translate(b, ds.x_samples, "x2y")
    C = ((fake[:, None, :] - ds.y_samples[None, :, :]) ** 2).sum(-1)
    assert ot_distribution_distance(b, ds, "x2y", 6) == pytest.approx(brute_force_assignment(C), abs=1e-12)


def test_ot_distance_permutation_invariant():
    b = build_bundle(seed=7, hidden=(8,))
    ds = gen_domain_pair(n=20, seed=3)
    perm = np.random.default_rng(0).permutation(20)
    shuffled = DomainDataset(ds.x_samples, ds.y_samples[perm])
    assert ot_distribution_distance(b, ds, "x2y", 20) == pytest.approx(
        ot_distribution_distance(b, shuffled, "x2y", 20), abs=1e-12)


def test_ot_distance_bounds():
    b = build_bundle(seed=0)
    ds = gen_domain_pair(n=100)
    with pytest.raises(ValueError):
        ot_distribution_distance(b, ds, "x2y", 65)
    with pytest.raises(ValueError):
        ot_distribution_distance(b, ds, "x2y", 0)


def test_report_fields_match_individual_metrics(tmp_path):
    b = build_bundle(seed=8, hidden=(8,))
    ds = gen_domain_pair(n=200, seed=4)
    rep = evaluate(b, ds, n_eval=300, sample_n=32, csv_path=tmp_path / "e.csv")
    held = heldout_pair(ds.spec, 300)
    x, y = held.x_samples, held.y_samples
    assert rep.frechet_y == gaussian_frechet(translate(b, x, "x2y"), y)
    assert rep.frechet_x == gaussian_frechet(translate(b, y, "y2x"), x)
    assert rep.cycle_l1_x == cycle_l1(b, x, "x")
    assert rep.correspondence_rmse == correspondence_rmse(b, held)
    assert rep.exact_w2_y == ot_distribution_distance(b, held, "x2y", 32)
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0].split(",") == list(EVAL_CSV_FIELDS)
    assert lines[1].split(",")[1] == "gauss-mix"
    again = evaluate(b, ds, n_eval=300, sample_n=32)
    assert again == rep
