import csv

import numpy as np
import pytest

from jwdm.verify import FAMILIES, adversarial_instance, random_instance, run_suite


@pytest.mark.parametrize("family", FAMILIES)
def test_random_instances_are_valid(family):
    rng = np.random.default_rng(0)
    for _ in range(20):
        PA, PB = random_instance(rng, family, max_size=4, dim=2)
        assert abs(PA.weights.sum() - 1) < 1e-12 and abs(PB.weights.sum() - 1) < 1e-12
        assert PA.first.shape[1] == 2
        if family == "product":
            assert PA.is_product() and PB.is_product()


def test_unknown_family():
    with pytest.raises(ValueError):
        random_instance(np.random.default_rng(0), "cubic")


def test_suite_passes_and_is_deterministic(tmp_path):
    a = run_suite(60, seed=3, max_size=5)
    b = run_suite(60, seed=3, max_size=5)
    assert a.passed and a.summary().startswith("PASS:")
    assert [r for _, r in a.reports] == [r for _, r in b.reports]
    a.write_csv(tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["instance", "W_c", "W_c1", "W_c2", "gap", "independent", "family"]
    assert len(rows) == 61


def test_product_only_suite_has_zero_gaps():
    res = run_suite(30, seed=1, families=["product"])
    assert res.max_product_gap <= 1e-9
    assert all(r.independent for _, r in res.reports)


def test_other_costs_and_dimensions():
    assert run_suite(20, seed=2, c1="l2", c2="sqeuclidean", dim=2).passed


def test_adversarial_instance_gap_is_positive():
    from jwdm.ot import decomposition_report

    rep = decomposition_report(*adversarial_instance())
    assert rep.gap == pytest.approx(1.0)


def test_zero_instances_rejected():
    with pytest.raises(ValueError):
        run_suite(0)
