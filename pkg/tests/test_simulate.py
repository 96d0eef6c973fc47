import csv
import json

import numpy as np
import pytest

from affiltest.affiliation import check_tp2, generate_constraints, tp2_residuals
from affiltest.grid import bin_many, count_cells
from affiltest.inference import TestOptions
from affiltest.simulate import (Dgp, affiliated_2x2_dgp, affiliated_3x3_dgp,
                                builtin_dgps, independent_skewed_dgp,
                                mc_study, sample_tuples, splitmix64,
                                uniform_dgp, violating_2x2_dgp)


def test_splitmix64_reference_values():
    # first two outputs of the reference stream seeded with zero
    assert splitmix64(0, 0) == 0xE220A8397B1DCDAF
    assert splitmix64(0, 1) == 0x6E789E6AA1B965F4
    assert splitmix64(123, 5) == splitmix64(123, 5)
    assert splitmix64(123, 5) != splitmix64(123, 6)


def test_catalog_masses_valid():
    for name, dgp in builtin_dgps().items():
        vals = dgp.masses.values
        assert vals.sum() == pytest.approx(1.0, abs=1e-12), name
        assert (vals >= 0).all(), name


def test_catalog_tp2_status():
    cat = builtin_dgps()
    for name in ("uniform", "independent-skewed", "affiliated-2x2", "affiliated-3x3"):
        dgp = cat[name]
        cset = generate_constraints(dgp.grid.k, dgp.grid.n_bidders,
                                    mode="full", symmetric=False)
        assert check_tp2(dgp.masses, cset, tol=1e-10) == [], name
    bad = cat["violating-2x2"]
    cset = generate_constraints(2, 2, symmetric=False)
    res = tp2_residuals(bad.masses, cset)
    assert res.min() < -1e-3


def test_violating_margin_is_exact():
    dgp = violating_2x2_dgp(0.2)
    vals = dgp.masses.values
    # product-form gap between the anti-diagonal and diagonal products
    assert vals[0, 1] * vals[1, 0] - vals[0, 0] * vals[1, 1] == pytest.approx(0.2 / 4)


def test_affiliated_rho_strictness():
    dgp = affiliated_2x2_dgp(0.3)
    vals = dgp.masses.values
    assert vals[0, 0] * vals[1, 1] - vals[0, 1] * vals[1, 0] == pytest.approx(0.3 / 4)
    with pytest.raises(ValueError):
        affiliated_2x2_dgp(1.0)
    with pytest.raises(ValueError):
        violating_2x2_dgp(0.0)


def test_skewed_marginal_override():
    dgp = independent_skewed_dgp(2, 2, marginal=(0.8, 0.2))
    assert dgp.masses.values[0, 0] == pytest.approx(0.64)
    with pytest.raises(ValueError):
        independent_skewed_dgp(2, 2, marginal=(0.8, -0.2))


def test_sample_tuples_round_trip():
    dgp = affiliated_2x2_dgp(0.4)
    pts = sample_tuples(dgp, 60_000, seed=42)
    assert pts.shape == (60_000, 2)
    assert (pts > 0).all() and (pts <= 1).all()
    counts = count_cells(dgp.grid, pts)
    freq = counts.values / counts.total
    assert np.max(np.abs(freq - dgp.masses.values)) < 0.01
    # determinism in the seed
    assert np.array_equal(pts, sample_tuples(dgp, 60_000, seed=42))
    assert not np.array_equal(pts[:100], sample_tuples(dgp, 100, seed=43))


def test_sample_respects_zero_mass_cells():
    dgp = independent_skewed_dgp(2, 2, marginal=(1.0, 0.0))
    pts = sample_tuples(dgp, 500, seed=1)
    bins = bin_many(dgp.grid, pts)
    assert (bins == 1).all()


def test_sample_validation():
    with pytest.raises(ValueError):
        sample_tuples(uniform_dgp(), 0, seed=1)


def test_affiliated_3x3_strictly_interior():
    dgp = affiliated_3x3_dgp(strength=2.0)
    cset = generate_constraints(3, 2, mode="full", symmetric=False)
    res = tp2_residuals(dgp.masses, cset)
    assert res.min() > 0.01  # strictly inside the constrained set


def test_mc_study_shape_and_determinism():
    dgp = uniform_dgp()
    r1 = mc_study(dgp, n_auctions=150, replications=6, seed=5)
    r2 = mc_study(dgp, n_auctions=150, replications=6, seed=5)
    assert r1.rows == r2.rows and r1.rates == r2.rates
    assert len(r1.rows) == 6
    assert set(r1.rates) == {"pvalue", "kp_lower", "kp_upper"}
    assert set(r1.rates["pvalue"]) == {"0.1", "0.05", "0.01"}
    # the seed changes everything
    r3 = mc_study(dgp, n_auctions=150, replications=6, seed=6)
    assert r3.rows != r1.rows


def test_mc_study_parallel_agreement():
    dgp = violating_2x2_dgp(0.3)
    serial = mc_study(dgp, n_auctions=200, replications=6, seed=8, n_jobs=1)
    parallel = mc_study(dgp, n_auctions=200, replications=6, seed=8, n_jobs=2)
    assert serial.rows == parallel.rows
    assert serial.rates == parallel.rates


def test_mc_study_output_files(tmp_path):
    result = mc_study(uniform_dgp(), n_auctions=100, replications=4, seed=2,
                      sizes=(0.05,), options=TestOptions(weight_draws=5_000))
    payload = json.loads(result.to_json())
    assert payload["replications"] == 4 and len(payload["rows"]) == 4
    assert "kp_upper" in payload["rates"]
    path = tmp_path / "mc.csv"
    result.write_csv(path)
    with open(path) as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 4
    assert "reject_kp_upper_0.05" in rows[0]
    assert {"0", "1"} >= {row["reject_pvalue_0.05"] for row in rows}


def test_mc_study_validation():
    with pytest.raises(ValueError):
        mc_study(uniform_dgp(), n_auctions=100, replications=0)
