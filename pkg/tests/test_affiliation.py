import numpy as np
import pytest

from affiltest.affiliation import (check_tp2, generate_constraints, join_meet,
                                   tp2_residuals)
from affiltest.grid import CellArray, GridSpec, height_from_mass
from affiltest.symmetry import enumerate_orbits


def test_join_meet():
    join, meet = join_meet((2, 1, 3), (1, 2, 3))
    assert join == (2, 2, 3) and meet == (1, 1, 3)


def test_constraint_counts():
    cases = {
        (2, 2, "adjacent", True): 1,
        (2, 2, "full", True): 1,
        (3, 2, "adjacent", True): 3,
        (3, 2, "full", True): 6,
        (3, 3, "adjacent", True): 9,
        (2, 3, "adjacent", True): 2,
        (2, 3, "adjacent", False): 6,
        (2, 2, "adjacent", False): 1,
    }
    for (k, n, mode, sym), expected in cases.items():
        cset = generate_constraints(k, n, mode=mode, symmetric=sym)
        assert cset.j == expected, (k, n, mode, sym)


def test_rows_sum_to_zero():
    # every row is scale-free: coefficients cancel, so a common rescaling
    # of the distribution never changes the residual
    for k, n, mode in [(2, 2, "adjacent"), (3, 2, "full"), (3, 3, "adjacent"),
                       (2, 3, "full"), (4, 2, "adjacent")]:
        for sym in (True, False):
            cset = generate_constraints(k, n, mode=mode, symmetric=sym)
            for con in cset.constraints:
                assert sum(c for _, c in con.cell_row) == 0


EXPECTED_3X3_ROWS = [
    "pair (2, 1, 1) vs (1, 2, 1): +log p(1, 1, 1) -2*log p(2, 1, 1) +log p(2, 2, 1) >= 0",
    "pair (2, 1, 2) vs (1, 2, 2): +log p(2, 1, 1) -2*log p(2, 2, 1) +log p(2, 2, 2) >= 0",
    "pair (2, 1, 3) vs (1, 2, 3): +log p(3, 1, 1) -2*log p(3, 2, 1) +log p(3, 2, 2) >= 0",
    "pair (2, 2, 1) vs (1, 3, 1): +log p(2, 1, 1) -log p(2, 2, 1) -log p(3, 1, 1) +log p(3, 2, 1) >= 0",
    "pair (2, 2, 2) vs (1, 3, 2): +log p(2, 2, 1) -log p(2, 2, 2) -log p(3, 2, 1) +log p(3, 2, 2) >= 0",
    "pair (2, 2, 3) vs (1, 3, 3): +log p(3, 2, 1) -log p(3, 2, 2) -log p(3, 3, 1) +log p(3, 3, 2) >= 0",
    "pair (3, 2, 1) vs (2, 3, 1): +log p(2, 2, 1) -2*log p(3, 2, 1) +log p(3, 3, 1) >= 0",
    "pair (3, 2, 2) vs (2, 3, 2): +log p(2, 2, 2) -2*log p(3, 2, 2) +log p(3, 3, 2) >= 0",
    "pair (3, 2, 3) vs (2, 3, 3): +log p(3, 2, 2) -2*log p(3, 3, 2) +log p(3, 3, 3) >= 0",
]


def test_3x3_symmetric_rows_snapshot():
    # the nine dedup'd orbit-space rows for three bins and two bidders,
    # checked once by hand against the 2x2-minor listing
    cset = generate_constraints(3, 3, mode="adjacent", symmetric=True)
    assert [c.describe() for c in cset.constraints] == EXPECTED_3X3_ROWS


def test_orbit_matrix_matches_cell_residuals(rng):
    # for symmetric positive arrays, A @ log(orbit masses) reproduces the
    # log-form residuals computed cell by cell
    for k, n in [(2, 2), (3, 2), (3, 3)]:
        model = enumerate_orbits(k, n)
        cset = generate_constraints(k, n, mode="adjacent", symmetric=True)
        a_mat = cset.orbit_matrix(model)
        assert a_mat.shape == (cset.j, model.m)
        orbit_mass = rng.random(model.m) + 0.05
        orbit_mass /= (orbit_mass * model.sizes).sum()
        grid = GridSpec.equispaced(k, n)
        arr = CellArray("mass", model.expand(orbit_mass), grid)
        res_cells = tp2_residuals(arr, cset)
        res_orbit = a_mat @ np.log(orbit_mass)
        assert np.allclose(res_cells, res_orbit, atol=1e-12)


def test_residuals_log_and_product_form():
    grid = GridSpec.equispaced(2, 2)
    cset = generate_constraints(2, 2, symmetric=False)
    pos = CellArray("mass", np.array([[0.4, 0.1], [0.1, 0.4]]), grid)
    res = tp2_residuals(pos, cset)
    assert res[0] == pytest.approx(np.log(0.4) * 2 - 2 * np.log(0.1))
    # a zero cell switches that row to the product form
    zero = CellArray("mass", np.array([[0.0, 0.2], [0.2, 0.6]]), grid)
    res = tp2_residuals(zero, cset)
    assert res[0] == pytest.approx(0.0 * 0.6 - 0.04)


def test_residuals_mass_height_agree(rng):
    # the rows annihilate separable volume terms, so mass and height
    # representations give identical residuals on any product grid
    bp = np.sort(rng.random(2))
    grid = GridSpec((0.0, float(bp[0]), float(bp[1]), 1.0), 2)
    raw = rng.random((3, 3)) + 0.02
    mass = CellArray("mass", raw / raw.sum(), grid)
    height = height_from_mass(mass)
    cset = generate_constraints(3, 2, mode="full", symmetric=False)
    assert np.allclose(tp2_residuals(mass, cset), tp2_residuals(height, cset),
                       atol=1e-10)


def test_check_tp2():
    grid = GridSpec.equispaced(2, 2)
    cset = generate_constraints(2, 2)
    uniform = CellArray("mass", np.full((2, 2), 0.25), grid)
    assert check_tp2(uniform, cset) == []
    bad = CellArray("mass", np.array([[0.15, 0.35], [0.35, 0.15]]), grid)
    violations = check_tp2(bad, cset)
    assert len(violations) == 1
    con, residual = violations[0]
    assert residual < 0
    assert con.i == (2, 1) and con.i_prime == (1, 2)
    # loose tolerance forgives the violation
    assert check_tp2(bad, cset, tol=10.0) == []


def test_generate_constraints_validation():
    with pytest.raises(ValueError):
        generate_constraints(2, 2, mode="diagonal")
    with pytest.raises(ValueError):
        generate_constraints(0, 2)
    # k=1 has nothing to compare
    assert generate_constraints(1, 3).j == 0


def test_shape_mismatch_rejected():
    grid = GridSpec.equispaced(3, 2)
    arr = CellArray("mass", np.full((3, 3), 1 / 9), grid)
    cset = generate_constraints(2, 2)
    with pytest.raises(ValueError):
        tp2_residuals(arr, cset)
