import numpy as np
import pytest

from affiltest import projection
from affiltest._projection_py import binding_counts as binding_counts_pure
from affiltest.projection import available_implementations


def _spd(rng, j, scale=1.0):
    a = rng.normal(size=(j, j))
    return a @ a.T + scale * np.eye(j)


def test_identity_metric_counts_sign_pattern(rng):
    # with W = I the projection clamps exactly the negative coordinates
    z = rng.normal(size=(5000, 4))
    counts = projection.binding_counts(np.eye(4), z)
    assert np.array_equal(counts, (z < 0).sum(axis=1))


def test_single_constraint_halves(rng):
    z = rng.normal(size=(20000, 1))
    counts = projection.binding_counts(np.array([[2.5]]), z)
    assert set(np.unique(counts)) <= {0, 1}
    assert abs(counts.mean() - 0.5) < 0.02


def test_counts_match_scipy_nnls(rng):
    # oracle: min ||L'b - L'z|| over b >= 0 via the reference active-set code
    from scipy.optimize import nnls

    w = _spd(rng, 5)
    chol = np.linalg.cholesky(w)
    z = rng.normal(size=(300, 5)) @ np.linalg.cholesky(np.linalg.inv(w)).T
    counts = projection.binding_counts(w, z)
    for i in range(z.shape[0]):
        b, _ = nnls(chol.T, chol.T @ z[i])
        assert counts[i] == int((b <= 1e-9).sum()), i


def test_pure_matches_active_kernel(rng):
    w = _spd(rng, 6, scale=0.3)
    z = rng.normal(size=(5000, 6))
    active = projection.binding_counts(w, z)
    pure = binding_counts_pure(w, z)
    assert np.array_equal(active, pure)


def test_zero_constraints():
    counts = projection.binding_counts(np.empty((0, 0)), np.empty((100, 0)))
    assert counts.shape == (100,) and not counts.any()


def test_validation():
    with pytest.raises(ValueError):
        projection.binding_counts(np.eye(3), np.zeros((10, 2)))
    with pytest.raises(ValueError):
        projection.binding_counts(np.zeros((2, 3)), np.zeros((10, 3)))


def test_implementations_listed():
    impls = available_implementations()
    assert "pure" in impls
    assert projection.IMPLEMENTATION in impls
