import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermface.eigenspace import fit_eigenspace, flatten, project, reconstruct
from thermface.errors import DimensionMismatch, KTooLarge, TooFewSamples


def dense_pca(data):
    """Oracle: eigendecomposition of the full d x d covariance (divide by n)."""
    centred = data - data.mean(axis=0)
    cov = centred.T @ centred / len(data)
    values, vectors = np.linalg.eigh(cov)
    order = np.argsort(-values)
    return values[order], vectors[:, order]


def test_flatten_row_major():
    np.testing.assert_array_equal(flatten([[1.0, 2.0], [3.0, 4.0]]), [1.0, 2.0, 3.0, 4.0])
    assert flatten(np.zeros((128, 128))).shape == (16384,)


def test_flatten_injective():
    a = np.zeros((3, 3))
    b = a.copy()
    b[2, 1] = 0.1
    assert not np.array_equal(flatten(a), flatten(b))


def test_two_vector_pairs():
    rng = np.random.default_rng(1)
    u, v = rng.normal(size=7), rng.normal(size=7)
    es = fit_eigenspace([u, v, u, v], k=1)
    # by hand: centred samples are +-(u - v)/2, so variance along u - v is |u - v|^2 / 4
    assert es.eigenvalues[0] == pytest.approx(np.sum((u - v) ** 2) / 4, rel=1e-12)
    direction = (u - v) / np.linalg.norm(u - v)
    assert abs(es.basis[:, 0] @ direction) == pytest.approx(1.0, abs=1e-12)


def test_rank_deficient_k_lowered():
    rng = np.random.default_rng(1)
    u, v = rng.normal(size=7), rng.normal(size=7)
    with pytest.warns(UserWarning):
        es = fit_eigenspace([u, v, u, v], k=3)
    assert es.k == 1


def test_identical_vectors_degenerate():
    with pytest.warns(UserWarning):
        es = fit_eigenspace([np.ones(5)] * 4, k=2)
    assert es.k == 0
    assert project(es, np.ones(5)).shape == (0,)


def test_errors():
    with pytest.raises(TooFewSamples):
        fit_eigenspace([np.ones(3)], k=0)
    with pytest.raises(DimensionMismatch):
        fit_eigenspace([np.ones(3), np.ones(4)], k=1)
    with pytest.raises(KTooLarge):
        fit_eigenspace(np.eye(4), k=4)
    with pytest.warns(UserWarning):
        assert fit_eigenspace(np.eye(4), k=40, clamp=True).k == 3
    es = fit_eigenspace(np.eye(4), k=2)
    with pytest.raises(DimensionMismatch):
        project(es, np.ones(5))
    with pytest.raises(DimensionMismatch):
        reconstruct(es, np.ones(3))


def test_against_dense_oracle():
    data = np.random.default_rng(7).normal(size=(10, 50))
    es = fit_eigenspace(data, k=9)
    values, vectors = dense_pca(data)
    assert np.max(np.abs(es.basis.T @ es.basis - np.eye(9))) <= 1e-8
    assert np.all(np.diff(es.eigenvalues) <= 0)
    np.testing.assert_allclose(es.eigenvalues, values[:9], rtol=1e-6)
    # eigenvalues are distinct here, so columns match up to sign
    overlap = np.abs(np.sum(es.basis * vectors[:, :9], axis=0))
    np.testing.assert_allclose(overlap, 1.0, atol=1e-8)


def test_sign_convention():
    data = np.random.default_rng(3).normal(size=(12, 20))
    es = fit_eigenspace(data, k=6)
    for col in es.basis.T:
        assert col[np.argmax(np.abs(col))] > 0


def test_projection_examples():
    data = np.random.default_rng(4).normal(size=(15, 30))
    es = fit_eigenspace(data, k=8)
    np.testing.assert_allclose(project(es, es.mean), 0.0, atol=1e-12)
    for j in (0, 3, 7):
        expected = np.zeros(8)
        expected[j] = 1.0
        np.testing.assert_allclose(project(es, es.mean + es.basis[:, j]), expected, atol=1e-10)
    np.testing.assert_allclose(reconstruct(es, project(es, es.mean)), es.mean, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 12), st.integers(2, 20))
def test_projector_properties(seed, n, d):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(n, d))
    k = min(d, n - 1)
    es = fit_eigenspace(data, k=k)
    v = rng.normal(size=d) * 3
    p = project(es, v)
    assert p @ p <= np.sum((v - es.mean) ** 2) * (1 + 1e-10) + 1e-12
    once = reconstruct(es, project(es, v))
    twice = reconstruct(es, project(es, once))
    np.testing.assert_allclose(twice, once, atol=1e-9)


def test_reconstruction_error_monotone_in_k():
    data = np.random.default_rng(11).normal(size=(10, 40))
    errors = []
    for k in (1, 5, 9):
        es = fit_eigenspace(data, k=k)
        recon = reconstruct(es, project(es, data))
        errors.append(np.linalg.norm(data - recon))
    assert errors[0] >= errors[1] >= errors[2]
    assert errors[2] == pytest.approx(0.0, abs=1e-9)


def test_captured_variance():
    data = np.random.default_rng(5).normal(size=(8, 30))
    total = np.trace(np.cov(data.T, bias=True))
    assert fit_eigenspace(data, k=3).eigenvalues.sum() < total
    assert fit_eigenspace(data, k=7).eigenvalues.sum() == pytest.approx(total, rel=1e-10)
