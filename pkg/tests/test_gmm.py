import numpy as np
import pytest
from scipy.linalg import sqrtm

from pianobench.errors import DimensionMismatch, TooFewSamples
from pianobench.gmm import fit_gmm, gaussian_w2_squared, gmm_w2, wgd
from pianobench.types import GaussianStats, GMMModel


def closed_form_w2(a: np.ndarray, b: np.ndarray, reg: float = 1e-6) -> float:
    """W2 between the maximum-likelihood Gaussian fits of two sample sets."""
    d = a.shape[1]
    Ca = np.cov(a, rowvar=False, bias=True).reshape(d, d) + reg * np.eye(d)
    Cb = np.cov(b, rowvar=False, bias=True).reshape(d, d) + reg * np.eye(d)
    root = sqrtm(Ca)
    cross = np.real(sqrtm(root @ Cb @ root))
    diff = a.mean(axis=0) - b.mean(axis=0)
    value = diff @ diff + np.trace(Ca) + np.trace(Cb) - 2 * np.trace(cross)
    return float(np.sqrt(max(value, 0.0)))


def random_mixture(rng: np.random.Generator, dim: int = 1) -> GMMModel:
    K = int(rng.integers(1, 4))
    covariances = np.stack(
        [np.diag(rng.uniform(0.1, 2.0, size=dim)) for _ in range(K)]
    )
    return GMMModel(
        weights=rng.dirichlet(np.ones(K)),
        means=rng.normal(scale=3.0, size=(K, dim)),
        covariances=covariances,
    )


def test_single_component_is_closed_form(rng: np.random.Generator):
    a = rng.normal(size=(400, 3)) @ rng.normal(size=(3, 3))
    b = rng.normal(loc=1.0, size=(300, 3))
    pred, gt = fit_gmm(a, K=1), fit_gmm(b, K=1)
    assert pred.converged and gt.converged
    assert gmm_w2(pred, gt) == pytest.approx(closed_form_w2(a, b), abs=1e-5)
    assert wgd(a, b, K=1) == pytest.approx(closed_form_w2(a, b), abs=1e-5)


def test_em_log_likelihood_never_decreases():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        centres = rng.normal(scale=4.0, size=(3, 2))
        X = np.concatenate([rng.normal(c, 0.7, size=(80, 2)) for c in centres])
        model = fit_gmm(X, K=3, seed=seed)
        trace = np.array(model.log_likelihood_trace)
        assert len(trace) == model.n_iter
        assert np.diff(trace).min() >= -1e-7, f"seed {seed}"


def test_fit_recovers_separated_clusters(rng: np.random.Generator):
    centres = np.array([[-10.0, 0.0], [0.0, 10.0], [10.0, 0.0]])
    X = np.concatenate([rng.normal(c, 0.5, size=(200, 2)) for c in centres])
    model = fit_gmm(X, K=3, seed=42)
    order = np.argsort(model.means[:, 0])
    np.testing.assert_allclose(model.means[order], centres, atol=0.15)
    np.testing.assert_allclose(model.weights, 1 / 3, atol=1e-3)
    assert model.weights.sum() == pytest.approx(1.0)
    assert model.log_likelihood(X) == pytest.approx(model.log_likelihood_trace[-1])


def test_fit_is_deterministic(rng: np.random.Generator):
    X = rng.normal(size=(120, 4))
    first, second = fit_gmm(X, K=4, seed=7), fit_gmm(X, K=4, seed=7)
    np.testing.assert_array_equal(first.means, second.means)
    np.testing.assert_array_equal(first.covariances, second.covariances)


def test_fit_errors(rng: np.random.Generator):
    with pytest.raises(TooFewSamples):
        fit_gmm(rng.normal(size=(5, 2)), K=8)
    with pytest.raises(ValueError):
        fit_gmm(rng.normal(size=(5, 2)), K=0)
    model = fit_gmm(rng.normal(size=(50, 2)), K=2)
    with pytest.raises(DimensionMismatch):
        model.log_likelihood(rng.normal(size=(10, 3)))
    with pytest.raises(DimensionMismatch):
        gmm_w2(model, fit_gmm(rng.normal(size=(50, 3)), K=2))


def test_gmm_w2_symmetry_and_identity(rng: np.random.Generator):
    for _ in range(20):
        a, b = random_mixture(rng, dim=2), random_mixture(rng, dim=2)
        assert abs(gmm_w2(a, b) - gmm_w2(b, a)) <= 1e-10
        assert gmm_w2(a, a) == pytest.approx(0.0, abs=1e-7)


def test_gmm_w2_triangle_inequality(rng: np.random.Generator):
    for _ in range(100):
        a, b, c = (random_mixture(rng) for _ in range(3))
        assert gmm_w2(a, c) <= gmm_w2(a, b) + gmm_w2(b, c) + 1e-8


def test_gmm_w2_of_point_masses():
    def mixture(means: list[float]) -> GMMModel:
        K = len(means)
        return GMMModel(
            weights=np.full(K, 1 / K),
            means=np.array(means)[:, None],
            covariances=np.full((K, 1, 1), 1.0),
        )

    # equal variances cancel, leaving the transport of the means
    assert gmm_w2(mixture([0.0, 4.0]), mixture([1.0, 5.0])) == pytest.approx(1.0)
    unit = GaussianStats(np.zeros(1), np.eye(1))
    assert gaussian_w2_squared(unit, GaussianStats(np.zeros(1), 4 * np.eye(1))) == (
        pytest.approx(1.0)
    )


def test_wgd_identity(rng: np.random.Generator):
    gestures = rng.normal(size=(300, 6))
    assert wgd(gestures, gestures) == pytest.approx(0.0, abs=1e-6)
    shifted = wgd(gestures + 2.0, gestures)
    assert shifted == pytest.approx(np.sqrt(6 * 4.0), rel=0.05)
