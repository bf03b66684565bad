import math

import numpy as np
import pytest
from scipy.stats import gaussian_kde

from comfort_index.circumplex import COMFORT_SUBSET, UNCOMFORT_SUBSET, EmotionAngles, av_transform_batch
from comfort_index.errors import InsufficientDataError, ParameterError
from comfort_index.kde import KdeModel, evaluation_grid, fit_weighted_kde, kde_score, weighted_covariance
from comfort_index.synth import SynthConfig, synth_generate


def cloud(rng, n=200):
    return np.clip(rng.normal([0.2, -0.3], [0.3, 0.25], size=(n, 2)), -1, 1)


def test_covariance_matches_numpy(rng):
    P, w = cloud(rng), rng.uniform(0.1, 1, 200)
    np.testing.assert_allclose(weighted_covariance(P, w), np.cov(P.T, aweights=w), atol=1e-14)


def test_matches_scipy_gaussian_kde(rng):
    P, w = cloud(rng), rng.uniform(0, 1, 200)
    m = fit_weighted_kde(P, w)
    ref = gaussian_kde(P.T, weights=w)
    assert m.bandwidth_factor == pytest.approx(ref.factor, rel=1e-12)
    np.testing.assert_allclose(m.covariance, ref.covariance, rtol=1e-10)
    _, grid = evaluation_grid(201)
    pdf = ref(grid.T)
    q = rng.uniform(-1, 1, (300, 2))
    np.testing.assert_allclose(m.score(q), np.clip(ref(q.T) / pdf.max(), 0, 1), rtol=1e-9, atol=1e-12)


def test_score_at_grid_argmax(rng):
    m = fit_weighted_kde(cloud(rng), rng.uniform(0, 1, 200))
    _, grid = evaluation_grid(m.grid_resolution)
    best = grid[np.argmax(m.density(grid))]
    assert m.score(best) == pytest.approx(1.0, abs=1e-6)


def test_tight_cluster_argmax(rng):
    P = np.vstack([rng.normal([0.34, -0.94], 0.01, (40, 2)), rng.uniform(-1, 1, (40, 2))])
    w = np.r_[np.ones(40), np.zeros(40)]
    m = fit_weighted_kde(P, w)
    _, grid = evaluation_grid(201)
    best = grid[np.argmax(m.density(grid))]
    assert np.hypot(*(best - [0.34, -0.94])) <= 0.02


def test_symmetry(rng):
    half = cloud(rng, 60)
    P = np.vstack([half, half * [1, -1]])
    m = fit_weighted_kde(P, np.ones(P.shape[0]))
    q = rng.uniform(-1, 1, (200, 2))
    np.testing.assert_allclose(m.score(q), m.score(q * [1, -1]), atol=1e-6)


def test_weight_scale_invariance(rng):
    P, w = cloud(rng), rng.uniform(0, 1, 200)
    q = rng.uniform(-1, 1, (500, 2))
    a, b = fit_weighted_kde(P, w), fit_weighted_kde(P, 2.0 * w)
    np.testing.assert_allclose(a.score(q), b.score(q), atol=1e-9)


def test_far_point(rng):
    assert kde_score(fit_weighted_kde(cloud(rng), np.ones(200)), np.array([5.0, 5.0])) < 0.01


def test_single_gaussian_ratio():
    sigma = 0.2
    m = KdeModel(np.zeros((1, 2)), np.ones(1), 1.0, sigma ** 2 * np.eye(2), 1.0)
    ratio = m.density([0.0, 0.0])[0] / m.density([sigma, 0.0])[0]
    assert ratio == pytest.approx(math.exp(0.5), abs=1e-6)


def test_coincident_points_regularized():
    with pytest.warns(RuntimeWarning):
        m = fit_weighted_kde(np.zeros((5, 2)), np.ones(5))
    sigma = math.sqrt(m.covariance[0, 0])
    assert m.covariance[0, 1] == 0.0
    ratio = m.score(np.array([0.0, 0.0])) / m.score(np.array([sigma, 0.0]))
    assert ratio == pytest.approx(math.exp(0.5), abs=1e-6)


def test_gradient_matches_finite_differences(rng):
    m = fit_weighted_kde(cloud(rng), rng.uniform(0.1, 1, 200))
    q = rng.uniform(-0.8, 0.8, (100, 2))
    g = m.gradient(q)
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (m.density(q + e) - m.density(q - e)) / (2 * h)
        scale = np.maximum(np.abs(g[:, k]), 1e-3 * np.abs(g).max())
        assert np.max(np.abs(fd - g[:, k]) / scale) < 1e-4


def test_deterministic(rng):
    P, w = cloud(rng), rng.uniform(0, 1, 200)
    assert fit_weighted_kde(P, w).to_dict() == fit_weighted_kde(P, w).to_dict()


def test_serialization(rng):
    m = fit_weighted_kde(cloud(rng), np.ones(200))
    m2 = KdeModel.from_dict(m.to_dict())
    q = rng.uniform(-1, 1, (50, 2))
    np.testing.assert_array_equal(m.score(q), m2.score(q))


@pytest.mark.parametrize("n,w", [(4, [1, 1, 1, 1]), (6, [0] * 6)])
def test_preconditions(n, w):
    with pytest.raises((InsufficientDataError, ParameterError)):
        fit_weighted_kde(np.random.default_rng(0).uniform(-1, 1, (n, 2)), w)


def quadrant_iv_share(m):
    _, grid = evaluation_grid(m.grid_resolution)
    dens = m.density(grid)
    high = dens / m.kernel_max > 0.5
    q4 = (grid[:, 0] > 0) & (grid[:, 1] < 0)
    return dens[high & q4].sum() / dens[high].sum()


def report_av(records):
    E = np.array([[r.surprise, r.anxiety, r.boredom, r.calmness] for rec in records for r in rec.reports])
    comfort = np.array([r.comfort for rec in records for r in rec.reports])
    ang = EmotionAngles()
    av_ci, ok_ci = av_transform_batch(E[:, [3, 0, 2]], ang.of(COMFORT_SUBSET))
    av_un, ok_un = av_transform_batch(E[:, [0, 1, 2]], ang.of(UNCOMFORT_SUBSET))
    return av_ci[ok_ci], comfort[ok_ci], av_un[ok_un], 1.0 - comfort[ok_un]


def test_comfort_mass_in_quadrant_iv_uncomfort_in_upper_half():
    records, _ = synth_generate(SynthConfig(seed=5, n_subjects=4, trials_per_subject=2))
    av_ci, ci, av_un, un = report_av(records)
    assert quadrant_iv_share(fit_weighted_kde(av_ci, ci)) >= 0.6
    m_un = fit_weighted_kde(av_un, un)
    _, grid = evaluation_grid(201)
    dens = m_un.density(grid)
    high = dens / m_un.kernel_max > 0.5
    assert dens[high & (grid[:, 1] > 0)].sum() / dens[high].sum() >= 0.6
