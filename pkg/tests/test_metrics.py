import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ganlab import assignment, metrics
from ganlab.metrics import GaussianStats, MetricSeries, SampleSet
from ganlab.nn import MLP, LayerSpec, chain, input_gradient_of_logit
from oracles import (brute_force_kid, brute_force_precision_recall, brute_force_w1,
                     naive_covariance, naive_pearson)


# --- W1 -----------------------------------------------------------------------

def test_w1_identical_sets_is_zero():
    a = np.random.default_rng(0).normal(size=(20, 2))
    assert metrics.w1_exact(a, a) == 0.0


def test_w1_single_pair():
    assert metrics.w1_exact([[0.0, 0.0]], [[3.0, 4.0]]) == 5.0


@pytest.mark.parametrize("method", ["scipy", "sap"])
@pytest.mark.parametrize("seed", range(20))
def test_w1_matches_permutation_oracle(seed, method):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    a, b = rng.normal(size=(n, 2)), rng.normal(size=(n, 2))
    assert abs(metrics.w1_exact(a, b, method) - brute_force_w1(a, b)) <= 1e-12


def test_w1_unequal_sizes_rejected():
    with pytest.raises(ValueError):
        metrics.w1_exact(np.zeros((3, 2)), np.zeros((4, 2)))


@pytest.mark.parametrize("n", [1, 5, 40, 120])
def test_sap_solver_agrees_with_scipy(n):
    rng = np.random.default_rng(n)
    cost = rng.uniform(size=(n, n))
    a = assignment.solve(cost, "sap")
    b = assignment.solve(cost, "scipy")
    assert sorted(a) == list(range(n))
    assert cost[np.arange(n), a].sum() == pytest.approx(cost[np.arange(n), b].sum(), abs=1e-12)


def test_w1_symmetric_and_triangle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a, b, c = (rng.normal(size=(6, 2)) for _ in range(3))
        ab, bc, ac = metrics.w1_exact(a, b), metrics.w1_exact(b, c), metrics.w1_exact(a, c)
        assert ab == pytest.approx(metrics.w1_exact(b, a), abs=1e-12)
        assert ac <= ab + bc + 1e-12
    a, b, c = (rng.normal(size=(256, 2)) for _ in range(3))
    assert metrics.w1_exact(a, c) <= metrics.w1_exact(a, b) + metrics.w1_exact(b, c) + 1e-12


def test_w1_zero_iff_same_multiset():
    rng = np.random.default_rng(12)
    a = rng.normal(size=(30, 2))
    assert metrics.w1_exact(a, a[rng.permutation(30)]) <= 1e-12
    b = a.copy()
    b[0] += 1e-3
    assert metrics.w1_exact(a, b) > 1e-6


# --- sliced W1 ------------------------------------------------------------------

def test_sliced_identical_is_zero():
    a = np.random.default_rng(0).normal(size=(40, 3))
    assert metrics.w1_sliced(a, a, 16, seed=1) == 0.0


def test_sliced_1d_equals_exact():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(30, 1)), rng.normal(size=(30, 1)) + 0.5
    assert abs(metrics.w1_sliced(a, b, 7, seed=3) - metrics.w1_exact(a, b)) <= 1e-12


def test_w1_1d_unequal_sizes_matches_scipy():
    from scipy.stats import wasserstein_distance
    rng = np.random.default_rng(2)
    u, v = rng.normal(size=13), rng.normal(size=29)
    assert metrics.w1_1d(u, v) == pytest.approx(wasserstein_distance(u, v), abs=1e-12)


def test_sliced_close_to_exact_on_blobs():
    # sliced W1 is a lower bound rescaled by the mean |cos|; for a pure shift in 2D
    # the ratio to the exact W1 is E|cos| = 2/pi, so compare against that scaling
    rng = np.random.default_rng(3)
    a = rng.normal(size=(256, 2))
    b = rng.normal(size=(256, 2)) + [4.0, 0.0]
    exact = metrics.w1_exact(a, b)
    sliced = metrics.w1_sliced(a, b, 512, seed=0)
    assert abs(sliced / (2 / math.pi) - exact) <= 0.05 * exact


# --- precision / recall -----------------------------------------------------------

def test_pr_identical_sets():
    a = np.random.default_rng(0).normal(size=(30, 2))
    assert metrics.knn_precision_recall(a, a, 5) == (1.0, 1.0)


def test_pr_disjoint_sets():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(30, 2))
    assert metrics.knn_precision_recall(a, a + 1000.0, 5) == (0.0, 0.0)


@pytest.mark.parametrize("seed", range(10))
def test_pr_matches_quadratic_oracle(seed):
    rng = np.random.default_rng(seed)
    real = rng.normal(size=(64, 2))
    fake = rng.normal(size=(64, 2)) * 1.3 + 0.4
    assert metrics.knn_precision_recall(real, fake, 5) == brute_force_precision_recall(real, fake, 5)


def test_pr_swapping_arguments_swaps_results():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(40, 3)), rng.normal(size=(50, 3)) + 0.3
    p, r = metrics.knn_precision_recall(a, b)
    assert metrics.knn_precision_recall(b, a) == (r, p)


def test_pr_needs_more_than_k_points():
    with pytest.raises(ValueError):
        metrics.knn_precision_recall(np.zeros((5, 2)), np.zeros((10, 2)), k=5)


def test_pr_closed_ball_includes_boundary():
    # the 1-NN radius of each real point is exactly 1; a fake point at distance 1 is covered
    real = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    fake = np.array([[3.0, 0.0], [10.0, 0.0], [11.0, 0.0]])
    p, _ = metrics.knn_precision_recall(real, fake, k=1)
    assert p == pytest.approx(1 / 3)


# --- Gaussians, FID ------------------------------------------------------------------

def test_frechet_identical_is_zero():
    rng = np.random.default_rng(0)
    g = metrics.fit_gaussian(rng.normal(size=(50, 4)))
    assert metrics.frechet_distance(g, g) <= 1e-9


def test_frechet_1d_mean_shift():
    assert metrics.frechet_distance(GaussianStats([0.0], [[1.0]]), GaussianStats([1.0], [[1.0]])) == pytest.approx(1.0, abs=1e-9)


def test_frechet_commuting_diagonal():
    a = GaussianStats([0.0, 0.0], np.diag([1.0, 4.0]))
    b = GaussianStats([0.0, 0.0], np.diag([9.0, 1.0]))
    assert metrics.frechet_distance(a, b) == pytest.approx(5.0, abs=1e-9)


def random_spd(rng, d):
    m = rng.normal(size=(d, d))
    return m @ m.T + 0.1 * np.eye(d)


def test_frechet_symmetric_and_rotation_invariant():
    rng = np.random.default_rng(1)
    for _ in range(10):
        d = int(rng.integers(1, 6))
        a = GaussianStats(rng.normal(size=d), random_spd(rng, d))
        b = GaussianStats(rng.normal(size=d), random_spd(rng, d))
        q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        ra = GaussianStats(q @ a.mean, q @ a.cov @ q.T)
        rb = GaussianStats(q @ b.mean, q @ b.cov @ q.T)
        f = metrics.frechet_distance(a, b)
        assert f == pytest.approx(metrics.frechet_distance(b, a), abs=1e-9)
        assert f == pytest.approx(metrics.frechet_distance(ra, rb), abs=1e-8)


def test_frechet_matches_scipy_sqrtm():
    from scipy.linalg import sqrtm
    rng = np.random.default_rng(2)
    s1, s2 = random_spd(rng, 5), random_spd(rng, 5)
    m1, m2 = rng.normal(size=5), rng.normal(size=5)
    ref = ((m1 - m2) ** 2).sum() + np.trace(s1 + s2 - 2 * sqrtm(s1 @ s2).real)
    assert metrics.frechet_distance(GaussianStats(m1, s1), GaussianStats(m2, s2)) == pytest.approx(ref, abs=1e-8)


def test_non_symmetric_cov_rejected():
    with pytest.raises(ValueError):
        GaussianStats([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])


def test_fit_gaussian_cases():
    g = metrics.fit_gaussian(np.ones((5, 3)))
    assert not g.cov.any()
    g = metrics.fit_gaussian([[0.0, 0.0], [2.0, 0.0]])
    np.testing.assert_array_equal(g.mean, [1.0, 0.0])
    np.testing.assert_array_equal(g.cov, np.diag([2.0, 0.0]))
    with pytest.raises(ValueError):
        metrics.fit_gaussian(np.zeros((1, 2)))


def test_fit_gaussian_matches_double_loop():
    x = np.random.default_rng(3).normal(size=(17, 3))
    mu, cov = naive_covariance(x.tolist())
    g = metrics.fit_gaussian(x)
    np.testing.assert_allclose(g.mean, mu, atol=1e-12)
    np.testing.assert_allclose(g.cov, cov, atol=1e-12)


# --- KID ----------------------------------------------------------------------------

def test_kid_all_zero_sets():
    assert metrics.kid(np.zeros((4, 3)), np.zeros((5, 3))) == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_kid_matches_triple_sum(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 17)), int(rng.integers(2, 17))
    x, y = rng.normal(size=(n, 3)), rng.normal(size=(m, 3)) + 0.2
    assert abs(metrics.kid(x, y) - brute_force_kid(x.tolist(), y.tolist())) <= 1e-12


def test_kid_identical_sets_non_positive():
    x = np.random.default_rng(4).normal(size=(8, 3))
    assert metrics.kid(x, x) <= 1e-9


def test_kid_symmetric():
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=(9, 4)), rng.normal(size=(12, 4))
    assert metrics.kid(x, y) == pytest.approx(metrics.kid(y, x), abs=1e-12)


def test_kid_too_small():
    with pytest.raises(ValueError):
        metrics.kid(np.zeros((1, 2)), np.zeros((3, 2)))


# --- gradient-field similarity ---------------------------------------------------------

def linear_disc(w):
    d = MLP([LayerSpec(2, 1)])
    d.weights[0][...] = np.asarray(w, dtype=float)[:, None]
    d.biases[0][...] = 0.0
    return d


def test_grad_similarity_linear_disc_pointing_at_center():
    w = np.array([1.0, 0.0])
    center = [[100.0, 0.0]]
    pts = np.column_stack([np.linspace(-5, 5, 11), np.zeros(11)])
    assert metrics.grad_field_similarity(linear_disc(w), pts, center) == pytest.approx(1.0, abs=1e-12)


def test_grad_similarity_negated_disc():
    rng = np.random.default_rng(0)
    d = MLP(chain([2, 8, 1], batch_norm=False), rng)
    neg = d.copy()
    neg.weights[-1][...] *= -1
    neg.biases[-1][...] *= -1
    pts, centers = rng.normal(size=(30, 2)), rng.normal(size=(4, 2)) * 3
    a = metrics.grad_field_similarity(d, pts, centers)
    assert metrics.grad_field_similarity(neg, pts, centers) == pytest.approx(-a, abs=1e-12)


def test_grad_similarity_matches_per_sample_recomputation():
    rng = np.random.default_rng(1)
    d = MLP(chain([2, 8, 8, 1], batch_norm=False), rng)
    pts, centers = rng.normal(size=(25, 2)) * 2, rng.normal(size=(5, 2)) * 3
    cos = []
    for p in pts:
        g = input_gradient_of_logit(d, p[None, :])[0]
        c = min(centers, key=lambda c: math.dist(c, p))
        h = c - p
        cos.append(g @ h / (np.linalg.norm(g) * np.linalg.norm(h)))
    assert metrics.grad_field_similarity(d, pts, centers) == pytest.approx(np.mean(cos), abs=1e-12)


def test_grad_similarity_excludes_samples_on_centers():
    d = linear_disc([1.0, 0.0])
    pts = np.array([[0.0, 0.0], [-1.0, 0.0]])
    assert metrics.grad_field_similarity(d, pts, [[0.0, 0.0]]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        metrics.grad_field_similarity(d, [[0.0, 0.0]], [[0.0, 0.0]])
    with pytest.raises(ValueError):
        metrics.grad_field_similarity(linear_disc([0.0, 0.0]), pts, [[5.0, 5.0]])


# --- convergence rate ---------------------------------------------------------------------

def test_convergence_rate_examples():
    s = MetricSeries.from_pairs([(1, 10), (2, 8), (3, 6), (4, 5), (5, 5.2)])
    assert metrics.convergence_rate(s) == 4
    assert metrics.convergence_rate(MetricSeries([1, 2, 3], [1.0, 2.0, 3.0])) == 1
    assert metrics.convergence_rate(MetricSeries([5, 7, 9], [2.0, 2.0, 2.0])) == 5


def test_series_steps_must_increase():
    with pytest.raises(ValueError):
        MetricSeries([1, 1], [1.0, 2.0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 1e3), min_size=1, max_size=40))
def test_convergence_rate_not_after_argmin(values):
    s = MetricSeries(list(range(0, 3 * len(values), 3)), values)
    assert metrics.convergence_rate(s) <= s.steps[int(np.argmin(values))]


# --- mode coverage -------------------------------------------------------------------------

CENTERS = np.array([[math.cos(a), math.sin(a)] for a in np.linspace(0, 2 * math.pi, 10, endpoint=False)]) * 20


def test_mode_coverage_single_mode():
    assert metrics.mode_coverage(np.tile(CENTERS[3], (10000, 1)), CENTERS) == 1


def test_mode_coverage_uniform():
    assert metrics.mode_coverage(np.repeat(CENTERS, 1000, axis=0), CENTERS) == 10


def test_mode_coverage_threshold_edge():
    pts = np.vstack([np.tile(CENTERS[0], (9990, 1)), np.tile(CENTERS[1], (10, 1))])
    assert metrics.mode_coverage(pts, CENTERS) == 2
    pts = np.vstack([np.tile(CENTERS[0], (9991, 1)), np.tile(CENTERS[1], (9, 1))])
    assert metrics.mode_coverage(pts, CENTERS) == 1


def test_mode_coverage_rescales_threshold():
    pts = np.vstack([np.tile(CENTERS[0], (999, 1)), CENTERS[1:2]])
    assert metrics.mode_coverage(pts, CENTERS) == 2


def test_mode_coverage_permutation_invariant():
    rng = np.random.default_rng(0)
    pts = CENTERS[rng.integers(0, 4, size=500)] + rng.normal(size=(500, 2))
    base = metrics.mode_coverage(pts, CENTERS)
    assert metrics.mode_coverage(pts[rng.permutation(500)], CENTERS[rng.permutation(10)]) == base
    with pytest.raises(ValueError):
        metrics.mode_coverage(pts, np.zeros((0, 2)))


# --- trajectories / class changes ---------------------------------------------------------------

def test_trajectory_lengths():
    a = np.random.default_rng(0).normal(size=(5, 2))
    np.testing.assert_array_equal(metrics.trajectory_lengths([a, a, a]), np.zeros(5))
    assert metrics.trajectory_lengths([[[0.0, 0.0]], [[3.0, 4.0]]])[0] == 5.0


def test_trajectory_lengths_match_loop():
    rng = np.random.default_rng(1)
    snaps = [rng.normal(size=(6, 2)) for _ in range(4)]
    expect = [sum(math.dist(snaps[i][j], snaps[i + 1][j]) for i in range(3)) for j in range(6)]
    np.testing.assert_allclose(metrics.trajectory_lengths(snaps), expect, atol=1e-12)
    manhattan = lambda a, b: np.abs(a - b).sum(1)
    expect = [sum(np.abs(snaps[i][j] - snaps[i + 1][j]).sum() for i in range(3)) for j in range(6)]
    np.testing.assert_allclose(metrics.trajectory_lengths(snaps, manhattan), expect, atol=1e-12)


def test_trajectory_shape_checks():
    with pytest.raises(ValueError):
        metrics.trajectory_lengths([np.zeros((3, 2))])
    with pytest.raises(ValueError):
        metrics.trajectory_lengths([np.zeros((3, 2)), np.zeros((4, 2))])


def test_class_change_probability():
    assign = lambda pts: metrics.nearest_center(pts, CENTERS)
    a = CENTERS[[0, 1, 2, 3]]
    np.testing.assert_array_equal(metrics.class_change_probability([a, a], assign), [0.0])
    b = CENTERS[[1, 2, 3, 4]]
    np.testing.assert_array_equal(metrics.class_change_probability([a, b], assign), [1.0])
    rng = np.random.default_rng(2)
    snaps = [CENTERS[rng.integers(0, 10, size=50)] for _ in range(5)]
    labels = [assign(s) for s in snaps]
    expect = [sum(labels[i][j] != labels[i + 1][j] for j in range(50)) / 50 for i in range(4)]
    np.testing.assert_allclose(metrics.class_change_probability(snaps, assign), expect)


# --- Pearson -----------------------------------------------------------------------------------

def test_pearson_exact_lines():
    x = np.arange(10.0)
    assert metrics.pearson(x, -x) == pytest.approx(-1.0)
    assert metrics.pearson(x, 2 * x + 3) == pytest.approx(1.0)


def test_pearson_matches_two_pass():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=30), rng.normal(size=30)
    assert abs(metrics.pearson(x, y) - naive_pearson(x.tolist(), y.tolist())) <= 1e-12


def test_pearson_zero_variance():
    with pytest.raises(ValueError):
        metrics.pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        metrics.pearson([1.0], [2.0])


def test_sampleset_validates():
    with pytest.raises(ValueError):
        SampleSet(np.array([[np.nan, 0.0]]))
    assert SampleSet(np.zeros((3, 2))).n == 3
