import numpy as np
import pytest

from featshift.errors import InvalidArgumentError, InvalidDataError
from featshift.estimators import (
    EstimatorConfig,
    EvalSet,
    FeatureStats,
    Method,
    compute_feature_stats,
    default_knn_k,
    ecd_knn_ks,
    ecd_mb_ks,
    ecd_score,
    ks_statistic,
    make_eval_set,
    marginal_ks,
)
from featshift.gaussian import fit_gaussian, gaussian_score
from featshift.rng import spawn_rng


def ks_oracle(a, b):
    # brute force: evaluate both ECDFs at every sample point
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    best = 0.0
    for t in np.concatenate([a, b]):
        gap = abs(np.mean(a <= t) - np.mean(b <= t))
        best = max(best, gap)
    return best


def equicorr_sample(n, d, rho, rng):
    cov = np.full((d, d), rho) + (1 - rho) * np.eye(d)
    return rng.standard_normal((n, d)) @ np.linalg.cholesky(cov).T


def attacked_copy(X, j, rng):
    Y = X.copy()
    Y[:, j] = Y[rng.permutation(X.shape[0]), j]
    return Y


# ---------------------------------------------------------------------------
# ks_statistic


def test_ks_identical_and_disjoint():
    a = np.array([0.3, -1.2, 4.0])
    assert ks_statistic(a, a.copy()) == 0.0
    assert ks_statistic([1, 2, 3], [10, 11, 12]) == 1.0


def test_ks_interleaved_half():
    assert ks_statistic([1.0, 3.0], [2.0, 4.0]) == 0.5


def test_ks_empty_rejected():
    with pytest.raises(InvalidDataError):
        ks_statistic([], [1.0])


def test_ks_matches_brute_force_on_random_small_pairs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        na, nb = rng.integers(1, 9, size=2)
        # integer values force heavy ties across and within samples
        a = rng.integers(0, 5, size=na).astype(float)
        b = rng.integers(0, 5, size=nb).astype(float)
        assert ks_statistic(a, b) == ks_oracle(a, b)


def test_ks_symmetric():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a = rng.normal(size=rng.integers(1, 20))
        b = rng.normal(size=rng.integers(1, 20))
        assert ks_statistic(a, b) == ks_statistic(b, a)


# ---------------------------------------------------------------------------
# eval sets


def test_make_eval_set_sizes():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(1000, 4))
    Y = rng.normal(size=(1000, 4))
    ev = make_eval_set(X, Y, m_per_side=30, rng=rng)
    assert ev.points.shape == (60, 4)
    assert ev.m_x == 30 and ev.m_y == 30


def test_make_eval_set_n_equals_m_is_permutation():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 2))
    Y = rng.normal(size=(30, 2))
    ev = make_eval_set(X, Y, m_per_side=30, rng=rng)
    half_x = ev.points[: ev.m_x]
    assert np.array_equal(np.sort(half_x, axis=0), np.sort(X, axis=0))


def test_make_eval_set_deterministic():
    rng_data = np.random.default_rng(4)
    X = rng_data.normal(size=(100, 3))
    Y = rng_data.normal(size=(100, 3))
    a = make_eval_set(X, Y, rng=np.random.default_rng(9))
    b = make_eval_set(X, Y, rng=np.random.default_rng(9))
    assert np.array_equal(a.points, b.points)


def test_eval_set_requires_both_halves():
    with pytest.raises(InvalidArgumentError):
        EvalSet(points=np.zeros((3, 2)), m_x=3, m_y=0)


# ---------------------------------------------------------------------------
# ecd_score


def test_ecd_score_identical_models_zero():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(200, 3))
    model = fit_gaussian(X)
    ev = make_eval_set(X, X, rng=rng)
    stats = ecd_score(model, model, ev)
    assert np.array_equal(stats.values, np.zeros(3))
    assert stats.method is Method.MB_SM


def test_ecd_score_shifted_gaussian_exact():
    # score difference between N(0,1) and N(1,1) is the constant 1
    rng = np.random.default_rng(6)
    base = fit_gaussian(rng.normal(size=(50, 1)))
    p = type(base)(mean=np.zeros(1), covariance=np.eye(1), precision=np.eye(1), chol=np.eye(1))
    q = type(base)(mean=np.ones(1), covariance=np.eye(1), precision=np.eye(1), chol=np.eye(1))
    ev = EvalSet(points=rng.normal(size=(10, 1)), m_x=5, m_y=5)
    assert np.allclose(ecd_score(p, q, ev).values, [1.0], atol=1e-12)


def test_ecd_score_ranks_attacked_feature():
    hits = 0
    for s in range(100):
        rng = spawn_rng(100, "rank-sm", s)
        X = equicorr_sample(2000, 3, 0.8, rng)
        Y = attacked_copy(equicorr_sample(2000, 3, 0.8, rng), 0, rng)
        ev = make_eval_set(X, Y, rng=rng)
        vals = ecd_score(fit_gaussian(X), fit_gaussian(Y), ev).values
        hits += vals[0] > max(vals[1], vals[2])
    assert hits >= 95


def test_ecd_score_additivity():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(300, 4))
    Y = rng.normal(size=(300, 4)) + 0.3
    p, q = fit_gaussian(X), fit_gaussian(Y)
    ev = make_eval_set(X, Y, rng=rng)
    per_feature = ecd_score(p, q, ev).values
    joint = np.mean(
        [np.sum((gaussian_score(p, x) - gaussian_score(q, x)) ** 2) for x in ev.points]
    )
    assert abs(per_feature.sum() - joint) < 1e-12


def test_feature_order_invariance():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(400, 3)) @ rng.normal(size=(3, 3))
    Y = rng.normal(size=(400, 3)) @ rng.normal(size=(3, 3))
    ev = make_eval_set(X, Y, rng=np.random.default_rng(1))
    base = ecd_score(fit_gaussian(X), fit_gaussian(Y), ev).values
    perm = [2, 0, 1]
    evp = EvalSet(points=ev.points[:, perm], m_x=ev.m_x, m_y=ev.m_y)
    permuted = ecd_score(fit_gaussian(X[:, perm]), fit_gaussian(Y[:, perm]), evp).values
    assert np.allclose(permuted, base[perm], atol=1e-10)


# ---------------------------------------------------------------------------
# ecd_mb_ks


def test_ecd_mb_ks_same_seed_zero():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(500, 3))
    model = fit_gaussian(X)
    ev = make_eval_set(X, X, rng=rng)
    stats = ecd_mb_ks(
        model, model, ev,
        rng=np.random.default_rng(123), rng_q=np.random.default_rng(123),
    )
    assert np.array_equal(stats.values, np.zeros(3))


def test_ecd_mb_ks_null_below_ks_quantile():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(500, 3))
    model = fit_gaussian(X)
    ev = make_eval_set(X, X, rng=rng)
    stats = ecd_mb_ks(model, model, ev, rng=np.random.default_rng(1), rng_q=np.random.default_rng(2))
    # 99.9% two-sample KS null quantile at 1000 draws per side
    assert np.all(stats.values < 0.087)


def test_ecd_mb_ks_ranks_attacked_feature():
    hits = 0
    for s in range(30):
        rng = spawn_rng(200, "rank-mbks", s)
        X = equicorr_sample(2000, 3, 0.8, rng)
        Y = attacked_copy(equicorr_sample(2000, 3, 0.8, rng), 0, rng)
        ev = make_eval_set(X, Y, rng=rng)
        vals = ecd_mb_ks(fit_gaussian(X), fit_gaussian(Y), ev, rng=rng).values
        hits += vals[0] > max(vals[1], vals[2])
    assert hits >= 27  # >= 90% of trials


# ---------------------------------------------------------------------------
# ecd_knn_ks


def knn_ks_oracle(X, Y, k, ev):
    d = X.shape[1]
    out = np.zeros(d)
    for j in range(d):
        rest = [c for c in range(d) if c != j]
        vals = []
        for x in ev.points:
            dx = np.sum((X[:, rest] - x[rest]) ** 2, axis=1)
            dy = np.sum((Y[:, rest] - x[rest]) ** 2, axis=1)
            a = X[np.argsort(dx, kind="stable")[:k], j]
            b = Y[np.argsort(dy, kind="stable")[:k], j]
            vals.append(ks_statistic(a, b))
        out[j] = np.mean(vals)
    return out


def test_ecd_knn_ks_self_with_full_k_is_zero():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(50, 3))
    ev = make_eval_set(X, X, m_per_side=10, rng=rng)
    stats = ecd_knn_ks(X, X, k=50, eval_set=ev)
    assert np.array_equal(stats.values, np.zeros(3))


def test_ecd_knn_ks_matches_brute_force_with_ties():
    rng = np.random.default_rng(12)
    # integer coordinates force distance ties; stable row order must decide
    X = rng.integers(0, 3, size=(40, 3)).astype(float)
    Y = rng.integers(0, 3, size=(40, 3)).astype(float)
    ev = make_eval_set(X, Y, m_per_side=8, rng=rng)
    got = ecd_knn_ks(X, Y, k=5, eval_set=ev)
    assert np.array_equal(got.values, knn_ks_oracle(X, Y, 5, ev))


def test_ecd_knn_ks_clustered_neighbors():
    # both clusters split 10 apart on x0: the k=2 neighborhood of an eval
    # point at x0=0 under the distance on coordinates -1 is the x0=0 pair
    X = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    Y = np.array([[0.0, 5.0], [0.0, 6.0], [10.0, 0.0], [10.0, 1.0]])
    ev = EvalSet(points=np.array([[0.0, 0.5], [0.0, 0.2]]), m_x=1, m_y=1)
    got = ecd_knn_ks(X, Y, k=2, eval_set=ev)
    # feature 1 compares {0,1} against {5,6}: disjoint, KS = 1
    assert got.values[1] == 1.0


def test_ecd_knn_ks_mean_ordering_under_attack():
    v0, v1 = [], []
    for s in range(100):
        rng = spawn_rng(300, "rank-knn", s)
        X = equicorr_sample(2000, 3, 0.8, rng)
        Y = attacked_copy(equicorr_sample(2000, 3, 0.8, rng), 0, rng)
        ev = make_eval_set(X, Y, rng=rng)
        vals = ecd_knn_ks(X, Y, k=45, eval_set=ev).values
        v0.append(vals[0])
        v1.append(np.mean(vals[1:]))
    assert np.mean(v0) > np.mean(v1)


def test_ecd_knn_ks_k_validation():
    X = np.zeros((10, 2))
    ev = EvalSet(points=np.zeros((2, 2)), m_x=1, m_y=1)
    with pytest.raises(InvalidArgumentError):
        ecd_knn_ks(X, X, k=11, eval_set=ev)


def test_default_knn_k():
    assert default_knn_k(2000) == 45
    assert default_knn_k(1000) == 32


# ---------------------------------------------------------------------------
# marginal_ks


def test_marginal_ks_identical_zero():
    rng = np.random.default_rng(13)
    X = rng.normal(size=(100, 3))
    assert np.array_equal(marginal_ks(X, X.copy()).values, np.zeros(3))


def test_marginal_ks_blind_to_permutation_attack():
    rng = np.random.default_rng(14)
    X = rng.normal(size=(500, 4))
    Y = attacked_copy(X, 2, rng)
    assert marginal_ks(X, Y).values[2] == 0.0


def test_marginal_ks_mean_shift_analytic():
    rng = np.random.default_rng(15)
    X = rng.normal(size=(1000, 2))
    Y = rng.normal(size=(1000, 2))
    Y[:, 1] += 1.0
    # sup_t |Phi(t) - Phi(t-1)| = 2 Phi(1/2) - 1
    assert abs(marginal_ks(X, Y).values[1] - 0.3829) < 0.1


# ---------------------------------------------------------------------------
# shared properties and the dispatcher


@pytest.mark.parametrize("method", list(Method))
def test_null_values_shrink_with_n(method):
    medians = {}
    for n in (200, 2000):
        vals = []
        for s in range(50):
            rng = spawn_rng(400, f"null-{method.value}-{n}", s)
            X = equicorr_sample(n, 3, 0.5, rng)
            Y = equicorr_sample(n, 3, 0.5, rng)
            cfg = EstimatorConfig(method=method, n_samp=200)
            vals.append(compute_feature_stats(X, Y, cfg, rng).values.max())
        medians[n] = np.median(vals)
    assert medians[2000] < medians[200]


def test_compute_feature_stats_deterministic():
    rng = np.random.default_rng(16)
    X = rng.normal(size=(300, 3))
    Y = rng.normal(size=(300, 3))
    cfg = EstimatorConfig(method=Method.MB_KS, n_samp=100)
    a = compute_feature_stats(X, Y, cfg, spawn_rng(7, "det"))
    b = compute_feature_stats(X, Y, cfg, spawn_rng(7, "det"))
    assert np.array_equal(a.values, b.values)


def test_compute_feature_stats_flow_density():
    rng = np.random.default_rng(17)
    X = rng.normal(size=(400, 2))
    Y = rng.normal(size=(400, 2)) + 2.0
    cfg = EstimatorConfig(method=Method.MB_SM, density="flow", flow_bins=20)
    stats = compute_feature_stats(X, Y, cfg, rng)
    assert stats.method is Method.MB_SM
    assert np.all(stats.values >= 0) and np.all(np.isfinite(stats.values))


def test_estimator_config_validation():
    with pytest.raises(InvalidArgumentError):
        EstimatorConfig(method=Method.MB_KS, density="flow")
    with pytest.raises(InvalidArgumentError):
        EstimatorConfig(density="spline")


def test_feature_stats_validation():
    with pytest.raises(InvalidDataError):
        FeatureStats(values=np.array([0.1, -0.2]), method=Method.MB_SM)
    with pytest.raises(InvalidDataError):
        FeatureStats(values=np.array([np.inf]), method=Method.MB_SM)
