import numpy as np
import pytest
import scipy.stats

from featshift.errors import (
    InvalidArgumentError,
    InvalidDataError,
    UnreachableTargetError,
    WeightTooLargeError,
)
from featshift.estimators import ks_statistic
from featshift.rng import spawn_rng
from featshift.simulate import (
    AttackPlan,
    CopulaSpec,
    GraphKind,
    GraphSpec,
    arcsine_cdf,
    arcsine_quantile,
    build_graph,
    calibrate_edge_weight,
    correlation_from_precision,
    gaussian_mi,
    make_scenario,
    marginal_attack,
    max_stable_weight,
    precision_from_graph,
    sample_copula,
    scenario_from_json,
    scenario_to_json,
)

MI_TARGETS = (0.2, 0.1, 0.05, 0.01)


# ---------------------------------------------------------------------------
# graphs


def test_graph_edge_counts():
    assert build_graph("complete", 4).n_edges == 6
    assert build_graph("cycle", 25).n_edges == 25
    assert build_graph("grid", 25).n_edges == 40  # 2 * 5 * 4 lattice bonds
    assert build_graph("chain", 5).n_edges == 4
    assert build_graph("cycle", 2).n_edges == 1  # ring collapses, no duplicate


def test_random_graph_mean_edge_count():
    # Erdos-Renyi expectation p * d(d-1)/2 = 30
    counts = [
        build_graph("random", 25, 0.1, rng=spawn_rng(30, "er", s)).n_edges for s in range(1000)
    ]
    assert abs(np.mean(counts) - 30.0) < 3.0


def test_graph_validation():
    with pytest.raises(InvalidArgumentError):
        GraphSpec(kind=GraphKind.CHAIN, d=3, edges=((1, 1),))
    with pytest.raises(InvalidArgumentError):
        GraphSpec(kind=GraphKind.CHAIN, d=3, edges=((0, 1), (1, 0)))
    with pytest.raises(InvalidArgumentError):
        GraphSpec(kind=GraphKind.CHAIN, d=3, edges=((0, 3),))
    with pytest.raises(InvalidArgumentError):
        build_graph("grid", 24)
    with pytest.raises(InvalidArgumentError):
        build_graph("complete", 1)
    with pytest.raises(InvalidArgumentError):
        build_graph("random", 10, edge_prob=1.5)


# ---------------------------------------------------------------------------
# precision / correlation


def test_precision_zero_weight_is_identity():
    g = build_graph("complete", 5)
    omega = precision_from_graph(g, 0.0)
    assert np.array_equal(omega, np.eye(5))
    assert np.array_equal(correlation_from_precision(omega), np.eye(5))


def test_correlation_matches_inversion_oracle():
    # cycle on 3 nodes is the triangle, so all pairs are symmetric
    g = build_graph("cycle", 3)
    omega = precision_from_graph(g, 0.4)
    corr = correlation_from_precision(omega)

    sigma = np.linalg.inv(np.eye(3) + 0.4 * g.adjacency())
    sd = np.sqrt(np.diag(sigma))
    oracle = sigma / np.outer(sd, sd)
    assert np.allclose(corr, oracle, atol=1e-12)
    assert abs(corr[0, 1] - corr[0, 2]) < 1e-12
    assert abs(corr[0, 1] - corr[1, 2]) < 1e-12


def test_weight_pd_boundary():
    # complete graph adjacency has eigenvalues {d-1, -1}, so I + wA stays PD
    # for w in (-1/(d-1), 1); the check trips when the margin hits 1e-10
    g = build_graph("complete", 25)
    precision_from_graph(g, 0.999)
    precision_from_graph(g, -(1.0 - 1e-3) / 24.0)
    with pytest.raises(WeightTooLargeError) as exc:
        precision_from_graph(g, 1.0 - 1e-12)
    assert exc.value.minor >= 1
    with pytest.raises(WeightTooLargeError):
        precision_from_graph(g, -(1.0 + 1e-6) / 24.0)


def test_max_stable_weight_complete():
    g = build_graph("complete", 25)
    assert max_stable_weight(g) == pytest.approx(1.0, rel=1e-9)


# ---------------------------------------------------------------------------
# mutual information


def test_mi_identity_is_zero():
    for A in ([0], [1, 3], [0, 1, 2]):
        assert gaussian_mi(np.eye(4), A) == 0.0


def test_mi_two_dim_closed_form():
    rho = 0.5742
    corr = np.array([[1.0, rho], [rho, 1.0]])
    mi = gaussian_mi(corr, [0])
    assert abs(mi - 0.200) < 1e-3
    assert mi == pytest.approx(-0.5 * np.log1p(-rho * rho), abs=1e-12)


def test_mi_complement_symmetry():
    corr = make_scenario("random", 25, 0.1, seed=3).copula().correlation
    A = [0, 4, 17]
    rest = [j for j in range(25) if j not in A]
    assert gaussian_mi(corr, A) == pytest.approx(gaussian_mi(corr, rest), abs=1e-12)


def test_mi_index_set_validation():
    corr = np.eye(3)
    for bad in ([], [0, 1, 2], [3], [-1]):
        with pytest.raises(InvalidArgumentError):
            gaussian_mi(corr, bad)


# ---------------------------------------------------------------------------
# calibration


def test_calibration_hits_all_grid_cells():
    for kind in ("complete", "cycle", "grid", "random"):
        for target in MI_TARGETS:
            sc = make_scenario(kind, 25, target, seed=7)
            got = gaussian_mi(sc.copula().correlation, [sc.center])
            assert abs(got - target) <= 1e-4 + 1e-12, (kind, target, got)


def test_calibration_weight_monotone_in_target():
    g = build_graph("complete", 25)
    w_hi = calibrate_edge_weight(g, 12, 0.2)
    w_lo = calibrate_edge_weight(g, 12, 0.05)
    assert w_hi > w_lo > 0.0


def test_calibration_small_target_small_weight():
    g = build_graph("complete", 25)
    assert calibrate_edge_weight(g, 12, 1e-3) < calibrate_edge_weight(g, 12, 0.01) < 0.1


def test_calibration_unreachable_targets():
    isolated_center = GraphSpec(kind=GraphKind.RANDOM, d=4, edges=((1, 2),), edge_prob=0.1)
    with pytest.raises(UnreachableTargetError) as exc:
        calibrate_edge_weight(isolated_center, 0, 0.2)
    assert exc.value.max_attainable < 1e-6

    edgeless = GraphSpec(kind=GraphKind.RANDOM, d=4, edges=(), edge_prob=0.1)
    with pytest.raises(UnreachableTargetError):
        calibrate_edge_weight(edgeless, 0, 0.2)

    with pytest.raises(InvalidArgumentError):
        calibrate_edge_weight(isolated_center, 0, 0.0)


# ---------------------------------------------------------------------------
# arcsine marginal


def test_arcsine_quantile_examples():
    assert arcsine_quantile(0.0) == 0.0
    assert arcsine_quantile(1.0) == 1.0
    assert arcsine_quantile(0.5) == pytest.approx(0.5, abs=1e-12)
    assert arcsine_quantile(2.0 / 3.0) == pytest.approx(0.75, abs=1e-12)
    assert isinstance(arcsine_quantile(0.3), float)


def test_arcsine_quantile_matches_beta_ppf():
    u = np.linspace(0.001, 0.999, 101)
    oracle = scipy.stats.beta.ppf(u, 0.5, 0.5)
    assert np.allclose(arcsine_quantile(u), oracle, atol=1e-9)


def test_arcsine_roundtrip():
    u = np.linspace(0.0, 1.0, 201)
    assert np.allclose(arcsine_cdf(arcsine_quantile(u)), u, atol=1e-12)
    x = np.linspace(0.0, 1.0, 201)
    assert np.allclose(arcsine_quantile(arcsine_cdf(x)), x, atol=1e-12)


def test_arcsine_domain_errors():
    for fn in (arcsine_quantile, arcsine_cdf):
        with pytest.raises(InvalidArgumentError):
            fn(-0.01)
        with pytest.raises(InvalidArgumentError):
            fn(1.01)


# ---------------------------------------------------------------------------
# copula sampling


def test_copula_marginals_follow_arcsine_law():
    spec = make_scenario("complete", 25, 0.2, seed=0).copula()
    X = sample_copula(spec, 10000, spawn_rng(31, "marginals"))
    assert X.min() >= 0.0 and X.max() <= 1.0
    for j in range(spec.dim):
        ks = scipy.stats.kstest(X[:, j], arcsine_cdf).statistic
        assert ks <= 0.02, (j, ks)


def test_copula_identity_independent_and_centered():
    X = sample_copula(CopulaSpec(correlation=np.eye(4)), 10000, spawn_rng(32, "indep"))
    corr = np.corrcoef(X.T)
    off = corr[~np.eye(4, dtype=bool)]
    assert np.abs(off).max() < 0.05
    assert np.abs(X.mean(axis=0) - 0.5).max() < 0.02


def test_copula_determinism_and_validation():
    spec = CopulaSpec(correlation=np.eye(3))
    a = sample_copula(spec, 50, spawn_rng(33, "det"))
    b = sample_copula(spec, 50, spawn_rng(33, "det"))
    assert np.array_equal(a, b)
    with pytest.raises(InvalidArgumentError):
        sample_copula(spec, 0)
    with pytest.raises(InvalidDataError):
        CopulaSpec(correlation=np.array([[1.0, 0.2], [0.2, 0.9]]))
    with pytest.raises(InvalidDataError):
        CopulaSpec(correlation=np.array([[1.0, 1.1], [1.1, 1.0]]))


# ---------------------------------------------------------------------------
# marginal attack


def test_attack_preserves_marginals_exactly():
    rng = spawn_rng(34, "attack")
    Y = rng.random((200, 4))
    out, plan = marginal_attack(Y, [1, 3], rng)
    assert plan.attacked == (1, 3)
    for j in (1, 3):
        assert np.array_equal(np.sort(out[:, j]), np.sort(Y[:, j]))
        assert ks_statistic(Y[:, j], out[:, j]) == 0.0
    for j in (0, 2):
        assert np.array_equal(out[:, j], Y[:, j])
    assert np.array_equal(out[:, [1, 3]], Y[np.ix_(plan.permutation, [1, 3])])


def test_attack_identity_permutation_is_noop():
    seed = next(
        s for s in range(50) if np.array_equal(np.random.default_rng(s).permutation(2), [0, 1])
    )
    Y = np.array([[1.0, 2.0], [3.0, 4.0]])
    out, _ = marginal_attack(Y, [0], np.random.default_rng(seed))
    assert np.array_equal(out, Y)


def test_attack_keeps_joint_within_A_but_severs_the_rest():
    rng = spawn_rng(35, "attack-joint")
    cov = np.full((3, 3), 0.8) + 0.2 * np.eye(3)
    Y = rng.standard_normal((2000, 3)) @ np.linalg.cholesky(cov).T
    out, _ = marginal_attack(Y, [0, 1], rng)

    rows = {tuple(r) for r in np.round(Y[:, :2], 12)}
    assert {tuple(r) for r in np.round(out[:, :2], 12)} == rows
    assert abs(np.corrcoef(out[:, 0], out[:, 1])[0, 1] - np.corrcoef(Y[:, 0], Y[:, 1])[0, 1]) < 1e-12
    assert abs(np.corrcoef(out[:, 0], out[:, 2])[0, 1]) < 0.1
    assert abs(np.corrcoef(Y[:, 0], Y[:, 2])[0, 1]) > 0.7


def test_attack_plan_validation():
    with pytest.raises(InvalidArgumentError):
        AttackPlan(attacked=(), permutation=np.arange(3))
    with pytest.raises(InvalidArgumentError):
        AttackPlan(attacked=(0,), permutation=np.array([0, 0, 2]))
    with pytest.raises(InvalidArgumentError):
        marginal_attack(np.zeros((4, 2)), [2])
    with pytest.raises(InvalidArgumentError):
        marginal_attack(np.zeros((4, 2)), [])


# ---------------------------------------------------------------------------
# scenarios


def test_scenario_json_roundtrip():
    sc = make_scenario("random", 25, 0.1, seed=3)
    back = scenario_from_json(scenario_to_json(sc))
    assert back == sc
    assert np.allclose(back.copula().correlation, sc.copula().correlation, atol=0.0)


def test_scenario_deterministic_under_seed():
    a = make_scenario("random", 25, 0.2, seed=11)
    b = make_scenario("random", 25, 0.2, seed=11)
    assert a == b
    assert a.graph.edges == b.graph.edges


def test_scenario_correlations_positive_definite():
    for kind in ("complete", "cycle", "grid", "random", "chain"):
        corr = make_scenario(kind, 25, 0.2, seed=5).copula().correlation
        np.linalg.cholesky(corr)  # raises if not PD
        assert np.array_equal(np.diag(corr), np.ones(25))
