import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conebench import datagen as dg
from conebench.graph import build_graph, neighbors


def small_cfg(**over):
    base = dict(n=40, vocab=30, n_topics=6, words_per_doc=80, avg_degree=5.0,
                kappa1=1.0, kappa2=1.0, noise_std=0.01, seed=11)
    base.update(over)
    return dg.GenConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        small_cfg(kappa1=-0.1)
    with pytest.raises(ValueError):
        small_cfg(n_topics=31)
    with pytest.raises(ValueError):
        small_cfg(avg_degree=40.0)
    with pytest.raises(ValueError):
        small_cfg(n=0)


def test_topic_mixtures_are_stochastic_rows():
    cfg = small_cfg()
    rng = np.random.default_rng(0)
    mixtures, features = dg.sample_topics_and_features(cfg, rng)
    assert mixtures.shape == (cfg.n, cfg.n_topics)
    assert_allclose(mixtures.sum(axis=1), 1.0, atol=1e-12)
    assert (mixtures >= 0).all()


def test_features_are_word_frequencies():
    cfg = small_cfg()
    rng = np.random.default_rng(1)
    _, features = dg.sample_topics_and_features(cfg, rng)
    assert features.shape == (cfg.n, cfg.vocab)
    assert_allclose(features.sum(axis=1), 1.0, atol=1e-12)
    assert ((features > 0).sum(axis=1) <= cfg.words_per_doc).all()


def test_features_converge_to_mixtures_with_identity_topics():
    # whole-distribution oracle: with phi = I and many draws the empirical
    # frequencies approach the mixtures (law of large numbers)
    rng = np.random.default_rng(2)
    mixtures = rng.dirichlet(np.full(6, 0.1), size=40)
    features = dg._features_from_mixtures(mixtures, np.eye(6), 10 ** 5, rng)
    l1 = np.abs(features - mixtures).sum(axis=1)
    assert l1.max() < 0.02


def test_network_zero_degree_is_empty():
    cfg = small_cfg(avg_degree=0.0)
    rng = np.random.default_rng(3)
    mixtures = rng.dirichlet(np.full(cfg.n_topics, 0.1), size=cfg.n)
    g = dg.sample_network(mixtures, cfg, rng)
    assert g.n_edges == 0


def test_network_calibration_hits_target_degree():
    cfg = dg.GenConfig(n=500, vocab=50, n_topics=10, words_per_doc=100,
                       avg_degree=10.0, seed=0)
    realized = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        mixtures = rng.dirichlet(np.full(cfg.n_topics, 0.1), size=cfg.n)
        g = dg.sample_network(mixtures, cfg, rng)
        realized.append(2.0 * g.n_edges / cfg.n)
    for deg in realized:
        assert 0.75 * cfg.avg_degree <= deg <= 1.25 * cfg.avg_degree


def test_orthogonal_mixtures_never_connect():
    cfg = small_cfg(n=10, n_topics=2, avg_degree=4.0)
    mixtures = np.zeros((10, 2))
    mixtures[:5, 0] = 1.0
    mixtures[5:, 1] = 1.0
    g = dg.sample_network(mixtures, cfg, np.random.default_rng(4))
    for i, j in g.edges:
        assert (i < 5) == (j < 5)


def test_identical_mixtures_still_yield_valid_graph():
    cfg = small_cfg(n=12, avg_degree=3.0)
    mixtures = np.tile(np.full(6, 1 / 6), (12, 1))
    g = dg.sample_network(mixtures, cfg, np.random.default_rng(5))
    assert g.n == 12
    assert 0 <= g.n_edges <= 66


def test_hidden_weights_range_symmetry_normalization():
    g = build_graph(6, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)])
    rng = np.random.default_rng(6)
    raw = dg.sample_edge_weights(g, rng)
    on_edges = raw[g.edges[:, 0], g.edges[:, 1]]
    assert ((on_edges >= 0.1) & (on_edges < 1.0)).all()
    assert_array_equal(raw, raw.T)
    assert np.diag(raw).sum() == 0
    norm = dg.row_normalize(raw)
    row_sums = norm.sum(axis=1)
    for i in range(6):
        if neighbors(g, i).size:
            assert row_sums[i] == pytest.approx(1.0, abs=1e-12)
        else:
            assert row_sums[i] == 0.0
    # zero where no edge
    assert norm[0, 3] == 0.0 and norm[5].sum() == 0.0


def test_centroids():
    rng = np.random.default_rng(7)
    mixtures = rng.dirichlet(np.full(4, 0.2), size=9)
    treated, control = dg.select_centroids(mixtures, rng)
    assert any(np.array_equal(treated, row) for row in mixtures)
    assert control == pytest.approx(mixtures.mean(axis=0))
    assert control.sum() == pytest.approx(1.0, abs=1e-12)

    single = mixtures[:1]
    t1, c1 = dg.select_centroids(single, np.random.default_rng(8))
    assert_array_equal(t1, single[0])
    assert_allclose(c1, single[0])


def test_confounder_scores_hand_computed_two_nodes():
    mixtures = np.array([[0.7, 0.3], [0.2, 0.8]])
    weighted = np.array([[0.0, 1.0], [1.0, 0.0]])  # 2-node path, normalized
    treated = np.array([0.6, 0.4])
    control = np.array([0.45, 0.55])
    scores = dg.confounder_scores(mixtures, weighted, treated, control, 1.5, 2.0)
    # node 0: own=(0.7,0.3), neighbors=(0.2,0.8)
    exp_t1_0 = 1.5 * (0.7 * 0.6 + 0.3 * 0.4) + 2.0 * (0.2 * 0.6 + 0.8 * 0.4)
    exp_t0_0 = 1.5 * (0.7 * 0.45 + 0.3 * 0.55) + 2.0 * (0.2 * 0.45 + 0.8 * 0.55)
    assert scores[0, 1] == pytest.approx(exp_t1_0, abs=1e-12)
    assert scores[0, 0] == pytest.approx(exp_t0_0, abs=1e-12)


def test_zero_kappas_make_assignment_random():
    rng = np.random.default_rng(9)
    mixtures = rng.dirichlet(np.full(3, 0.5), size=20)
    weighted = dg.sample_hidden_weights(build_graph(20, [(0, 1), (2, 3)]), rng)
    scores = dg.confounder_scores(mixtures, weighted, mixtures[0],
                                  mixtures.mean(axis=0), 0.0, 0.0)
    assert_array_equal(scores, np.zeros((20, 2)))
    assert_allclose(dg.treatment_probabilities(scores), 0.5)


def test_isolated_node_uses_only_own_term():
    mixtures = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    weighted = np.zeros((3, 3))
    weighted[0, 1] = weighted[1, 0] = 1.0  # node 2 isolated
    treated = np.array([0.9, 0.1])
    scores = dg.confounder_scores(mixtures, weighted, treated, treated, 2.0, 5.0)
    assert scores[2, 1] == pytest.approx(2.0 * (mixtures[2] @ treated), abs=1e-14)


def test_treatment_probability_extremes_and_monte_carlo():
    scores = np.array([[0.0, 10.0], [3.0, 3.0]])
    probs = dg.treatment_probabilities(scores)
    assert probs[0] > 0.9999
    assert probs[1] == 0.5

    rng = np.random.default_rng(10)
    tiled = np.tile([[0.0, 0.8]], (10 ** 5, 1))
    draws = dg.sample_treatments(tiled, rng)
    expected = 1.0 / (1.0 + np.exp(-0.8))
    assert abs(draws.mean() - expected) < 0.01


def test_outcomes_degenerate_error():
    scores = np.zeros((5, 2))
    with pytest.raises(dg.DegenerateOutcomeError):
        dg.generate_outcomes(scores, 0.0, np.random.default_rng(11))


def test_outcomes_pooled_normalization():
    rng = np.random.default_rng(12)
    scores = rng.normal(size=(50, 2))
    y0, y1 = dg.generate_outcomes(scores, 0.01, rng)
    pooled = np.concatenate([y0, y1])
    assert abs(pooled.mean()) < 1e-9
    assert abs(pooled.std() - 1.0) < 1e-9


def test_noiseless_outcome_gap_is_scaled_score_gap():
    rng = np.random.default_rng(13)
    scores = rng.normal(size=(30, 2))
    y0, y1 = dg.generate_outcomes(scores, 0.0, rng)
    sigma = scores.std()
    assert_allclose(y1 - y0, (scores[:, 1] - scores[:, 0]) / sigma, atol=1e-12)


def test_dataset_consistency_and_determinism():
    cfg = small_cfg()
    ds = dg.make_dataset(cfg)
    gt = ds.ground_truth
    assert_array_equal(ds.outcomes,
                       np.where(ds.treatments == 1, gt.y1, gt.y0))
    pooled = np.concatenate([gt.y0, gt.y1])
    assert abs(pooled.mean()) < 1e-9 and abs(pooled.std() - 1.0) < 1e-9

    again = dg.make_dataset(cfg)
    assert_array_equal(ds.features, again.features)
    assert_array_equal(ds.graph.edges, again.graph.edges)
    assert_array_equal(ds.treatments, again.treatments)
    assert_array_equal(ds.outcomes, again.outcomes)
    assert_array_equal(ds.ground_truth.weighted_adjacency,
                       again.ground_truth.weighted_adjacency)


def test_stronger_neighbor_confounding_widens_score_gap():
    cfg1 = small_cfg(n=200, kappa2=1.0, seed=21)
    cfg2 = small_cfg(n=200, kappa2=2.0, seed=21)
    g1 = dg.make_dataset(cfg1).ground_truth
    g2 = dg.make_dataset(cfg2).ground_truth
    gap1 = np.abs(g1.scores[:, 1] - g1.scores[:, 0]).mean()
    gap2 = np.abs(g2.scores[:, 1] - g2.scores[:, 0]).mean()
    assert gap2 > gap1


def test_weighted_adjacency_only_on_observed_edges():
    ds = dg.make_dataset(small_cfg(seed=31))
    adj = np.zeros((ds.n, ds.n), dtype=bool)
    e = ds.graph.edges
    adj[e[:, 0], e[:, 1]] = adj[e[:, 1], e[:, 0]] = True
    w = ds.ground_truth.weighted_adjacency
    assert (w[~adj] == 0).all()
    nz_rows = w.sum(axis=1) > 0
    assert_allclose(w[nz_rows].sum(axis=1), 1.0, atol=1e-12)


def test_dataset_invariants_over_many_random_configs():
    rng = np.random.default_rng(99)
    for trial in range(100):
        cfg = dg.GenConfig(
            n=int(rng.integers(5, 30)),
            vocab=int(rng.integers(8, 20)),
            n_topics=int(rng.integers(2, 8)),
            words_per_doc=int(rng.integers(5, 60)),
            avg_degree=float(rng.uniform(0, 4)),
            kappa1=float(rng.uniform(0, 2)),
            kappa2=float(rng.uniform(0, 2)),
            noise_std=float(rng.uniform(0.005, 0.1)),
            seed=int(rng.integers(0, 10 ** 6)),
        )
        ds = dg.make_dataset(cfg)
        gt = ds.ground_truth
        assert_array_equal(ds.outcomes, np.where(ds.treatments == 1, gt.y1, gt.y0))
        assert_allclose(gt.topic_mixtures.sum(axis=1), 1.0, atol=1e-9)
        pooled = np.concatenate([gt.y0, gt.y1])
        assert abs(pooled.mean()) < 1e-9 and abs(pooled.std() - 1.0) < 1e-9
        row_sums = gt.weighted_adjacency.sum(axis=1)
        degs = ds.graph.degrees()
        assert_allclose(row_sums[degs > 0], 1.0, atol=1e-9)
        assert (row_sums[degs == 0] == 0).all()


def test_features_are_lossy_proxy_of_mixtures():
    # held-out likelihood of the treatment model is higher on the true
    # confounder than on the noisy word-frequency proxy
    from conebench.estimators import fit_propensity

    cfg = dg.GenConfig(n=400, vocab=120, n_topics=10, words_per_doc=150,
                       avg_degree=8.0, kappa1=1.0, kappa2=1.5, noise_std=0.01,
                       seed=42)
    ds = dg.make_dataset(cfg)
    gt = ds.ground_truth
    half = ds.n // 2
    tr, te = np.arange(half), np.arange(half, ds.n)
    t = ds.treatments
    on_r = fit_propensity(gt.topic_mixtures[tr], t[tr])
    on_x = fit_propensity(ds.features[tr], t[tr])
    ll_r = on_r.mean_log_likelihood(gt.topic_mixtures[te], t[te])
    ll_x = on_x.mean_log_likelihood(ds.features[te], t[te])
    assert ll_x < ll_r
