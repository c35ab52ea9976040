"""Synthetic networked observational datasets with hidden confounding.

Per-instance topic mixtures (Dirichlet) act as the latent confounder.
Observables are a bag-of-words feature proxy, a homophilous friendship
graph, one treatment, and one factual outcome. The sealed ground-truth
block keeps what an evaluator needs: both potential outcomes, the hidden
edge weights that drove assignment, and the mixtures themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, build_graph


@dataclass(frozen=True)
class GenConfig:
    n: int
    vocab: int = 200
    n_topics: int = 20
    words_per_doc: int = 500
    avg_degree: float = 10.0
    kappa1: float = 1.0
    kappa2: float = 1.0
    noise_std: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kappa1 < 0 or self.kappa2 < 0:
            raise ValueError("confounding strengths must be nonnegative")
        if self.n_topics > self.vocab:
            raise ValueError("n_topics must not exceed vocab")
        if not 0 <= self.avg_degree < self.n:
            raise ValueError("avg_degree must lie in [0, n)")
        if self.words_per_doc < 1:
            raise ValueError("words_per_doc must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")


@dataclass(frozen=True)
class GroundTruth:
    """Sealed block: never an input to any estimator under test."""

    y0: np.ndarray
    y1: np.ndarray
    weighted_adjacency: np.ndarray
    topic_mixtures: np.ndarray
    centroid_treated: np.ndarray
    centroid_control: np.ndarray
    scores: np.ndarray          # n x 2 confounder scores p_i^t
    prob_treated: np.ndarray    # softmax assignment probabilities


@dataclass(frozen=True)
class NetworkedDataset:
    features: np.ndarray
    graph: Graph
    treatments: np.ndarray
    outcomes: np.ndarray
    ground_truth: GroundTruth
    config: GenConfig = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.features.shape[0]


class DegenerateOutcomeError(ValueError):
    """All raw outcomes identical; normalization is undefined."""


def sample_topics_and_features(cfg: GenConfig, rng: np.random.Generator):
    """Latent mixtures R (n x topics) and their bag-of-words proxy X."""
    mixtures = rng.dirichlet(np.full(cfg.n_topics, 0.1), size=cfg.n)
    topic_words = rng.dirichlet(np.full(cfg.vocab, 0.05), size=cfg.n_topics)
    features = _features_from_mixtures(mixtures, topic_words, cfg.words_per_doc, rng)
    return mixtures, features


def _features_from_mixtures(mixtures, topic_words, words_per_doc, rng):
    word_probs = mixtures @ topic_words
    # guard against simplex drift from the matmul
    word_probs /= word_probs.sum(axis=1, keepdims=True)
    counts = rng.multinomial(words_per_doc, word_probs)
    return counts / float(words_per_doc)


def sample_network(mixtures: np.ndarray, cfg: GenConfig, rng: np.random.Generator) -> Graph:
    """Homophilous graph: P(edge ij) = min(1, c * R_i . R_j).

    The constant c is calibrated by bisection so the expected mean degree
    matches ``cfg.avg_degree``.
    """
    n = mixtures.shape[0]
    sim = mixtures @ mixtures.T
    iu, ju = np.triu_indices(n, k=1)
    sims = sim[iu, ju]
    c = _calibrate_edge_scale(sims, n, cfg.avg_degree)
    probs = np.minimum(1.0, c * sims)
    keep = rng.random(sims.shape) < probs
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    return build_graph(n, edges)


def _calibrate_edge_scale(sims: np.ndarray, n: int, avg_degree: float) -> float:
    if avg_degree == 0 or sims.size == 0:
        return 0.0

    def mean_degree(c):
        return 2.0 * np.minimum(1.0, c * sims).sum() / n

    positive = sims[sims > 0]
    if positive.size == 0:
        return 0.0
    if 2.0 * positive.size / n <= avg_degree:
        # saturate every positive-similarity pair; target unreachable
        return 2.0 / positive.min()
    lo, hi = 0.0, 1.0
    for _ in range(200):
        if mean_degree(hi) >= avg_degree:
            break
        hi *= 2.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if mean_degree(mid) < avg_degree:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sample_edge_weights(g: Graph, rng: np.random.Generator) -> np.ndarray:
    """Symmetric raw weights, Uniform(0.1, 1) on edges and zero elsewhere."""
    weights = np.zeros((g.n, g.n))
    if g.n_edges:
        w = rng.uniform(0.1, 1.0, size=g.n_edges)
        i, j = g.edges[:, 0], g.edges[:, 1]
        weights[i, j] = w
        weights[j, i] = w
    return weights


def row_normalize(weights: np.ndarray) -> np.ndarray:
    sums = weights.sum(axis=1, keepdims=True)
    out = weights.copy()
    nz = sums[:, 0] > 0
    out[nz] /= sums[nz]
    return out


def sample_hidden_weights(g: Graph, rng: np.random.Generator) -> np.ndarray:
    """Row-normalized hidden weighted adjacency over the edges of ``g``."""
    return row_normalize(sample_edge_weights(g, rng))


def select_centroids(mixtures: np.ndarray, rng: np.random.Generator):
    """Treated centroid: one sampled instance's mixture; control: the mean."""
    treated = mixtures[rng.integers(mixtures.shape[0])].copy()
    control = mixtures.mean(axis=0)
    return treated, control


def confounder_scores(mixtures, weighted_adj, centroid_treated, centroid_control,
                      kappa1, kappa2) -> np.ndarray:
    """Per-instance scores p_i^t from own and neighbor-aggregated mixtures."""
    neighbor_mix = weighted_adj @ mixtures
    scores = np.empty((mixtures.shape[0], 2))
    for t, centroid in ((0, centroid_control), (1, centroid_treated)):
        scores[:, t] = kappa1 * (mixtures @ centroid) + kappa2 * (neighbor_mix @ centroid)
    return scores


def treatment_probabilities(scores: np.ndarray) -> np.ndarray:
    """Softmax over the two arms: P(t=1 | scores)."""
    d = scores[:, 1] - scores[:, 0]
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sample_treatments(scores: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    probs = treatment_probabilities(scores)
    return (rng.random(scores.shape[0]) < probs).astype(np.int64)


def generate_outcomes(scores: np.ndarray, noise_std: float, rng: np.random.Generator):
    """Potential outcomes: per-arm noisy scores, normalized over the pooled
    2n raw values."""
    n = scores.shape[0]
    noise = rng.normal(0.0, noise_std, size=(n, 2))
    raw = scores + noise
    mu = raw.mean()
    sigma = raw.std()
    if sigma == 0:
        raise DegenerateOutcomeError(
            "all raw outcomes are identical; cannot normalize")
    norm = (raw - mu) / sigma
    return norm[:, 0], norm[:, 1]


def make_dataset(cfg: GenConfig) -> NetworkedDataset:
    """Run the full generating process for one seed."""
    rng = np.random.default_rng(cfg.seed)
    mixtures, features = sample_topics_and_features(cfg, rng)
    graph = sample_network(mixtures, cfg, rng)
    weighted_adj = sample_hidden_weights(graph, rng)
    centroid_treated, centroid_control = select_centroids(mixtures, rng)
    scores = confounder_scores(mixtures, weighted_adj, centroid_treated,
                               centroid_control, cfg.kappa1, cfg.kappa2)
    t = sample_treatments(scores, rng)
    y0, y1 = generate_outcomes(scores, cfg.noise_std, rng)
    y = np.where(t == 1, y1, y0)
    gt = GroundTruth(
        y0=y0, y1=y1,
        weighted_adjacency=weighted_adj,
        topic_mixtures=mixtures,
        centroid_treated=centroid_treated,
        centroid_control=centroid_control,
        scores=scores,
        prob_treated=treatment_probabilities(scores),
    )
    return NetworkedDataset(features=features, graph=graph, treatments=t,
                            outcomes=y, ground_truth=gt, config=cfg)
