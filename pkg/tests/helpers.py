"""Shared fixtures: Monte-Carlo estimator checks and gradient oracles."""

import numpy as np

from conebench import cone
from conebench import engine as eg
from conebench.datagen import GenConfig, make_dataset
from conebench.estimators import OraclePropensity, dr_estimate, ips_estimate
from conebench.policy import policy_probs, sample_policy, true_utility

MC_CFG = dict(n=300, vocab=40, n_topics=8, words_per_doc=120, avg_degree=6.0,
              kappa1=1.0, kappa2=1.0, noise_std=0.01)


class BoundedWrongOutcome:
    """Deliberately misspecified but bounded outcome model."""

    def predict(self, Z, t):
        return np.tanh(Z.sum(axis=1)) * 0.5 - 0.2 + 0.1 * t


def mc_truth_gap_pairs(n_sims, estimator, base_seed=1234):
    """(tau_hat, tau) pairs across fresh simulations.

    ``estimator`` is "ips" or "dr"; both use the generator's exact
    assignment probabilities, so their Monte-Carlo bias should vanish.
    """
    pairs = []
    wrong_model = BoundedWrongOutcome()
    for k in range(n_sims):
        ds = make_dataset(GenConfig(seed=(base_seed, k), **MC_CFG))
        gt = ds.ground_truth
        pol = sample_policy(ds.features.shape[1], seed=(base_seed, k, 1))
        pi = policy_probs(pol, ds.features, ds.graph)
        idx = np.arange(ds.n)
        tau = true_utility(pi, gt.y0, gt.y1, idx)
        prop = OraclePropensity(gt.prob_treated)
        if estimator == "ips":
            tau_hat = ips_estimate(pi, prop, ds.features, ds.treatments,
                                   ds.outcomes, idx)
        elif estimator == "dr":
            tau_hat = dr_estimate(pi, wrong_model, prop, ds.features,
                                  ds.treatments, ds.outcomes, idx,
                                  weight_mode="ips")
        else:
            raise ValueError(estimator)
        pairs.append((tau_hat, tau))
    return np.asarray(pairs)


def assert_mc_unbiased(pairs):
    diffs = pairs[:, 0] - pairs[:, 1]
    se = diffs.std(ddof=1) / np.sqrt(diffs.size)
    assert abs(diffs.mean()) <= 2 * se, (
        f"Monte-Carlo bias {diffs.mean():.5f} exceeds 2 x SE {se:.5f}")


class TinySplits:
    def __init__(self, n, seed=0, fracs=(0.6, 0.2, 0.2)):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n)
        a = int(round(fracs[0] * n))
        b = a + int(round(fracs[1] * n))
        self.train, self.val, self.test = perm[:a], perm[a:b], perm[b:]


def build_tiny_loss(seed=0):
    """Full training loss on a 10-node instance, for gradient checks."""
    ds = make_dataset(GenConfig(n=10, vocab=6, n_topics=3, words_per_doc=30,
                                avg_degree=3.0, kappa1=1.0, kappa2=1.0,
                                noise_std=0.05, seed=seed))
    cfg = cone.ConeConfig(dim=4, heads=2, gamma=0.7, zeta=0.3,
                          critic_hidden=(6,), outcome_hidden=(5,), seed=seed)
    rng = np.random.default_rng(cfg.seed)
    params = cone.init_params(cfg, ds.features.shape[1], rng)
    splits = TinySplits(ds.n, seed)
    fw = cone._build_forward(cfg, ds.features, ds.graph)
    ly = cone._outcome_loss_expr(fw["y_pred"], ds.outcomes, splits.train)
    lt = cone._treatment_loss_expr(fw["t_logit"], ds.treatments, splits.train)
    perm = rng.permutation(splits.train)
    lmi = cone._mi_loss_expr(fw["z_t"], fw["z_y"], splits.train, perm,
                             list(cfg.critic_hidden) + [1])
    total = cone._total_loss_expr(ly, lt, lmi, cfg.gamma, cfg.zeta)
    return total, params, {"ly": ly, "lt": lt, "lmi": lmi}


def fd_gradient_of(expr, bindings, name, h=1e-5):
    base = {k: np.array(v, copy=True) for k, v in bindings.items()}
    x = base[name]
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = eg.evaluate(expr, base)[0, 0]
        flat[k] = orig - h
        dn = eg.evaluate(expr, base)[0, 0]
        flat[k] = orig
        gflat[k] = (up - dn) / (2 * h)
    return g


def max_relative_gradient_error(expr, bindings, names):
    """Max over tensors of elementwise relative AD-vs-FD disagreement."""
    grads = eg.gradient(expr, bindings, names)
    worst = {}
    for name in names:
        fd = fd_gradient_of(expr, bindings, name)
        ad = grads[name]
        denom = np.maximum(np.maximum(np.abs(fd), np.abs(ad)), 1e-8)
        worst[name] = float((np.abs(ad - fd) / denom).max())
    return worst
