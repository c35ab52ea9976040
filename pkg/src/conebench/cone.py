"""Partial-confounder representation learning over networked data.

Two graph-attention branches embed each instance, one supervised by the
observed treatment and one by the factual outcome. A neural critic ties
the branches together through a Donsker-Varadhan bound on their mutual
information, and the inference phase runs a doubly robust estimate with
self-normalized weights on top of the concatenated representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine as eg
from .datagen import NetworkedDataset
from .estimators import (EstimateRecord, dr_estimate, fit_outcome,
                         fit_propensity, ips_weights)
from .graph import Graph, add_self_loops
from .policy import true_utility

PROB_FLOOR = 1e-12  # clamp for probabilities inside cross-entropy logs


class TrainingDivergedError(RuntimeError):
    """A loss or gradient became non-finite during training."""


@dataclass(frozen=True)
class ConeConfig:
    dim: int = 32
    heads: int = 4
    gamma: float = 1.0
    zeta: float = 0.01
    lr: float = 1e-3
    epochs: int = 300
    patience: int = 30
    gat_layers: int = 1
    critic_hidden: tuple = (64,)
    outcome_hidden: tuple = (64,)
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.heads < 1 or self.dim % self.heads != 0:
            raise ValueError("representation dim must be a positive multiple of heads")
        if self.gamma < 0 or self.zeta < 0:
            raise ValueError("loss trade-offs must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.gat_layers < 1:
            raise ValueError("need at least one attention layer")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


@dataclass
class ConeParams:
    values: dict

    @property
    def critic_names(self):
        return [n for n in self.values if n.startswith("h.")]

    @property
    def branch_names(self):
        return [n for n in self.values if not n.startswith("h.")]


@dataclass(frozen=True)
class PartialReps:
    treatment: np.ndarray
    outcome: np.ndarray
    combined: np.ndarray  # [outcome || treatment]


# ---------------------------------------------------------------------------
# parameter initialization


def init_params(cfg: ConeConfig, in_dim: int, rng: np.random.Generator) -> dict:
    params = {}
    for branch in ("t", "y"):
        prev = in_dim
        for layer in range(cfg.gat_layers):
            for k in range(cfg.heads):
                params[f"{branch}.g{layer}.W{k}"] = eg.xavier(rng, prev, cfg.head_dim)
                params[f"{branch}.g{layer}.a{k}"] = eg.xavier(rng, 2 * cfg.head_dim, 1)
            prev = cfg.dim
    _init_mlp(params, "fy", cfg.dim, cfg.outcome_hidden + (1,), rng)
    params["ft.v"] = eg.xavier(rng, cfg.dim, 1)
    params["ft.c"] = np.zeros((1, 1))
    _init_mlp(params, "h", 2 * cfg.dim, cfg.critic_hidden + (1,), rng)
    return params


def _init_mlp(params, prefix, in_dim, widths, rng):
    prev = in_dim
    for i, width in enumerate(widths):
        params[f"{prefix}.W{i}"] = eg.xavier(rng, prev, width)
        params[f"{prefix}.b{i}"] = np.zeros((1, width))
        prev = width


def _mlp_widths(params: dict, prefix: str) -> list:
    layers = sorted(int(k.split("W")[1]) for k in params if k.startswith(f"{prefix}.W"))
    return [params[f"{prefix}.W{i}"].shape[1] for i in layers]


# ---------------------------------------------------------------------------
# expression builders


def _mlp_expr(x, prefix, widths):
    h = x
    for i, width in enumerate(widths):
        w = eg.var(f"{prefix}.W{i}", (h.shape[1], width))
        b = eg.var(f"{prefix}.b{i}", (1, width))
        h = eg.add_rowvec(eg.matmul(h, w), b)
        if i < len(widths) - 1:
            h = eg.elu(h)
    return h


def _gat_layer_expr(x, g_sl: Graph, prefix: str, heads: int, head_dim: int):
    """One multi-head attention layer; returns (n x heads*head_dim, alphas).

    The attention logit a^T [Wx_i || Wx_j] is computed as the sum of the
    two half-projections, which keeps the per-edge tensors single-column.
    """
    offsets = g_sl.csr_offsets
    dst = g_sl.csr_targets
    src = np.repeat(np.arange(g_sl.n), np.diff(offsets))
    outs, alphas = [], []
    for k in range(heads):
        w = eg.var(f"{prefix}.W{k}", (x.shape[1], head_dim))
        a = eg.var(f"{prefix}.a{k}", (2 * head_dim, 1))
        xw = eg.matmul(x, w)
        own = eg.matmul(xw, eg.slice_rows(a, 0, head_dim))
        peer = eg.matmul(xw, eg.slice_rows(a, head_dim, 2 * head_dim))
        logits = eg.leaky_relu(
            eg.add(eg.gather_rows(own, src), eg.gather_rows(peer, dst)), slope=0.2)
        alpha = eg.segment_softmax(logits, offsets)
        agg = eg.segment_weighted_sum(alpha, eg.gather_rows(xw, dst), offsets)
        outs.append(eg.elu(agg))
        alphas.append(alpha)
    out = outs[0]
    for nxt in outs[1:]:
        out = eg.concat_cols(out, nxt)
    return out, alphas


def _build_forward(cfg: ConeConfig, X: np.ndarray, graph: Graph) -> dict:
    g_sl = add_self_loops(graph)
    x = eg.const(X)
    fw = {"offsets": g_sl.csr_offsets}
    for branch in ("t", "y"):
        h = x
        branch_alphas = []
        for layer in range(cfg.gat_layers):
            h, alphas = _gat_layer_expr(h, g_sl, f"{branch}.g{layer}",
                                        cfg.heads, cfg.head_dim)
            branch_alphas.extend(alphas)
        fw[f"z_{branch}"] = h
        fw[f"alphas_{branch}"] = branch_alphas
    fw["y_pred"] = _mlp_expr(fw["z_y"], "fy", list(cfg.outcome_hidden) + [1])
    fw["t_logit"] = eg.add_rowvec(eg.matmul(fw["z_t"], eg.var("ft.v", (cfg.dim, 1))),
                                  eg.var("ft.c", (1, 1)))
    return fw


def _outcome_loss_expr(y_pred, y, idx):
    target = eg.const(np.asarray(y)[np.asarray(idx)].reshape(-1, 1))
    return eg.mean(eg.square(eg.sub(eg.gather_rows(y_pred, idx), target)))


def _treatment_loss_expr(t_logit, t, idx):
    idx = np.asarray(idx)
    p = eg.clip(eg.sigmoid(eg.gather_rows(t_logit, idx)),
                PROB_FLOOR, 1.0 - PROB_FLOOR)
    t_col = eg.const(np.asarray(t)[idx].reshape(-1, 1).astype(np.float64))
    not_t = eg.const(1.0 - np.asarray(t)[idx].reshape(-1, 1).astype(np.float64))
    ll = eg.add(eg.mul(t_col, eg.log(p)),
                eg.mul(not_t, eg.log(eg.affine(p, -1.0, 1.0))))
    return eg.affine(eg.mean(ll), -1.0)


def _mi_loss_expr(z_t, z_y, idx, perm, critic_widths):
    joint = eg.concat_cols(eg.gather_rows(z_t, idx), eg.gather_rows(z_y, idx))
    marginal = eg.concat_cols(eg.gather_rows(z_t, idx), eg.gather_rows(z_y, perm))
    h_joint = _mlp_expr(joint, "h", critic_widths)
    h_marginal = _mlp_expr(marginal, "h", critic_widths)
    return eg.add(eg.affine(eg.mean(h_joint), -1.0), eg.log_mean_exp(h_marginal))


def _total_loss_expr(ly, lt, lmi, gamma, zeta):
    return eg.add(ly, eg.add(eg.affine(lt, gamma), eg.affine(lmi, zeta)))


# ---------------------------------------------------------------------------
# public single-operation entry points


def gat_partial_rep(X, g: Graph, head_weights, attn_vectors,
                    return_attention=False):
    """Multi-head attention embedding of every node.

    ``head_weights`` and ``attn_vectors`` are per-head lists (W_k of shape
    in_dim x d, a_k of shape 2d x 1). ``g`` must already carry self-loops.
    """
    if not g.self_loops:
        raise ValueError("gat_partial_rep expects a graph with self-loops applied")
    if len(head_weights) != len(attn_vectors):
        raise ValueError("one attention vector per head is required")
    heads = len(head_weights)
    head_dim = head_weights[0].shape[1]
    x = eg.const(np.asarray(X, dtype=np.float64))
    out, alphas = _gat_layer_expr(x, g, "gat", heads, head_dim)
    bindings = {}
    for k in range(heads):
        bindings[f"gat.W{k}"] = head_weights[k]
        bindings[f"gat.a{k}"] = attn_vectors[k]
    values = eg.evaluate([out] + alphas, bindings)
    if return_attention:
        return values[0], [a[:, 0] for a in values[1:]]
    return values[0]


def outcome_loss(z_y, y, params, idx) -> float:
    """Mean squared factual-outcome error of the outcome head on idx."""
    z = eg.const(np.asarray(z_y, dtype=np.float64))
    expr = _outcome_loss_expr(_mlp_expr(z, "fy", _mlp_widths(params, "fy")), y, idx)
    return float(eg.evaluate(expr, params)[0, 0])


def treatment_loss(z_t, t, v, c, idx) -> float:
    """Cross-entropy of the sigmoid treatment head on idx."""
    z = eg.const(np.asarray(z_t, dtype=np.float64))
    logit = eg.add_rowvec(eg.matmul(z, eg.var("ft.v", (z.shape[1], 1))),
                          eg.var("ft.c", (1, 1)))
    expr = _treatment_loss_expr(logit, t, idx)
    return float(eg.evaluate(expr, {"ft.v": np.asarray(v).reshape(-1, 1),
                                    "ft.c": np.asarray(c).reshape(1, 1)})[0, 0])


def mi_loss(z_t, z_y, perm, critic_params, idx) -> float:
    """Negative Donsker-Varadhan bound from aligned vs permuted pairings."""
    idx = np.asarray(idx)
    perm = np.asarray(perm)
    if not np.array_equal(np.sort(idx), np.sort(perm)):
        raise ValueError("perm must be a permutation of idx")
    zt = eg.const(np.asarray(z_t, dtype=np.float64))
    zy = eg.const(np.asarray(z_y, dtype=np.float64))
    expr = _mi_loss_expr(zt, zy, idx, perm, _mlp_widths(critic_params, "h"))
    return float(eg.evaluate(expr, critic_params)[0, 0])


def total_loss(ly: float, lt: float, lmi: float, gamma: float, zeta: float) -> float:
    return ly + gamma * lt + zeta * lmi


def compute_reps(cfg: ConeConfig, params: dict, X, graph: Graph,
                 return_attention=False):
    """Evaluate both branches on the full graph with given parameters."""
    fw = _build_forward(cfg, np.asarray(X, dtype=np.float64), graph)
    roots = [fw["z_t"], fw["z_y"]]
    n_alpha = 0
    if return_attention:
        roots += fw["alphas_t"] + fw["alphas_y"]
        n_alpha = len(fw["alphas_t"])
    values = eg.evaluate(roots, params)
    reps = PartialReps(treatment=values[0], outcome=values[1],
                       combined=np.concatenate([values[1], values[0]], axis=1))
    if return_attention:
        alphas = [a[:, 0] for a in values[2:]]
        return reps, {"treatment": alphas[:n_alpha], "outcome": alphas[n_alpha:],
                      "offsets": fw["offsets"]}
    return reps


# ---------------------------------------------------------------------------
# training


def train(ds: NetworkedDataset, cfg: ConeConfig, splits):
    """Full-batch training with per-epoch marginal permutations.

    Representations always come from the full graph; losses see only the
    training indices. Returns the parameters of the best validation
    outcome-loss epoch, the representations they induce, and the loss
    history.
    """
    X = ds.features
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, X.shape[1], rng)
    names = list(params)
    critic_names = [n for n in names if n.startswith("h.")]
    branch_names = [n for n in names if not n.startswith("h.")]
    critic_widths = list(cfg.critic_hidden) + [1]

    fw = _build_forward(cfg, X, ds.graph)
    ly = _outcome_loss_expr(fw["y_pred"], ds.outcomes, splits.train)
    lt = _treatment_loss_expr(fw["t_logit"], ds.treatments, splits.train)
    val_ly = _outcome_loss_expr(fw["y_pred"], ds.outcomes, splits.val)

    state_branch = eg.AdamState(lr=cfg.lr)
    state_critic = eg.AdamState(lr=cfg.lr)
    history = {"total": [], "outcome": [], "treatment": [], "mi": [],
               "val_outcome": []}
    best_val = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = -1
    stale = 0

    for epoch in range(cfg.epochs):
        perm = rng.permutation(splits.train)
        lmi = _mi_loss_expr(fw["z_t"], fw["z_y"], splits.train, perm, critic_widths)
        total = _total_loss_expr(ly, lt, lmi, cfg.gamma, cfg.zeta)
        try:
            values, grads = eg.value_and_grad(total, params, names,
                                              aux=[ly, lt, lmi, val_ly])
        except eg.NonFiniteError as exc:
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch} "
                f"(last total={history['total'][-1] if history['total'] else None}): {exc}"
            ) from exc
        history["total"].append(float(values[0][0, 0]))
        history["outcome"].append(float(values[1][0, 0]))
        history["treatment"].append(float(values[2][0, 0]))
        history["mi"].append(float(values[3][0, 0]))
        val = float(values[4][0, 0])
        history["val_outcome"].append(val)

        if val < best_val:
            best_val = val
            best_params = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale > cfg.patience:
                break

        new_branch, state_branch = eg.adam_step(
            {n: params[n] for n in branch_names},
            {n: grads[n] for n in branch_names}, state_branch)
        new_critic, state_critic = eg.adam_step(
            {n: params[n] for n in critic_names},
            {n: grads[n] for n in critic_names}, state_critic)
        params = {n: (new_branch[n] if n in new_branch else new_critic[n])
                  for n in names}

    history["best_epoch"] = best_epoch
    reps = compute_reps(cfg, best_params, X, ds.graph)
    return ConeParams(values=best_params), reps, history


# ---------------------------------------------------------------------------
# inference


def infer_utility(params: ConeParams, reps: PartialReps, ds: NetworkedDataset,
                  pi_mat: np.ndarray, splits, eps_clip=0.01, seed=0,
                  snips_literal=False) -> EstimateRecord:
    """Doubly robust utility estimate from the concatenated representation.

    Per-arm outcome nets train on the training rows (validation rows steer
    early stopping); the propensity model fits on train plus validation;
    the estimate itself is restricted to the test rows.
    """
    Z = reps.combined
    model = fit_outcome(Z, ds.treatments, ds.outcomes, "dm",
                        train_idx=splits.train, val_idx=splits.val, seed=seed)
    trval = np.concatenate([splits.train, splits.val])
    prop = fit_propensity(Z[trval], ds.treatments[trval])
    tau_hat = dr_estimate(pi_mat, model, prop, Z, ds.treatments, ds.outcomes,
                          splits.test, weight_mode="snips", eps_clip=eps_clip,
                          snips_literal=snips_literal)
    gt = ds.ground_truth
    tau = true_utility(pi_mat, gt.y0, gt.y1, splits.test)
    w, n_clipped = ips_weights(pi_mat, prop.predict_proba(Z), ds.treatments,
                               splits.test, eps_clip)
    return EstimateRecord(
        estimator="cone", tau_hat=tau_hat, tau=tau,
        diagnostics={"weight_min": float(w.min()), "weight_max": float(w.max()),
                     "n_clipped": n_clipped,
                     "propensity_converged": prop.converged})


# ---------------------------------------------------------------------------
# standalone mutual-information estimation (critic only)


def estimate_mi(x, y, hidden=(64,), lr=1e-3, epochs=1000, seed=0,
                eval_perms=32) -> float:
    """Donsker-Varadhan lower bound on MI(x, y) with a trained critic.

    Trains the critic on aligned vs independently permuted sample pairs,
    then averages the bound over fresh evaluation permutations.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y must pair up row by row")
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    widths = list(hidden) + [1]
    params = {}
    _init_mlp(params, "h", x.shape[1] + y.shape[1], tuple(widths), rng)

    zx, zy = eg.const(x), eg.const(y)
    idx = np.arange(n)
    state = eg.AdamState(lr=lr)
    for _ in range(epochs):
        perm = rng.permutation(n)
        loss = _mi_loss_expr(zx, zy, idx, perm, widths)
        _, grads = eg.value_and_grad(loss, params, list(params))
        params, state = eg.adam_step(params, grads, state)

    bounds = []
    for _ in range(eval_perms):
        perm = rng.permutation(n)
        loss = _mi_loss_expr(zx, zy, idx, perm, widths)
        bounds.append(-float(eg.evaluate(loss, params)[0, 0]))
    return float(np.mean(bounds))
