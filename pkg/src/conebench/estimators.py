"""Counterfactual policy-value estimators on observed covariates.

Direct methods (two linear variants and a per-arm neural net), inverse
propensity scoring with and without self-normalization, and the doubly
robust combinations. All estimators consume a full-population policy
matrix and restrict the averages to an explicit index subset, so train,
validation and test splits stay visible at the call site.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine as eg

DEFAULT_CLIP = 0.01
OLS_RIDGE = 1e-6
DM_HIDDEN = (64, 64)
DM_EPOCHS = 500
DM_LR = 1e-3
DM_PATIENCE = 50


@dataclass
class EstimateRecord:
    estimator: str
    tau_hat: float
    tau: float
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# propensity models


@dataclass
class PropensityModel:
    weights: np.ndarray
    bias: float
    converged: bool
    n_iter: int
    grad_norm: float

    def predict_proba(self, Z: np.ndarray) -> np.ndarray:
        """P(t = 1 | z) for every row of Z."""
        return _stable_sigmoid(Z @ self.weights + self.bias)

    def mean_log_likelihood(self, Z: np.ndarray, t: np.ndarray) -> float:
        s = Z @ self.weights + self.bias
        return float(np.mean(t * s - np.logaddexp(0.0, s)))


class OraclePropensity:
    """Wraps known assignment probabilities for the full population."""

    def __init__(self, prob_treated: np.ndarray):
        self.prob_treated = np.asarray(prob_treated, dtype=np.float64)

    def predict_proba(self, Z: np.ndarray) -> np.ndarray:
        if Z.shape[0] != self.prob_treated.shape[0]:
            raise ValueError("oracle propensities cover a different population")
        return self.prob_treated


def _stable_sigmoid(s: np.ndarray) -> np.ndarray:
    out = np.empty_like(s, dtype=np.float64)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    ex = np.exp(s[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def fit_propensity(Z: np.ndarray, t: np.ndarray, l2: float = 1e-4,
                   tol: float = 1e-6, max_iter: int = 20000) -> PropensityModel:
    """Logistic regression by monotone full-batch gradient ascent.

    Maximizes the mean Bernoulli log-likelihood minus (l2/2)||w||^2 until
    the gradient norm drops below ``tol`` (or ``max_iter`` hits).
    """
    Z = np.asarray(Z, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if t.min() == t.max():
        raise ValueError("both treatment arms must be present to fit a propensity model")
    n, d = Z.shape
    w = np.zeros(d)
    b = 0.0

    def objective(w, b):
        s = Z @ w + b
        return np.mean(t * s - np.logaddexp(0.0, s)) - 0.5 * l2 * (w @ w)

    obj = objective(w, b)
    step = 1.0
    it = 0
    gnorm = np.inf
    while it < max_iter:
        it += 1
        resid = t - _stable_sigmoid(Z @ w + b)
        gw = Z.T @ resid / n - l2 * w
        gb = resid.mean()
        gnorm = float(np.sqrt(gw @ gw + gb * gb))
        if gnorm < tol:
            break
        # backtracking ascent step on the current gradient
        accepted = False
        for _ in range(60):
            w_new = w + step * gw
            b_new = b + step * gb
            obj_new = objective(w_new, b_new)
            if obj_new >= obj:
                w, b, obj = w_new, b_new, obj_new
                step *= 1.2
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    return PropensityModel(weights=w, bias=float(b), converged=gnorm < tol,
                           n_iter=it, grad_norm=gnorm)


# ---------------------------------------------------------------------------
# outcome models


class MLPRegressor:
    """Small fully connected regressor: ELU hidden layers, linear output.

    Trained full-batch with Adam on mean squared error; optional early
    stopping on a validation set with parameter rollback to the best epoch.
    """

    def __init__(self, in_dim, hidden=DM_HIDDEN, lr=DM_LR, epochs=DM_EPOCHS,
                 patience=DM_PATIENCE, seed=0):
        self.in_dim = in_dim
        self.widths = tuple(hidden) + (1,)
        self.lr = lr
        self.epochs = epochs
        self.patience = patience
        self.seed = seed
        self.params = None

    def _init_params(self, rng):
        params = {}
        prev = self.in_dim
        for i, width in enumerate(self.widths):
            params[f"W{i}"] = eg.xavier(rng, prev, width)
            params[f"b{i}"] = np.zeros((1, width))
            prev = width
        return params

    def _prediction_expr(self, x):
        h = x
        for i, _ in enumerate(self.widths):
            h = eg.add_rowvec(eg.matmul(h, eg.var(f"W{i}", (h.shape[1], self.widths[i]))),
                              eg.var(f"b{i}", (1, self.widths[i])))
            if i < len(self.widths) - 1:
                h = eg.elu(h)
        return h

    def fit(self, Z, y, Z_val=None, y_val=None):
        rng = np.random.default_rng(self.seed)
        params = self._init_params(rng)
        loss = eg.mean(eg.square(eg.sub(
            self._prediction_expr(eg.const(Z)), eg.const(np.asarray(y).reshape(-1, 1)))))
        aux = []
        if Z_val is not None and len(Z_val):
            aux = [eg.mean(eg.square(eg.sub(
                self._prediction_expr(eg.const(Z_val)),
                eg.const(np.asarray(y_val).reshape(-1, 1)))))]
        state = eg.AdamState(lr=self.lr)
        best_val = np.inf
        best_params = {k: v.copy() for k, v in params.items()}
        stale = 0
        for _ in range(self.epochs):
            values, grads = eg.value_and_grad(loss, params, list(params), aux=aux)
            params, state = eg.adam_step(params, grads, state)
            if aux:
                val = values[1][0, 0]
                if val < best_val:
                    best_val = val
                    best_params = {k: v.copy() for k, v in params.items()}
                    stale = 0
                else:
                    stale += 1
                    if stale > self.patience:
                        break
        self.params = best_params if aux else params
        return self

    def predict(self, Z):
        if self.params is None:
            raise RuntimeError("MLPRegressor.predict called before fit")
        expr = self._prediction_expr(eg.const(np.asarray(Z, dtype=np.float64)))
        return eg.evaluate(expr, self.params)[:, 0]


class OLS1Model:
    """One linear model on [features, treatment indicator]."""

    variant = "ols1"

    def __init__(self, coef):
        self.coef = coef  # (d + 2,): feature weights, treatment weight, intercept

    def predict(self, Z, t):
        d = Z.shape[1]
        return Z @ self.coef[:d] + t * self.coef[d] + self.coef[d + 1]


class OLS2Model:
    """Independent linear model per treatment arm."""

    variant = "ols2"

    def __init__(self, coef0, coef1):
        self.coefs = {0: coef0, 1: coef1}

    def predict(self, Z, t):
        c = self.coefs[int(t)]
        return Z @ c[:-1] + c[-1]


class DMXModel:
    """Per-arm neural direct method."""

    variant = "dm"

    def __init__(self, net0: MLPRegressor, net1: MLPRegressor):
        self.nets = {0: net0, 1: net1}

    def predict(self, Z, t):
        return self.nets[int(t)].predict(Z)


class OracleOutcome:
    """Ground-truth potential outcomes standing in for a fitted model."""

    variant = "oracle"

    def __init__(self, y0, y1):
        self.potential = {0: np.asarray(y0, dtype=np.float64),
                          1: np.asarray(y1, dtype=np.float64)}

    def predict(self, Z, t):
        out = self.potential[int(t)]
        if Z.shape[0] != out.shape[0]:
            raise ValueError("oracle outcomes cover a different population")
        return out


def _ridge_solve(A, y, lam):
    gram = A.T @ A + lam * np.eye(A.shape[1])
    return np.linalg.solve(gram, A.T @ y)


def fit_outcome(Z, t, y, variant, train_idx=None, val_idx=None, seed=0):
    """Fit an outcome model of the given variant on the training rows.

    ``variant`` is one of "ols1", "ols2", "dm". The neural variant uses
    ``val_idx`` (when provided) for early stopping; the linear variants
    ignore it. Per-arm variants require both arms in the training rows.
    """
    Z = np.asarray(Z, dtype=np.float64)
    t = np.asarray(t)
    y = np.asarray(y, dtype=np.float64)
    tr = np.arange(Z.shape[0]) if train_idx is None else np.asarray(train_idx)

    if variant == "ols1":
        A = np.column_stack([Z[tr], t[tr].astype(np.float64), np.ones(tr.size)])
        return OLS1Model(_ridge_solve(A, y[tr], OLS_RIDGE))

    if variant == "ols2":
        coefs = {}
        for arm in (0, 1):
            rows = tr[t[tr] == arm]
            if rows.size == 0:
                raise ValueError(f"treatment arm {arm} is empty in the training rows")
            A = np.column_stack([Z[rows], np.ones(rows.size)])
            coefs[arm] = _ridge_solve(A, y[rows], OLS_RIDGE)
        return OLS2Model(coefs[0], coefs[1])

    if variant == "dm":
        nets = {}
        for arm in (0, 1):
            rows = tr[t[tr] == arm]
            if rows.size == 0:
                raise ValueError(f"treatment arm {arm} is empty in the training rows")
            net = MLPRegressor(Z.shape[1], seed=np.random.SeedSequence((seed, arm)).generate_state(1)[0])
            val_rows = None
            if val_idx is not None:
                val_rows = np.asarray(val_idx)[t[np.asarray(val_idx)] == arm]
            if val_rows is not None and val_rows.size:
                net.fit(Z[rows], y[rows], Z[val_rows], y[val_rows])
            else:
                net.fit(Z[rows], y[rows])
            nets[arm] = net
        return DMXModel(nets[0], nets[1])

    raise ValueError(f"unknown outcome model variant '{variant}'")


# ---------------------------------------------------------------------------
# policy-value estimators


def direct_estimate(pi_mat, model, Z, idx) -> float:
    """Policy value from modeled outcomes only."""
    idx = np.asarray(idx)
    yh0 = model.predict(Z, 0)
    yh1 = model.predict(Z, 1)
    vals = pi_mat[idx, 0] * yh0[idx] + pi_mat[idx, 1] * yh1[idx]
    return float(vals.mean())


def ips_weights(pi_mat, prob_treated, t, idx, eps_clip=DEFAULT_CLIP):
    """Importance weights pi(t_i)/clip(P(t_i)) plus clip diagnostics."""
    idx = np.asarray(idx)
    p_obs = np.where(t[idx] == 1, prob_treated[idx], 1.0 - prob_treated[idx])
    clipped = np.clip(p_obs, eps_clip, 1.0 - eps_clip)
    n_clipped = int((p_obs != clipped).sum())
    w = pi_mat[idx, t[idx]] / clipped
    return w, n_clipped


def ips_estimate(pi_mat, prop, Z, t, y, idx, eps_clip=DEFAULT_CLIP) -> float:
    """Inverse-propensity-weighted average of factual outcomes."""
    w, _ = ips_weights(pi_mat, prop.predict_proba(Z), t, idx, eps_clip)
    return float((w * y[np.asarray(idx)]).mean())


def snips_estimate(pi_mat, prop, Z, t, y, idx, eps_clip=DEFAULT_CLIP) -> float:
    """Self-normalized variant: weighted mean with weights summing out."""
    w, _ = ips_weights(pi_mat, prop.predict_proba(Z), t, idx, eps_clip)
    return float((w * y[np.asarray(idx)]).sum() / w.sum())


def dr_estimate(pi_mat, model, prop, Z, t, y, idx, weight_mode="ips",
                eps_clip=DEFAULT_CLIP, snips_literal=False) -> float:
    """Doubly robust: modeled outcomes plus weighted factual residuals.

    ``weight_mode`` "ips" uses the raw importance weights; "snips"
    rescales them to average 1 over idx, so the correction term is the
    self-normalized residual mean. ``snips_literal`` instead uses weights
    that sum to 1, which shrinks the correction by a factor of |idx|.
    """
    idx = np.asarray(idx)
    yh0 = model.predict(Z, 0)
    yh1 = model.predict(Z, 1)
    direct = pi_mat[idx, 0] * yh0[idx] + pi_mat[idx, 1] * yh1[idx]
    w, _ = ips_weights(pi_mat, prop.predict_proba(Z), t, idx, eps_clip)
    if weight_mode == "snips":
        w = w / w.sum() if snips_literal else w * (idx.size / w.sum())
    elif weight_mode != "ips":
        raise ValueError(f"unknown weight mode '{weight_mode}'")
    yh_obs = np.where(t[idx] == 1, yh1[idx], yh0[idx])
    return float((direct + w * (y[idx] - yh_obs)).mean())


def rmse_mae(pairs) -> tuple[float, float]:
    """Root mean squared error and mean absolute error of (estimate, truth)."""
    arr = np.asarray(list(pairs), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("rmse_mae needs at least one (estimate, truth) pair")
    err = arr[:, 0] - arr[:, 1]
    return float(np.sqrt(np.mean(err ** 2))), float(np.mean(np.abs(err)))
