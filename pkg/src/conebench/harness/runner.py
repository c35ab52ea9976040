"""Benchmark orchestration: seeded simulations, estimator registry, sweeps.

Every simulation derives its own generator, policy, and split seeds from
the configured base seeds, so runs are reproducible cell by cell and
sweep cells can share simulation seeds for paired comparisons. Estimator
failures are contained per cell: one failing estimator in one cell never
perturbs any other number in the report.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .. import estimators as est
from ..cone import infer_utility, train
from ..datagen import make_dataset
from ..policy import policy_probs, sample_policy, true_utility
from .config import BenchConfig, config_echo
from .report import EvalReport, ResultRow, SweepCell, SweepResult, make_report

DEFAULT_GRID = (1e-6, 1e-4, 1e-2, 1.0, 100.0)


def derive_seed(*parts) -> int:
    """Stable child seed from integer parts."""
    return int(np.random.SeedSequence(tuple(int(p) for p in parts))
               .generate_state(1)[0])


@dataclass(frozen=True)
class Splits:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def split_indices(n: int, fracs, seed) -> Splits:
    """Disjoint train/validation/test partition covering all n indices."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fracs[0] * n))
    n_val = int(round(fracs[1] * n))
    if n_train < 1 or n_val < 1 or n_train + n_val >= n:
        raise ValueError(f"split fractions {fracs} degenerate for n={n}")
    return Splits(train=perm[:n_train], val=perm[n_train:n_train + n_val],
                  test=perm[n_train + n_val:])


class SimContext:
    """Everything one simulation exposes to estimators, with fit caches."""

    def __init__(self, cfg: BenchConfig, ds, pi_mat, splits, tau):
        self.cfg = cfg
        self.ds = ds
        self.pi_mat = pi_mat
        self.splits = splits
        self.tau = tau
        self.train_val = np.concatenate([splits.train, splits.val])
        self._cache = {}

    def propensity_x(self):
        if "prop_x" not in self._cache:
            tv = self.train_val
            self._cache["prop_x"] = est.fit_propensity(
                self.ds.features[tv], self.ds.treatments[tv])
        return self._cache["prop_x"]

    def outcome_model(self, variant, run_seed=0):
        key = (variant, run_seed if variant == "dm" else None)
        if key not in self._cache:
            if variant == "dm":
                model = est.fit_outcome(self.ds.features, self.ds.treatments,
                                        self.ds.outcomes, "dm",
                                        train_idx=self.splits.train,
                                        val_idx=self.splits.val,
                                        seed=derive_seed(run_seed, 17))
            else:
                model = est.fit_outcome(self.ds.features, self.ds.treatments,
                                        self.ds.outcomes, variant,
                                        train_idx=self.train_val)
            self._cache[key] = model
        return self._cache[key]


def _direct(ctx: SimContext, variant, run_seed):
    model = ctx.outcome_model(variant, run_seed)
    return est.direct_estimate(ctx.pi_mat, model, ctx.ds.features,
                               ctx.splits.test)


def _weighted(ctx: SimContext, self_normalized):
    fn = est.snips_estimate if self_normalized else est.ips_estimate
    return fn(ctx.pi_mat, ctx.propensity_x(), ctx.ds.features,
              ctx.ds.treatments, ctx.ds.outcomes, ctx.splits.test,
              eps_clip=ctx.cfg.eps_clip)


def _doubly_robust(ctx: SimContext, variant, run_seed):
    model = ctx.outcome_model(variant, run_seed)
    return est.dr_estimate(ctx.pi_mat, model, ctx.propensity_x(),
                           ctx.ds.features, ctx.ds.treatments, ctx.ds.outcomes,
                           ctx.splits.test, weight_mode="ips",
                           eps_clip=ctx.cfg.eps_clip)


def _cone(ctx: SimContext, run_seed):
    cone_cfg = dataclasses.replace(ctx.cfg.cone, seed=run_seed)
    params, reps, _ = train(ctx.ds, cone_cfg, ctx.splits)
    record = infer_utility(params, reps, ctx.ds, ctx.pi_mat, ctx.splits,
                           eps_clip=ctx.cfg.eps_clip,
                           seed=derive_seed(run_seed, 1),
                           snips_literal=ctx.cfg.dr_snips_literal)
    return record.tau_hat


def _oracle_direct(ctx: SimContext, run_seed):
    gt = ctx.ds.ground_truth
    oracle = est.OracleOutcome(gt.y0, gt.y1)
    return est.direct_estimate(ctx.pi_mat, oracle, ctx.ds.features,
                               ctx.splits.test)


ESTIMATORS = {
    "cone": _cone,
    "ips-x": lambda ctx, seed: _weighted(ctx, self_normalized=False),
    "snips-x": lambda ctx, seed: _weighted(ctx, self_normalized=True),
    "dm-x": lambda ctx, seed: _direct(ctx, "dm", seed),
    "ols1": lambda ctx, seed: _direct(ctx, "ols1", seed),
    "ols2": lambda ctx, seed: _direct(ctx, "ols2", seed),
    "dr-dm-x": lambda ctx, seed: _doubly_robust(ctx, "dm", seed),
    "dr-ols1": lambda ctx, seed: _doubly_robust(ctx, "ols1", seed),
    "dr-ols2": lambda ctx, seed: _doubly_robust(ctx, "ols2", seed),
    "oracle-direct": _oracle_direct,
}


def register_estimator(name: str, fn) -> None:
    """Add or replace an estimator: fn(ctx, run_seed) -> tau_hat."""
    ESTIMATORS[name] = fn


def simulation_context(cfg: BenchConfig, k: int) -> SimContext:
    gen_k = dataclasses.replace(cfg.gen, seed=derive_seed(cfg.gen.seed, k))
    ds = make_dataset(gen_k)
    policy = sample_policy(cfg.gen.vocab, seed=derive_seed(cfg.policy_seed, k))
    pi_mat = policy_probs(policy, ds.features, ds.graph)
    splits = split_indices(ds.n, cfg.split_fracs, derive_seed(cfg.split_seed, k))
    gt = ds.ground_truth
    tau = true_utility(pi_mat, gt.y0, gt.y1, splits.test)
    return SimContext(cfg, ds, pi_mat, splits, tau)


def run_benchmark(cfg: BenchConfig) -> EvalReport:
    """The full protocol: K simulations x runs x enabled estimators."""
    unknown = [n for n in cfg.estimators if n not in ESTIMATORS]
    if unknown:
        raise ValueError(f"unknown estimators requested: {unknown}")
    rows = []
    for k in range(cfg.n_sims):
        ctx = simulation_context(cfg, k)
        for r in range(cfg.runs_per_sim):
            run_seed = derive_seed(cfg.cone.seed, k, r)
            for name in cfg.estimators:
                try:
                    tau_hat = float(ESTIMATORS[name](ctx, run_seed))
                    rows.append(ResultRow(sim=k, run=r, estimator=name,
                                          tau_hat=tau_hat, tau=ctx.tau))
                except Exception as exc:  # isolate estimator failures per cell
                    rows.append(ResultRow(sim=k, run=r, estimator=name,
                                          tau_hat=None, tau=ctx.tau,
                                          status="error",
                                          error=f"{type(exc).__name__}: {exc}"))
    return make_report(config_echo(cfg), rows, cfg.estimators)


def parameter_sweep(cfg: BenchConfig, gamma_grid=DEFAULT_GRID,
                    zeta_grid=DEFAULT_GRID) -> SweepResult:
    """Factorial benchmark over the loss trade-offs, one model per cell.

    All cells share the per-simulation seeds, so cell-to-cell differences
    are purely hyperparameter effects.
    """
    gamma_grid = tuple(gamma_grid)
    zeta_grid = tuple(zeta_grid)
    if not gamma_grid or not zeta_grid:
        raise ValueError("sweep grids must be nonempty")
    cells = []
    for gamma in gamma_grid:
        for zeta in zeta_grid:
            try:
                cell_cfg = dataclasses.replace(
                    cfg, estimators=("cone",),
                    cone=dataclasses.replace(cfg.cone, gamma=gamma, zeta=zeta))
                report = run_benchmark(cell_cfg)
                entry = report.summary["cone"]
                if entry["n_ok"] == 0:
                    first_err = next(r.error for r in report.rows
                                     if r.status != "ok")
                    cells.append(SweepCell(gamma, zeta, None, None, 0,
                                           status="error", error=first_err))
                else:
                    cells.append(SweepCell(gamma, zeta, entry["rmse"],
                                           entry["mae"], entry["n_ok"]))
            except Exception as exc:  # keep the rest of the grid alive
                cells.append(SweepCell(gamma, zeta, None, None, 0,
                                       status="error",
                                       error=f"{type(exc).__name__}: {exc}"))
    seeds = [derive_seed(cfg.gen.seed, k) for k in range(cfg.n_sims)]
    return SweepResult(config=config_echo(cfg), cells=cells, sim_seeds=seeds)
