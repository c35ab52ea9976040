"""Flat typed key-value experiment configuration.

One `section.key = value` assignment per line, `#` comments, and a fixed
schema: unknown keys are errors so a config file can never silently
drift from the code that consumes it.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..cone import ConeConfig
from ..datagen import GenConfig

DEFAULT_ESTIMATORS = ("cone", "ips-x", "snips-x", "dm-x", "ols1", "ols2",
                      "dr-dm-x", "dr-ols1", "dr-ols2")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BenchConfig:
    gen: GenConfig
    cone: ConeConfig
    estimators: tuple = DEFAULT_ESTIMATORS
    n_sims: int = 10
    runs_per_sim: int = 1
    policy_seed: int = 1
    split_seed: int = 2
    split_fracs: tuple = (0.6, 0.2, 0.2)
    eps_clip: float = 0.01
    dr_snips_literal: bool = False

    def __post_init__(self):
        if self.n_sims < 1 or self.runs_per_sim < 1:
            raise ConfigError("simulation and run counts must be >= 1")
        if len(self.split_fracs) != 3 or any(f <= 0 for f in self.split_fracs):
            raise ConfigError("split_fracs needs three positive fractions")
        if abs(sum(self.split_fracs) - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")
        if not self.estimators:
            raise ConfigError("at least one estimator must be enabled")
        if not 0 < self.eps_clip < 0.5:
            raise ConfigError("eps_clip must lie in (0, 0.5)")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_tuple(text: str) -> tuple:
    return tuple(int(p) for p in text.split(",") if p.strip())


def _float_tuple(text: str) -> tuple:
    return tuple(float(p) for p in text.split(",") if p.strip())


def _str_tuple(text: str) -> tuple:
    return tuple(p.strip() for p in text.split(",") if p.strip())


# key -> (target section, field, caster)
SCHEMA = {
    "gen.n": ("gen", "n", int),
    "gen.vocab": ("gen", "vocab", int),
    "gen.topics": ("gen", "n_topics", int),
    "gen.words_per_doc": ("gen", "words_per_doc", int),
    "gen.avg_degree": ("gen", "avg_degree", float),
    "gen.kappa1": ("gen", "kappa1", float),
    "gen.kappa2": ("gen", "kappa2", float),
    "gen.noise_std": ("gen", "noise_std", float),
    "gen.seed": ("gen", "seed", int),
    "cone.dim": ("cone", "dim", int),
    "cone.heads": ("cone", "heads", int),
    "cone.gamma": ("cone", "gamma", float),
    "cone.zeta": ("cone", "zeta", float),
    "cone.lr": ("cone", "lr", float),
    "cone.epochs": ("cone", "epochs", int),
    "cone.patience": ("cone", "patience", int),
    "cone.layers": ("cone", "gat_layers", int),
    "cone.critic_hidden": ("cone", "critic_hidden", _int_tuple),
    "cone.outcome_hidden": ("cone", "outcome_hidden", _int_tuple),
    "cone.seed": ("cone", "seed", int),
    "bench.estimators": ("bench", "estimators", _str_tuple),
    "bench.sims": ("bench", "n_sims", int),
    "bench.runs": ("bench", "runs_per_sim", int),
    "bench.policy_seed": ("bench", "policy_seed", int),
    "bench.split_seed": ("bench", "split_seed", int),
    "bench.split_fracs": ("bench", "split_fracs", _float_tuple),
    "bench.eps_clip": ("bench", "eps_clip", float),
    "bench.dr_snips_literal": ("bench", "dr_snips_literal", _bool),
}

GEN_DEFAULTS = dict(n=500)


def parse_config_text(text: str) -> BenchConfig:
    sections = {"gen": dict(GEN_DEFAULTS), "cone": {}, "bench": {}}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        section, field, caster = SCHEMA[key]
        try:
            sections[section][field] = caster(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    try:
        gen = GenConfig(**sections["gen"])
        cone_cfg = ConeConfig(**sections["cone"])
        return BenchConfig(gen=gen, cone=cone_cfg, **sections["bench"])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> BenchConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def config_echo(cfg: BenchConfig) -> dict:
    """Flat, JSON-friendly snapshot of every configuration field."""
    echo = {}
    for prefix, obj in (("gen", cfg.gen), ("cone", cfg.cone)):
        for field in dataclasses.fields(obj):
            value = getattr(obj, field.name)
            echo[f"{prefix}.{field.name}"] = list(value) if isinstance(value, tuple) else value
    for field in dataclasses.fields(cfg):
        if field.name in ("gen", "cone"):
            continue
        value = getattr(cfg, field.name)
        echo[f"bench.{field.name}"] = list(value) if isinstance(value, tuple) else value
    return echo
