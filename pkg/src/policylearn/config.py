"""Run configuration: one YAML file drives every CLI subcommand.

Unknown keys are rejected so typos fail loudly, and every run writes the
fully resolved configuration next to its artifacts for provenance.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .dataset import CsvSchema
from .forest import ForestParams
from .simulate import (DgpConfig, FeatureSpec, HeterogeneityRule,
                       TwoPhaseConfig, default_heterogeneity)


class ConfigError(ValueError):
    """Raised for unknown keys or malformed configuration values."""


_SCHEMA: dict = {
    "seed": None,
    "output_dir": None,
    "threads": None,
    "data": {
        "path": None, "action": None, "outcome": None, "cluster": None,
        "numeric": None, "categorical": None, "wave": None, "n_arms": None,
        "known_shares": None, "eta": None, "group": None, "random_flag": None,
    },
    "forest": {
        "num_trees": None, "min_leaf": None, "honest": None,
        "subsample": None, "features_per_split": None,
    },
    "cross_fit": {"k": None},
    "propensity": {"clip": None},
    "search": {
        "depth": None, "split_step": None, "min_node_size": None,
        "method": None, "hybrid_search_depth": None,
    },
    "simulate": {
        "n": None, "d_arms": None, "baseline_rate": None, "arm_effects": None,
        "heterogeneity": None, "heterogeneity_scale": None,
        "cluster_effect_sd": None, "explore_share": None, "b1_share": None,
        "tree_depth": None, "block_feature": None,
        "validation": {
            "reps": None, "split": None, "sizes": None, "depths": None,
            "hybrid": None,
        },
    },
    "evaluate": {
        "w_mode": None, "base_group": None, "controls": None,
        "wave_dummy": None, "df_adjust": None,
    },
    "output": {"float_digits": None},
}


def _check_keys(doc: dict, schema: dict, path: str = "") -> None:
    for key, value in doc.items():
        if key not in schema:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key {where!r}")
        sub = schema[key]
        if isinstance(sub, dict):
            if value is None:
                continue
            if not isinstance(value, dict):
                where = f"{path}.{key}" if path else key
                raise ConfigError(f"config key {where!r} must be a mapping")
            _check_keys(value, sub, f"{path}.{key}" if path else key)


@dataclass
class RunConfig:
    """Resolved settings for one CLI invocation."""

    seed: int = 0
    output_dir: str = "out"
    threads: int = 1
    data: dict = field(default_factory=dict)
    forest: ForestParams = field(default_factory=ForestParams)
    n_folds: int = 10
    clip: float = 0.01
    search: dict = field(default_factory=lambda: {
        "depth": 2, "split_step": 1, "min_node_size": 1,
        "method": "exact", "hybrid_search_depth": 2})
    simulate: dict = field(default_factory=dict)
    evaluate: dict = field(default_factory=lambda: {
        "w_mode": "letters", "base_group": "nothing", "controls": [],
        "wave_dummy": True, "df_adjust": "CR1"})
    float_digits: int = 10
    raw: dict = field(default_factory=dict)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(doc, _SCHEMA)
    cfg = RunConfig(raw=doc)
    cfg.seed = int(doc.get("seed", cfg.seed))
    cfg.output_dir = str(doc.get("output_dir", cfg.output_dir))
    cfg.threads = int(doc.get("threads", cfg.threads))
    cfg.data = dict(doc.get("data") or {})

    forest = dict(doc.get("forest") or {})
    cfg.forest = ForestParams(
        num_trees=int(forest.get("num_trees", 200)),
        subsample_fraction=float(forest.get("subsample", 0.5)),
        features_per_split=forest.get("features_per_split"),
        min_leaf=int(forest.get("min_leaf", 5)),
        honest=bool(forest.get("honest", True)),
    )
    cfg.n_folds = int((doc.get("cross_fit") or {}).get("k", 10))
    cfg.clip = float((doc.get("propensity") or {}).get("clip", 0.01))
    cfg.search.update(doc.get("search") or {})
    cfg.simulate = dict(doc.get("simulate") or {})
    cfg.evaluate.update(doc.get("evaluate") or {})
    cfg.float_digits = int((doc.get("output") or {}).get("float_digits", 10))
    return cfg


def csv_schema(cfg: RunConfig) -> CsvSchema:
    data = cfg.data
    for key in ("path", "action", "outcome", "cluster"):
        if key not in data:
            raise ConfigError(f"data.{key} is required")
    return CsvSchema(
        action=str(data["action"]),
        outcome=str(data["outcome"]),
        cluster=str(data["cluster"]),
        numeric=tuple(data.get("numeric") or ()),
        categorical=tuple(data.get("categorical") or ()),
        wave=data.get("wave"),
        n_arms=None if data.get("n_arms") is None else int(data["n_arms"]),
    )


def heterogeneity_rules(spec, scale: float = 1.0) -> tuple[HeterogeneityRule, ...]:
    if spec is None or spec == "none":
        return ()
    if spec == "default":
        return default_heterogeneity(scale)
    rules = []
    for item in spec:
        rules.append(HeterogeneityRule(
            feature=str(item["feature"]),
            arm=int(item["arm"]),
            delta=float(item["delta"]),
            lo=item.get("lo"),
            hi=item.get("hi"),
            levels=None if item.get("levels") is None else tuple(item["levels"]),
        ))
    return tuple(rules)


def two_phase_config(cfg: RunConfig) -> TwoPhaseConfig:
    sim = cfg.simulate
    scale = float(sim.get("heterogeneity_scale", 1.0))
    dgp = DgpConfig(
        n=int(sim.get("n", 5145)),
        d_arms=int(sim.get("d_arms", 4)),
        baseline_rate=float(sim.get("baseline_rate", 0.06)),
        arm_effects=tuple(sim.get("arm_effects", (0.0108, 0.0433, 0.0351))),
        heterogeneity=heterogeneity_rules(sim.get("heterogeneity"), scale),
        features=FeatureSpec(),
        cluster_effect_sd=float(sim.get("cluster_effect_sd", 0.01)),
        seed=cfg.seed,
    )
    return TwoPhaseConfig(
        dgp=dgp,
        explore_share=float(sim.get("explore_share", 0.6)),
        b1_share=float(sim.get("b1_share", 0.5)),
        tree_depth=int(sim.get("tree_depth", 3)),
        block_feature=str(sim.get("block_feature", "region")),
        split_step=int(cfg.search.get("split_step", 1)),
        min_node_size=int(cfg.search.get("min_node_size", 1)),
        search_method=str(cfg.search.get("method", "exact")),
        hybrid_search_depth=int(cfg.search.get("hybrid_search_depth", 2)),
        forest=cfg.forest,
        n_folds=cfg.n_folds,
        seed=cfg.seed,
    )


def resolved_config_text(cfg: RunConfig) -> str:
    resolved = {
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "threads": cfg.threads,
        "data": cfg.data,
        "forest": {
            "num_trees": cfg.forest.num_trees,
            "subsample": cfg.forest.subsample_fraction,
            "features_per_split": cfg.forest.features_per_split,
            "min_leaf": cfg.forest.min_leaf,
            "honest": cfg.forest.honest,
        },
        "cross_fit": {"k": cfg.n_folds},
        "propensity": {"clip": cfg.clip},
        "search": cfg.search,
        "simulate": cfg.simulate,
        "evaluate": cfg.evaluate,
        "output": {"float_digits": cfg.float_digits},
    }
    return yaml.safe_dump(resolved, sort_keys=True, default_flow_style=False)
