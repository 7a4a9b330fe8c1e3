"""Simulation configuration, validation, JSON round-trip and named presets."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .adversary import DEFAULT_ZETA_GRID, RADIUS_RULES, AttackKind, parse_force
from .aggregation import AggregatorKind
from .errors import ConfigError
from .sampling import SamplerKind

THRESHOLD_MODES = ("apt", "fixed", "conservative")


@dataclass
class SimConfig:
    # system
    n: int = 300
    v: int = 20
    bootstrap_size: int = 30
    rounds: int = 200
    f: float = 0.1
    # adversary
    flood_force: Any = 2
    attack: str = "foe"
    zeta_grid: list = field(default_factory=lambda: list(DEFAULT_ZETA_GRID))
    radius_rule: str = "rank"
    # defence
    sampler: str = "haps"
    aggregator: str = "cs"
    threshold: str = "apt"
    fixed_b: float | None = None
    fixed_b_factor: float | None = None
    kappa: float = 1e-3
    f0: float | None = None
    worst_case_init: bool = False
    seed_interval: int = 1
    seeds_per_refresh: int = 10
    basalt_rho: float = 0.25
    # learning
    train: bool = True
    eta: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    local_steps: int = 1
    dataset: str = "synthetic"
    n_classes: int = 10
    d_in: int = 32
    samples_per_node: int = 60
    separation: float = 0.8
    dirichlet_beta: float = 5.0
    test_fraction: float = 0.2
    idx_images: str | None = None
    idx_labels: str | None = None
    eval_every: int = 1
    eval_samples: int = 1000
    # run
    seed: int = 0
    out: str | None = None

    @property
    def n_byz(self) -> int:
        return int(math.floor(self.f * self.n + 1e-9))

    @property
    def force(self) -> float:
        return parse_force(self.flood_force)

    def threshold_value(self) -> float | None:
        """Static threshold for ``fixed``/``conservative`` modes, ``None`` for APT."""
        if self.threshold == "conservative":
            return float(self.v - 1)
        if self.threshold == "fixed":
            if self.fixed_b is not None:
                return float(self.fixed_b)
            return float(self.fixed_b_factor) * self.f * self.v
        return None

    def validate(self) -> "SimConfig":
        def need(cond, fld, why):
            if not cond:
                raise ConfigError(fld, why)

        for name in ("n", "v", "bootstrap_size", "rounds", "seed_interval", "seeds_per_refresh",
                     "batch_size", "local_steps", "n_classes", "d_in", "samples_per_node", "eval_every", "eval_samples", "seed"):
            val = getattr(self, name)
            need(isinstance(val, int) and not isinstance(val, bool), name, f"must be an integer, got {val!r}")
        need(self.v >= 1, "v", "view size must be >= 1")
        need(self.n >= self.v + 1, "n", f"need n >= v + 1 = {self.v + 1}")
        need(self.bootstrap_size >= 1, "bootstrap_size", "must be >= 1")
        need(self.rounds >= 1, "rounds", "must be >= 1")
        need(0.0 <= self.f < 0.5, "f", "Byzantine fraction must lie in [0, 0.5)")
        try:
            self.force
        except (TypeError, ValueError) as exc:
            raise ConfigError("flood_force", str(exc)) from None
        for fld, enum in (("attack", AttackKind), ("aggregator", AggregatorKind), ("sampler", SamplerKind)):
            val = getattr(self, fld)
            need(val in {e.value for e in enum}, fld, f"expected one of {[e.value for e in enum]}, got {val!r}")
        need(self.radius_rule in RADIUS_RULES, "radius_rule", f"expected one of {RADIUS_RULES}")
        need(self.threshold in THRESHOLD_MODES, "threshold", f"expected one of {THRESHOLD_MODES}")
        if self.threshold == "fixed":
            need(self.fixed_b is not None or self.fixed_b_factor is not None, "fixed_b",
                 "fixed threshold mode needs fixed_b or fixed_b_factor")
            need(self.threshold_value() >= 0, "fixed_b", "must be >= 0")
        need(0.0 < self.kappa < 1.0, "kappa", "must lie in (0, 1)")
        need(self.f0 is None or 0.0 <= self.f0 < 1.0, "f0", "must lie in [0, 1)")
        need(0 <= self.seeds_per_refresh <= self.v, "seeds_per_refresh", "must lie in [0, v]")
        need(self.seed_interval >= 1, "seed_interval", "must be >= 1")
        need(0.0 < self.basalt_rho <= 1.0, "basalt_rho", "must lie in (0, 1]")
        need(len(self.zeta_grid) > 0 and all(z >= 0 for z in self.zeta_grid), "zeta_grid",
             "must be a non-empty list of non-negative numbers")
        need(self.eta >= 0, "eta", "must be >= 0")
        need(0.0 <= self.momentum < 1.0, "momentum", "must lie in [0, 1)")
        need(self.dataset in ("synthetic", "idx"), "dataset", "expected 'synthetic' or 'idx'")
        if self.dataset == "idx":
            need(bool(self.idx_images) and bool(self.idx_labels), "idx_images", "idx dataset needs both file paths")
        need(self.eval_samples >= 0, "eval_samples", "must be >= 0 (0 keeps the whole test split)")
        need(self.dirichlet_beta > 0, "dirichlet_beta", "must be > 0")
        need(0.0 < self.test_fraction < 1.0, "test_fraction", "must lie in (0, 1)")
        need(self.separation > 0, "separation", "must be > 0")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if isinstance(d["flood_force"], float) and math.isinf(d["flood_force"]):
            d["flood_force"] = "inf"
        return d

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        return cls(**data)


def read_config_dict(path) -> dict:
    """Raw key/value mapping of a JSON config file (keys checked, values not yet validated)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config", "top-level JSON value must be an object")
    known = {f.name for f in dataclasses.fields(SimConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    return data


def load_config(path) -> SimConfig:
    return SimConfig.from_dict(read_config_dict(path))


def coerce_value(key: str, text: str):
    """Parse a ``--set key=value`` string using the field's default type as a hint."""
    fields = {f.name: f for f in dataclasses.fields(SimConfig)}
    if key not in fields:
        raise ConfigError(key, "unknown configuration key")
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _preset_table() -> dict[str, dict]:
    table: dict[str, dict] = {}
    for attack in ("foe", "alie"):
        for tag, f in (("f01", 0.1), ("f03", 0.3)):
            base = dict(n=300, v=20, f=f, flood_force=2, attack=attack, rounds=200)
            for isz in (30, 60):
                suffix = "" if isz == 30 else "-i60"
                table[f"rq1-{attack}-{tag}{suffix}"] = dict(base, bootstrap_size=isz, sampler="haps",
                                                            aggregator="cs", threshold="apt")
                for k in (4, 6):
                    table[f"basalt-b{k}-{attack}-{tag}{suffix}"] = dict(
                        base, bootstrap_size=isz, sampler="basalt", aggregator="cs",
                        threshold="fixed", fixed_b_factor=float(k))
                table[f"basalt-conservative-{attack}-{tag}{suffix}"] = dict(
                    base, bootstrap_size=isz, sampler="basalt", aggregator="cs", threshold="conservative")
                for agg in ("gts", "cwtm"):
                    table[f"rq3-{agg}-{attack}-{tag}{suffix}"] = dict(base, bootstrap_size=isz, sampler="haps",
                                                                      aggregator=agg, threshold="apt")
    for name, force in (("1", 1), ("2", 2), ("inf", "inf")):
        table[f"rq4-flood-f{name}"] = dict(n=300, v=20, f=0.1, flood_force=force, attack="none",
                                           aggregator="plain", sampler="haps", rounds=100, train=False)
    for k in (2, 4, 6):
        table[f"rq5-fixed-b{k}"] = dict(n=300, v=20, f=0.1, flood_force=2, attack="foe", aggregator="cs",
                                        sampler="haps", threshold="fixed", fixed_b_factor=float(k))
    for sampler in ("haps", "basalt"):
        for tag, f in (("f01", 0.1), ("f03", 0.3)):
            table[f"rq6-hssr-{sampler}-{tag}"] = dict(n=300, v=20, f=f, flood_force=2, attack="foe",
                                                      aggregator="cs", sampler=sampler,
                                                      threshold="apt" if sampler == "haps" else "conservative")
    return table


PRESETS = _preset_table()


def preset(name: str) -> dict:
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise ConfigError("preset", f"unknown preset {name!r}") from None
