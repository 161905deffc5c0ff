"""Experiment configuration: flat-sectioned key=value files.

Sections and keys (defaults in parentheses):

  [model]       kind = psychometric | linear-gaussian | twenty-questions
                lower (0), upper (100), grid_cells (1024), candidates (512)
                sigma (1.0), features ("1,0; 0,1; 1,1"), quadrature_nodes (32)
                m (16)
  [cost]        kind = constant | outcome-linear | tiered  (constant)
                base (1.0), penalty (3.0), tier_costs ("1,2")
  [strategy]    kind = greedy-info | myopic-gain-per-cost | offline-uniform |
                       fixed-x | random-uniform   (greedy-info)
                fixed_x
  [run]         theta0 = number | comma vector | "prior"
                trials XOR budget, replicates (1), seed (0),
                prior = uniform | density expression in theta (uniform)
  [diagnostics] eps (0.15), tail_fraction (0.5), threshold (0.95),
                local_radius (5.0)
  [output]      dir, quiet (false)

Exactly one stopping rule must be set: trials >= 1 or budget > 0.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from dataclasses import fields as dataclass_fields
from typing import Optional

import numpy as np

from .errors import ValidationError
from .strategies import STRATEGY_KINDS

MODEL_KINDS = ("psychometric", "linear-gaussian", "twenty-questions")
COST_KINDS = ("constant", "outcome-linear", "tiered")


@dataclass
class ModelSpec:
    kind: str = "psychometric"
    lower: float = 0.0
    upper: float = 100.0
    grid_cells: int = 1024
    candidates: int = 512
    sigma: float = 1.0
    features: str = "1,0; 0,1; 1,1"
    quadrature_nodes: int = 32
    m: int = 16

    def feature_matrix(self) -> np.ndarray:
        rows = [r for r in self.features.split(";") if r.strip()]
        return np.array([[float(v) for v in r.split(",")] for r in rows])


@dataclass
class CostSpec:
    kind: str = "constant"
    base: float = 1.0
    penalty: float = 3.0
    tier_costs: str = "1,2"

    def tiers(self) -> list[float]:
        return [float(v) for v in self.tier_costs.split(",")]


@dataclass
class StrategySpec:
    kind: str = "greedy-info"
    fixed_x: Optional[float] = None


@dataclass
class RunSpec:
    theta0: str = "50"
    trials: int = 0
    budget: float = 0.0
    replicates: int = 1
    seed: int = 0
    prior: str = "uniform"


@dataclass
class DiagnosticsSpec:
    eps: float = 0.15
    tail_fraction: float = 0.5
    threshold: float = 0.95
    local_radius: float = 5.0


@dataclass
class OutputSpec:
    dir: Optional[str] = None
    quiet: bool = False


@dataclass
class ExperimentConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    cost: CostSpec = field(default_factory=CostSpec)
    strategy: StrategySpec = field(default_factory=StrategySpec)
    run: RunSpec = field(default_factory=RunSpec)
    diagnostics: DiagnosticsSpec = field(default_factory=DiagnosticsSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    def theta0_value(self) -> Optional[np.ndarray]:
        """Parsed true parameter, or None when it is drawn from the prior."""
        raw = self.run.theta0.strip()
        if raw == "prior":
            return None
        try:
            return np.array([float(v) for v in raw.split(",")])
        except ValueError:
            raise ValidationError("run.theta0", f"cannot parse {raw!r}")

    def validate(self) -> "ExperimentConfig":
        m, r = self.model, self.run
        if m.kind not in MODEL_KINDS:
            raise ValidationError("model.kind", f"unknown model {m.kind!r}")
        if self.cost.kind not in COST_KINDS:
            raise ValidationError("cost.kind", f"unknown cost {self.cost.kind!r}")
        if self.strategy.kind not in STRATEGY_KINDS:
            raise ValidationError("strategy.kind", f"unknown strategy {self.strategy.kind!r}")
        if m.grid_cells < 2:
            raise ValidationError("model.grid_cells", "need at least 2 cells")
        if m.candidates < 2:
            raise ValidationError("model.candidates", "need at least 2 candidates")
        if m.kind == "psychometric" and not m.lower < m.upper:
            raise ValidationError("model.bounds", "need lower < upper")
        has_trials = r.trials >= 1
        has_budget = r.budget > 0
        if has_trials == has_budget:
            raise ValidationError("run.trials", "set exactly one of trials >= 1 or budget > 0")
        if r.replicates < 1:
            raise ValidationError("run.replicates", "need at least one replicate")
        theta0 = self.theta0_value()
        if theta0 is not None:
            lo, hi = self._param_box()
            if theta0.shape != lo.shape:
                raise ValidationError("run.theta0", f"expected {lo.shape[0]} components")
            if np.any(theta0 < lo) or np.any(theta0 > hi):
                raise ValidationError("run.theta0", f"{theta0.tolist()} outside bounds "
                                                    f"[{lo.tolist()}, {hi.tolist()}]")
        if self.strategy.kind == "fixed-x" and self.strategy.fixed_x is None:
            raise ValidationError("strategy.fixed_x", "fixed-x strategy needs a placement")
        if self.cost.kind == "outcome-linear" and m.kind == "linear-gaussian":
            raise ValidationError("cost.kind", "outcome-linear costs need a binary outcome model")
        if self.cost.kind == "tiered" and m.kind != "twenty-questions":
            raise ValidationError("cost.kind", "tiered costs are defined for twenty-questions")
        if not 0 < self.diagnostics.tail_fraction <= 1:
            raise ValidationError("diagnostics.tail_fraction", "must be in (0, 1]")
        return self

    def _param_box(self):
        m = self.model
        if m.kind == "psychometric":
            return np.array([m.lower]), np.array([m.upper])
        if m.kind == "twenty-questions":
            return np.array([1.0]), np.array([float(2**m.m)])
        feats = m.feature_matrix()
        n = feats.shape[1]
        return np.full(n, -1.0), np.full(n, 1.0)


_SECTION_TYPES = {
    "model": ModelSpec,
    "cost": CostSpec,
    "strategy": StrategySpec,
    "run": RunSpec,
    "diagnostics": DiagnosticsSpec,
    "output": OutputSpec,
}


def _coerce(raw, type_str: str):
    if "bool" in type_str:
        if isinstance(raw, bool):
            return raw
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    if "int" in type_str:
        return int(raw)
    if "float" in type_str:
        return float(raw)
    return str(raw)


def config_from_dict(sections: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for section, values in sections.items():
        if section not in _SECTION_TYPES:
            raise ValidationError(section, "unknown configuration section")
        spec = getattr(cfg, section)
        types = {f.name: str(f.type) for f in dataclass_fields(spec)}
        for key, raw in values.items():
            if key not in types:
                raise ValidationError(f"{section}.{key}", "unknown configuration key")
            try:
                setattr(spec, key, _coerce(raw, types[key]))
            except ValueError:
                raise ValidationError(f"{section}.{key}", f"cannot parse {raw!r}")
    return cfg


def read_config(path: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ValidationError("config", f"cannot read {path}")
    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    return config_from_dict(sections)
