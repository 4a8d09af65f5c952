"""Pipeline configuration loaded from a single JSON file.

Sections may be given nested (``{"ot": {"tol": 1e-6}}``) or with dotted
keys (``{"ot.tol": 1e-6}``).  Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError
from .graph import default_edges, normalize_edges


@dataclass
class GraphConfig:
    nodes: Optional[int] = None
    edges: Optional[list] = None


@dataclass
class LocalConfig:
    r: int = 1
    d: int = 2
    k: int = 3
    bias_per_tap: bool = False
    normalize_correlation: bool = True
    epsilon: float = 1e-5


@dataclass
class OTConfig:
    eps_reg: float = 0.05
    tau: float = 10.0
    mode: str = "balanced"
    max_iters: int = 2000
    tol: float = 1e-6
    epsilon_norm: float = 1e-8
    normalize_rows: bool = True
    max_grid: list = field(default_factory=lambda: [16, 12])


@dataclass
class LossConfig:
    a_sg: float = 1.0
    a_l1: float = 1.0
    a_perc: float = 1.0
    a_adv: float = 1.0
    eta: float = 2.0


@dataclass
class PercConfig:
    seed: int = 0


@dataclass
class SceneConfig:
    max_shift: float = 2.0
    max_rotation: float = 0.15
    texture_noise: float = 0.08
    noisy_segmentation: float = 0.0


@dataclass
class SelftestConfig:
    warnings_fail: bool = False


@dataclass
class PipelineConfig:
    height: int = 32
    width: int = 24
    regions: int = 8
    channels: int = 16
    foreground_labels: Optional[list] = None
    network_seed: int = 0
    weights_dir: Optional[str] = None
    graph: GraphConfig = field(default_factory=GraphConfig)
    local: LocalConfig = field(default_factory=LocalConfig)
    ot: OTConfig = field(default_factory=OTConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    perc: PercConfig = field(default_factory=PercConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    selftest: SelftestConfig = field(default_factory=SelftestConfig)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        k = self.local.k
        if self.height < k or self.width < k:
            raise ConfigError(f"height/width must be >= k={k}")
        if self.regions < 2:
            raise ConfigError("regions must be >= 2")
        if k < 1 or k % 2 == 0:
            raise ConfigError("local.k must be odd and positive")
        if self.local.r < 0 or self.local.d < 0:
            raise ConfigError("local.r and local.d must be non-negative")
        if self.graph.nodes is not None and self.graph.nodes != self.regions:
            raise ConfigError(f"graph.nodes={self.graph.nodes} differs from regions={self.regions}")
        if self.ot.mode not in ("balanced", "unbalanced"):
            raise ConfigError(f"ot.mode must be 'balanced' or 'unbalanced', got {self.ot.mode!r}")
        if self.ot.eps_reg <= 0 or self.ot.tau <= 0 or self.ot.max_iters < 1:
            raise ConfigError("ot.eps_reg, ot.tau must be > 0 and ot.max_iters >= 1")
        if self.loss.eta < 0:
            raise ConfigError("loss.eta must be >= 0")
        if self.foreground_labels is not None and any(
            not 0 <= int(v) < self.regions for v in self.foreground_labels
        ):
            raise ConfigError("foreground_labels outside [0, regions)")
        try:
            self.edges
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        if self.graph.edges is None:
            return default_edges(self.regions)
        return normalize_edges(self.graph.edges, self.regions)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        return _build(cls, _nest(data), "")

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _nest(data: dict) -> dict:
    out: dict = {}
    for key, value in data.items():
        parts = key.split(".")
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"key {key!r} conflicts with a scalar value")
        if isinstance(value, dict):
            node.setdefault(parts[-1], {}).update(_nest(value))
        else:
            node[parts[-1]] = value
    return out


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"section {prefix.rstrip('.') or '<root>'} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + u for u in unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = known[name].default_factory if known[name].default_factory is not dataclasses.MISSING else None
        if sub is not None and dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, prefix + name + ".")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
