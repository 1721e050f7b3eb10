"""Scenario configuration: YAML files, dotted overrides, validation."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

MODELS = ("filter", "bridge", "bachelier", "binary")
PRIOR_KINDS = ("gaussian", "mixture", "bachelier", "market", "binary")
OUTPUT_ENV = "CONDENSITY_OUT"

INVARIANTS = {
    "filter": ("normalization", "asset_moment", "innovation_start", "martingale", "parity", "euler_mass"),
    "bridge": ("normalization", "innovation_start", "bachelier_match", "equivalence"),
    "bachelier": ("normalization", "bachelier_match", "smile_flat", "transform_lognormal", "parity"),
    "binary": ("price_bounds", "parity", "mc_oracle"),
}


@dataclass
class GridConfig:
    xmin: float = -8.0
    xmax: float = 8.0
    n: int = 2001


@dataclass
class MeshConfig:
    T: float = 1.0
    steps: int = 200
    eps: float | None = None  # defaults to 1e-3 T
    graded: bool = False

    @property
    def eps_T(self) -> float:
        return 1e-3 * self.T if self.eps is None else self.eps


@dataclass
class PriorConfig:
    kind: str = "gaussian"
    mean: float = 0.0
    std: float = 1.0
    components: list | None = None  # [[weight, mean, std], ...]
    path: str | None = None
    maturity: float | None = None


@dataclass
class SeedConfig:
    base: int = 42
    paths: int = 1
    chunk: int = 1000


@dataclass
class OutputConfig:
    dir: str = "runs/out"
    path_files: int = 5
    density_times: list = field(default_factory=list)
    smile: bool = True


@dataclass
class BinaryConfig:
    x1: float = 0.0
    x2: float = 1.0
    q1: float = 0.5
    q2: float = 0.5
    s: float = 0.0
    t: float = 1.0
    V: float | None = None
    width: float = 0.01
    oracle_paths: int = 0


@dataclass
class ScenarioConfig:
    model: str = "filter"
    grid: GridConfig = field(default_factory=GridConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    vol: dict = field(default_factory=lambda: {"kind": "semilinear", "sigma": 1.0})
    prior: PriorConfig = field(default_factory=PriorConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    strikes: list = field(default_factory=list)
    gamma: float = 1.0
    binary: BinaryConfig = field(default_factory=BinaryConfig)
    invariants: list | None = None
    base_dir: str = field(default=".", repr=False)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def resolve(self, p: str) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def output_dir(self, override: str | None = None) -> Path:
        if override:
            return Path(override)
        env = os.environ.get(OUTPUT_ENV)
        if env:
            return Path(env)
        return self.resolve(self.outputs.dir)

    @property
    def invariant_names(self) -> tuple:
        return tuple(self.invariants) if self.invariants is not None else INVARIANTS[self.model]


_SECTIONS = {
    "grid": GridConfig,
    "mesh": MeshConfig,
    "prior": PriorConfig,
    "seeds": SeedConfig,
    "outputs": OutputConfig,
    "binary": BinaryConfig,
}


def _coerce(value, target, path: str):
    if target in ("float", "float | None") and value is not None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path)
        return float(value)
    if target in ("int",):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"expected an integer, got {value!r}", path)
        return value
    if target == "bool" and not isinstance(value, bool):
        raise ConfigError(f"expected true/false, got {value!r}", path)
    if target == "str" and not isinstance(value, str):
        raise ConfigError(f"expected a string, got {value!r}", path)
    return value


def _build(cls, data, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", path)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        if key not in fields or key == "base_dir":
            raise ConfigError("unknown field", sub)
        if key in _SECTIONS and cls is ScenarioConfig:
            kwargs[key] = _build(_SECTIONS[key], value, sub)
        else:
            kwargs[key] = _coerce(value, fields[key].type, sub)
    return cls(**kwargs)


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    """Raise :class:`ConfigError` naming the first offending field."""
    if cfg.model not in MODELS:
        raise ConfigError(f"must be one of {MODELS}", "model")
    g = cfg.grid
    if not g.xmin < g.xmax:
        raise ConfigError("need xmin < xmax", "grid.xmax")
    if g.n < 3:
        raise ConfigError("need at least 3 points", "grid.n")
    m = cfg.mesh
    if not m.T > 0:
        raise ConfigError("must be positive", "mesh.T")
    if m.steps < 1:
        raise ConfigError("must be >= 1", "mesh.steps")
    if not 0 < m.eps_T < m.T:
        raise ConfigError("need 0 < eps < T", "mesh.eps")
    if cfg.seeds.paths < 1:
        raise ConfigError("need at least one path", "seeds.paths")
    if cfg.seeds.chunk < 1:
        raise ConfigError("must be >= 1", "seeds.chunk")
    p = cfg.prior
    if p.kind not in PRIOR_KINDS:
        raise ConfigError(f"must be one of {PRIOR_KINDS}", "prior.kind")
    if p.kind in ("gaussian",) and not p.std > 0:
        raise ConfigError("must be positive", "prior.std")
    if p.kind == "mixture":
        comps = p.components or []
        if not comps:
            raise ConfigError("mixture needs components", "prior.components")
        for i, c in enumerate(comps):
            if not (isinstance(c, (list, tuple)) and len(c) == 3 and c[0] > 0 and c[2] > 0):
                raise ConfigError("each component is [weight > 0, mean, std > 0]", f"prior.components[{i}]")
    if p.kind == "market":
        if not p.path:
            raise ConfigError("market prior needs a CSV path", "prior.path")
        if not cfg.resolve(p.path).is_file():
            raise ConfigError(f"file not found: {p.path}", "prior.path")
    if not isinstance(cfg.vol, dict) or "kind" not in cfg.vol:
        raise ConfigError("needs a 'kind'", "vol.kind")
    if cfg.vol.get("kind") == "table" and "path" in cfg.vol and not cfg.resolve(cfg.vol["path"]).is_file():
        raise ConfigError(f"file not found: {cfg.vol['path']}", "vol.path")
    if cfg.model in ("bridge",) and cfg.vol.get("kind") != "semilinear":
        raise ConfigError("bridge model needs a semilinear structure", "vol.kind")
    if cfg.model == "bachelier" and not cfg.gamma > 0:
        raise ConfigError("must be positive", "gamma")
    for i, k in enumerate(cfg.strikes):
        if isinstance(k, bool) or not isinstance(k, (int, float)):
            raise ConfigError("strikes must be numbers", f"strikes[{i}]")
    for i, t in enumerate(cfg.outputs.density_times):
        if not isinstance(t, (int, float)) or not 0 <= t <= m.T - m.eps_T:
            raise ConfigError("snapshot times must lie in [0, T - eps]", f"outputs.density_times[{i}]")
    b = cfg.binary
    if cfg.model == "binary":
        if not b.x1 < b.x2:
            raise ConfigError("need x1 < x2", "binary.x2")
        if not (b.q1 > 0 and b.q2 > 0 and abs(b.q1 + b.q2 - 1) <= 1e-12):
            raise ConfigError("weights must be positive and sum to 1", "binary.q2")
        if not 0 <= b.s <= b.t:
            raise ConfigError("need 0 <= s <= t", "binary.t")
        if b.V is not None and b.V < 0:
            raise ConfigError("must be nonnegative", "binary.V")
        if not b.width > 0:
            raise ConfigError("must be positive", "binary.width")
    if cfg.invariants is not None:
        allowed = INVARIANTS[cfg.model]
        for i, name in enumerate(cfg.invariants):
            if name not in allowed:
                raise ConfigError(f"unknown invariant for {cfg.model}: {name!r}", f"invariants[{i}]")
    return cfg


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def apply_overrides(data: dict, overrides) -> dict:
    """Set dotted keys (``mesh.steps=400``) in a raw config tree."""
    data = copy.deepcopy(data)
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        parts = key.split(".")
        node = data
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError("cannot set a field inside a scalar", key)
            node = nxt
        node[parts[-1]] = value
    return data


def from_dict(data: dict, base_dir: str = ".") -> ScenarioConfig:
    cfg = _build(ScenarioConfig, data, "")
    cfg.base_dir = str(base_dir)
    return validate(cfg)


def load_config(path, overrides=()) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    return from_dict(apply_overrides(data, overrides), base_dir=path.parent)
