"""Run configuration: a nested YAML document, validated at parse time.

Schema (all sections optional; defaults are the desk-scale CME setup)::

    model:
      schwinger: {nqubits: 8, omega: 1.0, m: 0.5, mu5: 0.2}
      # or
      file: path/to/hamiltonian.txt
      observable: path/to/observable.txt   # required with `file`
    grid: {T: 3.0, nT: 10, nS: 10000, ed_factor: 10}
    noise: {p_dep: 0.1, eta: 0.9, seed: 1}
    mitigation:
      r: [0, 1, 2, 3]        # int or list
      zmode: next            # next | full
      M: 10000
      M_T: 2500
      M_S: 30
      dlambda: 1.0
      proposal_scale: 0.02   # null: the shot spacing 2/nS
      seed: 1
      random_order: false
    metrics: {tmax: 1.2}
    hierarchy: {partition: true}
    outputs: {directory: runs/default}
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .mitigation import AnnealSchedule, ScheduleError
from .pipeline import PRESET_P_DEP, PRESET_PROPOSAL_SCALE


class ConfigError(ValueError):
    pass


@dataclass
class SchwingerModel:
    nqubits: int = 8
    omega: float = 1.0
    m: float = 0.5
    mu5: float = 0.2


@dataclass
class ModelConfig:
    schwinger: SchwingerModel | None = field(default_factory=SchwingerModel)
    file: str | None = None
    observable: str | None = None


@dataclass
class GridConfig:
    T: float = 3.0
    nT: int = 10
    nS: int = 10_000
    ed_factor: int = 10


@dataclass
class NoiseConfig:
    p_dep: float = PRESET_P_DEP
    eta: float = 0.9
    seed: int = 1


@dataclass
class MitigationConfig:
    r: list[int] = field(default_factory=lambda: [0, 1, 2, 3])
    zmode: str = "next"
    M: int = 10_000
    M_T: int = 2_500
    M_S: int = 30
    dlambda: float = 1.0
    proposal_scale: float | None = PRESET_PROPOSAL_SCALE
    seed: int = 1
    random_order: bool = False

    def schedule(self) -> AnnealSchedule:
        return AnnealSchedule(
            self.M, self.M_T, self.M_S, self.dlambda, self.proposal_scale, self.seed, self.random_order
        )


@dataclass
class MetricsConfig:
    tmax: float = 1.2


@dataclass
class HierarchyConfig:
    partition: bool = True


@dataclass
class OutputConfig:
    directory: str = "runs/default"


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    mitigation: MitigationConfig = field(default_factory=MitigationConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    hierarchy: HierarchyConfig = field(default_factory=HierarchyConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.model.schwinger is None:
            d["model"].pop("schwinger")
        else:
            d["model"].pop("file")
            d["model"].pop("observable")
        return d

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        data = dict(data or {})
        # a run manifest embeds its config; accept one directly for re-execution
        if "config" in data and "software" in data:
            data = data["config"]
        _reject_unknown(data, cls, "")
        model = dict(data.get("model") or {})
        _reject_unknown(model, ModelConfig, "model.")
        if "file" in model:
            if "schwinger" in model:
                raise ConfigError("model: give either `schwinger` or `file`, not both")
            if not model.get("observable"):
                raise ConfigError("model.file needs model.observable (the Q_0 strings)")
            mc = ModelConfig(None, str(model["file"]), str(model["observable"]))
        else:
            mc = ModelConfig(_section(model.get("schwinger"), SchwingerModel, "model.schwinger."))
        mit = dict(data.get("mitigation") or {})
        if "r" in mit:
            r = mit["r"]
            mit["r"] = [r] if isinstance(r, int) else list(r)
        cfg = cls(
            mc,
            _section(data.get("grid"), GridConfig, "grid."),
            _section(data.get("noise"), NoiseConfig, "noise."),
            _section(mit, MitigationConfig, "mitigation."),
            _section(data.get("metrics"), MetricsConfig, "metrics."),
            _section(data.get("hierarchy"), HierarchyConfig, "hierarchy."),
            _section(data.get("outputs"), OutputConfig, "outputs."),
        )
        cfg.validate()
        return cfg

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from None
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        text = p.read_text()
        if p.suffix == ".json":
            import json

            try:
                return cls.from_dict(json.loads(text))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON: {exc}") from None
        return cls.parse(text)

    def validate(self) -> None:
        s = self.model.schwinger
        if s is not None:
            if s.nqubits < 4 or s.nqubits % 2:
                raise ConfigError("model.schwinger.nqubits must be even and >= 4")
            if s.omega <= 0 or s.m < 0:
                raise ConfigError("model.schwinger needs omega > 0 and m >= 0")
        g = self.grid
        if g.T <= 0 or g.nT < 2 or g.nS < 1 or g.ed_factor < 1:
            raise ConfigError("grid needs T > 0, nT >= 2, nS >= 1, ed_factor >= 1")
        n = self.noise
        if not (0 <= n.p_dep <= 1 and 0 <= n.eta <= 1):
            raise ConfigError("noise.p_dep and noise.eta must lie in [0, 1]")
        m = self.mitigation
        if not m.r or any(r < 0 for r in m.r):
            raise ConfigError("mitigation.r must be non-negative")
        if m.zmode not in ("next", "full"):
            raise ConfigError("mitigation.zmode must be `next` or `full`")
        try:
            m.schedule()
        except ScheduleError as exc:
            raise ConfigError(f"mitigation: {exc}") from None
        if self.metrics.tmax <= 0:
            raise ConfigError("metrics.tmax must be positive")


def _reject_unknown(data: dict, cls, prefix: str) -> None:
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown key(s): {', '.join(prefix + k for k in sorted(extra))}")


def _section(data: Any, cls, prefix: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix.rstrip('.')} must be a mapping")
    _reject_unknown(data, cls, prefix)
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        v = data[f.name]
        kwargs[f.name] = _coerce(v, f.type, prefix + f.name)
    return cls(**kwargs)


def _coerce(v, typ: str, where: str):
    # annotations are strings under `from __future__ import annotations`
    optional = "None" in typ
    if v is None:
        if optional:
            return None
        raise ConfigError(f"{where} must not be null")
    base = typ.replace(" | None", "")
    try:
        if base == "int":
            if isinstance(v, bool) or float(v) != int(v):
                raise ValueError
            return int(v)
        if base == "float":
            if isinstance(v, bool):
                raise ValueError
            return float(v)
        if base == "bool":
            if not isinstance(v, bool):
                raise ValueError
            return v
        if base == "str":
            return str(v)
        if base == "list[int]":
            return [_coerce(x, "int", where) for x in v]
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected {base}, got {v!r}") from None
    return v
