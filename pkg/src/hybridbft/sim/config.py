"""Scenario configuration: YAML sections ``system``, ``network``, ``workload``, ``faults``, ``run``."""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .faults import FaultPlan, FaultSpec
from .network import NetworkConfig
from .workload import WorkloadSpec


class ConfigError(ValueError):
    pass


@dataclass
class SystemConfig:
    n: int = 4
    f: int | None = None  # default floor((n - 1) / 3)
    m: int | None = None  # default n
    engine: str = "pbft_like"
    mode: str = "orthrus"
    batch_size: int = 64
    batch_timeout_ms: float = 50.0
    view_change_timeout_s: float = 10.0
    epoch_length: int = 16
    censorship_window: int | None = None  # instance sns; default two epochs
    client_fanout: int | None = None  # default f + 1

    def resolve(self) -> None:
        if self.f is None:
            self.f = (self.n - 1) // 3
        if self.m is None:
            self.m = self.n
        if self.censorship_window is None:
            self.censorship_window = 2 * self.epoch_length
        if self.client_fanout is None:
            self.client_fanout = self.f + 1


@dataclass
class RunConfig:
    seed: int = 1
    horizon_s: float = 120.0
    trace: bool = False
    bucket_s: float = 0.5
    track_states: bool = True


@dataclass
class ScenarioConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    faults: FaultPlan = field(default_factory=FaultPlan)
    run: RunConfig = field(default_factory=RunConfig)

    def validate(self) -> "ScenarioConfig":
        s = self.system
        s.resolve()
        if s.n < 1 or s.m < 1:
            raise ConfigError("system.n and system.m must be >= 1")
        if s.n < 3 * s.f + 1:
            raise ConfigError(f"n={s.n} must be at least 3f+1 with f={s.f}")
        if s.m > s.n:
            raise ConfigError("system.m cannot exceed n (one leader per instance)")
        if s.engine not in ("ideal", "pbft_like"):
            raise ConfigError(f"unknown engine {s.engine!r}")
        if s.mode not in ("orthrus", "global_all"):
            raise ConfigError(f"unknown mode {s.mode!r}")
        if s.batch_size < 1 or s.epoch_length < 1 or s.batch_timeout_ms <= 0:
            raise ConfigError("batch_size, epoch_length and batch_timeout_ms must be positive")
        if not s.f + 1 <= s.client_fanout <= s.n:
            raise ConfigError(f"client_fanout must be in [f+1, n] = [{s.f + 1}, {s.n}]")
        try:
            self.network.validate()
            self.workload.validate()
            self.faults.validate(s.n, s.f)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for k in self.network.stragglers:
            if not 0 <= int(k) < s.n:
                raise ConfigError(f"straggler {k} outside [0, {s.n})")
        # a view change must not fire on an honest leader that is merely slow
        worst_round_ms = 3 * (self.network.delta_ms + self.network.pre_gst_extra_ms) + s.batch_timeout_ms
        if s.view_change_timeout_s * 1000.0 <= worst_round_ms:
            raise ConfigError(
                f"view_change_timeout_s={s.view_change_timeout_s} must exceed {worst_round_ms / 1000:.3f} s")
        if self.run.horizon_s <= 0 or self.run.bucket_s <= 0:
            raise ConfigError("run.horizon_s and run.bucket_s must be positive")
        return self

    def to_dict(self) -> dict:
        out = {
            "system": dataclasses.asdict(self.system),
            "network": dataclasses.asdict(self.network),
            "workload": dataclasses.asdict(self.workload),
            "faults": [f.to_dict() for f in self.faults.faults],
            "run": dataclasses.asdict(self.run),
        }
        out["network"]["stragglers"] = {int(k): v for k, v in self.network.stragglers.items()}
        return out

    def copy(self) -> "ScenarioConfig":
        return copy.deepcopy(self)


_SECTIONS = {"system": SystemConfig, "network": NetworkConfig, "workload": WorkloadSpec, "run": RunConfig}


def _build(cls, data: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(unknown)}")
    return cls(**data)


def from_dict(data: dict | None) -> ScenarioConfig:
    data = dict(data or {})
    unknown = sorted(set(data) - set(_SECTIONS) - {"faults"})
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
    kw = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a mapping")
        section = dict(section)
        if name == "network" and section.get("preset") == "lan":
            kw[name] = _lan(section)
            continue
        if name == "network" and "stragglers" in section:
            section["stragglers"] = {int(k): float(v) for k, v in (section["stragglers"] or {}).items()}
        kw[name] = _build(cls, section, name)
    try:
        kw["faults"] = FaultPlan.from_list(data.get("faults") or [])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad fault entry: {exc}") from exc
    return ScenarioConfig(**kw)


def _lan(section: dict) -> NetworkConfig:
    section = dict(section)
    section.pop("preset", None)
    if "stragglers" in section:
        section["stragglers"] = {int(k): float(v) for k, v in (section["stragglers"] or {}).items()}
    names = {f.name for f in dataclasses.fields(NetworkConfig)}
    unknown = sorted(set(section) - names)
    if unknown:
        raise ConfigError(f"unknown keys in [network]: {', '.join(unknown)}")
    return NetworkConfig.lan(**section)


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(data)


def _coerce(current, text: str):
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value {text!r}") from exc
    if isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if current is not None and not isinstance(value, type(current)):
        raise ConfigError(f"expected {type(current).__name__}, got {text!r}")
    return value


def resolve_key(cfg: ScenarioConfig, key: str) -> tuple:
    """``section.field`` or a bare field name that is unique across sections."""
    if key == "straggler_factor":
        return ("network", "straggler_factor")
    if "." in key:
        section, name = key.split(".", 1)
        if section not in _SECTIONS or name not in {f.name for f in dataclasses.fields(_SECTIONS[section])}:
            raise ConfigError(f"unknown config key {key!r}")
        return section, name
    hits = [s for s, cls in _SECTIONS.items() if key in {f.name for f in dataclasses.fields(cls)}]
    if len(hits) != 1:
        raise ConfigError(f"config key {key!r} is {'ambiguous' if hits else 'unknown'}")
    return hits[0], key


def apply_override(cfg: ScenarioConfig, key: str, text: str) -> ScenarioConfig:
    """Set one key from its string form.

    ``straggler_factor=F`` is a shorthand that makes replica 0 a straggler
    with factor F (F = 1 removes it).
    """
    section, name = resolve_key(cfg, key)
    if name == "straggler_factor":
        factor = float(text)
        cfg.network.stragglers = {} if factor == 1.0 else {0: factor}
        return cfg
    obj = getattr(cfg, section)
    current = getattr(obj, name)
    setattr(obj, name, _coerce(current, text))
    if section == "system" and name == "n":
        # derived sizes follow n unless they were pinned elsewhere
        cfg.system.f = None
        cfg.system.m = None
        cfg.system.client_fanout = None
    return cfg
