"""Pipeline configuration and the flat ``section.key = value`` config file format.

Example file::

    # comments start with '#'
    cmaes.sigma0 = 0.5
    cmaes.max_generations = 60
    environment.stratify = true
    latent.mute = true
    topology.hidden = 45, 15, 6
"""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class TopologyConfig:
    hidden: tuple[int, ...] = (45, 15, 6)


@dataclass
class CmaesConfig:
    sigma0: float = 0.5
    popsize: int | None = None
    seed: int = 0
    max_generations: int = 100
    target_fitness: float | None = None
    tol_fun: float = 0.0
    sigma_floor: float = 1e-12


@dataclass
class EnvironmentConfig:
    capacity_periods: int = 4
    batch_size: int = 512
    new_fraction: float = 0.5
    stratify: bool = False


@dataclass
class EvaluatorConfig:
    psi_warn: float = 0.1
    psi_recalibrate: float = 0.25
    accuracy_drop: float = 0.10
    f1_drop: float = 0.10
    bin_count: int = 10
    w_acc: float = 0.5
    w_f1: float = 0.5
    threshold: float = 0.5
    eps: float = 1e-15
    snapshot_rows: int = 5000
    eval_rows: int = 20000


@dataclass
class LatentConfig:
    latent_dim: int | None = None
    rbm_hidden: int | None = None
    rbm_epochs: int = 30
    rbm_lr: float = 0.1
    mute: bool = False


@dataclass
class RecalibrationConfig:
    max_generations: int = 80
    # None means 0.3 * cmaes.sigma0
    sigma_restart: float | None = None
    refit_encoders: bool = True


@dataclass
class IngestConfig:
    label: str | None = None
    timestamp: str | None = None
    discrete: tuple[str, ...] = ()


@dataclass
class RuntimeConfig:
    workers: int | None = None


@dataclass
class RelmConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    cmaes: CmaesConfig = field(default_factory=CmaesConfig)
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    evaluator: EvaluatorConfig = field(default_factory=EvaluatorConfig)
    latent: LatentConfig = field(default_factory=LatentConfig)
    recalibration: RecalibrationConfig = field(default_factory=RecalibrationConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)

    @property
    def sigma_restart(self) -> float:
        r = self.recalibration.sigma_restart
        return 0.3 * self.cmaes.sigma0 if r is None else r

    def set(self, key: str, value: str) -> None:
        """Assign ``section.name`` from its string form, coercing to the field type."""
        section, _, name = key.partition(".")
        sub = getattr(self, section, None) if name else None
        if sub is None or not dataclasses.is_dataclass(sub):
            raise ConfigError(f"unknown config key {key!r}")
        hints = typing.get_type_hints(type(sub))
        if name not in hints:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            setattr(sub, name, _coerce(value.strip(), hints[name]))
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None

    def items(self):
        for f in dataclasses.fields(self):
            sub = getattr(self, f.name)
            for g in dataclasses.fields(sub):
                yield f"{f.name}.{g.name}", getattr(sub, g.name)

    def to_text(self) -> str:
        def fmt(v):
            if v is None:
                return "none"
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, tuple):
                return ", ".join(str(x) for x in v)
            return str(v)
        return "".join(f"{k} = {fmt(v)}\n" for k, v in self.items())


def _coerce(text: str, tp):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if text.lower() in ("none", "null", ""):
            return None
        return _coerce(text, args[0])
    if origin is tuple:
        inner = typing.get_args(tp)[0]
        return tuple(_coerce(p.strip(), inner) for p in text.split(",") if p.strip())
    if tp is bool:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if tp is int:
        return int(text)
    if tp is float:
        return float(text)
    return text


def parse_config(text: str, base: RelmConfig | None = None) -> RelmConfig:
    cfg = base or RelmConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        cfg.set(key.strip(), value)
    return cfg


def load_config(path=None, overrides: dict[str, str] | None = None) -> RelmConfig:
    cfg = RelmConfig()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parse_config(path.read_text(encoding="utf-8"), cfg)
    for k, v in (overrides or {}).items():
        cfg.set(k, v)
    return cfg
