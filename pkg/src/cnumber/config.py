"""Declarative run configuration (YAML) with schema validation and defaults."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import yaml

from .model import ModelError, ModelSpec, make_model
from .verify import Numerics

CHECKS = ("sandwich", "shift", "maxz", "peak", "pressure_collapse", "condensate",
          "concentration", "multimode")
FAMILY_CHECKS = ("pressure_collapse", "condensate", "concentration")
FORMATS = ("rows", "document")


class ConfigError(ValueError):
    """Schema violation; the message starts with the dotted path of the field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class ModelBlock:
    dimension: int = 1
    box_length: float | None = 4.0
    box_lengths: tuple[float, ...] | None = None
    modes: tuple[tuple[int, ...], ...] = ((-1,), (0,), (1,))
    g: float = 1.0
    sigma: float = 0.5
    nu: tuple[tuple[tuple[int, ...], complex], ...] | None = None
    phi: float | None = None

    @property
    def lengths(self) -> tuple[float, ...]:
        return self.box_lengths if self.box_lengths else (self.box_length,)

    def build(self, box_length: float) -> ModelSpec:
        nu = dict(self.nu) if self.nu is not None else None
        return make_model(box_length, self.modes, self.g, self.sigma, self.phi, nu)

    def family(self) -> list[ModelSpec]:
        return [self.build(L) for L in self.lengths]


@dataclass(frozen=True)
class EnsembleBlock:
    beta: tuple[float, ...] = (1.0,)
    mu: tuple[float, ...] = (-0.5,)
    lam: tuple[float, ...] = (0.0,)


@dataclass(frozen=True)
class NumericsBlock:
    caps: tuple[int, ...] = (10, 24, 10)
    cap_scaling: str = "linear"
    n_radial: int = 48
    n_angular: int = 32
    radius_sq: float | None = None
    zmax_sigmas: float = 12.0
    log_drop: float = 23.0
    fd_step: float | None = None
    dim_limit: int = 20000
    n_scan: int = 241
    multimode_radial: int = 32
    multimode_angular: int = 16

    def numerics(self) -> Numerics:
        return Numerics(self.n_radial, self.n_angular, self.radius_sq, self.fd_step, self.n_scan,
                        self.multimode_radial, self.multimode_angular, self.zmax_sigmas,
                        self.log_drop)


@dataclass(frozen=True)
class SuiteBlock:
    checks: tuple[str, ...] = ("sandwich", "shift", "maxz", "peak")
    multimode_modes: tuple[tuple[int, ...], ...] = ((0,), (1,))
    ratio_limit: float = 0.25


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "out"
    formats: tuple[str, ...] = FORMATS


@dataclass(frozen=True)
class RunConfig:
    model: ModelBlock = field(default_factory=ModelBlock)
    ensemble: EnsembleBlock = field(default_factory=EnsembleBlock)
    numerics: NumericsBlock = field(default_factory=NumericsBlock)
    suite: SuiteBlock = field(default_factory=SuiteBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _plain(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


# -- field coercion ----------------------------------------------------------

def _num(path, v, kind=float, positive=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if kind is int and float(v) != int(v):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    v = kind(v)
    if positive and not v > 0:
        raise ConfigError(path, f"must be positive, got {v}")
    return v


def _list(path, v, item, min_len=1):
    if not isinstance(v, (list, tuple)):
        v = [v]
    if len(v) < min_len:
        raise ConfigError(path, f"needs at least {min_len} entries")
    return tuple(item(f"{path}[{i}]", x) for i, x in enumerate(v))


def _intvec(path, v):
    if isinstance(v, int) and not isinstance(v, bool):
        v = [v]
    return _list(path, v, lambda p, x: _num(p, x, int))


def _complex(path, v):
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(_num(f"{path}[0]", v[0]), _num(f"{path}[1]", v[1]))
    return complex(_num(path, v))


def _label(path, key):
    """'1', '-1' or '1,0' (or an int) -> integer tuple."""
    if isinstance(key, int) and not isinstance(key, bool):
        return (key,)
    try:
        return tuple(int(s) for s in str(key).split(","))
    except ValueError:
        raise ConfigError(path, f"bad momentum label {key!r}") from None


def _choice(path, v, options):
    if v not in options:
        raise ConfigError(path, f"{v!r} not one of {list(options)}")
    return v


def _block(path: str, raw: Any, cls, coercers: dict) -> Any:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected a mapping")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", f"unknown key (allowed: {sorted(names)})")
    kwargs = {k: coercers[k](f"{path}.{k}", v) for k, v in raw.items()}
    return cls(**kwargs)


def _nu_table(path, raw):
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected a mapping label -> value")
    return tuple(sorted((_label(f"{path}.{k}", k), _complex(f"{path}.{k}", v))
                        for k, v in raw.items()))


_MODEL = {
    "dimension": lambda p, v: _num(p, v, int, positive=True),
    "box_length": lambda p, v: _num(p, v, positive=True, allow_none=True),
    "box_lengths": lambda p, v: None if v is None else _list(
        p, v, lambda q, x: _num(q, x, positive=True)),
    "modes": lambda p, v: _list(p, v, _intvec),
    "g": lambda p, v: _num(p, v),
    "sigma": lambda p, v: _num(p, v),
    "nu": _nu_table,
    "phi": lambda p, v: _num(p, v, allow_none=True),
}
_ENSEMBLE = {
    "beta": lambda p, v: _list(p, v, lambda q, x: _num(q, x, positive=True)),
    "mu": lambda p, v: _list(p, v, _num),
    "lam": lambda p, v: _list(p, v, _num),
}
_NUMERICS = {
    "caps": lambda p, v: _list(p, v, lambda q, x: _num(q, x, int)),
    "cap_scaling": lambda p, v: _choice(p, v, ("linear", "zero", "fixed")),
    "n_radial": lambda p, v: _num(p, v, int, positive=True),
    "n_angular": lambda p, v: _num(p, v, int, positive=True),
    "radius_sq": lambda p, v: _num(p, v, positive=True, allow_none=True),
    "zmax_sigmas": lambda p, v: _num(p, v, positive=True),
    "log_drop": lambda p, v: _num(p, v, positive=True),
    "fd_step": lambda p, v: _num(p, v, positive=True, allow_none=True),
    "dim_limit": lambda p, v: _num(p, v, int, positive=True),
    "n_scan": lambda p, v: _num(p, v, int, positive=True),
    "multimode_radial": lambda p, v: _num(p, v, int, positive=True),
    "multimode_angular": lambda p, v: _num(p, v, int, positive=True),
}
_SUITE = {
    "checks": lambda p, v: _list(p, v, lambda q, x: _choice(q, x, CHECKS)),
    "multimode_modes": lambda p, v: _list(p, v, _intvec),
    "ratio_limit": lambda p, v: _num(p, v, positive=True),
}
_OUTPUT = {
    "directory": lambda p, v: str(v),
    "formats": lambda p, v: _list(p, v, lambda q, x: _choice(q, x, FORMATS)),
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML run configuration."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<document>", f"not valid YAML: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<document>", "top level must be a mapping")
    top = {"model": (ModelBlock, _MODEL), "ensemble": (EnsembleBlock, _ENSEMBLE),
           "numerics": (NumericsBlock, _NUMERICS), "suite": (SuiteBlock, _SUITE),
           "output": (OutputBlock, _OUTPUT)}
    unknown = sorted(set(raw) - set(top))
    if unknown:
        raise ConfigError(unknown[0], f"unknown section (allowed: {sorted(top)})")
    blocks = {k: _block(k, raw.get(k), cls, co) for k, (cls, co) in top.items()}
    cfg = RunConfig(**blocks)
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as f:
        return parse_config(f.read())


def _validate(cfg: RunConfig) -> None:
    m = cfg.model
    for i, lab in enumerate(m.modes):
        if len(lab) != m.dimension:
            raise ConfigError(f"model.modes[{i}]", f"label {list(lab)} is not {m.dimension}-dimensional")
    if len(cfg.numerics.caps) != len(m.modes):
        raise ConfigError("numerics.caps", f"{len(cfg.numerics.caps)} caps for {len(m.modes)} modes")
    if any(c < 1 for c in cfg.numerics.caps):
        raise ConfigError("numerics.caps", "caps must be >= 1")
    if m.box_lengths is None and m.box_length is None:
        raise ConfigError("model.box_length", "give box_length or box_lengths")
    if m.nu is not None:
        for p, _ in m.nu:
            if len(p) != m.dimension:
                raise ConfigError("model.nu", f"label {list(p)} is not {m.dimension}-dimensional")
    for L in m.lengths:
        try:
            m.build(L)
        except ModelError as exc:
            raise ConfigError("model.phi" if "phi" in str(exc) else "model.nu", str(exc)) from None
    for c in cfg.suite.checks:
        if c in FAMILY_CHECKS and len(m.lengths) < 3:
            raise ConfigError("model.box_lengths", f"check {c!r} needs a family of >= 3 box lengths")
