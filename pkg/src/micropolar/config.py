"""Run configuration: JSON parsing with defaults, validation and an exact echo."""

from __future__ import annotations

import dataclasses
import json
import math
import warnings
from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Optional

from .errors import ConfigError, DomainError
from .params import PhysicalParams

SCENARIOS = ("microflow", "linear", "nonlinear", "decay-report")
ENVELOPES = ("none", "algebraic", "exponential")
REPORT_FORMATS = ("json", "text")
Q_REGIME_WARNING = "q below (5/2,∞) regime of the well-posedness theorem"


class ConfigWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GridConfig:
    n_modes: int = 8
    dealias_fraction: str = "2/3"


@dataclass(frozen=True)
class MicroflowConfig:
    amplitude: float = 0.1
    spectrum_slope: float = 2.0
    mode_cutoff: int = 2


@dataclass(frozen=True)
class DataConfig:
    microflow: MicroflowConfig = field(default_factory=MicroflowConfig)
    u_amplitude: float = 0.05
    omega_amplitude: float = 0.05
    perturbation_slope: float = 3.0
    perturbation_cutoff: int = 3
    velocity_mean: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ForcingConfig:
    envelope: str = "none"
    mu: float = 0.0
    C: float = 0.0
    spectrum_slope: float = 3.0
    cutoff: int = 2


@dataclass(frozen=True)
class NumericsConfig:
    dt: float = 0.01
    horizon: float = 1.0
    picard_tol: float = 1e-10
    max_iters: int = 50
    snapshot_stride: int = 10
    enforce_contraction: bool = False


@dataclass(frozen=True)
class SobolevConfig:
    s: float = 0.0
    q: float = 3.0
    theta_ladder: tuple = (0.25, 0.5, 1.0)


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "run"
    formats: tuple = ("json", "text")


@dataclass(frozen=True)
class DiagnosticsConfig:
    t_burn: Optional[float] = None
    energy_slack: float = 0.05
    envelope_slack: float = 0.1


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "nonlinear"
    seed: int = 0
    grid: GridConfig = field(default_factory=GridConfig)
    params: PhysicalParams = field(default_factory=PhysicalParams)
    data: DataConfig = field(default_factory=DataConfig)
    forcing: ForcingConfig = field(default_factory=ForcingConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    sobolev: SobolevConfig = field(default_factory=SobolevConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @property
    def n_steps(self) -> int:
        return int(round(self.numerics.horizon / self.numerics.dt))


_SECTIONS = {
    "grid": GridConfig,
    "params": PhysicalParams,
    "data": DataConfig,
    "forcing": ForcingConfig,
    "numerics": NumericsConfig,
    "sobolev": SobolevConfig,
    "output": OutputConfig,
    "diagnostics": DiagnosticsConfig,
}
_NESTED = {("data", "microflow"): MicroflowConfig}


def _number(path, value, kind=float, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, got a boolean")
    if kind is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{path}: expected a finite number, got {value!r}")
    return float(value)


def _coerce(path: str, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true or false, got {value!r}")
        return value
    if isinstance(default, int):
        return _number(path, value, int)
    if isinstance(default, float):
        return _number(path, value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        proto = default[0] if default else 0.0
        return tuple(_coerce(f"{path}[{i}]", proto, v) for i, v in enumerate(value))
    if default is None:
        return _number(path, value, allow_none=True)
    raise ConfigError(f"{path}: unsupported value {value!r}")


def _build(cls, path: str, raw):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected an object")
    proto = cls()
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for f in fields(cls):
        if f.name not in raw:
            continue
        sub = f"{path}.{f.name}"
        nested = _NESTED.get((path, f.name))
        if nested is not None:
            kwargs[f.name] = _build(nested, sub, raw[f.name])
        else:
            kwargs[f.name] = _coerce(sub, getattr(proto, f.name), raw[f.name])
    try:
        return cls(**kwargs)
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _validate(cfg: RunConfig):
    def need(ok, what):
        if not ok:
            raise ConfigError(f"constraint violated: {what}")

    need(cfg.scenario in SCENARIOS, f"scenario in {SCENARIOS}")
    need(cfg.seed >= 0, "seed >= 0")
    g = cfg.grid
    need(g.n_modes >= 4 and g.n_modes % 2 == 0, "grid.n_modes even and >= 4")
    try:
        frac = Fraction(g.dealias_fraction)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"grid.dealias_fraction: cannot parse {g.dealias_fraction!r}") from exc
    need(0 < frac <= 1, "0 < grid.dealias_fraction <= 1")
    p = cfg.params
    need(p.grad_div_coefficient >= 0, "params: alpha/3 + beta - gamma >= 0")
    if cfg.scenario in ("nonlinear", "decay-report"):
        need(p.gamma > 0, "params.gamma > 0 for the nonlinear system")
    m = cfg.data.microflow
    need(m.amplitude >= 0, "data.microflow.amplitude >= 0")
    need(m.spectrum_slope > 1.5, "data.microflow.spectrum_slope > 3/2")
    need(m.mode_cutoff >= 1, "data.microflow.mode_cutoff >= 1")
    d = cfg.data
    need(d.u_amplitude >= 0 and d.omega_amplitude >= 0, "data amplitudes >= 0")
    need(d.perturbation_cutoff >= 1, "data.perturbation_cutoff >= 1")
    need(len(d.velocity_mean) == 3, "data.velocity_mean has three components")
    if cfg.scenario == "linear":
        need(all(b == 0 for b in d.velocity_mean), "data.velocity_mean = 0 for the linear scenario")
    fc = cfg.forcing
    need(fc.envelope in ENVELOPES, f"forcing.envelope in {ENVELOPES}")
    need(fc.mu >= 0, "forcing.mu >= 0")
    need(fc.C >= 0, "forcing.C >= 0")
    need(fc.cutoff >= 1, "forcing.cutoff >= 1")
    n = cfg.numerics
    need(n.dt > 0, "numerics.dt > 0")
    need(n.horizon > 0, "numerics.horizon > 0")
    need(abs(cfg.n_steps * n.dt - n.horizon) <= 1e-9 * n.horizon and cfg.n_steps >= 1,
         "numerics.horizon is a positive integer multiple of numerics.dt")
    need(n.picard_tol > 0, "numerics.picard_tol > 0")
    need(n.max_iters >= 1, "numerics.max_iters >= 1")
    need(n.snapshot_stride >= 1, "numerics.snapshot_stride >= 1")
    sb = cfg.sobolev
    need(sb.s >= 0, "sobolev.s >= 0")
    need(len(sb.theta_ladder) >= 1 and all(0 <= th <= 1 for th in sb.theta_ladder),
         "sobolev.theta_ladder entries in [0, 1]")
    need(len(set(sb.theta_ladder)) == len(sb.theta_ladder), "sobolev.theta_ladder entries distinct")
    need(all(f in REPORT_FORMATS for f in cfg.output.formats), f"output.formats subset of {REPORT_FORMATS}")
    dg = cfg.diagnostics
    need(dg.t_burn is None or dg.t_burn >= 0, "diagnostics.t_burn >= 0")
    need(0 <= dg.energy_slack < 1 and 0 <= dg.envelope_slack < 1, "diagnostics slack factors in [0, 1)")
    if sb.s <= 1.5 and sb.q <= 2.5:
        warnings.warn(Q_REGIME_WARNING, ConfigWarning, stacklevel=3)


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    unknown = sorted(set(raw) - {"scenario", "seed", *_SECTIONS})
    if unknown:
        raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    if "scenario" in raw:
        kwargs["scenario"] = _coerce("scenario", "", raw["scenario"])
    if "seed" in raw:
        kwargs["seed"] = _number("seed", raw["seed"], int)
    for name, cls in _SECTIONS.items():
        if name in raw:
            kwargs[name] = _build(cls, name, raw[name])
    cfg = RunConfig(**kwargs)
    _validate(cfg)
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse a JSON document into a validated RunConfig with defaults filled in."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(raw)


def _plain(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def config_to_dict(cfg: RunConfig) -> dict:
    return _plain(cfg)


def echo_config(cfg: RunConfig) -> str:
    """Canonical JSON text of a fully resolved config; parse_config inverts it exactly."""
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"
