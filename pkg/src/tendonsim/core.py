"""Shared types, scenario configuration, the causal filter and the time-series log.

The config format is a flat ``key = value`` document with dotted sections::

    scenario = force-step
    dt = 0.001
    transmission.G = 19
    tendon0.mode = force

Unknown keys are rejected.  Every key and its default is listed in
``docs/config.md``.
"""

from __future__ import annotations

import dataclasses
import io
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any

import numpy as np

SCENARIO_KINDS = (
    "force-step",
    "extreme-curl",
    "single-contact",
    "periodic-contact",
    "active-uncurl",
    "wrap-cylinder",
)
FEEDBACK_MODES = ("off", "current", "displacement", "velocity", "force")
CONTACT_KINDS = ("none", "point-impulse", "rotating-pusher", "cylinder")
DISTURBANCE_KINDS = ("none", "constant", "sine", "noise")

LOG_COLUMNS = (
    "t",
    "i_cmd_0", "i_cmd_1",
    "i_obs_star_0", "i_obs_star_1",
    "i_obs_star_raw_0", "i_obs_star_raw_1",
    "i_obs_dstar_0", "i_obs_dstar_1",
    "i_obs_dstar_filt_0", "i_obs_dstar_filt_1",
    "u_ff_0", "u_ff_1",
    "u_fb_0", "u_fb_1",
    "F_cmd_0", "F_cmd_1",
    "F_obs_0", "F_obs_1",
    "dl_0", "dl_1",
    "dl_dot_0", "dl_dot_1",
    "theta_out_0", "theta_out_1",
    "tip_x", "tip_y",
    "contact",
)
LOG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid scenario document; ``key`` names the offending dotted path."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


# ---------------------------------------------------------------- parameters


@dataclass(frozen=True)
class MotorElectricalParams:
    L: float = 0.0008
    R: float = 0.6
    k_e: float = 0.09
    k_t: float = 0.09
    i_sat: float = 5.0
    v_supply: float = 24.0

    def __post_init__(self):
        for name in ("L", "R", "k_e", "k_t", "i_sat", "v_supply"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"motor.{name}", "must be > 0")


@dataclass(frozen=True)
class CurrentControllerGains:
    K_p: float = 4.0
    K_i: float = 400.0
    K_d: float = 0.001

    def __post_init__(self):
        if not self.K_p > 0:
            raise ConfigError("controller.K_p", "must be > 0")
        for name in ("K_i", "K_d"):
            if getattr(self, name) < 0:
                raise ConfigError(f"controller.{name}", "must be >= 0")


@dataclass(frozen=True)
class TransmissionParams:
    G: float = 19.0
    eta: float = 0.85
    J_m: float = 5e-5
    b_m: float = 1e-4
    r: float = 0.01
    tau_F: float = 0.02

    def __post_init__(self):
        if not self.G >= 1:
            raise ConfigError("transmission.G", "must be >= 1")
        if not 0 < self.eta <= 1:
            raise ConfigError("transmission.eta", "must lie in (0, 1]")
        for name in ("J_m", "b_m", "r", "tau_F"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"transmission.{name}", "must be > 0")

    @property
    def J_eq(self) -> float:
        return self.G**2 * self.J_m

    @property
    def b_eq(self) -> float:
        return self.G**2 * self.b_m


@dataclass(frozen=True)
class RobotParams:
    """Taper description from which the 24-joint chain is built."""

    taper: float = 0.93
    l_base: float = 0.02
    m_base: float = 0.01
    k_base: float = 0.05
    d_base: float = 0.006
    damping_time: float = 0.1
    joint_limit: float = 0.35
    limit_stiffness: float = 500.0
    gravity: bool = False
    g: float = 9.81

    def __post_init__(self):
        if not 0 < self.taper <= 1:
            raise ConfigError("robot.taper", "must lie in (0, 1]")
        for name in ("l_base", "m_base", "k_base", "d_base", "damping_time",
                     "joint_limit", "limit_stiffness"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"robot.{name}", "must be > 0")


@dataclass(frozen=True)
class TendonDrive:
    """Outer feedback for one tendon channel (the mechanical-to-current law)."""

    mode: str = "off"
    setpoint: float = 0.0
    t_on: float = 0.0
    initial: float = 0.0
    K_p: float = 0.0
    K_i: float = 0.0

    def __post_init__(self):
        if self.mode not in FEEDBACK_MODES:
            raise ConfigError("tendon.mode", f"unknown feedback mode {self.mode!r}")
        if self.K_p < 0 or self.K_i < 0:
            raise ConfigError("tendon.K_p", "gains must be >= 0")


@dataclass(frozen=True)
class ContactConfig:
    kind: str = "none"
    link: int = 23
    magnitude: float = 0.0
    t_on: float = 0.0
    omega: float = 20 * math.pi
    direction: float = 1.0
    center_x: float = float("nan")
    center_y: float = float("nan")
    diameter: float = 0.04
    stiffness: float = 2000.0
    damping_ratio: float = 1.0

    def __post_init__(self):
        if self.kind not in CONTACT_KINDS:
            raise ConfigError("contact.kind", f"unknown contact kind {self.kind!r}")
        if not 0 <= self.link < 24:
            raise ConfigError("contact.link", "must lie in [0, 24)")
        if not self.diameter > 0:
            raise ConfigError("contact.diameter", "must be > 0")


@dataclass(frozen=True)
class DisturbanceConfig:
    kind: str = "none"
    amplitude: float = 0.0
    frequency: float = 1.0

    def __post_init__(self):
        if self.kind not in DISTURBANCE_KINDS:
            raise ConfigError("disturbance.kind", f"unknown disturbance {self.kind!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "force-step"
    dt: float = 0.001
    duration: float = 0.5
    window: int = 100
    seed: int = 0
    n_sub: int = 10
    baseline: bool = False
    current_noise: float = 0.0
    motor: MotorElectricalParams = field(default_factory=MotorElectricalParams)
    controller: CurrentControllerGains = field(default_factory=CurrentControllerGains)
    transmission: TransmissionParams = field(default_factory=TransmissionParams)
    robot: RobotParams = field(default_factory=RobotParams)
    tendon0: TendonDrive = field(default_factory=TendonDrive)
    tendon1: TendonDrive = field(default_factory=TendonDrive)
    contact: ContactConfig = field(default_factory=ContactConfig)
    disturbance: DisturbanceConfig = field(default_factory=DisturbanceConfig)

    def __post_init__(self):
        if self.scenario not in SCENARIO_KINDS:
            raise ConfigError("scenario", f"unknown scenario kind {self.scenario!r}")
        if not self.dt > 0:
            raise ConfigError("dt", "must be > 0")
        if not self.duration >= 0:
            raise ConfigError("duration", "must be >= 0")
        if self.window < 1:
            raise ConfigError("window", "must be >= 1")
        if self.n_sub < 1:
            raise ConfigError("n_sub", "must be >= 1")

    @property
    def n_steps(self) -> int:
        # tolerate representation error in duration/dt
        return int(math.floor(self.duration / self.dt + 1e-9))

    @property
    def drives(self) -> tuple[TendonDrive, TendonDrive]:
        return (self.tendon0, self.tendon1)


SECTIONS = {
    "motor": MotorElectricalParams,
    "controller": CurrentControllerGains,
    "transmission": TransmissionParams,
    "robot": RobotParams,
    "tendon0": TendonDrive,
    "tendon1": TendonDrive,
    "contact": ContactConfig,
    "disturbance": DisturbanceConfig,
}

# Per-kind defaults, applied before the document's own keys.
SCENARIO_DEFAULTS: dict[str, dict[str, Any]] = {
    "force-step": {
        "duration": 0.6,
        "baseline": True,
        "tendon0": dict(mode="force", setpoint=1.0, t_on=0.05, K_p=0.003, K_i=0.15),
    },
    "extreme-curl": {
        "duration": 4.5,
        "tendon0": dict(mode="velocity", setpoint=0.01, t_on=0.0, K_p=20.0, K_i=400.0),
    },
    "single-contact": {
        "duration": 1.0,
        "transmission": dict(G=1.0),
        "tendon0": dict(mode="current", setpoint=0.2, initial=0.2),
        "tendon1": dict(mode="current", setpoint=0.2, initial=0.2),
        "contact": dict(kind="point-impulse", link=23, magnitude=0.002, t_on=0.3),
    },
    "periodic-contact": {
        "duration": 6.0,
        "window": 20,
        "current_noise": 2e-4,
        "transmission": dict(G=1.0),
        "tendon0": dict(mode="current", setpoint=0.2, initial=0.2),
        "tendon1": dict(mode="current", setpoint=0.2, initial=0.2),
        "contact": dict(kind="rotating-pusher", link=23, magnitude=0.002, t_on=0.2),
    },
    "active-uncurl": {
        "duration": 3.0,
        "tendon0": dict(mode="current", setpoint=0.05, initial=2.0),
        "tendon1": dict(mode="velocity", setpoint=0.01, t_on=0.0, K_p=20.0, K_i=400.0),
    },
    "wrap-cylinder": {
        "duration": 3.0,
        "tendon0": dict(mode="velocity", setpoint=0.01, t_on=0.0, K_p=20.0, K_i=400.0),
        "contact": dict(kind="cylinder", diameter=0.04, stiffness=1.0e5),
    },
}


# ------------------------------------------------------------------- parsing


def _coerce(key: str, raw: str, typ: Any) -> Any:
    raw = raw.strip()
    try:
        if typ is bool or typ == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if typ is int or typ == "int":
            val = float(raw)
            if val != int(val):
                raise ValueError(raw)
            return int(val)
        if typ is float or typ == "float":
            return float(raw)
        return raw.strip("\"'")
    except ValueError:
        raise ConfigError(key, f"malformed value {raw!r}") from None


def _field_types(cls) -> dict[str, Any]:
    return {f.name: f.type for f in fields(cls)}


def _parse_lines(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(key, "duplicate key")
        out[key] = value
    return out


def config_from_mapping(values: dict[str, Any]) -> ScenarioConfig:
    """Build a config from ``{dotted_key: value}``; values may be strings."""
    kind = str(values.get("scenario", "force-step")).strip().strip("\"'")
    if kind not in SCENARIO_KINDS:
        raise ConfigError("scenario", f"unknown scenario kind {kind!r}")

    top_types = {k: v for k, v in _field_types(ScenarioConfig).items() if k not in SECTIONS}
    top: dict[str, Any] = {}
    sec: dict[str, dict[str, Any]] = {name: {} for name in SECTIONS}

    for k, v in SCENARIO_DEFAULTS[kind].items():
        if k in SECTIONS:
            sec[k].update(v)
        else:
            top[k] = v

    for key, value in values.items():
        if "." in key:
            section, name = key.split(".", 1)
            if section not in SECTIONS:
                raise ConfigError(key, "unknown section")
            types = _field_types(SECTIONS[section])
            if name not in types:
                raise ConfigError(key, "unknown key")
            sec[section][name] = _coerce(key, value, types[name]) if isinstance(value, str) else value
        else:
            if key not in top_types:
                raise ConfigError(key, "unknown key")
            top[key] = _coerce(key, value, top_types[key]) if isinstance(value, str) else value

    built = {}
    for name, cls in SECTIONS.items():
        try:
            built[name] = cls(**sec[name])
        except ConfigError as err:
            # re-anchor the key path on the section actually being built
            leaf = err.key.split(".", 1)[-1]
            raise ConfigError(f"{name}.{leaf}", str(err).split(": ", 1)[-1]) from None
    top["scenario"] = kind
    return ScenarioConfig(**top, **built)


def load_config(text: str) -> ScenarioConfig:
    """Parse a scenario document, applying defaults for absent keys."""
    values = _parse_lines(text)
    if "scenario" not in values:
        raise ConfigError("scenario", "missing scenario kind")
    return config_from_mapping(values)


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def config_items(cfg: ScenarioConfig) -> list[tuple[str, str]]:
    items = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            for g in fields(v):
                items.append((f"{f.name}.{g.name}", _fmt(getattr(v, g.name))))
        else:
            items.append((f.name, _fmt(v)))
    return items


def dump_config(cfg: ScenarioConfig) -> str:
    """Serialize every resolved key; ``load_config(dump_config(c)) == c``."""
    return "".join(f"{k} = {v}\n" for k, v in config_items(cfg))


def with_overrides(cfg: ScenarioConfig, **sections: Any) -> ScenarioConfig:
    """Return a copy with top-level fields or whole-section dicts replaced.

    ``with_overrides(cfg, transmission={"G": 1.0}, duration=2.0)``
    """
    kw = {}
    for k, v in sections.items():
        if k in SECTIONS and isinstance(v, dict):
            kw[k] = replace(getattr(cfg, k), **v)
        else:
            kw[k] = v
    return replace(cfg, **kw)


# ------------------------------------------------------------------ filtering


def moving_average(x, window: int) -> np.ndarray:
    """Causal moving average; the first ``window - 1`` samples use the prefix mean."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return x.copy()
    c = np.cumsum(np.concatenate(([0.0], x)))
    k = np.arange(1, x.size + 1)
    lo = np.maximum(k - window, 0)
    return (c[k] - c[lo]) / (k - lo)


class StreamingAverage:
    """Online form of :func:`moving_average` for one scalar channel."""

    def __init__(self, window: int):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._buf = np.zeros(window)
        self._n = 0
        self._sum = 0.0

    def push(self, x: float) -> float:
        slot = self._n % self.window
        if self._n >= self.window:
            self._sum -= self._buf[slot]
        self._buf[slot] = x
        self._sum += x
        self._n += 1
        return self._sum / min(self._n, self.window)


def make_rng(seed: int, stream: str = "") -> np.random.Generator:
    """Independent deterministic stream keyed by ``(seed, stream)``."""
    key = [seed] + [ord(ch) for ch in stream]
    return np.random.default_rng(np.random.SeedSequence(key))


# ------------------------------------------------------------------------ log


@dataclass
class TimeSeriesLog:
    """Uniformly sampled signal table plus the resolved config that produced it."""

    columns: dict[str, np.ndarray]
    header: list[tuple[str, str]] = field(default_factory=list)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def __len__(self) -> int:
        return len(self.columns["t"]) if "t" in self.columns else 0

    @property
    def dt(self) -> float:
        t = self.columns["t"]
        return float(t[1] - t[0]) if len(t) > 1 else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# tendonsim log schema {LOG_SCHEMA_VERSION}\n")
        for k, v in self.header:
            buf.write(f"# {k} = {v}\n")
        names = list(self.columns)
        buf.write(",".join(names) + "\n")
        data = np.column_stack([self.columns[n] for n in names]) if names else np.zeros((0, 0))
        for row in data:
            buf.write(",".join(format(float(v), ".12g") for v in row) + "\n")
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "TimeSeriesLog":
        header = []
        lines = text.splitlines()
        i = 0
        while i < len(lines) and lines[i].startswith("#"):
            body = lines[i][1:].strip()
            if "=" in body:
                k, v = (s.strip() for s in body.split("=", 1))
                header.append((k, v))
            i += 1
        if i >= len(lines):
            return cls({}, header)
        names = [s.strip() for s in lines[i].split(",")]
        rows = [ln for ln in lines[i + 1:] if ln.strip()]
        data = np.array([[float(v) for v in ln.split(",")] for ln in rows]).reshape(len(rows), len(names))
        return cls({n: data[:, j].copy() for j, n in enumerate(names)}, header)

    @classmethod
    def load(cls, path) -> "TimeSeriesLog":
        with open(path) as fh:
            return cls.from_csv(fh.read())

    def config(self) -> ScenarioConfig:
        """Rebuild the config echoed in the header."""
        return config_from_mapping({k: v for k, v in self.header})
