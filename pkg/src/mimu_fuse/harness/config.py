"""Flat ``key = value`` scenario configuration.

Example::

    # square run with three IMUs
    scenario.kind = square
    scenario.duration = 160
    imu.count = 3
    filter.list = simu, vimu, federated, uekf, uekf_bvr
    seed = 7

All quantities are SI (rad, rad/s, m/s). White-noise levels ``imu.sigma_a``
and ``imu.sigma_g`` are continuous densities; the simulator multiplies them
by ``sqrt(imu.rate)`` to obtain the per-sample standard deviation.
``imu.sigma_ba`` and ``imu.sigma_bg`` drive the bias random walks
(per-sample step ``sigma * sqrt(dt)``). Initial biases are drawn per IMU
from ``N(0, imu.bias_a_std^2)`` and ``N(0, imu.bias_g_std^2)`` unless given
explicitly as ``imu.bias_a.<j> = bx, by, bz`` (1-based ``j``). With
``init.perturb = on`` the filters start from the truth perturbed by a seeded
draw from the initial uncertainty ``init.*``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..simulator import TRAJECTORY_KINDS

FILTERS = ("simu", "vimu", "federated", "uekf", "uekf_bvr")

_BOOL = {"on": True, "off": False, "true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = "square"
    duration: float = 160.0
    speed: float = 2.0
    turn_rate: float = math.radians(10.0)
    waves: bool = True
    wave_amplitude: float = 0.2
    wave_period: float = 6.0
    latitude: float = math.radians(32.82)
    longitude: float = math.radians(34.95)

    n_imu: int = 3
    imu_rate: float = 100.0
    sigma_a: float = 0.002
    sigma_g: float = math.radians(0.005)
    sigma_ba: float = 1e-4
    sigma_bg: float = math.radians(1e-3)
    bias_a_std: float = 0.03
    bias_g_std: float = math.radians(0.1)
    bias_a: dict = field(default_factory=dict)
    bias_g: dict = field(default_factory=dict)

    aiding_rate: float = 1.0
    aiding_sigma: float = 0.05

    filters: tuple = FILTERS
    bvr: bool = True
    bvr_gyro: bool = False
    bvr_squared: bool = False
    joseph: bool = False
    alpha_f: float = 0.9
    divergence_factor: float = 10.0
    divergence_epochs: int = 5
    vimu_scale_bias_noise: bool = False

    init_attitude: float = math.radians(0.5)
    init_yaw: float = math.radians(2.0)
    init_velocity: float = 0.1
    init_bias_a: float = 0.05
    init_bias_g: float = math.radians(0.2)
    init_perturb: bool = True

    seed: int = 0
    seeds: int = 20
    sweep_imus: tuple = (2, 3, 4, 5, 6, 7)
    sweep_filter: str = "uekf_bvr"

    def with_(self, **changes):
        cfg = replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self):
        def need(ok, key, msg):
            if not ok:
                raise ConfigError(key, msg)

        need(self.kind in TRAJECTORY_KINDS, "scenario.kind", f"must be one of {', '.join(TRAJECTORY_KINDS)}")
        need(self.duration > 0, "scenario.duration", "must be positive")
        need(self.speed >= 0, "scenario.speed", "must be non-negative")
        need(self.turn_rate > 0, "scenario.turn_rate", "must be positive")
        need(self.wave_period > 0, "wave.period", "must be positive")
        need(abs(self.latitude) < math.pi / 2, "scenario.latitude", "must lie strictly between the poles")
        need(1 <= self.n_imu <= 64, "imu.count", "must lie in 1..64")
        need(self.imu_rate > 0, "imu.rate", "must be positive")
        for key in ("sigma_a", "sigma_g", "sigma_ba", "sigma_bg", "bias_a_std", "bias_g_std"):
            need(getattr(self, key) >= 0, f"imu.{key}", "must be non-negative")
        need(self.aiding_rate > 0, "aiding.rate", "must be positive")
        ratio = self.imu_rate / self.aiding_rate
        need(abs(ratio - round(ratio)) < 1e-9, "aiding.rate", "must divide imu.rate")
        need(self.aiding_sigma > 0, "aiding.sigma", "must be positive")
        need(len(self.filters) > 0, "filter.list", "must name at least one filter")
        for name in self.filters:
            need(name in FILTERS, "filter.list", f"unknown filter {name!r}")
        need(0 < self.alpha_f <= 1, "federated.alpha_f", "must lie in (0, 1]")
        need(self.divergence_factor > 0, "federated.divergence_factor", "must be positive")
        need(self.divergence_epochs >= 1, "federated.divergence_epochs", "must be at least 1")
        for key in ("init_attitude", "init_yaw", "init_velocity", "init_bias_a", "init_bias_g"):
            need(getattr(self, key) > 0, "init." + key[5:], "must be positive")
        need(self.seeds >= 1, "montecarlo.seeds", "must be at least 1")
        need(len(self.sweep_imus) > 0, "sweep.imus", "must not be empty")
        need(all(1 <= j <= 64 for j in self.sweep_imus), "sweep.imus", "array sizes must lie in 1..64")
        need(self.sweep_filter in FILTERS, "sweep.filter", f"unknown filter {self.sweep_filter!r}")
        for key, table in (("imu.bias_a", self.bias_a), ("imu.bias_g", self.bias_g)):
            for j, b in table.items():
                need(np.shape(b) == (3,), f"{key}.{j}", "needs three components")
        return self


def _float(key, text):
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(key, "must be finite")
    return value


def _int(key, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}") from None


def _bool(key, text):
    try:
        return _BOOL[text.lower()]
    except KeyError:
        raise ConfigError(key, f"expected on/off, got {text!r}") from None


def _list(text):
    return tuple(item.strip() for item in text.split(",") if item.strip())


def _vector(key, text):
    parts = _list(text)
    if len(parts) != 3:
        raise ConfigError(key, f"expected three comma-separated numbers, got {text!r}")
    return np.array([_float(key, p) for p in parts])


_KEYS = {
    "scenario.kind": ("kind", str.strip),
    "scenario.duration": ("duration", _float),
    "scenario.speed": ("speed", _float),
    "scenario.turn_rate": ("turn_rate", _float),
    "scenario.waves": ("waves", _bool),
    "scenario.latitude": ("latitude", _float),
    "scenario.longitude": ("longitude", _float),
    "wave.amplitude": ("wave_amplitude", _float),
    "wave.period": ("wave_period", _float),
    "imu.count": ("n_imu", _int),
    "imu.rate": ("imu_rate", _float),
    "imu.sigma_a": ("sigma_a", _float),
    "imu.sigma_g": ("sigma_g", _float),
    "imu.sigma_ba": ("sigma_ba", _float),
    "imu.sigma_bg": ("sigma_bg", _float),
    "imu.bias_a_std": ("bias_a_std", _float),
    "imu.bias_g_std": ("bias_g_std", _float),
    "aiding.rate": ("aiding_rate", _float),
    "aiding.sigma": ("aiding_sigma", _float),
    "filter.list": ("filters", lambda k, t: _list(t)),
    "filter.joseph": ("joseph", _bool),
    "bvr.enabled": ("bvr", _bool),
    "bvr.gyro": ("bvr_gyro", _bool),
    "bvr.squared": ("bvr_squared", _bool),
    "federated.alpha_f": ("alpha_f", _float),
    "federated.divergence_factor": ("divergence_factor", _float),
    "federated.divergence_epochs": ("divergence_epochs", _int),
    "vimu.scale_bias_noise": ("vimu_scale_bias_noise", _bool),
    "init.attitude": ("init_attitude", _float),
    "init.yaw": ("init_yaw", _float),
    "init.velocity": ("init_velocity", _float),
    "init.bias_a": ("init_bias_a", _float),
    "init.bias_g": ("init_bias_g", _float),
    "init.perturb": ("init_perturb", _bool),
    "seed": ("seed", _int),
    "montecarlo.seeds": ("seeds", _int),
    "sweep.imus": ("sweep_imus", lambda k, t: tuple(_int(k, p) for p in _list(t))),
    "sweep.filter": ("sweep_filter", str.strip),
}
# short aliases for the rate keys
_KEYS["rates.imu"] = _KEYS["imu.rate"]
_KEYS["rates.aiding"] = _KEYS["aiding.rate"]

KNOWN_KEYS = tuple(sorted(_KEYS))


def parse_config(text, base=None):
    """
    Parse configuration text into a validated :class:`ScenarioConfig`.

    Parameters
    ----------
    text : str
        ``key = value`` lines; ``#`` starts a comment.
    base : ScenarioConfig, optional
        Defaults for keys not present.

    Raises
    ------
    ConfigError
        Unknown key, malformed line or invalid value, naming the key.
    """
    changes = {}
    bias_a = dict(base.bias_a) if base else {}
    bias_g = dict(base.bias_g) if base else {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith(("imu.bias_a.", "imu.bias_g.")):
            j = _int(key, key.rsplit(".", 1)[1])
            if j < 1:
                raise ConfigError(key, "IMU index is 1-based")
            (bias_a if key.startswith("imu.bias_a.") else bias_g)[j] = _vector(key, value)
            continue
        if key not in _KEYS:
            raise ConfigError(key, "unknown key")
        attr, conv = _KEYS[key]
        changes[attr] = conv(value) if conv is str.strip else conv(key, value)
    cfg = replace(base or ScenarioConfig(), bias_a=bias_a, bias_g=bias_g, **changes)
    return cfg.validate()


def load_config(path, base=None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, base)


def dump_config(cfg):
    """Render ``cfg`` as configuration text that :func:`parse_config` reads back."""
    attr_to_key = {}
    for key, (attr, _) in _KEYS.items():
        attr_to_key.setdefault(attr, key)
    lines = []
    for f in fields(cfg):
        if f.name in ("bias_a", "bias_g"):
            for j, b in sorted(getattr(cfg, f.name).items()):
                lines.append(f"imu.{f.name}.{j} = " + ", ".join(repr(float(x)) for x in b))
            continue
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            text = "on" if value else "off"
        elif isinstance(value, tuple):
            text = ", ".join(str(v) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{attr_to_key[f.name]} = {text}")
    return "\n".join(lines) + "\n"
