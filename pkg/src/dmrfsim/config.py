"""Scenario configuration: the single schema every run is described by.

Defaults reproduce the reference deployment: a 400-node uniform grid on a
20 m x 20 m region, 200 Kb/s radios, 100-byte buffers, 32-byte packets with
100 ms lifetimes. A JSON config file maps keys to the field names below;
the optional key "preset": "table2" is accepted and simply selects these
defaults explicitly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .topology import DISTRIBUTIONS, UNIFORM_GRID

DMRF = "DMRF"
GREEDY_MIN_DELAY = "GREEDY_MIN_DELAY"
GREEDY_MAX_RATE = "GREEDY_MAX_RATE"
BYPASS = "BYPASS"
PROTOCOLS = (DMRF, GREEDY_MIN_DELAY, GREEDY_MAX_RATE, BYPASS)

PRESETS = ("table2",)

#: control frames (probes, feedback) are this long on the wire
CONTROL_FRAME_BITS = 64


class ConfigError(ValueError):
    """A scenario file or override failed validation."""


@dataclass
class ScenarioConfig:
    """Everything a single run needs besides the topology object itself."""

    node_count: int = 400
    region: tuple[float, float] = (20.0, 20.0)
    distribution: str = UNIFORM_GRID
    comm_radius: float = 1.5
    max_tx_distance: float = 30.0
    bandwidth_kbps: float = 200.0  # 1 Kb/s == 1 bit/ms
    buffer_bytes: int = 100
    packet_bytes: int = 32
    packet_count: int = 100
    packet_lifetime_ms: float = 100.0
    injection_period_ms: float = 5.0
    protocol: str = DMRF
    fault_ratio: float = 0.0
    buffer_fill: float = 0.0
    void_center: tuple[float, float] = (10.0, 10.0)
    void_radius: float = 0.0
    m_paths: int = 4
    k_paths: int = 2
    theta_jump: float = 0.2
    theta_cong: float = 0.8
    cong_horizon_ms: float = 5.0
    cong_hysteresis: float = 0.1
    confidence_threshold: int = 50
    confidence_step: int = 25
    probe_period_ms: float = 10.0
    probe_timeout_ms: float = 2.0
    ack_timeout_ms: float = 2.0
    rate_multipliers: dict[str, float] = field(
        default_factory=lambda: {"low": 1.2, "medium": 1.0, "high": 0.7}
    )
    energy_elec_j_per_bit: float = 50e-9
    energy_amp_j_per_bit_m2: float = 100e-12
    sigma_factor: float = 0.15
    horizon_ms: float = 10_000.0
    count_probes_as_control: bool = True
    seed: int = 1
    repetitions: int = 1

    @property
    def packet_bits(self) -> int:
        return self.packet_bytes * 8

    @property
    def mean_hop_delay_ms(self) -> float:
        return self.packet_bits / self.bandwidth_kbps

    @property
    def feedback_delay_ms(self) -> float:
        return CONTROL_FRAME_BITS / self.bandwidth_kbps


_FIELD_NAMES = {f.name for f in dataclasses.fields(ScenarioConfig)}

_POSITIVE_INT = (
    "node_count",
    "buffer_bytes",
    "packet_bytes",
    "packet_count",
    "m_paths",
    "k_paths",
    "repetitions",
)
_POSITIVE_FLOAT = (
    "comm_radius",
    "max_tx_distance",
    "bandwidth_kbps",
    "packet_lifetime_ms",
    "injection_period_ms",
    "cong_horizon_ms",
    "probe_period_ms",
    "probe_timeout_ms",
    "ack_timeout_ms",
    "horizon_ms",
)
_NON_NEGATIVE_FLOAT = (
    "void_radius",
    "cong_hysteresis",
    "sigma_factor",
    "energy_elec_j_per_bit",
    "energy_amp_j_per_bit_m2",
)
_UNIT_INTERVAL = ("fault_ratio", "buffer_fill")


def _check(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {message}")


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    """Validate every field; error messages name the offending key."""
    for key in _POSITIVE_INT:
        v = getattr(cfg, key)
        _check(isinstance(v, int) and not isinstance(v, bool) and v > 0, key,
               f"expected a positive integer, got {v!r}")
    for key in _POSITIVE_FLOAT:
        v = getattr(cfg, key)
        _check(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0,
               key, f"expected a positive number, got {v!r}")
    for key in _NON_NEGATIVE_FLOAT:
        v = getattr(cfg, key)
        _check(isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0,
               key, f"expected a non-negative number, got {v!r}")
    for key in _UNIT_INTERVAL:
        v = getattr(cfg, key)
        _check(isinstance(v, (int, float)) and not isinstance(v, bool)
               and 0.0 <= v <= 1.0, key, f"expected a value in [0, 1], got {v!r}")
    _check(cfg.node_count >= 2, "node_count", "needs at least a source and a sink")
    for key in ("region", "void_center"):
        v = getattr(cfg, key)
        _check(
            isinstance(v, (tuple, list)) and len(v) == 2
            and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v),
            key, f"expected a pair of numbers, got {v!r}")
    _check(cfg.region[0] > 0 and cfg.region[1] > 0, "region",
           "both extents must be positive")
    _check(cfg.distribution in DISTRIBUTIONS, "distribution",
           f"expected one of {sorted(DISTRIBUTIONS)}, got {cfg.distribution!r}")
    _check(cfg.protocol in PROTOCOLS, "protocol",
           f"expected one of {list(PROTOCOLS)}, got {cfg.protocol!r}")
    _check(cfg.comm_radius <= cfg.max_tx_distance, "comm_radius",
           "must not exceed max_tx_distance")
    _check(cfg.packet_bytes <= cfg.buffer_bytes, "packet_bytes",
           "a single packet must fit in a relay buffer")
    _check(0.0 < cfg.theta_jump < 1.0, "theta_jump",
           f"expected a value in (0, 1), got {cfg.theta_jump!r}")
    _check(0.0 < cfg.theta_cong <= 1.0, "theta_cong",
           f"expected a value in (0, 1], got {cfg.theta_cong!r}")
    _check(cfg.cong_hysteresis < cfg.theta_cong, "cong_hysteresis",
           "must stay below theta_cong")
    _check(isinstance(cfg.confidence_threshold, int)
           and 0 < cfg.confidence_threshold <= 100, "confidence_threshold",
           f"expected an integer in (0, 100], got {cfg.confidence_threshold!r}")
    _check(isinstance(cfg.confidence_step, int) and 0 < cfg.confidence_step <= 100,
           "confidence_step",
           f"expected an integer in (0, 100], got {cfg.confidence_step!r}")
    rm = cfg.rate_multipliers
    _check(isinstance(rm, dict) and set(rm) == {"low", "medium", "high"},
           "rate_multipliers", "expected exactly the keys low, medium, high")
    _check(all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0
               for v in rm.values()),
           "rate_multipliers", "multipliers must be positive numbers")
    _check(rm["low"] >= rm["medium"] >= rm["high"], "rate_multipliers",
           "expected low >= medium >= high (lower urgency sends slower)")
    _check(isinstance(cfg.count_probes_as_control, bool),
           "count_probes_as_control", "expected a boolean")
    _check(isinstance(cfg.seed, int) and not isinstance(cfg.seed, bool), "seed",
           f"expected an integer, got {cfg.seed!r}")
    _check(cfg.k_paths <= cfg.m_paths, "k_paths", "must not exceed m_paths")
    return cfg


def from_dict(raw: dict) -> ScenarioConfig:
    """Build a validated config from parsed JSON, rejecting unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigError(f"config root: expected an object, got {type(raw).__name__}")
    raw = dict(raw)
    preset = raw.pop("preset", None)
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"preset: expected one of {list(PRESETS)}, got {preset!r}")
    unknown = sorted(set(raw) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown key: {unknown[0]}")
    for key in ("region", "void_center"):
        if key in raw and isinstance(raw[key], list):
            raw[key] = tuple(raw[key])
    cfg = ScenarioConfig(**raw)
    return validate(cfg)


def load(path: str) -> ScenarioConfig:
    """Parse and validate a JSON scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return from_dict(raw)
