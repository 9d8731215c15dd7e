"""Simulation configuration and its flat YAML representation.

Every key is optional; omitted keys take the defaults below (the freeway
evaluation setup: 3 sub-bands of 30 RBs, 6.67 mW per RB, 3 dB antennas,
7 dB shadowing with 10 m decorrelation, rho = 0.9402, lambda = 0.6).

==========================  =========================================
key                         meaning
==========================  =========================================
F                           number of sub-bands
K                           subframes per window (= window_ms)
rbs_per_subchannel          RBs per subchannel
window_ms                   window length, ms
cam_size_bytes, mcs         message context, not used by the PHY abstraction
fc_hz                       carrier frequency
p_t_mw                      transmit power per RB (mW)
g_t_db, g_r_db              antenna gains
shadow_sigma_db             shadowing standard deviation
shadow_corr_distance_m      shadowing decorrelation distance
p_sigma_mw                  noise floor per RB (mW); or p_sigma_dbm in dBm
ibe_vector                  in-band emission factors, same sub-band first
h_tx_m, h_rx_m              antenna heights
rho, lambda                 coded throughput and loss factor for gamma_T
alpha                       EWMA weighting factor, (0, 1]
p_keep                      probability of keeping the subchannel at expiry
gamma_rsrp_dbm              initial RSRP exclusion threshold
gamma_step_db               threshold relaxation step
candidate_floor_fraction    minimum candidate share of all subchannels
selection_pool_fraction     share of subchannels in the random pick pool
t_sps_set                   reservation lifetimes, ms
policy                      standard | greedy | random
scenario                    freeway | trace
trace_path                  CSV trace (scenario = trace)
lanes_per_direction, lane_width_m, median_width_m, road_length_m,
density_per_km, speed_min_mps, speed_max_mps, wraparound
duration_ms, warmup_ms      total simulated time, and the unmeasured prefix
seed                        root seed
awareness_distances_m       D_x values for PRR
ring_width_m                ring width for PRR_ring
==========================  =========================================
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from cv2xsim.channel import ChannelConfig, default_ibe_vector, dbm_to_mw
from cv2xsim.grid import GridConfig
from cv2xsim.mobility import FreewayConfig
from cv2xsim.sps import SpsPolicyConfig

DEFAULT_DISTANCES = (50.0, 100.0, 150.0, 200.0, 250.0, 300.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    sps: SpsPolicyConfig = field(default_factory=SpsPolicyConfig)
    freeway: FreewayConfig = field(default_factory=FreewayConfig)
    trace_path: str | None = None
    duration_ms: int = 60_000
    warmup_ms: int = 1_000
    seed: int = 0
    awareness_distances: tuple[float, ...] = DEFAULT_DISTANCES
    ring_width: float = 50.0
    cam_size_bytes: int = 190
    mcs: int = 7

    def __post_init__(self):
        object.__setattr__(self, "awareness_distances",
                           tuple(float(d) for d in self.awareness_distances))
        self.validate()

    def validate(self) -> None:
        w = self.grid.window_ms
        if self.warmup_ms < 0 or self.duration_ms < self.warmup_ms:
            raise ValueError(f"need 0 <= warmup_ms <= duration_ms, got warmup_ms="
                             f"{self.warmup_ms}, duration_ms={self.duration_ms}")
        if self.duration_ms % w or self.warmup_ms % w:
            raise ValueError(f"duration_ms and warmup_ms must be multiples of window_ms={w}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an integer in [0, 2^64), got {self.seed!r}")
        if not self.awareness_distances or any(d <= 0 for d in self.awareness_distances):
            raise ValueError("awareness_distances must be a non-empty list of positive values")
        if not self.ring_width > 0:
            raise ValueError("ring_width must be > 0")
        self.channel.check_grid(self.grid.F)
        self.sps.check_window(w)

    @property
    def windows(self) -> int:
        return self.duration_ms // self.grid.window_ms

    @property
    def warmup_windows(self) -> int:
        return self.warmup_ms // self.grid.window_ms

    @property
    def scenario(self) -> str:
        return "freeway" if self.trace_path is None else "trace"

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=seed)


# flat key -> (section, attribute); sections: None means SimConfig itself
_KEYS = {
    "F": ("grid", "F"),
    "K": ("grid", "K"),
    "rbs_per_subchannel": ("grid", "rbs_per_subchannel"),
    "window_ms": ("grid", "window_ms"),
    "fc_hz": ("channel", "carrier_frequency"),
    "p_t_mw": ("channel", "tx_power_per_rb"),
    "g_t_db": ("channel", "antenna_gain_tx"),
    "g_r_db": ("channel", "antenna_gain_rx"),
    "shadow_sigma_db": ("channel", "shadow_sigma"),
    "shadow_corr_distance_m": ("channel", "shadow_corr_distance"),
    "ibe_vector": ("channel", "ibe_vector"),
    "h_tx_m": ("channel", "antenna_height_tx"),
    "h_rx_m": ("channel", "antenna_height_rx"),
    "rho": ("channel", "rho"),
    "lambda": ("channel", "throughput_loss"),
    "alpha": ("sps", "alpha"),
    "p_keep": ("sps", "p_keep"),
    "gamma_rsrp_dbm": ("sps", "rsrp_threshold_dbm"),
    "gamma_step_db": ("sps", "threshold_step_db"),
    "candidate_floor_fraction": ("sps", "candidate_floor_fraction"),
    "selection_pool_fraction": ("sps", "selection_pool_fraction"),
    "t_sps_set": ("sps", "t_sps_set"),
    "policy": ("sps", "policy"),
    "lanes_per_direction": ("freeway", "lanes_per_direction"),
    "lane_width_m": ("freeway", "lane_width"),
    "median_width_m": ("freeway", "median_width"),
    "road_length_m": ("freeway", "road_length"),
    "density_per_km": ("freeway", "density_per_km"),
    "wraparound": ("freeway", "wraparound"),
    "trace_path": (None, "trace_path"),
    "duration_ms": (None, "duration_ms"),
    "warmup_ms": (None, "warmup_ms"),
    "seed": (None, "seed"),
    "awareness_distances_m": (None, "awareness_distances"),
    "ring_width_m": (None, "ring_width"),
    "cam_size_bytes": (None, "cam_size_bytes"),
    "mcs": (None, "mcs"),
}
# keys handled explicitly below
_SPECIAL = ("p_sigma_mw", "p_sigma_dbm", "speed_min_mps", "speed_max_mps", "scenario")
KNOWN_KEYS = tuple(_KEYS) + _SPECIAL

_INT_KEYS = {"F", "K", "rbs_per_subchannel", "window_ms", "lanes_per_direction", "duration_ms",
             "warmup_ms", "seed", "cam_size_bytes", "mcs"}


def _coerce(key, value):
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if key == "wraparound":
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if key in ("policy", "trace_path", "scenario"):
        return None if value is None else str(value)
    if key in ("ibe_vector", "t_sps_set", "awareness_distances_m"):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        return tuple(_number(key, v) for v in value)
    return _number(key, value)


def _number(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {v!r}")
    return v


def config_from_dict(data: dict | None, base_dir: Path | None = None) -> SimConfig:
    """Build a validated :class:`SimConfig` from flat keys; raises :class:`ConfigError`."""
    data = dict(data or {})
    unknown = sorted(set(data) - set(KNOWN_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    data = {k: _coerce(k, v) for k, v in data.items()}
    # K and window_ms are the same number with 1 ms subframes
    if "window_ms" in data and "K" not in data:
        data["K"] = data["window_ms"]
    elif "K" in data and "window_ms" not in data:
        data["window_ms"] = data["K"]
    sections = {"grid": {}, "channel": {}, "sps": {}, "freeway": {}, None: {}}
    for key, value in data.items():
        if key in _KEYS:
            sec, attr = _KEYS[key]
            sections[sec][attr] = value
    if "p_sigma_mw" in data and "p_sigma_dbm" in data:
        raise ConfigError("give only one of p_sigma_mw and p_sigma_dbm")
    if "p_sigma_mw" in data:
        sections["channel"]["noise_floor_per_rb"] = data["p_sigma_mw"]
    if "p_sigma_dbm" in data:
        sections["channel"]["noise_floor_per_rb"] = dbm_to_mw(data["p_sigma_dbm"])
    if "speed_min_mps" in data or "speed_max_mps" in data:
        lo, hi = FreewayConfig().speed_range
        sections["freeway"]["speed_range"] = (data.get("speed_min_mps", lo),
                                              data.get("speed_max_mps", hi))
    scenario = data.get("scenario", "trace" if data.get("trace_path") else "freeway")
    if scenario not in ("freeway", "trace"):
        raise ConfigError(f"scenario: expected 'freeway' or 'trace', got {scenario!r}")
    top = sections[None]
    if scenario == "trace":
        if not top.get("trace_path"):
            raise ConfigError("scenario 'trace' needs trace_path")
        if base_dir is not None and not Path(top["trace_path"]).is_absolute():
            top["trace_path"] = str(base_dir / top["trace_path"])
    else:
        top.pop("trace_path", None)
    try:
        grid = GridConfig(**sections["grid"])
        ch = sections["channel"]
        if "ibe_vector" not in ch:
            ch["ibe_vector"] = default_ibe_vector(grid.F)
        channel = ChannelConfig(**ch)
        sps = SpsPolicyConfig(**sections["sps"])
        freeway = FreewayConfig(**sections["freeway"])
        return SimConfig(grid=grid, channel=channel, sps=sps, freeway=freeway, **top)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def config_to_dict(cfg: SimConfig) -> dict:
    """Flat echo of ``cfg``; ``config_from_dict(config_to_dict(c)) == c``."""
    out = {}
    for key, (sec, attr) in _KEYS.items():
        obj = cfg if sec is None else getattr(cfg, sec)
        value = getattr(obj, attr)
        if isinstance(value, tuple):
            value = list(value)
        if key == "policy":
            value = value.value
        out[key] = value
    out["p_sigma_mw"] = cfg.channel.noise_floor_per_rb
    out["speed_min_mps"], out["speed_max_mps"] = cfg.freeway.speed_range
    out["scenario"] = cfg.scenario
    if cfg.trace_path is None:
        del out["trace_path"]
    return out


def parse_config(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of keys to values")
    try:
        return config_from_dict(data, base_dir=path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def dump_config(cfg: SimConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True)
