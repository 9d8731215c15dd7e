"""Link budget: pathloss, correlated shadowing, in-band emissions and SINR.

Powers are per resource block and linear (mW) unless a name says ``_db`` or
``_dbm``. Transmit power is uniform over the RBs of a subchannel, so per-RB
ratios are also per-subchannel ratios.

Reference pathloss (LOS, distances in m, ``fc`` in Hz)::

    free space   PL = 20 log10(d) + 20 log10(fc) + 20 log10(4 pi / c)
    WINNER+ B1   d_BP = 4 h'_t h'_r fc / c,   h' = h - 1
                 d <  d_BP: PL = 22.7 log10(d) + 41.0 + 20 log10(fc_GHz / 5)
                 d >= d_BP: PL = 40 log10(d) + 9.45 - 17.3 log10(h'_t)
                                 - 17.3 log10(h'_r) + 2.7 log10(fc_GHz / 5)
                 evaluated at max(d, 3 m)
    effective    max(free space, B1)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
SATURATED = math.inf  # power of a subframe the receiver could not monitor
B1_MIN_DISTANCE = 3.0

IBE_F3 = (1.0, 0.0047, 0.0015)
IBE_F4 = (1.0, 0.0047, 0.0015, 0.0005)


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def dbm_to_mw(x_dbm: float) -> float:
    return 10.0 ** (x_dbm / 10.0)


def mw_to_dbm(x_mw: float) -> float:
    return 10.0 * math.log10(x_mw)


def thermal_noise_dbm(bandwidth_hz: float = 180e3, noise_figure_db: float = 9.0) -> float:
    return -174.0 + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


def default_ibe_vector(F: int) -> tuple[float, ...]:
    if F <= 3:
        return IBE_F3[:F] if F < 3 else IBE_F3
    if F == 4:
        return IBE_F4
    raise ValueError(f"no default in-band emission vector for F={F}; set ibe_vector explicitly")


@dataclass(frozen=True)
class ChannelConfig:
    carrier_frequency: float = 5.9e9
    tx_power_per_rb: float = 6.67
    antenna_gain_tx: float = 3.0
    antenna_gain_rx: float = 3.0
    shadow_sigma: float = 7.0
    shadow_corr_distance: float = 10.0
    noise_floor_per_rb: float = field(default_factory=lambda: dbm_to_mw(thermal_noise_dbm()))
    ibe_vector: tuple[float, ...] = IBE_F3
    antenna_height_tx: float = 1.5
    antenna_height_rx: float = 1.5
    rho: float = 0.9402
    throughput_loss: float = 0.6

    def __post_init__(self):
        object.__setattr__(self, "ibe_vector", tuple(float(v) for v in self.ibe_vector))
        vec = self.ibe_vector
        if not vec or vec[0] != 1.0:
            raise ValueError("ibe_vector[0] must be exactly 1 (same sub-band)")
        if any(b > a for a, b in zip(vec, vec[1:])):
            raise ValueError("ibe_vector must be non-increasing")
        if any(v < 0 for v in vec):
            raise ValueError("ibe_vector entries must be non-negative")
        for name in ("carrier_frequency", "tx_power_per_rb", "noise_floor_per_rb",
                     "shadow_corr_distance"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be finite and > 0, got {v}")
        for name in ("antenna_gain_tx", "antenna_gain_rx"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not math.isfinite(self.shadow_sigma) or self.shadow_sigma < 0:
            raise ValueError(f"shadow_sigma must be >= 0, got {self.shadow_sigma}")
        if self.antenna_height_tx <= 1.0 or self.antenna_height_rx <= 1.0:
            raise ValueError("antenna heights must exceed 1 m (effective height h - 1 > 0)")
        decode_threshold(self.rho, self.throughput_loss)

    def check_grid(self, F: int) -> None:
        if len(self.ibe_vector) < F:
            raise ValueError(
                f"ibe_vector has {len(self.ibe_vector)} entries but F={F} sub-bands need {F}"
            )

    @property
    def gain_linear(self) -> float:
        return float(db_to_linear(self.antenna_gain_tx + self.antenna_gain_rx))

    @property
    def decode_threshold_db(self) -> float:
        return decode_threshold(self.rho, self.throughput_loss)


# -- pathloss ---------------------------------------------------------------

def _check_distance(distance):
    d = np.asarray(distance, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("distance must be > 0")
    return d


def free_space_pathloss_db(distance, fc: float):
    d = _check_distance(distance)
    out = 20 * np.log10(d) + 20 * math.log10(fc) + 20 * math.log10(4 * math.pi / SPEED_OF_LIGHT)
    return out if out.ndim else float(out)


def winner_b1_pathloss_db(distance, fc: float, h_tx: float = 1.5, h_rx: float = 1.5):
    d = np.maximum(_check_distance(distance), B1_MIN_DISTANCE)
    ht, hr = h_tx - 1.0, h_rx - 1.0
    fc_ghz = fc / 1e9
    d_bp = 4 * ht * hr * fc / SPEED_OF_LIGHT
    near = 22.7 * np.log10(d) + 41.0 + 20 * math.log10(fc_ghz / 5)
    far = (40 * np.log10(d) + 9.45 - 17.3 * math.log10(ht) - 17.3 * math.log10(hr)
           + 2.7 * math.log10(fc_ghz / 5))
    out = np.where(d < d_bp, near, far)
    return out if out.ndim else float(out)


def effective_pathloss_db(distance, fc: float, h_tx: float = 1.5, h_rx: float = 1.5):
    out = np.maximum(free_space_pathloss_db(distance, fc),
                     winner_b1_pathloss_db(distance, fc, h_tx, h_rx))
    return out if np.ndim(out) else float(out)


def free_space_pathloss(distance, fc: float):
    """Free-space attenuation as a linear factor (>= 1 beyond one wavelength)."""
    return db_to_linear(free_space_pathloss_db(distance, fc))[()]


def winner_b1_pathloss(distance, fc: float, h_tx: float = 1.5, h_rx: float = 1.5):
    return db_to_linear(winner_b1_pathloss_db(distance, fc, h_tx, h_rx))[()]


def effective_pathloss(distance, fc: float, h_tx: float = 1.5, h_rx: float = 1.5):
    return db_to_linear(effective_pathloss_db(distance, fc, h_tx, h_rx))[()]


def breakpoint_distance(fc: float, h_tx: float = 1.5, h_rx: float = 1.5) -> float:
    return 4 * (h_tx - 1.0) * (h_rx - 1.0) * fc / SPEED_OF_LIGHT


# -- shadowing --------------------------------------------------------------

Position = tuple[float, float]


@dataclass(frozen=True)
class LinkShadowState:
    last_value: float = 0.0
    last_positions: tuple[Position, Position] | None = None
    initialized: bool = False


def shadow_correlation(displacement, corr_distance: float):
    return np.exp(-np.asarray(displacement, dtype=float) / corr_distance)


def shadowing_sample(state: LinkShadowState, new_positions: tuple[Position, Position],
                     rng: np.random.Generator, cfg: ChannelConfig):
    """Advance one link's shadowing (dB) to ``new_positions``.

    Gauss-Markov update with correlation ``exp(-dd / corr_distance)``, where
    ``dd`` is the sum of the two endpoint displacements. The marginal stays
    N(0, sigma^2).
    """
    sigma = cfg.shadow_sigma
    if not state.initialized:
        value = float(rng.normal(0.0, sigma)) if sigma > 0 else 0.0
    else:
        (a0, b0), (a1, b1) = state.last_positions, new_positions
        dd = math.dist(a0, a1) + math.dist(b0, b1)
        r = math.exp(-dd / cfg.shadow_corr_distance)
        if r == 1.0:
            value = state.last_value
        else:
            z = float(rng.normal(0.0, sigma)) if sigma > 0 else 0.0
            value = r * state.last_value + math.sqrt(1 - r * r) * z
    return value, replace(state, last_value=value, last_positions=new_positions,
                          initialized=True)


class ShadowField:
    """Symmetric per-pair shadowing matrix (dB) for a whole population."""

    def __init__(self, values: np.ndarray):
        self.values = values

    @classmethod
    def fresh(cls, n: int, sigma: float, rng: np.random.Generator) -> "ShadowField":
        return cls(_symmetric_normal(n, sigma, rng))

    def advance(self, displacement: np.ndarray, sigma: float, corr_distance: float,
                rng: np.random.Generator) -> None:
        n = len(displacement)
        dd = displacement[:, None] + displacement[None, :]
        r = np.exp(-dd / corr_distance)
        z = _symmetric_normal(n, sigma, rng)
        self.values = r * self.values + np.sqrt(1 - r * r) * z

    def remap(self, keep_from: np.ndarray, keep_to: np.ndarray, n_new: int, sigma: float,
              rng: np.random.Generator) -> None:
        """Carry surviving pairs over to a new population layout; new pairs draw fresh."""
        out = _symmetric_normal(n_new, sigma, rng)
        if len(keep_from):
            out[np.ix_(keep_to, keep_to)] = self.values[np.ix_(keep_from, keep_from)]
        self.values = out


def _symmetric_normal(n: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(0.0, 1.0, size=(n, n)) * sigma
    z = np.triu(z, 1)
    return z + z.T


# -- received power ---------------------------------------------------------

def ibe_factor(p: int, f: int, cfg: ChannelConfig) -> float:
    """Leakage factor from an interferer in sub-band ``p`` into sub-band ``f`` (1-based)."""
    if p < 1 or f < 1:
        raise ValueError("sub-band indices are 1-based")
    offset = abs(p - f)
    if offset >= len(cfg.ibe_vector):
        raise ValueError(f"sub-band offset {offset} beyond ibe_vector of length "
                         f"{len(cfg.ibe_vector)}")
    return cfg.ibe_vector[offset]


def ibe_matrix(cfg: ChannelConfig, F: int) -> np.ndarray:
    """``M[p-1, f-1] = ibe_factor(p, f)``."""
    cfg.check_grid(F)
    idx = np.arange(F)
    return np.asarray(cfg.ibe_vector)[np.abs(idx[:, None] - idx[None, :])]


def received_rb_power(cfg: ChannelConfig, pathloss: float, shadow_db: float = 0.0,
                      p: int = 1, f: int = 1) -> float:
    """Per-RB power (mW) received in sub-band ``f`` from a transmitter in sub-band ``p``.

    ``pathloss`` is the linear attenuation factor.
    """
    shadow = 10.0 ** (shadow_db / 10.0)
    return ibe_factor(p, f, cfg) * cfg.tx_power_per_rb * cfg.gain_linear / (shadow * pathloss)


def link_pathloss(cfg: ChannelConfig, tx: Position, rx: Position) -> float:
    return effective_pathloss(math.dist(tx, rx), cfg.carrier_frequency,
                              cfg.antenna_height_tx, cfg.antenna_height_rx)


def link_gain_matrix(distance: np.ndarray, shadow_db: np.ndarray,
                     cfg: ChannelConfig) -> np.ndarray:
    """Co-channel received power ``G[i, j]`` at receiver i from transmitter j; zero diagonal."""
    n = distance.shape[0]
    d = distance.copy()
    np.fill_diagonal(d, 1.0)
    pl_db = effective_pathloss_db(np.maximum(d, 1e-3), cfg.carrier_frequency,
                                  cfg.antenna_height_tx, cfg.antenna_height_rx)
    g = cfg.tx_power_per_rb * cfg.gain_linear / db_to_linear(np.asarray(pl_db) + shadow_db)
    g[np.arange(n), np.arange(n)] = 0.0
    return g


@dataclass(frozen=True)
class Emitter:
    """A transmitter as seen by one receiver: its position, sub-band and link shadowing."""

    position: Position
    subband: int
    shadow_db: float = 0.0


def sense_subframe(rx_position: Position, rx_transmitted: bool,
                   transmitters: Iterable[Emitter], cfg: ChannelConfig, F: int) -> np.ndarray:
    """Per-sub-band sensed power (mW) of one subframe at one receiver.

    All ``F`` entries are SATURATED when the receiver transmitted in this
    subframe; otherwise noise plus every active transmitter's leakage.
    """
    if rx_transmitted:
        return np.full(F, SATURATED)
    out = np.full(F, cfg.noise_floor_per_rb)
    for tx in transmitters:
        pl = link_pathloss(cfg, tx.position, rx_position)
        for f in range(1, F + 1):
            out[f - 1] += received_rb_power(cfg, pl, tx.shadow_db, tx.subband, f)
    return out


# -- decoding ---------------------------------------------------------------

def decode_threshold(rho: float, lam: float) -> float:
    """SINR threshold (dB) for spectral efficiency ``rho`` at throughput-loss factor ``lam``."""
    if not rho > 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    if not 0 < lam <= 1:
        raise ValueError(f"lambda must be in (0, 1], got {lam}")
    return 10.0 * math.log10(2.0 ** (rho / lam) - 1.0)


@dataclass(frozen=True)
class SinrBreakdown:
    signal: float
    cci: float
    ibe: float
    noise: float

    @property
    def sinr_db(self) -> float:
        return 10.0 * math.log10(self.signal / (self.cci + self.ibe + self.noise))


def sinr(rx_position: Position, target: Emitter, others: Sequence[Emitter],
         cfg: ChannelConfig) -> SinrBreakdown:
    """SINR decomposition at a receiver for ``target``; ``others`` share its subframe."""
    f = target.subband
    signal = received_rb_power(cfg, link_pathloss(cfg, target.position, rx_position),
                               target.shadow_db, f, f)
    cci = ibe = 0.0
    for tx in others:
        pw = received_rb_power(cfg, link_pathloss(cfg, tx.position, rx_position),
                               tx.shadow_db, tx.subband, f)
        if tx.subband == f:
            cci += pw
        else:
            ibe += pw
    return SinrBreakdown(signal, cci, ibe, cfg.noise_floor_per_rb)
