"""Mode-4 semi-persistent scheduling: sensing averages, exclusion, selection.

Grids handled here are ``(F, K)`` arrays in mW, with ``SATURATED`` (``inf``)
marking subframes the vehicle could not monitor. Candidate sets are returned
as sorted arrays of flat indices (see :func:`cv2xsim.grid.linear_index`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from cv2xsim.channel import SATURATED, dbm_to_mw
from cv2xsim.grid import GridConfig, SubchannelId, from_linear, linear_index

HISTORY_WINDOWS = 10
T_SPS_SET = tuple(range(500, 1501, 100))


class Policy(str, Enum):
    STANDARD = "standard"
    GREEDY = "greedy"
    RANDOM = "random"


@dataclass(frozen=True)
class SpsPolicyConfig:
    alpha: float = 1.0
    p_keep: float = 0.0
    rsrp_threshold_dbm: float = -128.0
    threshold_step_db: float = 3.0
    candidate_floor_fraction: float = 0.2
    selection_pool_fraction: float = 0.2
    policy: Policy = Policy.STANDARD
    t_sps_set: tuple[int, ...] = T_SPS_SET

    def __post_init__(self):
        try:
            object.__setattr__(self, "policy", Policy(self.policy))
        except ValueError:
            raise ValueError(f"policy must be one of {[p.value for p in Policy]}, "
                             f"got {self.policy!r}") from None
        object.__setattr__(self, "t_sps_set", tuple(int(t) for t in self.t_sps_set))
        _check_alpha(self.alpha)
        if not 0 <= self.p_keep < 1:
            raise ValueError(f"p_keep must be in [0, 1), got {self.p_keep}")
        if not self.threshold_step_db > 0:
            raise ValueError("threshold_step_db must be > 0")
        for name in ("candidate_floor_fraction", "selection_pool_fraction"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if not self.t_sps_set or any(t <= 0 for t in self.t_sps_set):
            raise ValueError("t_sps_set must be a non-empty set of positive durations")

    def check_window(self, window_ms: int) -> None:
        bad = [t for t in self.t_sps_set if t % window_ms]
        if bad:
            raise ValueError(f"t_sps_set values {bad} are not multiples of window_ms={window_ms}")


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")


@dataclass(frozen=True)
class Reservation:
    subchannel: SubchannelId
    windows_remaining: int
    t_sps_ms: int


class SensingHistory:
    """Last ``HISTORY_WINDOWS`` sensed grids, most recent first.

    Slot ``l - 1`` holds window ``n - l``. PSSCH-RSRP and RSSI have the same
    per-RB value under uniform transmit power, so both accessors read one
    buffer.
    """

    def __init__(self, grid: GridConfig, fill: float = SATURATED):
        self.grid = grid
        self.buffer = np.full((HISTORY_WINDOWS, grid.F, grid.K), fill)
        self.count = 0

    @classmethod
    def from_array(cls, grid: GridConfig, buffer: np.ndarray, count: int = HISTORY_WINDOWS):
        h = cls.__new__(cls)
        h.grid = grid
        h.buffer = buffer.reshape(HISTORY_WINDOWS, grid.F, grid.K)
        h.count = count
        return h

    def push(self, snapshot: np.ndarray) -> None:
        self.buffer[1:] = self.buffer[:-1]
        self.buffer[0] = snapshot
        self.count = min(self.count + 1, HISTORY_WINDOWS)

    @property
    def full(self) -> bool:
        return self.count >= HISTORY_WINDOWS

    @property
    def rsrp(self) -> np.ndarray:
        return self.buffer

    @property
    def rssi(self) -> np.ndarray:
        return self.buffer


def history_weights(alpha: float, n: int = HISTORY_WINDOWS) -> np.ndarray:
    """Normalised weights ``alpha**l / sum(alpha**l)`` for ``l = 1..n``."""
    _check_alpha(alpha)
    w = alpha ** np.arange(1, n + 1, dtype=float)
    return w / w.sum()


def weighted_average(samples, alpha: float, axis: int = 0):
    """Exponentially weighted mean of samples ordered most recent first.

    ``alpha = 1`` gives the plain arithmetic mean. Any SATURATED sample along
    ``axis`` makes the result SATURATED.
    """
    x = np.asarray(samples, dtype=float)
    x = np.moveaxis(x, axis, 0)
    w = history_weights(alpha, x.shape[0])
    if alpha == 1.0:
        w = None
    sat = np.isinf(x).any(axis=0)
    finite = np.where(np.isinf(x), 0.0, x)
    out = np.average(finite, axis=0, weights=w)
    out = np.where(sat, SATURATED, out)
    return out if out.ndim else float(out)


def average_grids(history: SensingHistory, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    avg_rsrp = weighted_average(history.rsrp, alpha)
    avg_rssi = avg_rsrp if history.rssi is history.rsrp else weighted_average(history.rssi, alpha)
    return avg_rsrp, avg_rssi


def candidate_floor(cfg: SpsPolicyConfig, grid: GridConfig) -> int:
    return math.ceil(cfg.candidate_floor_fraction * grid.size - 1e-9)


def pool_size(cfg: SpsPolicyConfig, grid: GridConfig) -> int:
    # 0.2 * 100F = 20F subchannels with the default 100-subframe window
    return math.ceil(cfg.selection_pool_fraction * grid.size - 1e-9)


def stage2_candidates(avg_rsrp: np.ndarray, cfg: SpsPolicyConfig,
                      grid: GridConfig) -> np.ndarray:
    """Flat indices passing the RSRP exclusion, relaxing the threshold as needed.

    The threshold rises by ``threshold_step_db`` until at least the candidate
    floor qualifies; SATURATED entries never qualify. If fewer finite entries
    exist than the floor, all of them are returned.
    """
    rsrp = np.asarray(avg_rsrp, dtype=float).reshape(-1)
    finite = np.isfinite(rsrp)
    need = min(candidate_floor(cfg, grid), int(finite.sum()))
    gamma_dbm = cfg.rsrp_threshold_dbm
    while True:
        mask = finite & (rsrp < dbm_to_mw(gamma_dbm))
        if mask.sum() >= need:
            return np.flatnonzero(mask)
        gamma_dbm += cfg.threshold_step_db


def rank_candidates(candidates: np.ndarray, avg_rssi: np.ndarray) -> np.ndarray:
    """Candidates sorted by ascending RSSI, ties broken by flat index."""
    cands = np.sort(np.asarray(candidates, dtype=int))
    rssi = np.asarray(avg_rssi, dtype=float).reshape(-1)[cands]
    return cands[np.argsort(rssi, kind="stable")]


def stage3_select(candidates: np.ndarray, avg_rssi: np.ndarray, cfg: SpsPolicyConfig,
                  grid: GridConfig, rng: np.random.Generator) -> tuple[int, int]:
    """Pick uniformly among the lowest-RSSI pool; returns ``(flat index, rank)``."""
    if len(candidates) == 0:
        raise ValueError("empty candidate set")
    ranked = rank_candidates(candidates, avg_rssi)
    pool = ranked[: min(pool_size(cfg, grid), len(ranked))]
    rank = int(rng.integers(len(pool)))
    return int(pool[rank]), rank


def baseline_select(policy: Policy, avg_rssi: np.ndarray, rng: np.random.Generator) -> int:
    """Greedy (lowest RSSI) or uniformly random choice over all monitored subchannels."""
    rssi = np.asarray(avg_rssi, dtype=float).reshape(-1)
    allowed = np.flatnonzero(np.isfinite(rssi))
    if len(allowed) == 0:
        raise ValueError("every subchannel is SATURATED")
    policy = Policy(policy)
    if policy is Policy.RANDOM:
        return int(allowed[rng.integers(len(allowed))])
    if policy is Policy.GREEDY:
        return int(np.argmin(rssi))  # first minimum is the lowest flat index
    raise ValueError(f"{policy} is not a baseline policy")


def draw_tsps(rng: np.random.Generator, t_sps_set=T_SPS_SET) -> int:
    return int(t_sps_set[rng.integers(len(t_sps_set))])


@dataclass(frozen=True)
class Selection:
    """What happened at one reservation expiry."""

    kept: bool
    chosen: int
    n_candidates: int = 0
    pool: int = 0
    rank: int = 0


def new_reservation(sid: SubchannelId, rng: np.random.Generator, cfg: SpsPolicyConfig,
                    window_ms: int) -> Reservation:
    t = draw_tsps(rng, cfg.t_sps_set)
    return Reservation(sid, t // window_ms, t)


def select_subchannel(history: SensingHistory, cfg: SpsPolicyConfig, grid: GridConfig,
                      rng: np.random.Generator) -> Selection:
    avg_rsrp, avg_rssi = average_grids(history, cfg.alpha)
    if cfg.policy is Policy.STANDARD:
        cands = stage2_candidates(avg_rsrp, cfg, grid)
        chosen, rank = stage3_select(cands, avg_rssi, cfg, grid, rng)
        pool = min(pool_size(cfg, grid), len(cands))
        return Selection(False, chosen, len(cands), pool, rank)
    chosen = baseline_select(cfg.policy, avg_rssi, rng)
    return Selection(False, chosen)


def maybe_reselect(current: Reservation, history: SensingHistory, cfg: SpsPolicyConfig,
                   grid: GridConfig, rng: np.random.Generator) -> tuple[Reservation, Selection]:
    """Handle an expired reservation: keep with probability ``p_keep``, else reselect.

    A fresh reservation lifetime is drawn either way.
    """
    if rng.random() < cfg.p_keep:
        sel = Selection(True, linear_index(current.subchannel, grid))
    else:
        sel = select_subchannel(history, cfg, grid, rng)
    return new_reservation(from_linear(sel.chosen, grid), rng, cfg, grid.window_ms), sel
