"""Time/frequency resource grid of one scheduling window.

Sub-band ``f`` and subframe ``k`` are 1-based, as in the usual ``s(f, k)``
notation; flat indices are 0-based and sub-band major, so that
``index = (f - 1) * K + (k - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class GridConfig:
    F: int = 3
    K: int = 100
    rbs_per_subchannel: int = 30
    window_ms: int = 100

    def __post_init__(self):
        if self.F < 1:
            raise ValueError(f"F must be >= 1, got {self.F}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.rbs_per_subchannel < 1:
            raise ValueError("rbs_per_subchannel must be >= 1")
        # one subframe lasts 1 ms
        if self.K != self.window_ms:
            raise ValueError(
                f"K ({self.K}) must equal window_ms ({self.window_ms}) with 1 ms subframes"
            )

    @property
    def size(self) -> int:
        return self.F * self.K


@dataclass(frozen=True, order=True)
class SubchannelId:
    f: int
    k: int

    def check(self, cfg: GridConfig) -> "SubchannelId":
        if not (1 <= self.f <= cfg.F and 1 <= self.k <= cfg.K):
            raise ValueError(f"{self} outside grid F={cfg.F}, K={cfg.K}")
        return self

    def __str__(self):
        return f"s({self.f},{self.k})"


def total_subchannels(cfg: GridConfig) -> int:
    return cfg.F * cfg.K


def linear_index(sid: SubchannelId, cfg: GridConfig) -> int:
    sid.check(cfg)
    return (sid.f - 1) * cfg.K + (sid.k - 1)


def from_linear(index: int, cfg: GridConfig) -> SubchannelId:
    if not 0 <= index < cfg.size:
        raise ValueError(f"flat index {index} outside [0, {cfg.size})")
    f0, k0 = divmod(int(index), cfg.K)
    return SubchannelId(f0 + 1, k0 + 1)


def same_subframe(a: SubchannelId, b: SubchannelId) -> bool:
    return a.k == b.k
