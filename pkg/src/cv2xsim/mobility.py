"""Vehicle placement and movement: Poisson freeway generator and CSV trace replay.

Trace CSV format (UTF-8, ``.`` decimal separator)::

    t_ms,vehicle_id,x_m,y_m,speed_mps
    0,1,0.0,0.0,30.0
    0,2,25.0,3.5,-28.0
    100,1,3.0,0.0,30.0

Rows are grouped by non-decreasing ``t_ms``; ``t_ms`` is a multiple of the
window length. A ``(t_ms, vehicle_id)`` pair may appear once. Vehicles may
join or leave between windows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np

TRACE_COLUMNS = ("t_ms", "vehicle_id", "x_m", "y_m", "speed_mps")


@dataclass(frozen=True)
class Vehicle:
    id: int
    position: tuple[float, float]
    lane: int
    speed: float


@dataclass(frozen=True)
class FreewayConfig:
    lanes_per_direction: int = 3
    lane_width: float = 3.5
    median_width: float = 4.0
    road_length: float = 6000.0
    density_per_km: float = 100.0
    speed_range: tuple[float, float] = (100 / 3.6, 140 / 3.6)
    wraparound: bool = True

    def __post_init__(self):
        object.__setattr__(self, "speed_range", tuple(float(s) for s in self.speed_range))
        if self.lanes_per_direction < 1:
            raise ValueError("lanes_per_direction must be >= 1")
        if not self.density_per_km > 0:
            raise ValueError(f"density_per_km must be > 0, got {self.density_per_km}")
        if self.road_length < 0:
            raise ValueError(f"road_length must be >= 0, got {self.road_length}")
        lo, hi = self.speed_range
        if not 0 <= lo <= hi:
            raise ValueError(f"speed_range must satisfy 0 <= min <= max, got {self.speed_range}")

    @property
    def lanes(self) -> int:
        return 2 * self.lanes_per_direction

    def lane_y(self, lane: int) -> float:
        """Lanes ``0..L-1`` drive towards +x above the median, ``L..2L-1`` towards -x below."""
        L = self.lanes_per_direction
        offset = self.median_width / 2 + self.lane_width * ((lane % L) + 0.5)
        return offset if lane < L else -offset


def generate_freeway(cfg: FreewayConfig, rng: np.random.Generator) -> list[Vehicle]:
    rate_per_m = cfg.density_per_km / cfg.lanes / 1000.0
    vehicles = []
    lo, hi = cfg.speed_range
    for lane in range(cfg.lanes):
        n = rng.poisson(rate_per_m * cfg.road_length) if cfg.road_length > 0 else 0
        xs = np.sort(rng.uniform(0.0, cfg.road_length, size=n))
        speeds = rng.uniform(lo, hi, size=n)
        sign = 1.0 if lane < cfg.lanes_per_direction else -1.0
        y = cfg.lane_y(lane)
        for x, v in zip(xs, speeds):
            vehicles.append(Vehicle(len(vehicles), (float(x), y), lane, sign * float(v)))
    return vehicles


def advance(vehicles: list[Vehicle], dt: float, road_length: float | None = None,
            wraparound: bool = True) -> list[Vehicle]:
    """Move vehicles along x for ``dt`` seconds.

    With ``road_length`` set, positions wrap modulo the road when
    ``wraparound`` is on, otherwise vehicles leaving ``[0, road_length)`` are dropped.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    out = []
    for v in vehicles:
        x = v.position[0] + v.speed * dt
        if road_length is not None:
            if wraparound:
                x = x % road_length
            elif not 0 <= x < road_length:
                continue
        out.append(replace(v, position=(x, v.position[1])))
    return out


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TraceFrame:
    t_ms: int
    ids: np.ndarray
    positions: np.ndarray  # (n, 2)
    speeds: np.ndarray


@dataclass(frozen=True)
class Trace:
    frames: tuple[TraceFrame, ...]
    window_ms: int = 100

    def __len__(self):
        return len(self.frames)

    @property
    def start_ms(self) -> int:
        return self.frames[0].t_ms if self.frames else 0

    def at(self, t_ms: int) -> TraceFrame:
        """Frame for absolute time ``t_ms``; empty when the trace has no rows there."""
        idx = self._index.get(t_ms)
        if idx is None:
            return TraceFrame(t_ms, np.zeros(0, int), np.zeros((0, 2)), np.zeros(0))
        return self.frames[idx]

    @cached_property
    def _index(self) -> dict[int, int]:
        return {fr.t_ms: i for i, fr in enumerate(self.frames)}

    def positions(self) -> dict[int, dict[int, tuple[float, float]]]:
        return {fr.t_ms: {int(i): (float(x), float(y)) for i, (x, y) in zip(fr.ids, fr.positions)}
                for fr in self.frames}


def load_trace(path, window_ms: int = 100) -> Trace:
    path = Path(path)
    rows_by_t: dict[int, dict[int, tuple[float, float, float]]] = {}
    last_t = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return Trace((), window_ms)
        header = [h.strip() for h in header]
        if tuple(header) != TRACE_COLUMNS:
            raise TraceFormatError(f"{path}: row 1: expected header {','.join(TRACE_COLUMNS)}, "
                                   f"got {','.join(header)}")
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) > len(TRACE_COLUMNS):
                raise TraceFormatError(f"{path}: row {rowno}: {len(row)} fields, "
                                       f"expected {len(TRACE_COLUMNS)}")
            values = {}
            for i, col in enumerate(TRACE_COLUMNS):
                if i >= len(row) or not row[i].strip():
                    raise TraceFormatError(f"{path}: row {rowno}: missing column '{col}'")
                values[col] = _parse(row[i], col, path, rowno)
            t, vid = int(values["t_ms"]), int(values["vehicle_id"])
            if t % window_ms:
                raise TraceFormatError(f"{path}: row {rowno}: t_ms={t} is not a multiple of "
                                       f"window_ms={window_ms}")
            if last_t is not None and t < last_t:
                raise TraceFormatError(f"{path}: row {rowno}: t_ms={t} goes back in time "
                                       f"(previous {last_t})")
            last_t = t
            frame = rows_by_t.setdefault(t, {})
            if vid in frame:
                raise TraceFormatError(f"{path}: row {rowno}: duplicate vehicle_id={vid} "
                                       f"at t_ms={t}")
            frame[vid] = (values["x_m"], values["y_m"], values["speed_mps"])
    frames = []
    for t, frame in rows_by_t.items():
        ids = np.array(sorted(frame), dtype=int)
        data = np.array([frame[i] for i in ids], dtype=float).reshape(-1, 3)
        frames.append(TraceFrame(t, ids, data[:, :2], data[:, 2]))
    return Trace(tuple(frames), window_ms)


def _parse(text: str, col: str, path: Path, rowno: int):
    text = text.strip()
    try:
        if col in ("t_ms", "vehicle_id"):
            return int(text)
        value = float(text)
    except ValueError:
        raise TraceFormatError(f"{path}: row {rowno}: column '{col}' is not a number: "
                               f"{text!r}") from None
    if not math.isfinite(value):
        raise TraceFormatError(f"{path}: row {rowno}: column '{col}' is not finite")
    return value


def write_trace(path, frames) -> None:
    """Write ``{t_ms: {vehicle_id: (x, y, speed)}}`` in the trace CSV format."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for t in sorted(frames):
            for vid in sorted(frames[t]):
                x, y, s = frames[t][vid]
                w.writerow([t, vid, repr(float(x)), repr(float(y)), repr(float(s))])
