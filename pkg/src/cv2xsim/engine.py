"""Window-stepped simulation loop.

Each 100 ms window every vehicle broadcasts once on its reserved subchannel.
All vehicles sense the grid, receptions within the largest awareness
distance are classified, and at the end of the window histories are pushed,
reservation counters run down, expired reservations are renewed or
reselected, and vehicles move.

Randomness comes from independent substreams of the root seed keyed by
purpose, vehicle id and window, so results depend only on (config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from cv2xsim.channel import ShadowField, ibe_matrix, link_gain_matrix
from cv2xsim.config import SimConfig, config_to_dict
from cv2xsim.grid import SubchannelId, from_linear, linear_index
from cv2xsim.metrics import EventBatch, PrrTable, SimulationReport, classify_arrays
from cv2xsim.mobility import Trace, Vehicle, generate_freeway, load_trace
from cv2xsim.sps import (
    HISTORY_WINDOWS,
    Reservation,
    Selection,
    SensingHistory,
    draw_tsps,
    maybe_reselect,
    new_reservation,
)

__all__ = ["SimConfig", "World", "WindowResult", "init_world", "step_window", "run"]


class Stream(IntEnum):
    SCENARIO = 1
    INITIAL = 2
    SHADOW = 3
    SHADOW_NEW = 4
    SELECT = 5


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class SelectionRecord:
    vehicle_id: int
    window: int
    selection: Selection
    blocked_subframes: tuple[int, ...]  # subframes SATURATED in the averaged history
    warmup: bool = False


@dataclass
class World:
    """Population state, one row per vehicle present in the current window."""

    cfg: SimConfig
    ids: np.ndarray
    pos: np.ndarray
    speed: np.ndarray
    cell: np.ndarray  # reserved flat subchannel index
    remaining: np.ndarray
    t_sps: np.ndarray
    history: np.ndarray  # (n, HISTORY_WINDOWS, F*K), most recent first
    history_count: np.ndarray
    shadow: ShadowField
    window: int = 0
    trace: Trace | None = None

    def __len__(self):
        return len(self.ids)

    def slot(self, vehicle_id: int) -> int:
        hits = np.flatnonzero(self.ids == vehicle_id)
        if not len(hits):
            raise KeyError(vehicle_id)
        return int(hits[0])

    def reservation(self, vehicle_id: int) -> Reservation:
        i = self.slot(vehicle_id)
        return Reservation(from_linear(int(self.cell[i]), self.cfg.grid),
                           int(self.remaining[i]), int(self.t_sps[i]))

    def sensing_history(self, vehicle_id: int) -> SensingHistory:
        i = self.slot(vehicle_id)
        return SensingHistory.from_array(self.cfg.grid, self.history[i],
                                         int(self.history_count[i]))

    @property
    def subframe(self) -> np.ndarray:
        """1-based transmit subframe of every vehicle."""
        return self.cell % self.cfg.grid.K + 1

    @property
    def subband(self) -> np.ndarray:
        return self.cell // self.cfg.grid.K + 1

    def distances(self) -> np.ndarray:
        delta = self.pos[:, None, :] - self.pos[None, :, :]
        fw = self.cfg.freeway
        if self.trace is None and fw.wraparound and fw.road_length > 0:
            dx = delta[..., 0]
            delta[..., 0] = dx - fw.road_length * np.round(dx / fw.road_length)
        return np.hypot(delta[..., 0], delta[..., 1])


@dataclass
class WindowResult:
    window: int
    events: EventBatch
    selections: list[SelectionRecord] = field(default_factory=list)
    transmitters: int = 0


def _initial_reservation(cfg: SimConfig, vehicle_id: int) -> Reservation:
    rng = substream(cfg.seed, Stream.INITIAL, vehicle_id)
    sid = from_linear(int(rng.integers(cfg.grid.size)), cfg.grid)
    t = draw_tsps(rng, cfg.sps.t_sps_set)
    return Reservation(sid, int(rng.integers(1, t // cfg.grid.window_ms + 1)), t)


def init_world(cfg: SimConfig, vehicles: list[Vehicle] | None = None,
               reservations: dict[int, Reservation] | None = None) -> World:
    """Initial population with random reservations and empty histories.

    ``vehicles`` and ``reservations`` override the scenario and the random
    initial grants (for constructed test geometries).
    """
    trace = None
    if vehicles is None:
        if cfg.trace_path is not None:
            trace = load_trace(cfg.trace_path, cfg.grid.window_ms)
            fr = trace.at(trace.start_ms)
            vehicles = [Vehicle(int(i), (float(x), float(y)), 0, float(s))
                        for i, (x, y), s in zip(fr.ids, fr.positions, fr.speeds)]
        else:
            vehicles = generate_freeway(cfg.freeway, substream(cfg.seed, Stream.SCENARIO))
    ids = np.array([v.id for v in vehicles], dtype=np.int64)
    if len(set(ids.tolist())) != len(ids):
        raise ValueError("vehicle ids must be unique")
    n = len(ids)
    res = [(reservations or {}).get(int(v), None) or _initial_reservation(cfg, int(v))
           for v in ids]
    S = cfg.grid.size
    return World(
        cfg=cfg,
        ids=ids,
        pos=np.array([v.position for v in vehicles], dtype=float).reshape(n, 2),
        speed=np.array([v.speed for v in vehicles], dtype=float),
        cell=np.array([linear_index(r.subchannel, cfg.grid) for r in res], dtype=np.int64),
        remaining=np.array([r.windows_remaining for r in res], dtype=np.int64),
        t_sps=np.array([r.t_sps_ms for r in res], dtype=np.int64),
        history=np.full((n, HISTORY_WINDOWS, S), np.inf),
        history_count=np.zeros(n, dtype=np.int64),
        shadow=ShadowField.fresh(n, cfg.channel.shadow_sigma,
                                 substream(cfg.seed, Stream.SHADOW, 0)),
        trace=trace,
    )


def _empty_batch(window: int, noise: float) -> EventBatch:
    z = np.zeros(0)
    zi = np.zeros(0, dtype=np.int64)
    return EventBatch(window, zi, zi, z, zi, zi, z, z, z, noise, np.zeros(0, dtype=np.int8))


def sense_and_receive(world: World) -> tuple[np.ndarray, EventBatch]:
    """Sensed grid of every vehicle for this window, and the reception events."""
    cfg = world.cfg
    ch, grid = cfg.channel, cfg.grid
    n, F, K = len(world), grid.F, grid.K
    noise = ch.noise_floor_per_rb
    dist = world.distances()
    gain = link_gain_matrix(dist, world.shadow.values, ch)

    k0 = world.subframe - 1
    f0 = world.subband - 1
    rows = np.arange(n)
    co = np.zeros((n, F * K))
    co[rows, world.cell] = 1.0
    leak = np.zeros((n, F * K))
    ibe = ibe_matrix(ch, F)
    for f in range(F):
        factor = ibe[f0, f]
        factor[f0 == f] = 0.0
        leak[rows, f * K + k0] = factor
    cci_cell = gain @ co
    ibe_cell = gain @ leak

    sensed = noise + cci_cell + ibe_cell
    sensed = sensed.reshape(n, F, K)
    sensed[rows, :, k0] = np.inf
    sensed = sensed.reshape(n, F * K)

    mask = dist <= max(cfg.awareness_distances)
    mask[rows, rows] = False
    rx, tx = np.nonzero(mask)
    c = world.cell[tx]
    signal = gain[rx, tx]
    cci = np.maximum(cci_cell[rx, c] - signal, 0.0)
    leak_in = ibe_cell[rx, c]
    verdict = classify_arrays(signal, cci, leak_in, noise, ch.decode_threshold_db,
                              world.cell[rx] == c, k0[rx] == k0[tx])
    events = EventBatch(world.window, world.ids[tx], world.ids[rx], dist[rx, tx], c,
                        k0[rx] + 1, signal, cci, leak_in, noise, verdict)
    return sensed, events


def _expire(world: World) -> list[SelectionRecord]:
    cfg = world.cfg
    grid = cfg.grid
    records = []
    for i in np.flatnonzero(world.remaining <= 0):
        vid = int(world.ids[i])
        rng = substream(cfg.seed, Stream.SELECT, vid, world.window)
        current = Reservation(from_linear(int(world.cell[i]), grid), 0, int(world.t_sps[i]))
        blocked = np.isinf(world.history[i]).any(axis=0).reshape(grid.F, grid.K).any(axis=0)
        blocked_k = tuple(int(k) + 1 for k in np.flatnonzero(blocked))
        if world.history_count[i] < HISTORY_WINDOWS:
            # not enough sensing yet: renew in place
            res = new_reservation(current.subchannel, rng, cfg.sps, grid.window_ms)
            sel = Selection(True, int(world.cell[i]))
            warm = True
        else:
            hist = SensingHistory.from_array(grid, world.history[i], HISTORY_WINDOWS)
            res, sel = maybe_reselect(current, hist, cfg.sps, grid, rng)
            warm = False
        world.cell[i] = linear_index(res.subchannel, grid)
        world.remaining[i] = res.windows_remaining
        world.t_sps[i] = res.t_sps_ms
        records.append(SelectionRecord(vid, world.window, sel, blocked_k, warm))
    return records


def _move(world: World) -> None:
    cfg = world.cfg
    dt = cfg.grid.window_ms / 1000.0
    nxt = world.window + 1
    if world.trace is None:
        fw = cfg.freeway
        x = world.pos[:, 0] + world.speed * dt
        disp = np.abs(world.speed * dt)
        if fw.wraparound and fw.road_length > 0:
            x = np.mod(x, fw.road_length)
            keep = np.ones(len(world), dtype=bool)
        else:
            keep = (x >= 0) & (x < fw.road_length)
        world.pos[:, 0] = x
        if not keep.all():
            _reshape(world, world.ids[keep], world.pos[keep], world.speed[keep])
            disp = disp[keep]
    else:
        fr = world.trace.at(world.trace.start_ms + nxt * cfg.grid.window_ms)
        old = {int(v): i for i, v in enumerate(world.ids)}
        disp = np.zeros(len(fr.ids))
        for j, v in enumerate(fr.ids):
            i = old.get(int(v))
            if i is not None:
                disp[j] = np.hypot(*(fr.positions[j] - world.pos[i]))
        _reshape(world, fr.ids, fr.positions, fr.speeds)
    world.shadow.advance(disp, cfg.channel.shadow_sigma, cfg.channel.shadow_corr_distance,
                         substream(cfg.seed, Stream.SHADOW, nxt))


def _reshape(world: World, ids: np.ndarray, pos: np.ndarray, speed: np.ndarray) -> None:
    """Switch to a new population; survivors keep their state, newcomers start fresh."""
    cfg = world.cfg
    nxt = world.window + 1
    old = {int(v): i for i, v in enumerate(world.ids)}
    ids = np.asarray(ids, dtype=np.int64)
    keep_to = np.array([j for j, v in enumerate(ids) if int(v) in old], dtype=np.int64)
    keep_from = np.array([old[int(ids[j])] for j in keep_to], dtype=np.int64)
    n = len(ids)
    S = cfg.grid.size
    cell = np.zeros(n, dtype=np.int64)
    remaining = np.zeros(n, dtype=np.int64)
    t_sps = np.zeros(n, dtype=np.int64)
    history = np.full((n, HISTORY_WINDOWS, S), np.inf)
    count = np.zeros(n, dtype=np.int64)
    cell[keep_to] = world.cell[keep_from]
    remaining[keep_to] = world.remaining[keep_from]
    t_sps[keep_to] = world.t_sps[keep_from]
    history[keep_to] = world.history[keep_from]
    count[keep_to] = world.history_count[keep_from]
    for j in sorted(set(range(n)) - set(keep_to.tolist())):
        r = _initial_reservation(cfg, int(ids[j]))
        cell[j] = linear_index(r.subchannel, cfg.grid)
        remaining[j], t_sps[j] = r.windows_remaining, r.t_sps_ms
    world.shadow.remap(keep_from, keep_to, n, cfg.channel.shadow_sigma,
                       substream(cfg.seed, Stream.SHADOW_NEW, nxt))
    world.ids, world.pos, world.speed = ids, np.array(pos, dtype=float).reshape(n, 2), \
        np.array(speed, dtype=float)
    world.cell, world.remaining, world.t_sps = cell, remaining, t_sps
    world.history, world.history_count = history, count


def step_window(world: World) -> WindowResult:
    """Advance ``world`` by one window and return what happened in it."""
    cfg = world.cfg
    n = len(world)
    if n == 0:
        events = _empty_batch(world.window, cfg.channel.noise_floor_per_rb)
        records = []
    else:
        sensed, events = sense_and_receive(world)
        world.history[:, 1:] = world.history[:, :-1]
        world.history[:, 0] = sensed
        world.history_count = np.minimum(world.history_count + 1, HISTORY_WINDOWS)
        world.remaining -= 1
        records = _expire(world)
    result = WindowResult(world.window, events, records, n)
    _move(world)
    world.window += 1
    return result


def run(cfg: SimConfig, world: World | None = None) -> SimulationReport:
    """Simulate ``cfg.duration_ms`` and report PRR over the post-warm-up windows."""
    world = world or init_world(cfg)
    table = PrrTable(cfg.awareness_distances, cfg.ring_width)
    for n in range(cfg.windows):
        res = step_window(world)
        if n >= cfg.warmup_windows:
            table.add(res.events.distance, res.events.verdict)
    return SimulationReport(table, cfg.seed, cfg.windows - cfg.warmup_windows,
                            config_to_dict(cfg))
