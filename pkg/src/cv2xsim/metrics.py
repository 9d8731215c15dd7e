"""Reception verdicts, PRR over disks and rings, and report serialisation.

Losses are attributed by the first matching rule:

1. ``HD_SC``  receiver transmitted on the same subchannel;
2. ``HD_SF``  receiver transmitted in the same subframe;
3. ``PROPAGATION``  signal / noise below threshold;
4. ``CCI``  signal / (noise + co-channel) below threshold;
5. ``IBE``  signal / (noise + co-channel + in-band emissions) below threshold.

Everything else is decoded, so a verdict is ``DECODED`` exactly when the full
SINR reaches the threshold.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Iterator

import numpy as np

from cv2xsim.channel import SinrBreakdown


class Verdict(IntEnum):
    DECODED = 0
    HD_SC = 1
    HD_SF = 2
    PROPAGATION = 3
    CCI = 4
    IBE = 5


ErrorClass = Verdict
ERROR_CLASSES = (Verdict.HD_SF, Verdict.HD_SC, Verdict.PROPAGATION, Verdict.CCI, Verdict.IBE)
VARIANTS = ("disk", "ring")
# report column order
COLUMNS = ("prr", "hd_sf", "hd_sc", "propagation", "cci", "ibe")
_COLUMN_VERDICT = dict(zip(COLUMNS, (Verdict.DECODED,) + ERROR_CLASSES))


def classify_arrays(signal, cci, ibe, noise, threshold_db: float,
                    same_subchannel, same_subframe) -> np.ndarray:
    signal = np.asarray(signal, dtype=float)
    cci = np.asarray(cci, dtype=float)
    ibe = np.asarray(ibe, dtype=float)
    noise = np.asarray(noise, dtype=float)
    with np.errstate(divide="ignore"):
        snr = 10 * np.log10(signal / noise)
        sir_cci = 10 * np.log10(signal / (noise + cci))
        sinr = 10 * np.log10(signal / (noise + cci + ibe))
    out = np.full(np.broadcast(signal, cci, ibe, noise).shape, Verdict.DECODED, dtype=np.int8)
    out[sinr < threshold_db] = Verdict.IBE
    out[sir_cci < threshold_db] = Verdict.CCI
    out[snr < threshold_db] = Verdict.PROPAGATION
    out[np.asarray(same_subframe, dtype=bool)] = Verdict.HD_SF
    out[np.asarray(same_subchannel, dtype=bool)] = Verdict.HD_SC
    return out


def classify(breakdown: SinrBreakdown, threshold_db: float, same_subchannel: bool = False,
             same_subframe: bool = False) -> Verdict:
    v = classify_arrays(breakdown.signal, breakdown.cci, breakdown.ibe, breakdown.noise,
                        threshold_db, same_subchannel, same_subframe or same_subchannel)
    return Verdict(int(v))


@dataclass(frozen=True)
class ReceptionEvent:
    window: int
    tx: int
    rx: int
    distance: float
    subchannel: int
    breakdown: SinrBreakdown
    rx_transmit_subframe: int | None
    verdict: Verdict


@dataclass
class EventBatch:
    """Reception events of one window as parallel arrays (vehicle ids, flat subchannels)."""

    window: int
    tx: np.ndarray
    rx: np.ndarray
    distance: np.ndarray
    subchannel: np.ndarray
    rx_subframe: np.ndarray  # 1-based; the receiver's own transmit subframe
    signal: np.ndarray
    cci: np.ndarray
    ibe: np.ndarray
    noise: float
    verdict: np.ndarray

    def __len__(self):
        return len(self.tx)

    def __iter__(self) -> Iterator[ReceptionEvent]:
        for i in range(len(self)):
            yield ReceptionEvent(
                self.window, int(self.tx[i]), int(self.rx[i]), float(self.distance[i]),
                int(self.subchannel[i]),
                SinrBreakdown(float(self.signal[i]), float(self.cci[i]), float(self.ibe[i]),
                              float(self.noise)),
                int(self.rx_subframe[i]), Verdict(int(self.verdict[i])))


def _arrays(events) -> tuple[np.ndarray, np.ndarray]:
    """``(distance, verdict)`` arrays from batches, single events, or a pair of arrays."""
    if isinstance(events, EventBatch):
        return events.distance, events.verdict
    if isinstance(events, tuple) and len(events) == 2 and isinstance(events[0], np.ndarray):
        return events
    dist, verdict = [], []
    for e in events:
        if isinstance(e, EventBatch):
            dist.append(e.distance)
            verdict.append(e.verdict)
        else:
            dist.append(np.array([e.distance]))
            verdict.append(np.array([e.verdict], dtype=np.int8))
    if not dist:
        return np.zeros(0), np.zeros(0, dtype=np.int8)
    return np.concatenate(dist), np.concatenate(verdict)


@dataclass
class PrrTable:
    """Outcome counts per awareness distance and variant: ``counts[d, variant, verdict]``."""

    distances: tuple[float, ...]
    ring_width: float = 50.0
    counts: np.ndarray = None

    def __post_init__(self):
        self.distances = tuple(float(d) for d in self.distances)
        if self.counts is None:
            self.counts = np.zeros((len(self.distances), 2, len(Verdict)), dtype=np.int64)

    def add(self, distance: np.ndarray, verdict: np.ndarray) -> None:
        distance = np.asarray(distance, dtype=float)
        verdict = np.asarray(verdict, dtype=np.int64)
        for i, D in enumerate(self.distances):
            disk = distance <= D
            ring = disk & (distance > D - self.ring_width)
            self.counts[i, 0] += np.bincount(verdict[disk], minlength=len(Verdict))
            self.counts[i, 1] += np.bincount(verdict[ring], minlength=len(Verdict))

    def merge(self, other: "PrrTable") -> "PrrTable":
        if other.distances != self.distances or other.ring_width != self.ring_width:
            raise ValueError("tables cover different distance bins")
        return PrrTable(self.distances, self.ring_width, self.counts + other.counts)

    def _row(self, D: float) -> int:
        try:
            return self.distances.index(float(D))
        except ValueError:
            raise ValueError(f"D_x={D} is not a configured awareness distance "
                             f"{list(self.distances)}") from None

    def total(self, D: float, variant: str = "disk") -> int:
        return int(self.counts[self._row(D), VARIANTS.index(variant)].sum())

    def fractions(self, D: float, variant: str = "disk") -> dict[str, float] | None:
        """PRR and loss fractions in table column order, or None for an empty bin."""
        c = self.counts[self._row(D), VARIANTS.index(variant)]
        n = c.sum()
        if n == 0:
            return None
        return {col: c[v] / n for col, v in _COLUMN_VERDICT.items()}

    def prr(self, D: float, variant: str = "disk") -> float:
        fr = self.fractions(D, variant)
        return math.nan if fr is None else fr["prr"]

    def rows(self) -> Iterator[tuple[float, str, int, dict[str, float] | None]]:
        for D in self.distances:
            for variant in VARIANTS:
                yield D, variant, self.total(D, variant), self.fractions(D, variant)

    def __eq__(self, other):
        return (isinstance(other, PrrTable) and self.distances == other.distances
                and self.ring_width == other.ring_width
                and np.array_equal(self.counts, other.counts))


def prr(events, D_x: float, mode: str = "disk", distances=None,
        ring_width: float = 50.0) -> float:
    """Decoded fraction among events within the disk or ring of ``D_x``.

    With ``distances`` given, ``D_x`` must be one of them.
    """
    if distances is not None and float(D_x) not in [float(d) for d in distances]:
        raise ValueError(f"D_x={D_x} is not a configured awareness distance")
    if mode not in VARIANTS:
        raise ValueError(f"mode must be 'disk' or 'ring', got {mode!r}")
    dist, verdict = _arrays(events)
    mask = dist <= D_x
    if mode == "ring":
        mask &= dist > D_x - ring_width
    n = int(mask.sum())
    return math.nan if n == 0 else float((verdict[mask] == Verdict.DECODED).sum() / n)


def aggregate(events, distances=(50, 100, 150, 200, 250, 300),
              ring_width: float = 50.0) -> PrrTable:
    table = PrrTable(tuple(distances), ring_width)
    if isinstance(events, EventBatch) or (isinstance(events, tuple) and len(events) == 2):
        table.add(*_arrays(events))
    else:
        for e in events:
            table.add(*_arrays([e]))
    return table


@dataclass
class SimulationReport:
    table: PrrTable
    seed: int
    windows: int = 0
    config: dict = field(default_factory=dict)

    @property
    def events(self) -> int:
        return int(self.table.counts[:, 0].sum(axis=-1).max(initial=0))

    def __eq__(self, other):
        return (isinstance(other, SimulationReport) and self.table == other.table
                and self.seed == other.seed and self.windows == other.windows
                and self.config == other.config)


def _pct(x):
    return None if x is None else f"{100 * x:.4f}"


def to_csv(report: SimulationReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("distance_m", "variant") + COLUMNS + ("events",))
    for D, variant, n, fr in report.table.rows():
        vals = [""] * len(COLUMNS) if fr is None else [_pct(fr[c]) for c in COLUMNS]
        w.writerow([f"{D:g}", variant, *vals, n])
    return buf.getvalue()


def to_dict(report: SimulationReport) -> dict:
    rows = []
    for D, variant, n, fr in report.table.rows():
        i = report.table.distances.index(D)
        counts = report.table.counts[i, VARIANTS.index(variant)]
        row = {"distance_m": D, "variant": variant, "events": n,
               "counts": {v.name.lower(): int(counts[v]) for v in Verdict}}
        row.update({c: (None if fr is None else float(fr[c])) for c in COLUMNS})
        rows.append(row)
    return {
        "seed": report.seed,
        "windows": report.windows,
        "distances_m": list(report.table.distances),
        "ring_width_m": report.table.ring_width,
        "rows": rows,
        "config": report.config,
    }


def from_dict(data: dict) -> SimulationReport:
    table = PrrTable(tuple(data["distances_m"]), data["ring_width_m"])
    for row in data["rows"]:
        i = table._row(row["distance_m"])
        j = VARIANTS.index(row["variant"])
        for v in Verdict:
            table.counts[i, j, v] = row["counts"][v.name.lower()]
    return SimulationReport(table, data["seed"], data["windows"], data.get("config", {}))


def serialize(report: SimulationReport, fmt: str = "json") -> bytes:
    if fmt == "csv":
        return to_csv(report).encode("utf-8")
    if fmt == "json":
        return (json.dumps(to_dict(report), indent=2, sort_keys=True) + "\n").encode("utf-8")
    raise ValueError(f"unknown format {fmt!r}; expected 'csv' or 'json'")


def load_report(data: bytes | str) -> SimulationReport:
    return from_dict(json.loads(data))
