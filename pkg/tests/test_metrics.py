import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cv2xsim.channel import SinrBreakdown, db_to_linear, decode_threshold
from cv2xsim.metrics import (COLUMNS, EventBatch, PrrTable, SimulationReport, Verdict, aggregate,
                             classify, classify_arrays, load_report, prr, serialize, to_csv)

GAMMA = decode_threshold(0.9402, 0.6)
N = 1e-12


def _bd(snr_db, cci_db=-math.inf, ibe_db=-math.inf):
    """Breakdown with signal and interference given relative to noise, in dB."""
    return SinrBreakdown(N * db_to_linear(snr_db), N * db_to_linear(cci_db),
                         N * db_to_linear(ibe_db), N)


def test_hierarchy_order():
    weak = _bd(GAMMA - 1, cci_db=20, ibe_db=20)
    assert classify(weak, GAMMA, same_subchannel=True, same_subframe=True) == Verdict.HD_SC
    assert classify(weak, GAMMA, same_subframe=True) == Verdict.HD_SF
    assert classify(weak, GAMMA) == Verdict.PROPAGATION
    assert classify(_bd(20, cci_db=25, ibe_db=30), GAMMA) == Verdict.CCI
    assert classify(_bd(20, cci_db=0, ibe_db=25), GAMMA) == Verdict.IBE
    assert classify(_bd(20, cci_db=0, ibe_db=0), GAMMA) == Verdict.DECODED


def test_same_subchannel_implies_hd():
    assert classify(_bd(40), GAMMA, same_subchannel=True) == Verdict.HD_SC


def test_threshold_boundary():
    at = SinrBreakdown(N * db_to_linear(GAMMA) * (1 + 1e-12), 0.0, 0.0, N)
    below = SinrBreakdown(N * db_to_linear(GAMMA) * (1 - 1e-9), 0.0, 0.0, N)
    assert classify(at, GAMMA) == Verdict.DECODED
    assert classify(below, GAMMA) == Verdict.PROPAGATION


power = st.floats(-40, 40)


@settings(max_examples=500, deadline=None)
@given(power, power, power, st.booleans(), st.booleans())
def test_partition_and_coherence(snr, cci, ibe, sc, sf):
    bd = _bd(snr, cci, ibe)
    v = classify(bd, GAMMA, same_subchannel=sc, same_subframe=sf)
    assert v in set(Verdict)
    if not (sc or sf):
        assert (v == Verdict.DECODED) == (bd.sinr_db >= GAMMA)
    else:
        assert v in (Verdict.HD_SC, Verdict.HD_SF)


def test_classify_arrays_matches_scalar():
    rng = np.random.default_rng(0)
    n = 2000
    s, c, i = (N * db_to_linear(rng.uniform(-20, 30, n)) for _ in range(3))
    sc = rng.random(n) < 0.05
    sf = sc | (rng.random(n) < 0.05)
    arr = classify_arrays(s, c, i, N, GAMMA, sc, sf)
    for k in range(0, n, 7):
        assert arr[k] == classify(SinrBreakdown(s[k], c[k], i[k], N), GAMMA, sc[k], sf[k])


def _batch(dist, verdict):
    n = len(dist)
    z = np.zeros(n)
    return EventBatch(0, np.zeros(n, int), np.ones(n, int), np.asarray(dist, float),
                      np.zeros(n, int), np.zeros(n, int), z, z, z, N,
                      np.asarray(verdict, np.int8))


def test_prr_disk_and_ring_counts():
    b = _batch([10, 60, 160, 199, 200, 201], [0, 0, 3, 0, 4, 0])
    assert prr(b, 200, "disk") == pytest.approx(3 / 5)
    assert prr(b, 200, "ring") == pytest.approx(1 / 3)  # 160 lost, 199 decoded, 200 CCI
    assert prr(b, 100, "ring") == pytest.approx(1.0)  # 60 only
    assert prr(b, 50, "ring") == 1.0  # 10 m only
    assert math.isnan(prr(b, 150, "ring"))  # nothing in (100, 150]


def test_prr_invalid_inputs():
    b = _batch([10], [0])
    with pytest.raises(ValueError):
        prr(b, 75, "disk", distances=(50, 100))
    with pytest.raises(ValueError):
        prr(b, 50, "annulus")


def test_disk_is_union_of_rings():
    rng = np.random.default_rng(1)
    dist = rng.uniform(0.5, 320, 5000)
    verdict = rng.integers(0, 6, 5000)
    t = aggregate(_batch(dist, verdict))
    for i, D in enumerate(t.distances):
        rings = t.counts[: i + 1, 1].sum(axis=0)
        np.testing.assert_array_equal(t.counts[i, 0], rings)


def test_fractions_sum_to_one():
    rng = np.random.default_rng(2)
    t = aggregate(_batch(rng.uniform(1, 300, 1000), rng.integers(0, 6, 1000)))
    for _, _, n, fr in t.rows():
        assert n > 0
        assert sum(fr.values()) == pytest.approx(1.0, abs=1e-12)
        assert list(fr) == list(COLUMNS)


def test_empty_bins_are_null():
    t = aggregate(_batch([], []))
    assert t.fractions(300, "ring") is None
    assert math.isnan(t.prr(300, "disk"))
    text = to_csv(SimulationReport(t, 0))
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[1] == ["50", "disk", "", "", "", "", "", "", "0"]


def test_aggregate_per_event_equals_batch():
    rng = np.random.default_rng(3)
    b = _batch(rng.uniform(1, 300, 200), rng.integers(0, 6, 200))
    assert aggregate(list(b)) == aggregate(b)


def test_merge():
    a = aggregate(_batch([10, 20], [0, 3]))
    b = aggregate(_batch([30], [0]))
    assert a.merge(b) == aggregate(_batch([10, 20, 30], [0, 3, 0]))
    with pytest.raises(ValueError):
        a.merge(PrrTable((50,)))


def test_csv_schema_and_precision():
    t = aggregate(_batch([10, 20, 30], [0, 0, 3]))
    rows = list(csv.DictReader(io.StringIO(to_csv(SimulationReport(t, 4)))))
    assert list(rows[0]) == ["distance_m", "variant", *COLUMNS, "events"]
    assert len(rows) == 12
    assert rows[0]["prr"] == "66.6667" and rows[0]["propagation"] == "33.3333"
    assert rows[0]["events"] == "3"


def test_json_round_trip():
    rng = np.random.default_rng(5)
    t = aggregate(_batch(rng.uniform(1, 260, 300), rng.integers(0, 6, 300)))
    rep = SimulationReport(t, 11, 20, {"alpha": 0.4})
    back = load_report(serialize(rep, "json"))
    assert back == rep
    assert serialize(back, "json") == serialize(rep, "json")


def test_unknown_format():
    with pytest.raises(ValueError):
        serialize(SimulationReport(PrrTable((50,)), 0), "xml")
