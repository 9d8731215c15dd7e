import numpy as np
import pytest
from scipy import stats

from cv2xsim.mobility import (FreewayConfig, TraceFormatError, Vehicle, advance,
                              generate_freeway, load_trace, write_trace)


def test_freeway_geometry():
    cfg = FreewayConfig()
    ys = [cfg.lane_y(l) for l in range(cfg.lanes)]
    assert ys[:3] == [3.75, 7.25, 10.75]
    assert ys[3:] == [-3.75, -7.25, -10.75]


def test_poisson_count_and_placement():
    cfg = FreewayConfig(road_length=6000, density_per_km=100)
    counts = []
    for seed in range(40):
        vs = generate_freeway(cfg, np.random.default_rng(seed))
        counts.append(len(vs))
        xs = np.array([v.position[0] for v in vs])
        assert ((xs >= 0) & (xs < 6000)).all()
        lo, hi = cfg.speed_range
        assert all(lo <= abs(v.speed) <= hi for v in vs)
        assert all((v.speed > 0) == (v.lane < 3) for v in vs)
    # mean 600 per run, sd sqrt(600) ~ 24.5; mean of 40 runs has sd ~3.9
    assert np.mean(counts) == pytest.approx(600, abs=4 * 3.9)


def test_inter_vehicle_gaps_are_exponential():
    cfg = FreewayConfig(road_length=60_000, density_per_km=60)
    vs = generate_freeway(cfg, np.random.default_rng(3))
    gaps = []
    for lane in range(cfg.lanes):
        xs = np.sort([v.position[0] for v in vs if v.lane == lane])
        gaps.extend(np.diff(xs))
    scale = 1000 / (60 / 6)
    assert stats.kstest(gaps, "expon", args=(0, scale)).pvalue > 0.01


def test_zero_length_road_is_empty():
    assert generate_freeway(FreewayConfig(road_length=0), np.random.default_rng(0)) == []


def test_same_seed_same_layout():
    a = generate_freeway(FreewayConfig(road_length=1000), np.random.default_rng(9))
    b = generate_freeway(FreewayConfig(road_length=1000), np.random.default_rng(9))
    assert a == b


@pytest.mark.parametrize("kw", [dict(lanes_per_direction=0), dict(density_per_km=0),
                                dict(road_length=-1), dict(speed_range=(30, 20))])
def test_freeway_validation(kw):
    with pytest.raises(ValueError):
        FreewayConfig(**kw)


def test_advance_zero_dt_is_identity():
    vs = [Vehicle(0, (10.0, 3.75), 0, 30.0)]
    assert advance(vs, 0.0) == vs


def test_advance_one_window():
    (v,) = advance([Vehicle(0, (0.0, 3.75), 0, 30.0)], 0.1)
    assert v.position == pytest.approx((3.0, 3.75))
    (w,) = advance([Vehicle(1, (100.0, -3.75), 3, -30.0)], 0.1)
    assert w.position[0] == pytest.approx(97.0)


def test_advance_wraps_around():
    (v,) = advance([Vehicle(0, (5999.0, 3.75), 0, 30.0)], 0.1, road_length=6000)
    assert v.position[0] == pytest.approx(2.0)
    (w,) = advance([Vehicle(0, (1.0, -3.75), 3, -30.0)], 0.1, road_length=6000)
    assert w.position[0] == pytest.approx(5998.0)


def test_advance_without_wrap_drops_leavers():
    vs = [Vehicle(0, (5999.0, 3.75), 0, 30.0), Vehicle(1, (10.0, 3.75), 0, 30.0)]
    out = advance(vs, 0.1, road_length=6000, wraparound=False)
    assert [v.id for v in out] == [1]


def test_advance_negative_dt():
    with pytest.raises(ValueError):
        advance([], -0.1)


def test_trace_round_trip(tmp_path):
    frames = {0: {1: (0.0, 0.0, 30.0), 2: (25.0, 3.5, -28.0)},
              100: {1: (3.0, 0.0, 30.0)},
              200: {1: (6.0, 0.0, 30.0), 7: (1.0 / 3, -3.5, 0.1)}}
    path = tmp_path / "t.csv"
    write_trace(path, frames)
    tr = load_trace(path)
    assert len(tr) == 3 and tr.start_ms == 0
    got = {t: {i: (x, y) for i, (x, y) in fr.items()} for t, fr in tr.positions().items()}
    assert got == {t: {i: p[:2] for i, p in fr.items()} for t, fr in frames.items()}
    assert tr.at(300).ids.size == 0
    np.testing.assert_array_equal(tr.at(200).speeds, [30.0, 0.1])


def _write(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    return p


@pytest.mark.parametrize("body, fragment", [
    ("t_ms,vehicle_id,x_m,y_m,speed_mps\n0,1,0.0,0.0\n", "row 2: missing column 'speed_mps'"),
    ("t_ms,vehicle_id,x_m,y_m,speed_mps\n0,1,abc,0.0,1\n", "row 2: column 'x_m' is not a number"),
    ("t_ms,vehicle_id,x_m,y_m,speed_mps\n0,1,nan,0.0,1\n", "row 2: column 'x_m' is not finite"),
    ("t_ms,vehicle_id,x_m,y_m,speed_mps\n50,1,0,0,1\n", "row 2: t_ms=50 is not a multiple"),
    ("t_ms,vehicle_id,x_m,y_m,speed_mps\n100,1,0,0,1\n0,1,0,0,1\n", "row 3: t_ms=0 goes back"),
    ("t_ms,vehicle_id,x_m,y_m,speed_mps\n0,1,0,0,1\n0,1,2,0,1\n", "row 3: duplicate vehicle_id=1"),
    ("time,id,x,y,v\n", "row 1: expected header"),
])
def test_trace_errors_name_row_and_column(tmp_path, body, fragment):
    with pytest.raises(TraceFormatError, match=fragment.replace("(", r"\(")):
        load_trace(_write(tmp_path, body))


def test_empty_trace_file(tmp_path):
    assert len(load_trace(_write(tmp_path, ""))) == 0
