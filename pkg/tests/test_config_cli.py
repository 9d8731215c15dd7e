import csv
import io
import math

import pytest
import yaml

from cv2xsim import cli
from cv2xsim.config import ConfigError, SimConfig, config_from_dict, config_to_dict, parse_config

TINY = {"road_length_m": 400, "duration_ms": 1500, "warmup_ms": 1000,
        "awareness_distances_m": [100, 200]}


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text("" if data is None else yaml.safe_dump(data))
    return p


def test_empty_file_gives_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, None))
    assert cfg == SimConfig()
    assert cfg.grid.F == 3 and cfg.grid.K == 100
    assert cfg.channel.tx_power_per_rb == 6.67 and cfg.channel.shadow_sigma == 7
    assert cfg.sps.alpha == 1.0 and cfg.sps.p_keep == 0.0
    assert cfg.channel.decode_threshold_db == pytest.approx(2.928937, abs=1e-6)


@pytest.mark.parametrize("data, fragment", [
    ({"alpha": 1.5}, "alpha"),
    ({"alpha": 0}, "alpha"),
    ({"p_keep": 1.0}, "p_keep"),
    ({"F": 4, "ibe_vector": [1, 0.0047, 0.0015]}, "ibe_vector"),
    ({"ibe_vector": [0.5, 0.1, 0.01]}, "ibe_vector"),
    ({"K": 50, "window_ms": 100}, "K"),
    ({"duration_ms": 500, "warmup_ms": 1000}, "warmup_ms"),
    ({"duration_ms": 1050}, "multiple"),
    ({"seed": -1}, "seed"),
    ({"colour": "blue"}, "unknown config keys: colour"),
    ({"policy": "best"}, "policy"),
    ({"p_sigma_mw": 1e-11, "p_sigma_dbm": -110}, "only one"),
    ({"scenario": "trace"}, "trace_path"),
    ({"F": "three"}, "F: expected an integer"),
])
def test_invalid_configs(tmp_path, data, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(_write(tmp_path, data))


def test_f4_default_vector():
    assert config_from_dict({"F": 4}).channel.ibe_vector == (1.0, 0.0047, 0.0015, 0.0005)


def test_k_follows_window():
    cfg = config_from_dict({"window_ms": 50, "duration_ms": 1000, "warmup_ms": 500,
                            "t_sps_set": [500, 1000]})
    assert cfg.grid.K == 50


def test_round_trip():
    cfg = config_from_dict({"alpha": 0.4, "p_keep": 0.2, "policy": "random",
                            "p_sigma_dbm": -110.0, "speed_min_mps": 20, "seed": 99})
    assert config_from_dict(config_to_dict(cfg)) == cfg
    again = yaml.safe_load(yaml.safe_dump(config_to_dict(cfg)))
    assert config_from_dict(again) == cfg


def test_relative_trace_path(tmp_path):
    (tmp_path / "t.csv").write_text("t_ms,vehicle_id,x_m,y_m,speed_mps\n0,1,0,0,1\n")
    cfg = parse_config(_write(tmp_path, {"trace_path": "t.csv"}))
    assert cfg.scenario == "trace" and cfg.trace_path == str(tmp_path / "t.csv")


def test_validate_command(tmp_path, capsys):
    assert cli.main(["validate", str(_write(tmp_path, {"alpha": 0.4}))]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "alpha: 0.4" in out and "gamma_T = 2.9289 dB" in out


def test_exit_codes(tmp_path, caplog):
    bad = _write(tmp_path, {"alpha": 2})
    assert cli.main(["validate", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["sweep", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["run", str(tmp_path / "missing.yaml")]) == cli.EXIT_CONFIG
    good = _write(tmp_path, TINY, "good.yaml")
    assert cli.main(["sweep", str(good), "--alpha", "3"]) == cli.EXIT_CONFIG
    assert "alpha must be in (0, 1]" in caplog.text


def test_unwritable_output_is_runtime_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    good = _write(tmp_path, TINY)
    assert cli.main(["run", str(good), "--out", str(blocker / "sub")]) == cli.EXIT_RUNTIME


def test_run_writes_named_report(tmp_path, capsys):
    cfg = _write(tmp_path, TINY)
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--seed", "3", "--out", str(out),
                     "--format", "csv,json"]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["alpha=1_pkeep=0_policy=standard_seed=3.csv",
                     "alpha=1_pkeep=0_policy=standard_seed=3.json"]
    stdout = capsys.readouterr().out
    assert stdout == (out / names[0]).read_text()


def test_single_point_single_seed(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["sweep", str(_write(tmp_path, TINY)), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == [
        "alpha=1_pkeep=0_policy=standard_seed=0.csv", "summary.csv"]


def test_sweep_grid_and_summary(tmp_path):
    out = tmp_path / "out"
    rc = cli.main(["sweep", str(_write(tmp_path, TINY)), "--alpha", "1", "0.4",
                   "--seeds", "10", "--out", str(out)])
    assert rc == 0
    runs = [p for p in out.iterdir() if p.name != "summary.csv"]
    assert len(runs) == 20
    rows = list(csv.DictReader(io.StringIO((out / "summary.csv").read_text())))
    assert tuple(rows[0]) == cli.SUMMARY_COLUMNS
    assert len(rows) == 2 * 2  # two alphas, two distances
    assert {(r["alpha"], r["distance_m"]) for r in rows} == {
        ("1", "100"), ("1", "200"), ("0.4", "100"), ("0.4", "200")}
    assert all(r["seeds"] == "10" for r in rows)
    assert all(len(r["prr_ring_mean"].split(".")[1]) == 4 for r in rows)
    assert all(0 <= float(r["prr_disk_mean"]) <= 100 for r in rows)


def test_summary_matches_run_files(tmp_path):
    out = tmp_path / "out"
    cli.main(["sweep", str(_write(tmp_path, TINY)), "--seed-list", "4", "5", "6",
              "--out", str(out)])
    vals = []
    for s in (4, 5, 6):
        rows = csv.DictReader(io.StringIO(
            (out / f"alpha=1_pkeep=0_policy=standard_seed={s}.csv").read_text()))
        vals += [float(r["prr"]) for r in rows if r["distance_m"] == "200" and r["variant"] == "ring"]
    (row,) = [r for r in csv.DictReader(io.StringIO((out / "summary.csv").read_text()))
              if r["distance_m"] == "200"]
    mean = sum(vals) / 3
    std = math.sqrt(sum((v - mean) ** 2 for v in vals) / 2)
    assert float(row["prr_ring_mean"]) == pytest.approx(mean, abs=1e-3)
    assert float(row["prr_ring_std"]) == pytest.approx(std, abs=1e-3)


def test_reruns_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, TINY)
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["sweep", str(cfg), "--policy", "standard", "random", "--seeds", "2",
                         "--format", "csv,json", "--out", str(out)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir()) and len(names) == 9
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.main(["run", str(_write(tmp_path, TINY))]) == 0
    assert len(list((tmp_path / "env").iterdir())) == 1


def test_failed_run_does_not_stop_sweep(tmp_path, monkeypatch):
    real = cli._run_one

    def flaky(cfg):
        if cfg.seed == 1:
            raise RuntimeError("boom")
        return real(cfg)

    monkeypatch.setattr(cli, "_run_one", flaky)
    out = tmp_path / "out"
    rc = cli.main(["sweep", str(_write(tmp_path, TINY)), "--seeds", "3", "--out", str(out)])
    assert rc == cli.EXIT_RUNTIME
    assert len(list(out.glob("*seed=*.csv"))) == 2
    rows = list(csv.DictReader(io.StringIO((out / "summary.csv").read_text())))
    assert rows[0]["seeds"] == "2"
