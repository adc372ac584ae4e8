import json

import pytest

from tumorflow.cli import main
from tumorflow.config import load_config, orbit_config, render_config
from tumorflow.core import replace
from tumorflow.storage import read_snapshot, snapshot_checksum


@pytest.fixture
def short_config(tmp_path):
    cfg = orbit_config(32)
    cfg = replace(cfg, time=replace(cfg.time, T=0.5))
    path = tmp_path / "orbit.toml"
    path.write_text(render_config(cfg))
    return path


def test_template_round_trips(capsys, tmp_path):
    assert main(["template", "default"]) == 0
    text = capsys.readouterr().out
    (tmp_path / "d.toml").write_text(text)
    assert load_config(tmp_path / "d.toml").grid.N == 64


def test_simulate_writes_outputs(short_config, tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["simulate", str(short_config), "--out", str(out)])
    monitors = json.loads((out / "monitors.json").read_text())
    # orbit runs move the boundary, so the drift monitor is the only one that may fail
    assert rc == (0 if all(monitors.values()) else 1)
    assert all(v for k, v in monitors.items() if k != "drift")
    snaps = sorted(out.glob("snap_*.tflo"))
    assert len(snaps) == 17
    assert (out / "diagnostics.csv").read_text().startswith("t,")
    assert load_config(out / "config.toml") == load_config(short_config)
    state, grid, h = read_snapshot(snaps[-1])
    assert state.t == 0.5 and grid.N == 32 and h == load_config(short_config).params_hash()

    assert main(["verify", str(out), "--seed", "1", "--count", "3", "--rmin", "1.5",
                 "--out", str(tmp_path / "ver")]) == 0
    rows = (tmp_path / "ver" / "residuals.csv").read_text().splitlines()
    assert rows[0] == "identity,tf0,tf1,tf2" and len(rows) == 7

    assert main(["export", str(snaps[-1]), "--format", "csv", "--out", str(tmp_path / "x")]) == 0
    assert len(list((tmp_path / "x").glob("*.csv"))) == 8


def test_output_root_from_environment(short_config, tmp_path, monkeypatch):
    monkeypatch.setenv("TUMORFLOW_OUTPUT", str(tmp_path / "root"))
    main(["simulate", str(short_config)])
    assert (tmp_path / "root" / "orbit" / "snap_00000.tflo").exists()


def test_determinism_of_snapshots(short_config, tmp_path):
    for name in ("a", "b"):
        main(["simulate", str(short_config), "--out", str(tmp_path / name)])
    a = sorted((tmp_path / "a").glob("*.tflo"))
    b = sorted((tmp_path / "b").glob("*.tflo"))
    assert [snapshot_checksum(p) for p in a] == [snapshot_checksum(p) for p in b]


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid]\nN = 32\n[time]\nT = 0.1\n[initial]\nc0 = 1.5\n")
    assert main(["simulate", str(bad)]) == 2
    assert "C_0 <= C_bar" in capsys.readouterr().err
    assert main(["simulate", str(tmp_path / "missing.toml")]) == 2


def test_eps_study_precondition(short_config):
    assert main(["study", "eps", str(short_config), "--epss", "0.1"]) == 2
