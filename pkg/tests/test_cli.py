"""Command-line driver: happy paths, error categories, exit codes."""

import numpy as np
import pytest

from conftest import mini_config_text
from heatpnp.cli import main


@pytest.fixture()
def quick_cfg(tmp_path):
    # 3 steps on a tiny mesh so CLI tests stay fast
    text = mini_config_text(
        mesh__nx="6",
        mesh__ny="3",
        solver__t_end="0.003",
        boundary__phi_right_kind="dirichlet",
        boundary__phi_right_value="1.0",
    )
    p = tmp_path / "quick.cfg"
    p.write_text(text, encoding="utf-8")
    return p


def test_check_prints_summary(quick_cfg, capsys):
    assert main(["check", str(quick_cfg)]) == 0
    out = capsys.readouterr().out
    assert out == "ok: 1 species on a 6x3 mesh of [0,1]x[0,1], t_end = 0.003\n"


def test_run_reports_steps_and_writes_csv(quick_cfg, tmp_path, capsys):
    csv = tmp_path / "diag.csv"
    assert main(["run", str(quick_cfg), "--csv", str(csv)]) == 0
    out = capsys.readouterr().out
    assert "run complete: t = " in out
    assert "after 3 steps" in out
    lines = csv.read_text().splitlines()
    assert lines[0].startswith("time,mass_1,entropy")
    assert len(lines) == 5  # header + initial record + 3 steps


def test_run_without_csv_override(quick_cfg, capsys):
    assert main(["run", str(quick_cfg)]) == 0
    out = capsys.readouterr().out
    assert "diagnostics:" not in out  # no csv_path configured


def test_sweep_writes_table(tmp_path, capsys):
    text = mini_config_text(
        mesh__nx="6",
        mesh__ny="3",
        solver__t_end="0.002",
        boundary__phi_right_kind="dirichlet",
        boundary__phi_right_value="1.0",
    )
    p = tmp_path / "sweep.cfg"
    p.write_text(text, encoding="utf-8")
    out_csv = tmp_path / "iv.csv"
    assert main(["sweep", str(p), "--voltages", "0.5,1.0", "--output", str(out_csv)]) == 0
    out = capsys.readouterr().out
    assert "V = 0.5: I = " in out and "V = 1: I = " in out
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "voltage,current"
    assert len(lines) == 3
    v, i = lines[1].split(",")
    assert float(v) == 0.5
    assert np.isfinite(float(i))


def test_sweep_rejects_bad_voltage_list(quick_cfg, capsys):
    assert main(["sweep", str(quick_cfg), "--voltages", "a,b"]) == 2
    assert "USAGE:" in capsys.readouterr().err
    assert main(["sweep", str(quick_cfg), "--voltages", ","]) == 2
    assert "USAGE:" in capsys.readouterr().err


def test_missing_file_is_io_error(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.cfg")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("IO_ERROR: ")


def test_bad_config_is_config_error(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text(mini_config_text(mesh__Lx="-3"), encoding="utf-8")
    assert main(["check", str(p)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("CONFIG_ERROR: ")
    assert "mesh.Lx" in err


def test_config_error_message_is_single_line(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("mesh.Lx\n", encoding="utf-8")
    assert main(["check", str(p)]) == 1
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and err.endswith("\n")


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert "USAGE:" in capsys.readouterr().err
    assert main(["frobnicate"]) == 2
    assert "USAGE:" in capsys.readouterr().err


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "heatpnp" in capsys.readouterr().out
