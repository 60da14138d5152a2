import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from exterior_maxwell import cli
from exterior_maxwell import experiments as ex
from exterior_maxwell import geometry as geo

SMALL = """\
name = "cli-small"

[grid]
rstar_min = -60.0
rstar_max = 60.0
n_r = 192
n_theta = 6

[initial_data]
sector = "A"
amplitude = {amp}
width = 2.0

[schedule]
t0 = 5.0
count = 4

[run]
t_final = 8.0

[outputs]
dir = "{out}"
"""


def write_cfg(tmp_path, amp=1.0, extra=""):
    out = tmp_path / "out"
    path = tmp_path / "run.toml"
    path.write_text(SMALL.format(amp=amp, out=out) + extra)
    return path, out


def test_verify_geometry_passes(capsys):
    assert cli.main(["verify-geometry"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 4


def test_verify_geometry_json(capsys):
    assert cli.main(["verify-geometry", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["passed"] is True and len(doc["checks"]) == 4


def test_verify_geometry_detects_corrupted_connection(capsys):
    def bad(point, p, chart="tortoise"):
        table = np.array(geo.christoffel_table(point, p, chart), dtype=float)
        table[1, 0, 0] *= 1.001
        return table

    args = cli.build_parser().parse_args(["verify-geometry"])
    assert cli.cmd_verify_geometry(args, connection=bad) == cli.EXIT_FAIL
    assert "FAIL" in capsys.readouterr().out


def test_find_h_feasible(tmp_path):
    path, out = write_cfg(tmp_path, extra="\n[h_profile]\nr1 = 2.25\n")
    assert cli.main(["find-h", "--config", str(path)]) == 0
    rows = list(csv.reader((out / "h_profile.csv").open()))
    assert tuple(rows[0]) == cli.H_PROFILE_COLUMNS
    assert len(rows) > 100


@pytest.mark.parametrize("r1", ["2.49", "2.5"])
def test_find_h_infeasible(tmp_path, capsys, r1):
    path, _ = write_cfg(tmp_path, extra=f"\n[h_profile]\nr1 = {r1}\n")
    assert cli.main(["find-h", "--config", str(path)]) == cli.EXIT_INFEASIBLE
    cap = capsys.readouterr()
    text = cap.out + cap.err
    assert "infeasible" in text and ("r = 2.349" in text or r1 == "2.5")


def test_evolve_zero_amplitude(tmp_path):
    path, out = write_cfg(tmp_path, amp=0.0)
    assert cli.main(["evolve", "--config", str(path)]) == 0
    rows = list(csv.DictReader((out / "evolve_energies.csv").open()))
    assert rows and all(float(r["value"]) == 0.0 for r in rows)
    ckpts = sorted((out / "checkpoints").glob("*.ckpt"))
    assert len(ckpts) == 6  # t = 0, four schedule times, t_final
    state, grids, _ = ex.maxwell.load_checkpoint(ckpts[-1])
    assert state.t == 8.0 and not np.any(state.data)


def test_report(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli.main(["report", str(empty)]) == cli.EXIT_FAIL
    assert "no experiments found" in capsys.readouterr().err
    assert cli.main(["report", str(tmp_path / "missing")]) == cli.EXIT_IO
    res = ex.run_conservation(ex.ExperimentConfig.from_flat(cli.config_from_text(SMALL.format(amp=1.0, out=tmp_path)).to_flat()))
    res.write(empty)
    assert cli.main(["report", str(empty)]) == 0
    merged = json.loads((empty / "report.json").read_text())
    assert "conservation" in merged


def test_config_errors_carry_line_numbers(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("name = 'x'\n[grid]\nn_r = 12.5\n")
    assert cli.main(["evolve", "--config", str(path)]) == cli.EXIT_INFEASIBLE
    err = capsys.readouterr().err
    assert ":3" in err and "grid.n_r" in err
    assert cli.main(["evolve", "--config", str(tmp_path / "nope.toml")]) == cli.EXIT_IO


@pytest.mark.parametrize(
    "text,line",
    [
        ("a_key_that_does_not_exist = 1\n", 1),
        ("[grid]\nn_theta = 8\nn_theta = 9\n", 3),
        ("name = \"x\n", 1),
        ("[grid\n", 1),
    ],
)
def test_parse_errors(text, line):
    with pytest.raises(cli.ConfigParseError) as err:
        cli.config_from_text(text, "t.toml")
    assert err.value.line == line


def test_nonunit_mass_needs_flag():
    with pytest.raises(ex.ConfigError):
        cli.config_from_text("mass = 2.0\n")
    text = "mass = 2.0\nallow_nonunit_mass = true\nstations = [4.5, 8.0]\n[h_profile]\nr1 = 4.5\n"
    cfg = cli.config_from_text(text)
    assert cfg.params.mass == 2.0


def test_format_config_round_trip():
    cfg = ex.ExperimentConfig(name="rt", stations=(2.2, 5.0), r1=2.3, t_final=55.5)
    text = cli.format_config(cfg)
    assert cli.config_from_text(text) == cfg
    assert cli.format_config(cli.config_from_text(text)) == text


def test_json_summary_echoes_config(tmp_path, capsys):
    path, out = write_cfg(tmp_path)
    assert cli.main(["evolve", "--config", str(path), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    flat = doc["config"]
    assert ex.ExperimentConfig.from_flat(flat) == cli.load_config(path)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "exterior_maxwell", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "verify-geometry" in proc.stdout
