import json
import subprocess
import sys

import pytest

from superhess.cli import ConfigError, emit_report, main, parse_kv, read_config


def test_parse_kv_keeps_commas_in_values():
    assert parse_kv("m=2,n=4,a=0,0,0,0") == {"m": "2", "n": "4", "a": "0,0,0,0"}


def test_config_sections_and_line_numbers(tmp_path):
    p = tmp_path / "ok.cfg"
    p.write_text("[grid]\nn = 3\nnodes = 9\n[task]\nm = 1\n")
    cfg = read_config(p)
    assert cfg["grid"]["nodes"] == "9" and cfg["current"] == {}
    bad = tmp_path / "bad.cfg"
    bad.write_text("[grid]\nn = 3\nthis is not a key\n")
    with pytest.raises(ConfigError, match=":3:"):
        read_config(bad)
    with pytest.raises(ConfigError, match="unknown section"):
        p.write_text("[mesh]\nn = 3\n")
        read_config(p)


def test_empty_report_has_header_only(tmp_path):
    emit_report(tmp_path, "empty", rows=[])
    assert (tmp_path / "empty.txt").read_text() == "# superhess report: empty\n"
    assert not (tmp_path / "empty.csv").exists()


def test_unwritable_directory(tmp_path):
    f = tmp_path / "file"
    f.write_text("x")
    with pytest.raises(OSError):
        emit_report(f / "sub", "x", rows=[])


def test_algebra_sigma(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "algebra", "sigma", "--matrix", "1,0,0;0,2,0;0,0,3", "-j", "2"]) == 0
    data = json.loads((tmp_path / "algebra_sigma.json").read_text())
    assert data["sigma"] == pytest.approx(11 / 3)


def test_missing_config_is_hard_error(tmp_path):
    assert main(["potential", "--config", str(tmp_path / "none.cfg")]) == 1


def test_capacity_manifest_is_deterministic(tmp_path):
    man = tmp_path / "ball.cfg"
    man.write_text("[grid]\nn = 3\nnodes = 20\nhalf_width = 1.0\n[task]\nm = 1\n"
                   "omega = ball:0,0,0:0.9\nE = closedball:0,0,0:0.45\n")
    outs = []
    for k in range(2):
        o = tmp_path / f"o{k}"
        assert main(["capacity", "--problem", str(man), "--out", str(o)]) == 0
        outs.append(((o / "capacity.json").read_bytes(), (o / "extremal.sfield").read_bytes()))
    assert outs[0] == outs[1]
    assert set(json.loads(outs[0][0])) == {"cap", "route_gap", "sweeps", "residual"}


def test_lelong_ladder_csv(tmp_path):
    rc = main(["--out", str(tmp_path), "lelong", "--weight", "m=1,n=2,a=0,0", "--ladder", "3",
               "--grid", "h=0.015625,half_nodes=64"])
    assert rc == 0
    rows = (tmp_path / "lelong.csv").read_text().splitlines()
    assert rows[0] == "r,mass,nu" and len(rows) == 4
    assert set(json.loads((tmp_path / "lelong.json").read_text())) == {"limit", "uncertainty", "monotone"}


@pytest.mark.parametrize("cmd", ["algebra", "field", "hessian", "potential", "lelong", "capacity", "verify"])
def test_every_subcommand_has_help(cmd):
    out = subprocess.run([sys.executable, "-m", "superhess.cli", cmd, "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "--tol-scale" in out.stdout
