"""Runs `shl verify` once (with its determinism rerun) and checks each criterion."""
import json
import subprocess
import sys

import pytest

from conftest import LINES

TOLS = {1: 0.03, 2: 1e-12, 3: 1e-8, 4: 1.5, 5: 0.01, 6: 0.02, 7: 0.01, 8: 0.05, 9: 0.02, 11: 1e-10, 12: 0.0}


@pytest.fixture(scope="module")
def report(tmp_path_factory):
    out = tmp_path_factory.mktemp("verify")
    proc = subprocess.run([sys.executable, "-m", "superhess.cli", "verify", "--out", str(out), "--seed", "0"],
                          capture_output=True, text=True)
    print(proc.stdout)
    assert proc.returncode in (0, 2), proc.stderr
    rows = json.loads((out / "acceptance.json").read_text())["criteria"]
    detail = json.loads((out / "acceptance_detail.json").read_text())
    return {r["id"]: r for r in rows}, detail, proc.returncode


def _check(report, k):
    rows, detail, _ = report
    r = rows[k]
    line = f"criterion {k:>2}: {'PASS' if r['pass'] else 'FAIL'}  value={r['value']:.6g}  tol={r['tol']:.6g}"
    print(line)
    LINES.append(line)
    if k in TOLS:
        assert r["tol"] == pytest.approx(TOLS[k])
    assert r["pass"], detail.get(str(k))


@pytest.mark.parametrize("k", range(1, 13))
def test_criterion(report, k):
    _check(report, k)


def test_exit_code_matches(report):
    rows, _, rc = report
    assert rc == (0 if all(r["pass"] for r in rows.values()) else 2)
