from __future__ import annotations

import shutil
import subprocess

import pytest

SKCYCLE = shutil.which("skcycle")

pytestmark = pytest.mark.skipif(SKCYCLE is None,
                                reason="skcycle CLI not installed")


def run_cli(*args: str) -> None:
    proc = subprocess.run([SKCYCLE, *args], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


@pytest.fixture(scope="session")
def artifact_dir(tmp_path_factory):
    """Real skcycle output files, produced through the public CLI."""
    root = tmp_path_factory.mktemp("artifacts")
    inst = root / "inst8.json"
    run_cli("gen", "--n", "8", "--seed", "42", "--out", str(inst))
    run_cli("spectrum", "--inst", str(inst), "--ref", "anneal", "--chi", "0",
            "--bz-max", "1.2", "--bz-points", "16",
            "--out", str(root / "spectrum_chi0.csv"))
    run_cli("spectrum", "--inst", str(inst), "--ref", "anneal", "--chi", "0",
            "--chi", "2.5", "--bz-max", "1.2", "--bz-points", "12",
            "--out", str(root / "spectrum_two_chi.csv"))
    run_cli("basin", "--synthetic", "gamma=1.2,delta=2.0,chi_c=3.6",
            "--chis", "3.7,3.75,3.9,4.2,4.7,5.5,6.5,8,10,12",
            "--eps-r-list=-0.9,-1.0,-1.1", "--eps-gs", "-1.45",
            "--out-csv", str(root / "sweep.csv"),
            "--out-fit", str(root / "fit.json"))
    run_cli("phase", "--n", "60", "--curves", "300", "--chis", "0,0.5,1,2,3",
            "--out", str(root / "phase.csv"))
    return root
