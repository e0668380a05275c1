from __future__ import annotations

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from skcycle.cli import main
from skcycle.classical import enumerate_minima
from skcycle.instance import load_instance
from skcycle.quantum import classical_critical_field


def read_csv_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader)
        return header, [row for row in reader]


def meta_lines(path):
    return [line for line in open(path, encoding="utf-8")
            if line.startswith("#")]


@pytest.fixture
def inst8(tmp_path):
    path = tmp_path / "inst8.json"
    assert main(["gen", "--n", "8", "--j", "1.0", "--seed", "42",
                 "--out", str(path)]) == 0
    return path


class TestGen:
    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        assert main(["gen", "--n", "10", "--seed", "1", "--out", str(a)]) == 0
        assert main(["gen", "--n", "10", "--seed", "1", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_usage_error_for_tiny_n(self, tmp_path):
        assert main(["gen", "--n", "1", "--out", str(tmp_path / "x.json")]) == 64

    def test_output_loadable(self, inst8):
        inst = load_instance(inst8)
        assert inst.n == 8 and inst.seed == 42

    def test_unknown_command(self):
        assert main(["frobnicate"]) == 64

    def test_missing_required_flag(self, tmp_path):
        assert main(["gen", "--n", "4"]) == 64

    def test_io_failure_exit_code(self, tmp_path):
        missing_dir = tmp_path / "no" / "such" / "dir" / "x.json"
        assert main(["gen", "--n", "4", "--out", str(missing_dir)]) == 2


class TestSpectrum:
    def test_chi_zero_levels_are_zeeman_lines(self, tmp_path, inst8):
        from conftest import brute_all_energies
        inst = load_instance(inst8)
        minima = enumerate_minima(inst)
        ref = minima[2]
        bz_max = 4.0 * classical_critical_field(inst, ref.config)
        out = tmp_path / "spec.csv"
        assert main(["spectrum", "--inst", str(inst8), "--ref",
                     ref.config.to_hex(), "--chi", "0", "--bz-max",
                     f"{bz_max}", "--bz-points", "12", "--out", str(out)]) == 0
        header, rows = read_csv_rows(out)
        assert header == ["bz", "bx", "k", "eigenvalue"]
        data = np.array([[float(r[0]), float(r[2]), float(r[3])] for r in rows])
        # oracle: each level multiset equals {E_alpha - bz * alignment_alpha}
        energies = brute_all_energies(inst)
        ref_idx = ref.config.to_index()
        align = np.array([inst.n - 2 * bin(idx ^ ref_idx).count("1")
                          for idx in range(1 << inst.n)])
        bzs = np.sort(np.unique(data[:, 0]))
        levels = np.array([
            data[np.isclose(data[:, 0], bz)][np.argsort(
                data[np.isclose(data[:, 0], bz)][:, 1]), 2]
            for bz in bzs])
        for bz, row in zip(bzs, levels):
            assert np.allclose(row, np.sort(energies - bz * align), atol=1e-9)
        # above the last crossing the ground level is the reference: slope -n
        upper = bzs >= bz_max / 2
        slope = np.polyfit(bzs[upper], levels[upper, 0], 1)[0]
        assert slope == pytest.approx(-inst.n, abs=1e-8)

    def test_larger_chi_opens_min_gap(self, tmp_path):
        gaps = {0.0: [], 3.0: []}
        for seed in (42, 7):
            inst_path = tmp_path / f"i{seed}.json"
            main(["gen", "--n", "8", "--seed", str(seed), "--out", str(inst_path)])
            for chi in gaps:
                out = tmp_path / f"s{seed}_{chi}.csv"
                assert main(["spectrum", "--inst", str(inst_path), "--ref",
                             "anneal", "--chi", str(chi), "--bz-max", "1.5",
                             "--bz-points", "40", "--out", str(out)]) == 0
                _, rows = read_csv_rows(out)
                data = {}
                for r in rows:
                    data.setdefault(float(r[0]), {})[int(r[2])] = float(r[3])
                gaps[chi].append(min(v[1] - v[0] for v in data.values()))
        assert np.mean(gaps[3.0]) > np.mean(gaps[0.0])

    def test_missing_ref_is_usage_error(self, tmp_path, inst8):
        assert main(["spectrum", "--inst", str(inst8), "--chi", "1",
                     "--out", str(tmp_path / "x.csv")]) == 64

    def test_oversize_dense_needs_low_k(self, tmp_path):
        big = tmp_path / "big.json"
        main(["gen", "--n", "13", "--seed", "0", "--out", str(big)])
        rc = main(["spectrum", "--inst", str(big), "--ref", "anneal",
                   "--chi", "1", "--out", str(tmp_path / "y.csv")])
        assert rc == 1

    def test_metadata_header_present(self, tmp_path, inst8):
        out = tmp_path / "spec.csv"
        main(["spectrum", "--inst", str(inst8), "--ref", "anneal", "--chi", "1",
              "--bz-points", "4", "--out", str(out)])
        lines = meta_lines(out)
        assert any("version" in line for line in lines)
        assert any("flags" in line for line in lines)

    def test_isolate_writes_companion_file(self, tmp_path, inst8):
        out = tmp_path / "spec.csv"
        assert main(["spectrum", "--inst", str(inst8), "--ref", "anneal",
                     "--chi", "0.5", "--bz-points", "4", "--isolate",
                     "--out", str(out)]) == 0
        header, rows = read_csv_rows(tmp_path / "spec.isolated.csv")
        assert header == ["bz", "bx", "minimum", "level"]
        assert rows


class TestRun:
    def test_run_produces_monotone_log(self, tmp_path, inst8):
        log = tmp_path / "run.jsonl"
        summary = tmp_path / "summary.json"
        assert main(["run", "--inst", str(inst8), "--budget", "8", "--seed", "3",
                     "--anneal-sweeps", "2", "--t-hot", "4", "--t-cold", "2",
                     "--tau3", "8", "--oracle", "--out-log", str(log),
                     "--out-summary", str(summary)]) == 0
        doc = json.loads(summary.read_text())
        assert doc["ground_reached"] in (True, False)
        assert doc["final_energy"] <= doc["initial_energy"] + 1e-12
        refs = [json.loads(line)["reference_energy"]
                for line in log.read_text().splitlines()]
        assert all(b <= a + 1e-12 for a, b in zip(refs, refs[1:]))

    def test_budget_zero_usage_error(self, tmp_path, inst8):
        assert main(["run", "--inst", str(inst8), "--budget", "0",
                     "--out-log", str(tmp_path / "l"), "--out-summary",
                     str(tmp_path / "s")]) == 64

    def test_deterministic_outputs(self, tmp_path, inst8):
        files = []
        for tag in ("a", "b"):
            log = tmp_path / f"{tag}.jsonl"
            summ = tmp_path / f"{tag}.json"
            assert main(["run", "--inst", str(inst8), "--budget", "4",
                         "--seed", "9", "--tau3", "5",
                         "--out-log", str(log), "--out-summary", str(summ)]) == 0
            files.append(log.read_bytes())
        assert files[0] == files[1]

    def test_single_cycle_command(self, tmp_path, inst8):
        out = tmp_path / "cycle.json"
        assert main(["cycle", "--inst", str(inst8), "--ref", "anneal",
                     "--tau3", "5", "--seed", "2", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert set(doc) >= {"measured_hex", "descended_hex", "accepted",
                            "energy_before", "energy_after"}


class TestBasinFitPhase:
    def test_synthetic_round_trip(self, tmp_path):
        csv_path = tmp_path / "sweep.csv"
        fit_path = tmp_path / "fit.json"
        rc = main(["basin", "--synthetic", "gamma=1.2,delta=2.0,chi_c=3.6",
                   "--chis", "3.7,3.75,3.9,4.2,4.7,5.5,6.5,8,10,12",
                   "--eps-r-list=-0.9,-1.0,-1.1", "--eps-gs", "-1.45",
                   "--out-csv", str(csv_path), "--out-fit", str(fit_path)])
        assert rc == 0
        doc = json.loads(fit_path.read_text())
        assert doc["gamma"] == pytest.approx(1.2, rel=0.02)
        assert doc["delta"] == pytest.approx(2.0, rel=0.02)
        assert doc["chi_c"] == pytest.approx(3.6, rel=0.02)

    def test_single_chi_fit_window_exit(self, tmp_path):
        csv_path = tmp_path / "sweep.csv"
        rc = main(["basin", "--synthetic", "gamma=1.2,delta=2.0,chi_c=3.6",
                   "--chis", "4.0", "--eps-r-list=-0.9,-1.1",
                   "--eps-gs", "-1.45", "--out-csv", str(csv_path),
                   "--out-fit", str(tmp_path / "fit.json")])
        assert rc == 3
        assert csv_path.exists()  # partial CSV retained

    def test_small_real_sweep_writes_table(self, tmp_path):
        csv_path = tmp_path / "sweep.csv"
        fit_path = tmp_path / "fit.json"
        rc = main(["basin", "--n", "60", "--curves", "300", "--reps", "2",
                   "--chis", "2,4,6", "--eps-r-list=-0.95,-1.1",
                   "--grid", "256", "--out-csv", str(csv_path),
                   "--out-fit", str(fit_path)])
        assert rc in (0, 3)  # tiny sweep may legitimately fail the fit window
        header, rows = read_csv_rows(csv_path)
        assert header == ["chi", "eps_r", "n_above", "n_below", "ratio",
                          "stderr", "seed"]
        assert len(rows) == 6

    def test_fit_subcommand(self, tmp_path):
        csv_path = tmp_path / "sweep.csv"
        fit_path = tmp_path / "fit.json"
        main(["basin", "--synthetic", "gamma=1.2,delta=2.0,chi_c=3.6",
              "--chis", "3.7,3.75,3.9,4.2,4.7,5.5,6.5,8,10",
              "--eps-r-list=-0.9,-1.1", "--eps-gs", "-1.45",
              "--out-csv", str(csv_path), "--out-fit", str(tmp_path / "f0.json")])
        assert main(["fit", "--in", str(csv_path), "--eps-gs", "-1.45",
                     "--out", str(fit_path)]) == 0
        assert json.loads(fit_path.read_text())["gamma"] == pytest.approx(1.2,
                                                                          rel=0.02)

    def test_phase_boundary_columns(self, tmp_path):
        out = tmp_path / "phase.csv"
        assert main(["phase", "--n", "60", "--curves", "200",
                     "--chis", "0,1,2", "--out", str(out)]) == 0
        header, rows = read_csv_rows(out)
        assert header == ["chi", "bz", "bx"]
        for r in rows:
            assert float(r[2]) == pytest.approx(float(r[0]) * float(r[1]),
                                                abs=1e-12)

    def test_jobs_flag_matches_serial(self, tmp_path):
        args = ["basin", "--n", "60", "--curves", "200", "--reps", "2",
                "--chis", "3,5", "--eps-r-list=-0.95,-1.1", "--grid", "128",
                "--eps-gs", "-1.45"]
        serial_csv = tmp_path / "serial.csv"
        par_csv = tmp_path / "par.csv"
        main(args + ["--out-csv", str(serial_csv),
                     "--out-fit", str(tmp_path / "f1.json")])
        main(args + ["--jobs", "2", "--out-csv", str(par_csv),
                     "--out-fit", str(tmp_path / "f2.json")])
        _, a = read_csv_rows(serial_csv)
        _, b = read_csv_rows(par_csv)
        assert a == b


class TestConfigFile:
    def test_config_fills_defaults_flags_win(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": 9, "seed": 5}))
        out = tmp_path / "inst.json"
        assert main(["gen", "--config", str(cfg), "--seed", "6",
                     "--out", str(out)]) == 0
        inst = load_instance(out)
        assert inst.n == 9      # from config
        assert inst.seed == 6   # flag wins

    def test_unknown_config_key_is_usage_error(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert main(["gen", "--config", str(cfg), "--n", "4",
                     "--out", str(tmp_path / "x.json")]) == 64

    def test_missing_config_file_is_io_error(self, tmp_path):
        assert main(["gen", "--config", str(tmp_path / "nope.json"),
                     "--n", "4", "--out", str(tmp_path / "x.json")]) == 2


def test_console_script_entry_point(tmp_path):
    out = tmp_path / "inst.json"
    proc = subprocess.run([sys.executable, "-m", "skcycle.cli", "gen",
                           "--n", "6", "--seed", "1", "--out", str(out)],
                          capture_output=True)
    assert proc.returncode == 0
    assert out.exists()
