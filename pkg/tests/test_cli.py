import json
import shutil
import subprocess
import sys

import pytest

from collapse_sim.cli import main


@pytest.fixture(autouse=True)
def _workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("COLLAPSE_SIM_THREADS", raising=False)
    return tmp_path


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestTrajectory:
    def test_csv_shape_and_summary_line(self, capsys):
        rc = main(
            ["trajectory", "--n-sites", "3", "--master-seed", "5", "--dt", "0.04"]
        )
        assert rc == 0
        lines = read("trajectory.csv").decode().splitlines()
        assert lines[0] == "t,u_1,u_2,u_3"
        first = lines[1].split(",")
        assert float(first[0]) == 0.0
        assert all(float(x) == pytest.approx(2.0 / 3.0 - 1.0) for x in first[1:])
        out = capsys.readouterr().out
        assert "collapse_time=" in out and "winner=" in out

    def test_winner_coordinate_reaches_top(self):
        main(["trajectory", "--n-sites", "2", "--master-seed", "5", "--dt", "0.04"])
        last = read("trajectory.csv").decode().splitlines()[-1].split(",")
        coords = [float(x) for x in last[1:]]
        assert max(coords) >= 1.0 - 1e-2 - 1e-9
        assert abs(sum(coords)) <= 1e-9

    def test_rerun_is_byte_identical(self):
        argv = ["trajectory", "--n-sites", "4", "--master-seed", "9", "--dt", "0.04"]
        main(argv)
        first = read("trajectory.csv")
        main(argv)
        assert read("trajectory.csv") == first

    def test_record_path_cannot_be_disabled(self, capsys):
        rc = main(["trajectory", "--record-path", "false"])
        assert rc == 2
        assert "record_path" in capsys.readouterr().err

    def test_custom_output_and_index(self):
        rc = main(
            [
                "trajectory",
                "--master-seed",
                "9",
                "--dt",
                "0.04",
                "--index",
                "3",
                "--output",
                "other.csv",
            ]
        )
        assert rc == 0
        main(["trajectory", "--master-seed", "9", "--dt", "0.04", "--index", "4",
              "--output", "again.csv"])
        assert read("other.csv") != read("again.csv")


SWEEP_ARGS = [
    "sweep",
    "--n-list",
    "4,8,16",
    "--m",
    "40",
    "--master-seed",
    "21",
    "--dt",
    "0.04",
]


class TestSweep:
    def test_times_mode_outputs(self):
        rc = main(SWEEP_ARGS)
        assert rc == 0
        lines = read("sweep.csv").decode().splitlines()
        assert lines[0] == "N,mean_time,stderr,realizations,exceeded"
        assert len(lines) == 4
        fit = json.loads(read("sweep_fit.json"))
        assert fit["schema_version"] == 1
        assert fit["mode"] == "times"
        assert set(fit) >= {"a", "b", "r_squared", "slope_stderr", "n_min"}

    def test_threads_do_not_change_bytes(self):
        main(SWEEP_ARGS + ["--threads", "1"])
        base_csv, base_fit = read("sweep.csv"), read("sweep_fit.json")
        main(SWEEP_ARGS + ["--threads", "3"])
        assert read("sweep.csv") == base_csv
        assert read("sweep_fit.json") == base_fit

    def test_env_threads_equivalent(self, monkeypatch):
        main(SWEEP_ARGS)
        base = read("sweep.csv")
        monkeypatch.setenv("COLLAPSE_SIM_THREADS", "2")
        main(SWEEP_ARGS)
        assert read("sweep.csv") == base

    def test_bad_env_threads(self, monkeypatch, capsys):
        monkeypatch.setenv("COLLAPSE_SIM_THREADS", "many")
        rc = main(SWEEP_ARGS)
        assert rc == 2
        assert "COLLAPSE_SIM_THREADS" in capsys.readouterr().err

    def test_too_few_rows_for_fit(self, capsys):
        rc = main(["sweep", "--n-list", "4,8", "--m", "20", "--dt", "0.04"])
        assert rc == 2
        capsys.readouterr()

    def test_zero_m_rejected(self):
        assert main(["sweep", "--n-list", "4,8,16", "--m", "0"]) == 2

    def test_step_mode(self):
        rc = main(
            [
                "sweep",
                "--mode",
                "step",
                "--n-list",
                "2,8",
                "--m",
                "16",
                "--horizon",
                "0.5",
                "--dt",
                "0.04",
                "--master-seed",
                "3",
            ]
        )
        assert rc == 0
        lines = read("sweep.csv").decode().splitlines()
        assert lines[0] == "N,mean_rise,stderr,realizations"
        assert len(lines) == 3
        fit = json.loads(read("sweep_fit.json"))
        assert fit["mode"] == "step"
        assert fit["realizations"] == 16


class TestBayes:
    def test_outputs(self):
        rc = main(
            ["bayes", "--n-sites", "4", "--m", "500", "--t", "6", "--master-seed", "8"]
        )
        assert rc == 0
        lines = read("bayes.csv").decode().splitlines()
        assert lines[0] == "site,weight,count,frequency"
        assert len(lines) == 5
        counts = [int(row.split(",")[2]) for row in lines[1:]]
        summary = json.loads(read("bayes_summary.json"))
        assert sum(counts) + summary["unresolved"] == 500

    def test_explicit_weights(self):
        rc = main(["bayes", "--weights", "0.5,0.3,0.2", "--m", "200", "--t", "6"])
        assert rc == 0
        rows = read("bayes.csv").decode().splitlines()[1:]
        weights = [float(r.split(",")[1]) for r in rows]
        assert weights == pytest.approx([0.5, 0.3, 0.2])

    def test_negative_weights_rejected(self):
        assert main(["bayes", "--weights", "0.5,-0.1"]) == 2

    def test_deterministic(self):
        argv = ["bayes", "--n-sites", "3", "--m", "300", "--master-seed", "4"]
        main(argv)
        base = read("bayes.csv")
        main(argv)
        assert read("bayes.csv") == base


class TestBloch:
    ARGS = [
        "bloch",
        "--n-sites",
        "4",
        "--m",
        "20",
        "--steps",
        "20",
        "--dt",
        "0.01",
        "--master-seed",
        "6",
    ]

    def test_outputs(self):
        rc = main(self.ARGS)
        assert rc == 0
        lines = read("bloch.csv").decode().splitlines()
        assert lines[0] == "t,mean_purity,stderr_purity"
        assert len(lines) == 22
        summary = json.loads(read("bloch_summary.json"))
        assert summary["schema_version"] == 1
        assert 0.0 < summary["final_mean_purity"] <= 1.0 + 1e-9
        assert summary["repairs"] >= 0

    def test_twin_summary_fields(self):
        rc = main(self.ARGS + ["--twin", "true", "--twin-steps", "500"])
        assert rc == 0
        summary = json.loads(read("bloch_summary.json"))
        assert summary["twin_steps"] == 500
        assert summary["twin_max_deviation"] <= 1e-10

    def test_twin_needs_plain_measurement(self, capsys):
        rc = main(self.ARGS + ["--twin", "true", "--energy", "0.5"])
        assert rc == 2
        assert "twin" in capsys.readouterr().err


class TestCheck:
    ARGS = [
        "check",
        "--n-sites",
        "4",
        "--m",
        "200",
        "--t-grid",
        "0,0.5",
        "--dt",
        "0.04",
        "--master-seed",
        "12",
    ]

    def test_outputs(self):
        rc = main(self.ARGS)
        assert rc == 0
        lines = read("check.csv").decode().splitlines()
        assert lines[0] == (
            "t,mean_pair,stderr_mean,max_pair,stderr_max,bound,"
            "margin_mean,margin_max"
        )
        assert len(lines) == 3
        summary = json.loads(read("check_summary.json"))
        assert summary["satisfied"] is True

    def test_strict_failure_exit_code(self):
        rc = main(self.ARGS + ["--sigmas", "-1000", "--strict", "true"])
        assert rc == 3
        rc = main(self.ARGS + ["--sigmas", "-1000"])
        assert rc == 0
        summary = json.loads(read("check_summary.json"))
        assert summary["satisfied"] is False


class TestConfig:
    def test_root_keys_apply(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_sites": 4, "dt": 0.04, "master_seed": 17}))
        rc = main(["trajectory", "--config", str(cfg)])
        assert rc == 0
        header = read("trajectory.csv").decode().splitlines()[0]
        assert header == "t,u_1,u_2,u_3,u_4"

    def test_flag_beats_root(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_sites": 4, "dt": 0.04}))
        main(["trajectory", "--config", str(cfg), "--n-sites", "3"])
        header = read("trajectory.csv").decode().splitlines()[0]
        assert header == "t,u_1,u_2,u_3"

    def test_block_beats_default_and_flag_beats_block(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "dt": 0.04,
                    "master_seed": 2,
                    "sweep": {"n_list": [4, 8, 16], "m": 30},
                }
            )
        )
        main(["sweep", "--config", str(cfg)])
        rows = read("sweep.csv").decode().splitlines()[1:]
        assert all(int(r.split(",")[3]) == 30 for r in rows)
        main(["sweep", "--config", str(cfg), "--m", "25"])
        rows = read("sweep.csv").decode().splitlines()[1:]
        assert all(int(r.split(",")[3]) == 25 for r in rows)

    def test_unknown_root_key(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"nsites": 4}))
        assert main(["trajectory", "--config", str(cfg)]) == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_unknown_block_key(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"sweep": {"count": 5}}))
        assert main(["sweep", "--config", str(cfg)]) == 2
        assert "section" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        assert main(["trajectory", "--config", str(cfg)]) == 2

    def test_missing_file(self):
        assert main(["trajectory", "--config", "no-such-file.json"]) == 2

    def test_bad_param_value(self):
        assert main(["trajectory", "--dt", "-0.1"]) == 2


class TestEntrypoints:
    def test_module_help(self):
        proc = subprocess.run(
            [sys.executable, "-m", "collapse_sim", "--help"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        for name in ("trajectory", "sweep", "bayes", "bloch", "check"):
            assert name in proc.stdout

    def test_console_script(self):
        exe = shutil.which("collapse-sim")
        assert exe is not None
        proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
