import json
import os
import subprocess
import sys

import numpy as np
import pytest

from soclab import cli


def run_cli(args, tmp_path):
    return cli.main([*args, "--out", str(tmp_path), "--label", "t"])


class TestSurface:
    def test_usage_error_exit_code(self, capsys):
        assert cli.main(["no-such-command"]) == cli.EXIT_USAGE
        capsys.readouterr()

    def test_missing_required_flag(self, capsys):
        assert cli.main(["optimal-path", "--x0", "0"]) == cli.EXIT_USAGE
        capsys.readouterr()

    def test_critical_benchmark(self, tmp_path, capsys):
        code = run_cli(["simulate", "critical", "--sigma", "1", "--t", "3",
                        "--dt", "1e-3", "--no-noise", "--x0", "1"], tmp_path)
        assert code == cli.EXIT_OK
        rows = np.loadtxt(tmp_path / "simulate-critical" / "t" / "trajectory.csv",
                          delimiter=",", skiprows=1)
        assert rows[-1, 0] == pytest.approx(3.0)
        assert rows[-1, 1] == pytest.approx(0.5, abs=1e-3)
        capsys.readouterr()

    def test_action_benchmark_value(self, tmp_path, capsys):
        code = run_cli(["action", "--benchmark", "linear", "--sigma", "1"], tmp_path)
        assert code == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "0.642857143" in out
        rep = json.loads((tmp_path / "action" / "t" / "report.json").read_text())
        assert rep["total"] == pytest.approx(9 / 14, abs=1e-6)

    def test_action_from_csv(self, tmp_path, capsys):
        t = np.linspace(0, 1, 1001)
        path = tmp_path / "path.csv"
        with open(path, "w") as fh:
            fh.write("t,x\n")
            for a, b in zip(t, t):
                fh.write(f"{a:.17g},{b:.17g}\n")
        code = run_cli(["action", "--path", str(path), "--sigma", "1"], tmp_path)
        assert code == cli.EXIT_OK
        capsys.readouterr()

    def test_verify_cancellation_exit_zero(self, tmp_path, capsys):
        code = run_cli(["verify", "cancellation", "--degree", "8"], tmp_path)
        assert code == cli.EXIT_OK
        rep = json.loads((tmp_path / "verify-cancellation" / "t" /
                          "report.json").read_text())
        assert rep["passed"] and rep["all_zero"]
        capsys.readouterr()

    def test_config_file_with_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[model]\nsigma = 1.0\nfrobnicate = 3\n")
        code = cli.main(["simulate", "reduced", "--config", str(cfg),
                         "--out", str(tmp_path), "--label", "t"])
        assert code == cli.EXIT_USAGE
        assert "frobnicate" in capsys.readouterr().err

    def test_config_file_supplies_defaults(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[model]\nsigma = 1.0\nn = 64\n"
                       "[simulate]\nhorizon = 0.1\ndt = 0.005  # comment\n")
        code = cli.main(["simulate", "reduced", "--config", str(cfg),
                         "--out", str(tmp_path), "--label", "t"])
        assert code == cli.EXIT_OK
        echo = (tmp_path / "simulate-reduced" / "t" / "config.echo").read_text()
        assert "horizon = 0.1" in echo
        capsys.readouterr()

    def test_outputs_are_deterministic(self, tmp_path, capsys):
        for label in ("a", "b"):
            cli.main(["simulate", "reduced", "--sigma", "1", "--n", "100",
                      "--t", "0.1", "--dt", "0.002", "--replicas", "4",
                      "--seed", "99", "--out", str(tmp_path), "--label", label])
        read = lambda lab: (tmp_path / "simulate-reduced" / lab /
                            "trajectory.csv").read_bytes()
        assert read("a") == read("b")
        capsys.readouterr()

    def test_floats_serialized_at_full_precision(self, tmp_path, capsys):
        run_cli(["simulate", "reduced", "--sigma", "1", "--n", "10", "--t", "0.05",
                 "--dt", "0.01", "--seed", "3"], tmp_path)
        text = (tmp_path / "simulate-reduced" / "t" / "trajectory.csv").read_text()
        data_line = text.splitlines()[-1].split(",")
        x = float(data_line[1])
        assert format(x, ".17g") == data_line[1]
        capsys.readouterr()

    def test_check_tail_subcommand(self, tmp_path, capsys):
        code = run_cli(["check", "tail", "--a", "0.05", "--n", "10000"], tmp_path)
        assert code == cli.EXIT_OK
        rep = json.loads((tmp_path / "check-tail" / "t" / "report.json").read_text())
        assert rep["within_mills"]
        capsys.readouterr()

    def test_resolvent_probe_subcommand(self, tmp_path, capsys):
        code = run_cli(["resolvent", "--probe", "--npts", "121"], tmp_path)
        assert code == cli.EXIT_OK
        rep = json.loads((tmp_path / "resolvent" / "t" / "report.json").read_text())
        assert rep["two_init_gap"] < 1e-6
        capsys.readouterr()

    def test_entry_point_via_subprocess(self, tmp_path):
        out = subprocess.run([sys.executable, "-m", "soclab.cli", "simulate",
                              "ou", "--sigma", "1", "--t", "0.5", "--dt", "0.01",
                              "--y0", "4", "--seed", "1",
                              "--out", str(tmp_path), "--label", "sp"],
                             capture_output=True, text=True)
        assert out.returncode == 0
        assert (tmp_path / "simulate-ou" / "sp" / "report.json").exists()
