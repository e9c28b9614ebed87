"""End-to-end tests of the command-line interface.

Most tests call ``cli.main`` in process for speed; one goes through
``python -m convdyn`` to cover the module entry point.
"""

import csv
import json
import subprocess
import sys

import pytest

from convdyn import cli


def run_cli(argv, capsys):
    """Invoke main, returning (exit_code, stdout, stderr)."""
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


GLOBAL_RUN = [
    "run", "--p", "6", "--k", "5", "--ratio", "1", "--seed", "3",
    "--max-iters", "200000", "--stride", "10",
]

BAD_RUN = [
    "run", "--p", "6", "--k", "8", "--ratio", "0", "--seed", "1",
    "--init", "bad", "--max-iters", "200000", "--stride", "50",
]


class TestRunCommand:
    def test_global_run_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "traj.csv"
        code, stdout, _ = run_cli(GLOBAL_RUN + ["--out", str(out)], capsys)
        assert code == 0
        assert stdout.startswith("class=global")
        assert f"out={out}" in stdout
        lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        header = lines[0].split(",")
        assert header == [
            "iter", "phi", "sin2phi", "a_dot_astar", "sum_a",
            "v_norm", "loss", "dist_a", "sum_gap",
        ]
        rows = [line.split(",") for line in lines[1:]]
        assert len(rows) >= 2
        assert int(rows[0][0]) == 0
        # final point is at the global minimum
        assert float(rows[-1][6]) <= 1e-15

    def test_json_format(self, tmp_path, capsys):
        out = tmp_path / "traj.json"
        code, _, _ = run_cli(
            GLOBAL_RUN + ["--out", str(out), "--format", "json"], capsys
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["class"] == "global"
        assert set(payload["records"]) >= {"iter", "phi", "loss"}
        assert len(payload["records"]["iter"]) == len(payload["records"]["loss"])
        assert payload["meta"]["stop_reason"] == "grad_tol"

    def test_bad_init_exit_code(self, tmp_path, capsys):
        out = tmp_path / "traj.csv"
        code, stdout, _ = run_cli(BAD_RUN + ["--out", str(out)], capsys)
        assert code == 3
        assert stdout.startswith("class=spurious_local")
        assert out.exists()

    def test_undetermined_exit_code(self, tmp_path, capsys):
        out = tmp_path / "traj.csv"
        argv = GLOBAL_RUN + ["--out", str(out), "--eta", "1e-12"]
        argv[argv.index("--max-iters") + 1] = "3"
        code, stdout, _ = run_cli(argv, capsys)
        assert code == 4
        assert stdout.startswith("class=undetermined")

    def test_byte_determinism(self, tmp_path, capsys):
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        assert run_cli(GLOBAL_RUN + ["--out", str(first)], capsys)[0] == 0
        assert run_cli(GLOBAL_RUN + ["--out", str(second)], capsys)[0] == 0
        assert first.read_bytes() == second.read_bytes()

    def test_seed_env_fallback(self, tmp_path, capsys, monkeypatch):
        flagged = tmp_path / "flag.csv"
        assert run_cli(GLOBAL_RUN + ["--out", str(flagged)], capsys)[0] == 0

        argv = list(GLOBAL_RUN)
        seed_at = argv.index("--seed")
        del argv[seed_at : seed_at + 2]

        from_env = tmp_path / "env.csv"
        monkeypatch.setenv("CONVDYN_SEED", "3")
        assert run_cli(argv + ["--out", str(from_env)], capsys)[0] == 0
        assert from_env.read_bytes() == flagged.read_bytes()

        # explicit flag wins over the environment
        overridden = tmp_path / "override.csv"
        monkeypatch.setenv("CONVDYN_SEED", "99")
        assert run_cli(GLOBAL_RUN + ["--out", str(overridden)], capsys)[0] == 0
        assert overridden.read_bytes() == flagged.read_bytes()

    def test_bad_env_seed(self, tmp_path, capsys, monkeypatch):
        argv = list(GLOBAL_RUN)
        seed_at = argv.index("--seed")
        del argv[seed_at : seed_at + 2]
        monkeypatch.setenv("CONVDYN_SEED", "not-a-number")
        code, _, stderr = run_cli(argv + ["--out", str(tmp_path / "x.csv")], capsys)
        assert code == 2
        assert "CONVDYN_SEED" in stderr

    @pytest.mark.parametrize(
        "extra",
        [
            ["--p", "0"],
            ["--eta", "0.1", "--eta-scale", "0.5"],
            ["--format", "xml"],
            ["--init", "worst"],
            ["--eta", "-1"],
            ["--k", "5,7"],
        ],
    )
    def test_invalid_options_exit_2(self, tmp_path, capsys, extra):
        argv = ["run", "--seed", "0", "--out", str(tmp_path / "x.csv")] + extra
        code, _, stderr = run_cli(argv, capsys)
        assert code == 2
        assert stderr.startswith("error:")


class TestGridCommand:
    GRID = [
        "grid", "--p", "6", "--k", "6,9", "--ratio", "0,4", "--trials", "20",
        "--seed", "5", "--workers", "1",
    ]

    def test_grid_csv(self, tmp_path, capsys):
        out = tmp_path / "grid.csv"
        code, stdout, _ = run_cli(self.GRID + ["--out", str(out)], capsys)
        assert code == 0
        assert stdout.count("k=") == 4
        with open(out, newline="") as handle:
            rows = [r for r in csv.reader(handle) if not r[0].startswith("#")]
        assert rows[0] == [
            "k", "ratio", "trials", "successes", "probability",
            "mean_iters", "undetermined_count",
        ]
        assert len(rows) == 5
        for row in rows[1:]:
            assert 0.0 <= float(row[4]) <= 1.0
            assert int(row[3]) <= int(row[2])

    def test_grid_json(self, tmp_path, capsys):
        out = tmp_path / "grid.json"
        code, _, _ = run_cli(
            self.GRID + ["--out", str(out), "--format", "json"], capsys
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert len(payload["rows"]) == 4
        assert payload["rows"][0]["k"] == 6
        assert "eta_by_cell" in payload["meta"]

    def test_infeasible_cell_exit_2(self, tmp_path, capsys):
        argv = [
            "grid", "--p", "6", "--k", "25", "--ratio", "30",
            "--trials", "5", "--out", str(tmp_path / "x.csv"),
        ]
        code, _, stderr = run_cli(argv, capsys)
        assert code == 2
        assert "k=25" in stderr and "ratio=30" in stderr

    def test_empty_axis_exit_2(self, tmp_path, capsys):
        argv = ["grid", "--k", "", "--ratio", "1", "--out", str(tmp_path / "x.csv")]
        code, _, stderr = run_cli(argv, capsys)
        assert code == 2
        assert "at least one" in stderr


class TestVerifyCommand:
    def test_verify_passes(self, capsys):
        code, stdout, _ = run_cli(
            ["verify", "--p", "5", "--n-samples", "20000", "--seed", "11"], capsys
        )
        assert code == 0
        assert stdout.rstrip().splitlines()[-1] == "PASS"
        assert "identities:" in stdout
        assert "finite differences:" in stdout
        assert "oracle:" in stdout


class TestPhasesCommand:
    def test_phase_fields(self, capsys):
        argv = [
            "phases", "--p", "10", "--k", "15", "--ratio", "4", "--seed", "1",
            "--max-iters", "400000", "--stride", "10",
        ]
        code, stdout, _ = run_cli(argv, capsys)
        assert code == 0
        fields = dict(
            line.split("=", 1) for line in stdout.splitlines() if "=" in line
        )
        assert fields["class"] == "global"
        assert int(fields["phase1_end"]) > 0
        assert 0.0 < float(fields["pre_rate"]) < float(fields["post_rate"])
        assert float(fields["rate_ratio"]) > 1.0
        assert abs(float(fields["cos_phi_at_transition"])) <= 1.0

    def test_phases_optional_output(self, tmp_path, capsys):
        out = tmp_path / "traj.csv"
        argv = [
            "phases", "--p", "10", "--k", "15", "--ratio", "4", "--seed", "1",
            "--max-iters", "400000", "--stride", "10", "--out", str(out),
        ]
        code, _, _ = run_cli(argv, capsys)
        assert code == 0
        assert out.exists()

    def test_no_transition_for_bad_basin(self, capsys):
        argv = [
            "phases", "--p", "6", "--k", "8", "--ratio", "0", "--seed", "1",
            "--init", "bad", "--max-iters", "20000", "--stride", "50",
        ]
        code, stdout, _ = run_cli(argv, capsys)
        assert code == 0
        assert "no phase transition" in stdout


class TestConfigFile:
    def write_config(self, tmp_path, text):
        path = tmp_path / "run.cfg"
        path.write_text(text)
        return str(path)

    def test_config_file_matches_flags(self, tmp_path, capsys):
        flagged = tmp_path / "flag.csv"
        assert run_cli(GLOBAL_RUN + ["--out", str(flagged)], capsys)[0] == 0
        cfg = self.write_config(
            tmp_path,
            "# comment\np = 6\nk = 5\nratio = 1\nseed = 3\n"
            "max-iters = 200000\nstride = 10\n",
        )
        from_file = tmp_path / "file.csv"
        code, _, _ = run_cli(
            ["run", "--config", cfg, "--out", str(from_file)], capsys
        )
        assert code == 0
        assert from_file.read_bytes() == flagged.read_bytes()

    def test_flags_override_config(self, tmp_path, capsys):
        flagged = tmp_path / "flag.csv"
        assert run_cli(GLOBAL_RUN + ["--out", str(flagged)], capsys)[0] == 0
        cfg = self.write_config(
            tmp_path,
            "p = 6\nk = 5\nratio = 1\nseed = 99\nmax-iters = 200000\nstride = 10\n",
        )
        out = tmp_path / "override.csv"
        code, _, _ = run_cli(
            ["run", "--config", cfg, "--seed", "3", "--out", str(out)], capsys
        )
        assert code == 0
        assert out.read_bytes() == flagged.read_bytes()

    def test_unknown_key_exit_2(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, "p = 6\nbogus = 1\n")
        code, _, stderr = run_cli(["run", "--config", cfg], capsys)
        assert code == 2
        assert "bogus" in stderr

    def test_malformed_line_exit_2(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, "p 6\n")
        code, _, stderr = run_cli(["run", "--config", cfg], capsys)
        assert code == 2
        assert "key=value" in stderr

    def test_missing_file_exit_2(self, tmp_path, capsys):
        code, _, stderr = run_cli(
            ["run", "--config", str(tmp_path / "absent.cfg")], capsys
        )
        assert code == 2
        assert "cannot read" in stderr

    def test_unparseable_value_exit_2(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, "p = six\n")
        code, _, stderr = run_cli(["run", "--config", cfg], capsys)
        assert code == 2
        assert "cannot parse" in stderr


class TestModuleInvocation:
    def test_python_dash_m(self, tmp_path):
        out = tmp_path / "traj.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "convdyn"] + GLOBAL_RUN + ["--out", str(out)],
            capture_output=True,
            text=True,
            cwd=tmp_path,
        )
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.startswith("class=global")
        assert out.exists()
