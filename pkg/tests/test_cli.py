import pytest

from lcflow.artifacts import read_manifest, verify_manifest
from lcflow.cli import EXIT_BLOWUP, EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from lcflow.diagnostics import RunRecord, read_records

PERTURBED = """
physics.rho_bar = 4
physics.mu1 = 0.1
grid.dims = 12
solver.t_end = 0.3
solver.dt_max = 0.02
init.rho_perturbation_amplitude = 0.05
init.velocity_amplitude = 0.3
init.director_gradient_target = 0.1
init.seed = 5
output.cadence = 2
output.checkpoint_every = 6
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestRun:
    def test_outputs(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", write(tmp_path, PERTURBED), "--out", str(out)]) == EXIT_OK
        for name in ("config.txt", "records.csv", "bootstrap.txt", "checkpoint.bin", "manifest.txt"):
            assert (out / name).exists()
        assert verify_manifest(out) == []
        info = read_manifest(out)["run"]
        assert info["outcome"] == "completed" and info["seed"] == "5"
        rows = read_records(out / "records.csv")
        assert rows[0].t == 0.0 and rows[-1].t == pytest.approx(0.3)
        assert (out / "records.csv").read_text().splitlines()[0] == ",".join(RunRecord.columns())
        assert capsys.readouterr().out.startswith("completed")

    def test_resume_reproduces_records(self, tmp_path, monkeypatch):
        cfg = write(tmp_path, PERTURBED)
        full, part = tmp_path / "full", tmp_path / "part"
        assert main(["run", cfg, "--out", str(full)]) == EXIT_OK
        # stop early, then resume the same configuration from the last checkpoint
        monkeypatch.setenv("LCFLOW_SOLVER_T_END", "0.17")
        assert main(["run", cfg, "--out", str(part)]) == EXIT_OK
        monkeypatch.delenv("LCFLOW_SOLVER_T_END")
        assert main(["run", cfg, "--out", str(part), "--resume"]) == EXIT_OK
        assert read_manifest(part)["run"]["resumed_from_step"] != "-"
        assert (part / "records.csv").read_bytes() == (full / "records.csv").read_bytes()
        assert (part / "bootstrap.txt").read_text() == (full / "bootstrap.txt").read_text()

    def test_resume_with_other_params(self, tmp_path):
        out = tmp_path / "out"
        assert main(["run", write(tmp_path, PERTURBED), "--out", str(out)]) == EXIT_OK
        other = write(tmp_path, PERTURBED + "physics.nu = 2\n", "other.cfg")
        assert main(["run", other, "--out", str(out), "--resume"]) == EXIT_CONFIG

    def test_blowup_exit(self, tmp_path):
        cfg = write(tmp_path, PERTURBED.replace("solver.t_end = 0.3", "solver.t_end = 100") + "solver.dt_override = 5\n")
        assert main(["run", cfg, "--out", str(tmp_path / "o")]) == EXIT_BLOWUP
        assert read_manifest(tmp_path / "o")["run"]["outcome"] == "blew_up"

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = write(tmp_path, PERTURBED + "physics.q = 7\n")
        assert main(["run", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
        assert "physics.q" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.cfg")]) == EXIT_IO

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LCFLOW_SOLVER_T_END", "0.04")
        out = tmp_path / "o"
        assert main(["run", write(tmp_path, PERTURBED), "--out", str(out)]) == EXIT_OK
        assert read_records(out / "records.csv")[-1].t == pytest.approx(0.04)


class TestReport:
    def test_run_report_with_figures(self, tmp_path):
        pytest.importorskip("matplotlib")
        out = tmp_path / "out"
        main(["run", write(tmp_path, PERTURBED), "--out", str(out)])
        assert main(["report", str(out)]) == EXIT_OK
        rep = out / "report"
        for name in ("summary.txt", "bootstrap.csv", "energy.png", "norms.png"):
            assert (rep / name).stat().st_size > 0

    def test_report_rejects_tampering(self, tmp_path):
        out = tmp_path / "out"
        main(["run", write(tmp_path, PERTURBED), "--out", str(out)])
        (out / "config.txt").write_text("tampered\n")
        assert main(["report", str(out), "--no-figures"]) == EXIT_IO

    def test_report_missing_dir(self, tmp_path):
        assert main(["report", str(tmp_path / "none")]) == EXIT_IO


class TestSweep:
    def test_sweep_and_report(self, tmp_path):
        pytest.importorskip("matplotlib")
        spec = write(
            tmp_path,
            "grid.dims = 8\nsolver.t_end = 0.05\nphysics.mu1 = 0.1\ninit.velocity_amplitude = 0.2\n"
            "sweep.rho_bar_values = 2, 4\nsweep.grad_d_targets = 0.1\nsweep.seeds = 0\nsweep.delta = 0.5\n",
            "sweep.cfg",
        )
        out = tmp_path / "sw"
        assert main(["sweep", spec, "--out", str(out)]) == EXIT_OK
        for name in ("regime_map.csv", "closure.csv", "trend.txt", "sweep_config.txt", "manifest.txt"):
            assert (out / name).exists()
        assert verify_manifest(out) == []
        assert main(["report", str(out)]) == EXIT_OK
        for name in ("regime_table.csv", "summary.txt", "regime_map.png"):
            assert (out / "report" / name).exists()

    def test_bad_sweep_spec(self, tmp_path):
        spec = write(tmp_path, "grid.dims = 8\nsweep.rho_bar_values = 1\n", "s.cfg")
        assert main(["sweep", spec, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


class TestCheckAndDefaults:
    def test_g_suite(self, capsys):
        assert main(["check", "g", "--seed", "1"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "3/3 checks passed" in out and "FAIL" not in out

    def test_defaults(self, capsys):
        assert main(["defaults"]) == EXIT_OK
        assert "`physics.rho_bar`" in capsys.readouterr().out

    def test_check_failure_exit(self, monkeypatch):
        from lcflow import checks

        monkeypatch.setattr(checks, "check_g_oracle", lambda seed=0: [checks.CheckResult("x", 1.0, 0.0)])
        assert main(["check", "g"]) == EXIT_CHECK

    def test_usage_error(self):
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 2
