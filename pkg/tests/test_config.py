import math

import pytest
from hypothesis import given, settings, strategies as st

from lcflow.config import (
    ConfigError,
    defaults_table,
    emit_config,
    load_config,
    parse_config,
    parse_sweep_config,
)
from lcflow.grid import Scheme

from conftest import REPO

MINIMAL = "grid.dims = 16\n"


class TestParse:
    def test_minimal_uses_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.grid.dims == (16, 16, 16)
        assert cfg.grid.lengths == pytest.approx((2 * math.pi,) * 3)
        assert cfg.params.rho_bar == 4.0 and cfg.solver.t_end == 1.0
        assert cfg.scheme is Scheme.SPECTRAL

    def test_full_line_grammar(self):
        text = """
        # comment
        physics.rho_bar = 8   # trailing comment
        grid.dims = 16, 16, 8
        solver.mode = fd2
        solver.dt_override = 0.01
        solver.blowup_density_band = 0.5, 1.5
        init.seed = 3
        """
        cfg = parse_config(text)
        assert cfg.params.rho_bar == 8.0
        assert cfg.grid.dims == (16, 16, 8)
        assert cfg.scheme is Scheme.FD2
        assert cfg.solver.dt_override == 0.01
        assert cfg.solver.blowup_density_band == (0.5, 1.5)
        assert cfg.init.seed == 3

    @pytest.mark.parametrize(
        "text, path",
        [
            ("grid.dims = 16\nphysics.bogus = 1\n", "physics.bogus"),
            ("grid.dims = 16\nmesh.n = 1\n", "mesh.n"),
            ("physics.rho_bar = 2\n", "grid.dims"),
            ("grid.dims = 16\ngrid.dims = 8\n", "grid.dims"),
            ("grid.dims = 16\nphysics.q = 7\n", "physics.q"),
            ("grid.dims = 16\nphysics.mu1 = abc\n", "physics.mu1"),
            ("grid.dims = 16\nphysics.mu1 = nan\n", "physics.mu1"),
            ("grid.dims = 16\nsolver.mode = wavelet\n", "solver.mode"),
            ("grid.dims = 16\nsolver.cfl_number = 2\n", "solver.cfl_number"),
            ("grid.dims = 16\ninit.rho_perturbation_amplitude = 0.5\n", "init.rho_perturbation_amplitude"),
            ("grid.dims = 2\n", "grid.dims"),
            ("grid.dims = 16\noutput.cadence = 0\n", "output.cadence"),
        ],
    )
    def test_errors_name_the_key(self, text, path):
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert err.value.path == path

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config("grid.dims = 16\njust words\n")


class TestEnvironment:
    def test_override(self):
        cfg = parse_config(MINIMAL, env={"LCFLOW_SOLVER_T_END": "2.5", "LCFLOW_PHYSICS_RHO_BAR": "9", "HOME": "/"})
        assert cfg.solver.t_end == 2.5 and cfg.params.rho_bar == 9.0

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse_config(MINIMAL, env={"LCFLOW_SOLVER_TEND": "1"})
        assert err.value.path == "LCFLOW_SOLVER_TEND"

    def test_load_reads_environment(self, tmp_path, monkeypatch):
        path = tmp_path / "a.cfg"
        path.write_text(MINIMAL)
        monkeypatch.setenv("LCFLOW_GRID_DIMS", "8")
        assert load_config(path).grid.dims == (8, 8, 8)
        assert load_config(path, env={}).grid.dims == (16, 16, 16)


class TestEmit:
    @settings(max_examples=40, deadline=None)
    @given(
        rho_bar=st.floats(0.1, 100.0),
        mu1=st.floats(1e-3, 10.0),
        t_end=st.floats(1e-3, 50.0),
        n=st.integers(4, 64),
        seed=st.integers(0, 2**63),
        mode=st.sampled_from(["spectral", "fd2"]),
    )
    def test_round_trip(self, rho_bar, mu1, t_end, n, seed, mode):
        text = (
            f"physics.rho_bar = {rho_bar!r}\nphysics.mu1 = {mu1!r}\nsolver.t_end = {t_end!r}\n"
            f"grid.dims = {n}\ninit.seed = {seed}\nsolver.mode = {mode}\n"
        )
        cfg = parse_config(text)
        assert parse_config(emit_config(cfg)) == cfg
        assert parse_config(emit_config(cfg, docs=True)) == cfg

    def test_outside_regime_warns(self):
        cfg = parse_config(MINIMAL + "physics.alpha = 1.1\n")
        assert "warning" in emit_config(cfg)

    def test_defaults_table_lists_every_key(self):
        table = defaults_table()
        assert "`grid.dims` | `required`" in table
        assert "`sweep.alpha_gamma_pairs`" in table


class TestSweepConfig:
    def test_shipped_baseline(self):
        cfg, sweep = parse_sweep_config((REPO / "configs" / "baseline_sweep.cfg").read_text())
        assert sweep.rho_bar_values == (1.0, 4.0, 16.0)
        assert sweep.alpha_gamma_pairs == ((2.0, 1.5),)
        assert sweep.seeds == (0, 1)
        assert cfg.grid.dims == (32, 32, 32)

    def test_pairs(self):
        _, sweep = parse_sweep_config(
            MINIMAL + "sweep.rho_bar_values = 1\nsweep.grad_d_targets = 0.1\nsweep.alpha_gamma_pairs = 2:1.5; 3:2\n"
        )
        assert sweep.alpha_gamma_pairs == ((2.0, 1.5), (3.0, 2.0))

    def test_required(self):
        with pytest.raises(ConfigError) as err:
            parse_sweep_config(MINIMAL + "sweep.rho_bar_values = 1\n")
        assert err.value.path == "sweep.grad_d_targets"

    def test_round_trip(self):
        text = (REPO / "configs" / "baseline_sweep.cfg").read_text()
        cfg, sweep = parse_sweep_config(text)
        assert parse_sweep_config(emit_config(cfg, sweep=sweep)) == (cfg, sweep)

    @pytest.mark.parametrize("name", ["equilibrium.cfg", "perturbed.cfg"])
    def test_shipped_run_configs_parse(self, name):
        parse_config((REPO / "configs" / name).read_text())
