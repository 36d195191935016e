import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lcflow.checks import g_by_quadrature
from lcflow.diagnostics import (
    BootstrapReport,
    BootstrapTracker,
    GNEstimate,
    RecordCSV,
    RunRecord,
    director_identities,
    estimate_inequality,
    flux_residual,
    g_potential,
    gn_estimate,
    gn_theta,
    mass,
    measure,
    random_band_limited,
    read_records,
    total_energy,
    transformed_pressure,
    vorticity_residual,
)
from lcflow.experiments import geodesic_twist, manufactured_state
from lcflow.grid import Grid, Scheme, get_calculus
from lcflow.model import PhysParams, State


class TestPressurePotential:
    @settings(max_examples=60, deadline=None)
    @given(
        gamma=st.floats(1.01, 5.0),
        a=st.floats(0.1, 10.0),
        rho_bar=st.floats(0.2, 20.0),
        ratio=st.floats(0.25, 3.0),
    )
    def test_matches_quadrature(self, gamma, a, rho_bar, ratio):
        params = PhysParams(a=a, gamma=gamma, rho_bar=rho_bar)
        rho = rho_bar * ratio
        closed = float(g_potential(np.array([rho]), params)[0])
        quad = g_by_quadrature(rho, params)
        assert closed >= 0.0
        assert closed == pytest.approx(quad, rel=1e-10, abs=1e-300)

    def test_zero_at_background(self):
        params = PhysParams(gamma=2.7, rho_bar=3.3)
        assert g_potential(np.array([3.3]), params)[0] == 0.0

    def test_small_deviation_branch_is_continuous(self):
        params = PhysParams(gamma=1.7, rho_bar=2.0)
        rho = 2.0 * (1 + np.array([0.99e-3, 1.01e-3]))
        g = g_potential(rho, params)
        # both sides of the series cutoff agree with the quadratic leading term
        lead = 0.5 * params.a * params.gamma * 2.0 ** (params.gamma - 2) * (rho - 2.0) ** 2
        assert np.allclose(g, lead, rtol=2e-3)

    def test_transformed_pressure_log_branch(self):
        params = PhysParams(alpha=1.5, gamma=1.5)
        tp = transformed_pressure(np.array([1.0, math.e]), params)
        assert tp[1] - tp[0] == pytest.approx(params.a * params.gamma)


class TestConservedQuantities:
    def test_equilibrium_energy_is_zero(self, grid16, params):
        s = State.equilibrium(grid16, params)
        assert total_energy(s, params) == 0.0
        assert mass(s) == pytest.approx(params.rho_bar * grid16.volume)

    def test_measure_fields(self, grid16, params):
        s = manufactured_state(grid16, params)
        m = measure(s, params)
        assert m.total_energy == pytest.approx(total_energy(s, params), rel=1e-12)
        assert m.unit_defect < 1e-14
        assert m.grad_d_l3 > 0 and m.grad_u_linf > 0


class TestIdentities:
    def test_flux_spectral(self, grid32, params):
        s = manufactured_state(grid32, params)
        assert flux_residual(s, params) < 1e-8

    def test_vorticity_spectral(self, grid32, params):
        s = manufactured_state(grid32, params)
        assert vorticity_residual(s, params) < 1e-8

    def test_flux_fd_converges(self, params):
        res = []
        for n in (16, 32):
            g = Grid((n, n, n))
            res.append(flux_residual(manufactured_state(g, params), params, get_calculus(g, Scheme.FD2)))
        assert math.log2(res[0] / res[1]) > 1.8

    def test_flux_detects_wrong_acceleration(self, grid32, params):
        s = manufactured_state(grid32, params)
        wrong = random_band_limited(grid32, np.random.default_rng(5), 2)
        assert flux_residual(s, params, u_t=wrong) > 1e-2

    def test_director_identities(self, grid32, params):
        ids = director_identities(geodesic_twist(grid32, params).d, grid32)
        assert ids.tension_defect < 1e-10
        mixed = director_identities(manufactured_state(grid32, params).d, grid32)
        assert mixed.splitting_relative < 1e-9


class TestRecords:
    def test_csv_round_trip(self, grid16, params, tmp_path):
        s = manufactured_state(grid16, params)
        rec = RunRecord.from_measurements(measure(s, params), 0.01, blowup_band=1)
        path = tmp_path / "records.csv"
        with open(path, "w", newline="") as fh:
            sink = RecordCSV(fh)
            sink(rec)
            sink(rec)
        back = read_records(path)
        assert back == [rec, rec]
        assert path.read_text().splitlines()[0].split(",") == RunRecord.columns()

    def test_float_format_is_exact(self):
        buf = io.StringIO()
        values = dict.fromkeys(RunRecord.columns()[:15], 0.1 + 0.2)
        RecordCSV(buf, header=False)(RunRecord(**values))
        assert float(buf.getvalue().split(",")[0]) == 0.1 + 0.2


class TestBootstrap:
    def test_weights(self):
        p = PhysParams(rho_bar=4.0, alpha=2.0, gamma=1.5, mu1=0.5, mu2=0.1)
        r = BootstrapReport.start(p)
        assert r.rho_weight == pytest.approx(4.0**-0.5)
        assert r.u_weight == pytest.approx(0.5 * 16 / 8)
        assert BootstrapReport.start(p, "2mu1+mu2").u_weight == pytest.approx(1.1 * 16 / 8)
        with pytest.raises(ValueError):
            BootstrapReport.start(p, "lambda")

    def test_tracker_json_round_trip(self, grid16, params):
        s = manufactured_state(grid16, params)
        tracker = BootstrapTracker(params)
        m = measure(s, params)
        rec = RunRecord.from_measurements(m, 0.0)
        tracker(rec, s, m)
        s2 = s.copy_with(t=0.1)
        m2 = measure(s2, params)
        tracker(RunRecord.from_measurements(m2, 0.1), s2, m2)
        clone = BootstrapTracker(params)
        clone.restore(tracker.to_json())
        assert clone.report == tracker.report
        assert tracker.report.ticks == 2
        # constant integrand over [0, 0.1] integrates exactly
        assert tracker.report.int_grad_ut_sq == pytest.approx(0.1 * m.grad_ut_l2**2)
        assert tracker.report.initial_functionals()["E_d"] == m.grad_d_l3


class TestInterpolationProbes:
    def test_theta(self):
        assert gn_theta(1, 2, 3.0, 2.0, 2.0) == pytest.approx(0.75)
        assert gn_theta(0, 1, 6.0, 2.0, 2.0) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            gn_theta(2, 1, 2.0, 2.0, 2.0)

    def test_band_limited_is_normalized(self, grid16):
        f = random_band_limited(grid16, np.random.default_rng(0), 2)
        assert np.abs(f).max() == pytest.approx(1.0)
        assert abs(f.mean()) < 1e-14

    def test_injected_fields_are_used(self, grid16):
        x, y, z = grid16.coordinates()
        f = np.stack([np.sin(x), np.cos(y), np.sin(z)])
        est = estimate_inequality("l6_sobolev", 0, grid16, fields=[f, 2 * f])
        assert est.ratios[0] == pytest.approx(est.ratios[1])  # homogeneous of degree 0

    def test_gn_estimate_is_scale_invariant(self, grid16):
        rng = np.random.default_rng(3)
        f = random_band_limited(grid16, rng, 2, components=None)
        est = gn_estimate(0, grid16, 1, 2, 4.0, 2.0, 2.0, fields=[f, 7.0 * f])
        assert est.ratios[0] == pytest.approx(est.ratios[1])

    def test_tail_increase(self):
        est = GNEstimate("x", {}, tuple([1.0] * 60 + [1.1]))
        assert est.tail_increase(50) == pytest.approx(0.1)
        assert GNEstimate("x", {}, (1.0,)).tail_increase() == math.inf
