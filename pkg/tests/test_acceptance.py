"""Acceptance criteria 1-9. Each test prints one PASS/FAIL line at the required tolerance.

Run only these with ``pytest -m acceptance -s``.
"""

import math
import time

import pytest

from lcflow import checks
from lcflow.cli import EXIT_OK, main
from lcflow.diagnostics import read_records
from lcflow.experiments import (
    acoustic_convergence,
    acoustic_frequency,
    acoustic_state,
    advection_convergence,
    manufactured_state,
    read_regime_map,
    scaling_invariance_study,
    temporal_self_convergence,
    trend_report,
)
from lcflow.grid import Grid, Scheme
from lcflow.integrator import InitSpec, SolverConfig, build_initial_data, run
from lcflow.model import PhysParams

from conftest import DATA, REPO

pytestmark = pytest.mark.acceptance


def summarize(results):
    return "; ".join(f"{r.name} = {r.value:.3e}" for r in results)


def test_criterion_1_identities(verdict):
    start = time.perf_counter()
    results = (
        checks.check_equilibrium(n=32, steps=1000)
        + checks.check_unit_norm(n=32, steps=20)
        + checks.check_director_identities(n=32)
    )
    elapsed = time.perf_counter() - start
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    assert verdict(1, ok, f"{summarize(results)}; {elapsed:.0f}s")


def test_criterion_2_g_oracle(verdict):
    results = checks.check_g_oracle(n=100, seed=0, tol=1e-10)
    for r in results:
        print(r.line())
    assert verdict(2, all(r.passed for r in results), summarize(results))


def test_criterion_3_energy_dissipation(verdict):
    grid = Grid((32, 32, 32))
    params = PhysParams(rho_bar=4.0, alpha=2.0, gamma=1.5, mu1=0.1)
    state = build_initial_data(grid, params, InitSpec(0.1, 1.0, 0.1, 2, seed=7))
    energies = []
    outcome = run(
        state, params, SolverConfig(t_end=100.0), [lambda rec, s, m: energies.append(rec.total_energy)],
        cadence=1, max_steps=500,
    )
    e0 = energies[0]
    tol = 1e-8 * (1 + e0)
    worst = max(b - a for a, b in zip(energies, energies[1:]))
    ok = outcome.completed and outcome.steps >= 500 and worst <= tol
    detail = (
        f"steps = {outcome.steps}, t = {outcome.t:.3f}, E: {e0:.6g} -> {energies[-1]:.6g}, "
        f"max step increase = {worst:.3e} (tol {tol:.1e})"
    )
    assert verdict(3, ok, detail)


def test_criterion_4_flux_identity(verdict):
    results = checks.check_flux(sizes=(16, 32, 64))
    for r in results:
        print(r.line())
    assert verdict(4, all(r.passed for r in results), summarize(results))


def test_criterion_5_convergence(verdict):
    # temporal: acoustic wave and a fully nonlinear state
    acoustic_params = PhysParams(mu1=1e-3)
    t_acoustic = temporal_self_convergence(acoustic_state(Grid((32, 4, 4)), acoustic_params, 1e-3), acoustic_params,
                                           0.1, 4, levels=3)
    nl_params = PhysParams(mu1=0.1)
    t_nonlinear = temporal_self_convergence(manufactured_state(Grid((16, 16, 16)), nl_params), nl_params, 0.01, 4,
                                            levels=3)
    adv = advection_convergence((16, 32, 64), Scheme.FD2)
    aco = acoustic_convergence((16, 32, 64), Scheme.FD2)
    freq = acoustic_frequency(32)
    for table in (t_acoustic, t_nonlinear, adv, aco):
        print(table.as_text(), end="")
    temporal = t_acoustic.orders + t_nonlinear.orders
    ok = (
        all(abs(o - 4.0) <= 0.3 for o in temporal)
        and min(adv.orders) >= 1.8
        and min(aco.orders) >= 1.8
        and freq.relative_error <= 0.01
    )
    detail = (
        f"temporal orders {', '.join(f'{o:.2f}' for o in temporal)} (4 +- 0.3); "
        f"FD advection {', '.join(f'{o:.2f}' for o in adv.orders)}, "
        f"FD acoustic {', '.join(f'{o:.2f}' for o in aco.orders)} (>= 1.8); "
        f"acoustic omega rel. error {freq.relative_error:.2e} (<= 1e-2)"
    )
    assert verdict(5, ok, detail)


def test_criterion_6_scaling(verdict):
    grid = Grid((32, 32, 32))
    params = PhysParams()
    state = manufactured_state(grid, params, cutoff=2)
    one = scaling_invariance_study(state, params, 1)
    two = scaling_invariance_study(state, params, 2)
    ok = one.defect == 0.0 and two.defect <= 10 * two.self_convergence
    detail = (
        f"tau=1 defect = {one.defect:.1e} (exact 0); tau=2 defect = {two.defect:.3e}, "
        f"self-convergence = {two.self_convergence:.3e}, ratio = {two.ratio:.2f} (<= 10)"
    )
    assert verdict(6, ok, detail)


def test_criterion_7_interpolation_constants(verdict):
    results, consts = checks.check_gn(samples=200, seed=0, n=16)
    print(consts.as_text(), end="")
    for r in results:
        print(r.line())
    four = [r for r in results if r.name.split()[0] in ("c1", "c2", "c3", "c4")]
    ok = len(four) == 4 and all(r.passed for r in results) and math.isfinite(consts.epsilon0)
    tails = ", ".join(f"{r.name.split()[0]} {r.value:.2%}" for r in four)
    detail = f"tail increases {tails} (<= 5%); delta = {consts.delta:.4g}, epsilon0 = {consts.epsilon0:.4g}"
    assert verdict(7, ok, detail)


@pytest.fixture(scope="module")
def baseline_rerun(tmp_path_factory):
    out = tmp_path_factory.mktemp("baseline")
    start = time.perf_counter()
    code = main(["sweep", str(REPO / "configs" / "baseline_sweep.cfg"), "--out", str(out), "--workers", "1"])
    return code, out, time.perf_counter() - start


def test_criterion_8_regime_baseline(verdict, baseline_rerun):
    code, out, elapsed = baseline_rerun
    assert code == EXIT_OK
    same_map = (out / "regime_map.csv").read_bytes() == (DATA / "baseline_regime_map.csv").read_bytes()
    same_closure = (out / "closure.csv").read_bytes() == (DATA / "baseline_closure.csv").read_bytes()
    cells = read_regime_map(out / "regime_map.csv")
    broken = []
    for cell in cells:
        if not cell.persisted:
            continue
        rows = read_records(out / "cells" / f"cell_{cell.index:03d}" / "records.csv")
        e_d0 = rows[0].grad_d_l3
        for r in rows:
            # rho_dev_linf < rho_bar/3 is the band 2/3 rho_bar <= rho <= 4/3 rho_bar
            if r.rho_dev_linf > cell.rho_bar / 3 or r.grad_d_l3 > 2 * e_d0:
                broken.append(cell.index)
                break
    trend = trend_report(cells)
    print(trend.as_text(), end="")
    counts = {k: sum(c.outcome == k for c in cells) for k in sorted({c.outcome for c in cells})}
    ok = same_map and same_closure and not broken and len(cells) == 18
    detail = (
        f"regime map byte-identical = {same_map}, closure table byte-identical = {same_closure}, "
        f"persisted cells violating band/E_d bound = {broken or 'none'}; outcomes {counts}; "
        f"trend nondecreasing in rho_bar = {trend.nondecreasing_in_rho_bar}, "
        f"nonincreasing in target = {trend.nonincreasing_in_target}; {elapsed:.0f}s"
    )
    assert verdict(8, ok, detail)


SMALL_SWEEP = """
physics.mu1 = 0.1
grid.dims = 12
solver.t_end = 0.2
init.rho_perturbation_amplitude = 0.1
init.velocity_amplitude = 1.0
output.cadence = 2
sweep.rho_bar_values = 1, 4
sweep.grad_d_targets = 0.05, 0.3
sweep.seeds = 0, 1
sweep.delta = 1.0
"""


def test_criterion_9_determinism(verdict, tmp_path):
    cfg = DATA / "golden_run.cfg"
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg), "--out", str(first)]) == EXIT_OK
    assert main(["run", str(cfg), "--out", str(second)]) == EXIT_OK
    runs_equal = (first / "records.csv").read_bytes() == (second / "records.csv").read_bytes()
    golden = (first / "records.csv").read_bytes() == (DATA / "golden_records.csv").read_bytes()

    spec = tmp_path / "sweep.cfg"
    spec.write_text(SMALL_SWEEP)
    serial, parallel = tmp_path / "s1", tmp_path / "s2"
    assert main(["sweep", str(spec), "--out", str(serial), "--workers", "1"]) == EXIT_OK
    assert main(["sweep", str(spec), "--out", str(parallel), "--workers", "2"]) == EXIT_OK
    names = ["regime_map.csv", "closure.csv"] + [
        str(p.relative_to(serial)) for p in sorted(serial.glob("cells/*/records.csv"))
    ]
    sweep_equal = all((serial / n).read_bytes() == (parallel / n).read_bytes() for n in names)
    ok = runs_equal and golden and sweep_equal and len(names) == 10
    detail = (
        f"repeated run CSV identical = {runs_equal}, matches archived golden stream = {golden}, "
        f"sweep repeated with 1 and 2 workers: {len(names)} CSV files identical = {sweep_equal}"
    )
    assert verdict(9, ok, detail)
