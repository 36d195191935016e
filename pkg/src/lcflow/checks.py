"""Self-checks shared by ``lcflow check`` and the test suite.

Each check returns CheckResult records: a measured value, the tolerance and
the direction of the comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .diagnostics import (
    director_identities,
    flux_residual,
    g_potential,
    random_band_limited,
    smallness_constants,
)
from .experiments import geodesic_twist, manufactured_state
from .grid import Grid, Scheme, get_calculus, unit_defect
from .integrator import SolverConfig, build_initial_data, InitSpec, stable_dt, step
from .model import PhysParams, State


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float
    upper: bool = True  # value <= tolerance when True, value >= tolerance otherwise

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return self.value <= self.tolerance if self.upper else self.value >= self.tolerance

    def line(self) -> str:
        op = "<=" if self.upper else ">="
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: {self.value:.3e} {op} {self.tolerance:.1e}"


# -- pressure potential ------------------------------------------------------------------


def g_by_quadrature(rho: float, params: PhysParams) -> float:
    rb, a, g = params.rho_bar, params.a, params.gamma
    p_bar = a * rb**g
    val, _ = integrate.quad(lambda s: (a * s**g - p_bar) / (s * s), rb, rho, epsabs=0.0, epsrel=1e-13, limit=200)
    return rho * val


def random_g_cases(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        gamma = 1.0
        while gamma <= 1.0:  # open interval (1, 5)
            gamma = float(rng.uniform(1.0, 5.0))
        params = PhysParams(
            a=float(rng.uniform(0.1, 10.0)),
            gamma=gamma,
            rho_bar=float(rng.uniform(0.2, 20.0)),
        )
        rho = params.rho_bar * float(rng.uniform(0.25, 3.0))
        yield params, rho


def check_g_oracle(n: int = 100, seed: int = 0, tol: float = 1e-10) -> list[CheckResult]:
    worst = 0.0
    negative = 0.0
    for params, rho in random_g_cases(n, seed):
        closed = float(g_potential(np.array([rho]), params)[0])
        quad = g_by_quadrature(rho, params)
        worst = max(worst, abs(closed - quad) / abs(quad))
        negative = max(negative, -closed)
    at_bar = max(
        abs(float(g_potential(np.array([p.rho_bar]), p)[0])) for p, _ in random_g_cases(n, seed)
    )
    return [
        CheckResult("G closed form vs quadrature (max rel)", worst, tol),
        CheckResult("G >= 0 (max negative part)", negative, 0.0),
        CheckResult("G(rho_bar) == 0", at_bar, 0.0),
    ]


# -- identity suite --------------------------------------------------------------------------


def check_equilibrium(n: int = 32, steps: int = 1000) -> list[CheckResult]:
    grid = Grid((n, n, n))
    params = PhysParams()
    start = State.equilibrium(grid, params)
    config = SolverConfig(t_end=1e9)
    calc = get_calculus(grid)
    dt = stable_dt(start, params, config)
    s = start
    drift = 0.0
    for _ in range(steps):
        s = step(s, params, config, dt, calc)
        drift = max(
            drift,
            float(np.abs(s.rho - start.rho).max()),
            float(np.abs(s.u).max()),
            float(np.abs(s.d - start.d).max()),
        )
    return [CheckResult(f"equilibrium drift over {steps} steps", drift, 1e-12)]


def check_unit_norm(n: int = 32, steps: int = 20, seed: int = 0) -> list[CheckResult]:
    grid = Grid((n, n, n))
    params = PhysParams(mu1=0.1)
    state = build_initial_data(grid, params, InitSpec(0.1, 1.0, 0.5, 2, seed))
    config = SolverConfig(t_end=1e9)
    calc = get_calculus(grid)
    worst = unit_defect(state.d)
    for _ in range(steps):
        state = step(state, params, config, stable_dt(state, params, config), calc)
        worst = max(worst, unit_defect(state.d))
    return [CheckResult(f"unit-norm defect over {steps} steps", worst, 1e-12)]


def check_director_identities(n: int = 32, seed: int = 0) -> list[CheckResult]:
    grid = Grid((n, n, n))
    params = PhysParams()
    calc = get_calculus(grid)
    twist = geodesic_twist(grid, params)
    ids_twist = director_identities(twist.d, grid, calc)
    mixed = manufactured_state(grid, params, seed=seed)
    ids = director_identities(mixed.d, grid, calc)
    s = twist
    config = SolverConfig(t_end=1e9)
    for _ in range(10):
        s = step(s, params, config, stable_dt(s, params, config), calc)
    return [
        CheckResult("twist: lap d . d + |grad d|^2 (L2)", ids_twist.tension_defect, 1e-10),
        CheckResult("twist: stationarity over 10 steps", float(np.abs(s.d - twist.d).max()), 1e-12),
        CheckResult("||lap d||^2 splitting (relative)", ids.splitting_relative, 1e-9),
    ]


# -- flux identity -----------------------------------------------------------------------------


def check_flux(sizes=(16, 32, 64), seed: int = 0) -> list[CheckResult]:
    params = PhysParams()
    grid = Grid((32, 32, 32))
    state = manufactured_state(grid, params, seed=seed)
    spectral = flux_residual(state, params, get_calculus(grid))
    fd = []
    for n in sizes:
        g = Grid((n, n, n))
        fd.append(flux_residual(manufactured_state(g, params, seed=seed), params, get_calculus(g, Scheme.FD2)))
    orders = [math.log2(a / b) for a, b in zip(fd, fd[1:])]
    rng = np.random.default_rng(seed + 1)
    random_ut = random_band_limited(grid, rng, 2)
    control = flux_residual(state, params, get_calculus(grid), u_t=random_ut)
    return [
        CheckResult("flux residual, spectral", spectral, 1e-8),
        CheckResult("flux residual, FD observed order", min(orders), 1.8, upper=False),
        CheckResult("flux residual, random u_t control", control, 1e-2, upper=False),
    ]


# -- interpolation constants -------------------------------------------------------------------


def check_gn(samples: int = 200, seed: int = 0, n: int = 16):
    consts = smallness_constants(samples=samples, grid=Grid((n, n, n)), seed=seed)
    results = [
        CheckResult(f"{name} running-max tail increase", est.tail_increase(), 0.05)
        for name, est in consts.estimates.items()
    ]
    results.append(CheckResult("delta > 0", consts.delta, 0.0, upper=False))
    return results, consts


SUITES = ("identities", "gn", "flux", "g")
