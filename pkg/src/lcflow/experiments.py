"""Parameter sweeps, bootstrap closure verdicts, and convergence / scaling studies.

Persistence is a finite-horizon notion: a cell persists when the run reaches
t_end with every blow-up trigger silent and the director functional stays
within twice its initial value. Nothing here decides the infinite-time question.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .artifacts import timestamp, write_manifest
from .diagnostics import (
    BootstrapTracker,
    RecordCSV,
    format_float,
    random_band_limited,
    smallness_constants,
)
from .grid import Grid, Scheme, get_calculus, lp_norm
from .integrator import (
    InitSpec,
    SolverConfig,
    build_initial_data,
    run,
    step,
)
from .model import PhysParams, State, beta_exponent, regime_check, tendencies

log = logging.getLogger(__name__)

FUNCTIONALS = ("E_d", "E_rho1", "E_rho2", "E_rho3", "E_u1", "E_u2")
HORIZON_NOTE = (
    "persistence means reaching t_end with all blow-up triggers silent and "
    "E_d <= 2 E_d(0) at every tick; it is a finite-horizon observation"
)


# -- sweep -------------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    rho_bar_values: tuple[float, ...]
    grad_d_targets: tuple[float, ...]
    alpha_gamma_pairs: tuple[tuple[float, float], ...]
    grid: Grid
    solver: SolverConfig
    init: Mapping[str, float] = field(default_factory=dict)
    params: PhysParams = field(default_factory=PhysParams)
    seeds: tuple[int, ...] = (0,)
    cadence: int = 5
    bootstrap_weight: str = "mu1"
    delta: float | None = None

    def __post_init__(self):
        for name in ("rho_bar_values", "grad_d_targets", "alpha_gamma_pairs", "seeds"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"sweep.{name} must be nonempty")
            object.__setattr__(self, name, value)
        if any(r <= 0 for r in self.rho_bar_values):
            raise ValueError("sweep.rho_bar_values must be positive")
        if any(t < 0 for t in self.grad_d_targets):
            raise ValueError("sweep.grad_d_targets must be nonnegative")
        pairs = tuple((float(a), float(g)) for a, g in self.alpha_gamma_pairs)
        object.__setattr__(self, "alpha_gamma_pairs", pairs)
        object.__setattr__(self, "init", dict(self.init))

    @classmethod
    def from_config(cls, cfg, section) -> "SweepSpec":
        """Build from a parsed RunConfig template plus its [sweep] section."""
        init = {f.name: getattr(cfg.init, f.name) for f in fields(cfg.init)}
        init.pop("director_gradient_target")
        init.pop("seed")
        return cls(
            rho_bar_values=section.rho_bar_values,
            grad_d_targets=section.grad_d_targets,
            alpha_gamma_pairs=section.alpha_gamma_pairs,
            grid=cfg.grid,
            solver=cfg.solver,
            init=init,
            params=cfg.params,
            seeds=section.seeds,
            cadence=cfg.output.cadence,
            bootstrap_weight=cfg.output.bootstrap_weight,
            delta=section.delta,
        )

    def verdicts(self):
        return {pair: regime_check(*pair) for pair in self.alpha_gamma_pairs}

    def jobs(self, out_dir: str | Path | None = None) -> list["CellJob"]:
        jobs = []
        for alpha, gamma in self.alpha_gamma_pairs:
            for rho_bar in self.rho_bar_values:
                for target in self.grad_d_targets:
                    for seed in self.seeds:
                        index = len(jobs)
                        cell_dir = None
                        if out_dir is not None:
                            cell_dir = str(Path(out_dir) / "cells" / f"cell_{index:03d}")
                        jobs.append(CellJob(index, rho_bar, target, alpha, gamma, seed, self, cell_dir))
        return jobs


@dataclass(frozen=True)
class CellJob:
    index: int
    rho_bar: float
    grad_d_target: float
    alpha: float
    gamma: float
    seed: int
    spec: SweepSpec
    out_dir: str | None = None


@dataclass(frozen=True)
class RegimeCell:
    index: int
    rho_bar: float
    grad_d_target: float
    alpha: float
    gamma: float
    seed: int
    admissible: bool
    outcome: str  # persisted | blew_up | bound_exceeded | config_error
    t_final: float
    steps: int
    band_respected: bool
    max_E_d_ratio: float
    N3: float
    functionals: Mapping[str, float]
    initial: Mapping[str, float]
    reason: str = ""

    @property
    def persisted(self) -> bool:
        return self.outcome == "persisted"


REGIME_COLUMNS = (
    ["cell", "rho_bar", "grad_d_target", "alpha", "gamma", "seed", "admissible", "outcome"]
    + ["t_final", "steps", "band_respected", "max_E_d_ratio", "N3"]
    + list(FUNCTIONALS)
    + [f"{name}_0" for name in FUNCTIONALS]
    + ["reason"]
)


def _cell_row(cell: RegimeCell) -> list[str]:
    f = format_float
    row = [str(cell.index), f(cell.rho_bar), f(cell.grad_d_target), f(cell.alpha), f(cell.gamma)]
    row += [str(cell.seed), str(int(cell.admissible)), cell.outcome, f(cell.t_final), str(cell.steps)]
    row += [str(int(cell.band_respected)), f(cell.max_E_d_ratio), f(cell.N3)]
    row += [f(cell.functionals.get(n, math.nan)) for n in FUNCTIONALS]
    row += [f(cell.initial.get(n, math.nan)) for n in FUNCTIONALS]
    row.append(cell.reason)
    return row


def regime_map_text(cells: Sequence[RegimeCell]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REGIME_COLUMNS)
    for cell in sorted(cells, key=lambda c: c.index):
        writer.writerow(_cell_row(cell))
    return buf.getvalue()


def read_regime_map(path: str | Path) -> list[RegimeCell]:
    cells = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            cells.append(
                RegimeCell(
                    index=int(row["cell"]),
                    rho_bar=float(row["rho_bar"]),
                    grad_d_target=float(row["grad_d_target"]),
                    alpha=float(row["alpha"]),
                    gamma=float(row["gamma"]),
                    seed=int(row["seed"]),
                    admissible=bool(int(row["admissible"])),
                    outcome=row["outcome"],
                    t_final=float(row["t_final"]),
                    steps=int(row["steps"]),
                    band_respected=bool(int(row["band_respected"])),
                    max_E_d_ratio=float(row["max_E_d_ratio"]),
                    N3=float(row["N3"]),
                    functionals={n: float(row[n]) for n in FUNCTIONALS},
                    initial={n: float(row[f"{n}_0"]) for n in FUNCTIONALS},
                    reason=row["reason"],
                )
            )
    return cells


class _DirectorWatch:
    """Sink tracking max_t ||grad d||_3 / ||grad d_0||_3."""

    def __init__(self):
        self.initial: float | None = None
        self.ratio = 1.0
        self.exceeded = False

    def __call__(self, record, state, measurements=None):
        value = record.grad_d_l3
        if self.initial is None:
            self.initial = value
            return
        if self.initial > 0:
            self.ratio = max(self.ratio, value / self.initial)
        if value > 2.0 * self.initial:
            self.exceeded = True


def _config_error(job: CellJob, admissible: bool, reason: str) -> RegimeCell:
    nan = math.nan
    return RegimeCell(
        job.index, job.rho_bar, job.grad_d_target, job.alpha, job.gamma, job.seed, admissible,
        "config_error", 0.0, 0, False, nan, nan, {}, {}, reason,
    )


def run_cell(job: CellJob) -> RegimeCell:
    """One sweep cell. Failures are recorded in the returned cell, never raised."""
    spec = job.spec
    admissible = regime_check(job.alpha, job.gamma).admissible
    try:
        params = spec.params.with_(rho_bar=job.rho_bar, alpha=job.alpha, gamma=job.gamma)
        init = InitSpec(**{**spec.init, "director_gradient_target": job.grad_d_target, "seed": job.seed})
        state = build_initial_data(spec.grid, params, init, spec.solver.scheme)
    except ValueError as exc:
        return _config_error(job, admissible, str(exc))

    started = timestamp()
    tracker = BootstrapTracker(params, spec.bootstrap_weight)
    watch = _DirectorWatch()
    sinks = [tracker, watch]
    stream = None
    if job.out_dir is not None:
        Path(job.out_dir).mkdir(parents=True, exist_ok=True)
        stream = open(Path(job.out_dir) / "records.csv", "w", newline="")
        sinks.insert(0, RecordCSV(stream))
    try:
        outcome = run(state, params, spec.solver, sinks, cadence=spec.cadence)
    finally:
        if stream is not None:
            stream.close()

    if outcome.status != "completed":
        verdict = "blew_up"
    elif watch.exceeded:
        verdict = "bound_exceeded"
    else:
        verdict = "persisted"
    report = tracker.report
    cell = RegimeCell(
        job.index, job.rho_bar, job.grad_d_target, job.alpha, job.gamma, job.seed, admissible,
        verdict, outcome.t, outcome.steps, outcome.band_respected, watch.ratio, report.N3,
        report.functionals(), report.initial_functionals(), outcome.reason,
    )
    if job.out_dir is not None:
        _write_cell_manifest(job, cell, params, init, report, started)
    return cell


def _write_cell_manifest(job, cell, params, init, report, started):
    from .config import RunConfig, OutputConfig, emit_config

    spec = job.spec
    cfg = RunConfig(
        params, spec.grid, spec.solver, init,
        OutputConfig(directory=job.out_dir, cadence=spec.cadence, bootstrap_weight=spec.bootstrap_weight),
    )
    out = Path(job.out_dir)
    (out / "config.txt").write_text(emit_config(cfg))
    info = {
        "cell": job.index,
        "seed": job.seed,
        "started": started,
        "finished": timestamp(),
        "outcome": cell.outcome,
        "t_final": format_float(cell.t_final),
        "reason": cell.reason,
        "note": HORIZON_NOTE,
    }
    write_manifest(out, info, ["config.txt", "records.csv"], [report.as_text()])


def sweep(spec: SweepSpec, out_dir: str | Path | None = None, workers: int = 1) -> list[RegimeCell]:
    """Run every cell; results come back ordered by cell index whatever the execution order."""
    jobs = spec.jobs(out_dir)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(run_cell, jobs))
    else:
        cells = [run_cell(job) for job in jobs]
    return sorted(cells, key=lambda c: c.index)


# -- reporting ---------------------------------------------------------------------------


def _fractions(cells, key):
    groups: dict[float, list[bool]] = {}
    for cell in cells:
        groups.setdefault(getattr(cell, key), []).append(cell.persisted)
    return {k: sum(v) / len(v) for k, v in sorted(groups.items())}


@dataclass(frozen=True)
class TrendReport:
    by_rho_bar: dict[float, float]
    by_target: dict[float, float]

    @property
    def nondecreasing_in_rho_bar(self) -> bool:
        v = list(self.by_rho_bar.values())
        return all(a <= b for a, b in zip(v, v[1:]))

    @property
    def nonincreasing_in_target(self) -> bool:
        v = list(self.by_target.values())
        return all(a >= b for a, b in zip(v, v[1:]))

    def as_text(self) -> str:
        lines = ["[trend]", f"# {HORIZON_NOTE}", "# trend is descriptive; it is not evidence of global existence"]
        for k, v in self.by_rho_bar.items():
            lines.append(f"persisted_fraction rho_bar={format_float(k)} = {format_float(v)}")
        for k, v in self.by_target.items():
            lines.append(f"persisted_fraction grad_d_target={format_float(k)} = {format_float(v)}")
        lines.append(f"nondecreasing_in_rho_bar = {str(self.nondecreasing_in_rho_bar).lower()}")
        lines.append(f"nonincreasing_in_target = {str(self.nonincreasing_in_target).lower()}")
        return "\n".join(lines) + "\n"


def trend_report(cells: Sequence[RegimeCell]) -> TrendReport:
    valid = [c for c in cells if c.outcome != "config_error"]
    return TrendReport(_fractions(valid, "rho_bar"), _fractions(valid, "grad_d_target"))


# -- closure check -------------------------------------------------------------------------


@dataclass(frozen=True)
class ClosureVerdict:
    name: str
    value: float
    assumption_bound: float
    conclusion_bound: float
    empirical: bool

    @property
    def assumption_ok(self) -> bool:
        return self.value <= self.assumption_bound

    @property
    def conclusion_ok(self) -> bool:
        return self.value <= self.conclusion_bound


def bootstrap_closure_check(cell: RegimeCell, delta: float) -> list[ClosureVerdict]:
    """Compare the six functionals with their assumed (weaker) and concluded (stronger) bounds.

    N3 comes from the initial velocity. N1, N2 and N4 have no closed form;
    they are normalized so that the first-tick value sits exactly on the
    concluded bound, and the corresponding verdicts carry empirical=True.
    """
    if cell.outcome == "config_error":
        raise ValueError("closure check needs a cell that ran")
    rb, al = cell.rho_bar, cell.alpha
    beta = beta_exponent(cell.gamma)
    f, f0 = cell.functionals, cell.initial
    n1 = f0["E_rho2"] / rb**beta
    n2 = f0["E_rho3"] / rb**beta
    n4 = f0["E_u2"] / rb ** (2 * al - 1)
    return [
        ClosureVerdict("E_d", f["E_d"], 2 * delta, delta, False),
        ClosureVerdict("E_rho1", f["E_rho1"], rb / 2, rb / 4, False),
        ClosureVerdict("E_rho2", f["E_rho2"], 2 * n1 * rb**beta, n1 * rb**beta, True),
        ClosureVerdict("E_rho3", f["E_rho3"], 2 * n2 * rb**beta, n2 * rb**beta, True),
        ClosureVerdict("E_u1", f["E_u1"], 2 ** (al + 2) * cell.N3 * rb**al, 2 ** (al + 1) * cell.N3 * rb**al, False),
        ClosureVerdict("E_u2", f["E_u2"], 3 * n4 * rb ** (2 * al - 1), 2 * n4 * rb ** (2 * al - 1), True),
    ]


CLOSURE_COLUMNS = ["cell", "functional", "value", "assumption_bound", "conclusion_bound"] + [
    "assumption_ok",
    "conclusion_ok",
    "normalization",
]


def closure_table_text(cells: Sequence[RegimeCell], delta: float) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CLOSURE_COLUMNS)
    for cell in cells:
        if cell.outcome == "config_error":
            continue
        for v in bootstrap_closure_check(cell, delta):
            writer.writerow(
                [cell.index, v.name, format_float(v.value), format_float(v.assumption_bound)]
                + [format_float(v.conclusion_bound), int(v.assumption_ok), int(v.conclusion_ok)]
                + ["empirical" if v.empirical else "exact"]
            )
    return buf.getvalue()


def sweep_delta(spec: SweepSpec) -> float:
    return spec.delta if spec.delta is not None else smallness_constants().delta


def write_sweep_outputs(spec: SweepSpec, cells: Sequence[RegimeCell], out_dir: str | Path) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    delta = sweep_delta(spec)
    (out / "regime_map.csv").write_text(regime_map_text(cells))
    (out / "closure.csv").write_text(closure_table_text(cells, delta))
    trend = trend_report(cells)
    (out / "trend.txt").write_text(f"delta = {format_float(delta)}\n" + trend.as_text())
    return ["regime_map.csv", "closure.csv", "trend.txt"]


# -- scaling covariance --------------------------------------------------------------------


def _subsample(a: np.ndarray, tau: int) -> np.ndarray:
    return np.ascontiguousarray(a[..., ::tau, ::tau, ::tau])


def _tile(a: np.ndarray, tau: int) -> np.ndarray:
    reps = (1,) * (a.ndim - 3) + (tau, tau, tau)
    return np.tile(a, reps)


def _check_resolvable(state: State, tau: int, tol: float = 1e-6) -> None:
    dims = state.grid.dims
    if tau < 1 or any(n % tau or n // tau < 4 for n in dims):
        raise ValueError(f"tau={tau} does not divide grid {dims} into a resolvable coarse grid")
    if tau == 1:
        return
    for name, a in (("rho", state.rho - state.rho.mean()), ("u", state.u), ("d", state.d)):
        spec = np.abs(np.fft.fftn(a, axes=(-3, -2, -1)))
        total = spec.max()
        if total == 0:
            continue
        masks = []
        for ax, n in enumerate(dims):
            m = np.abs(np.fft.fftfreq(n, 1.0 / n))
            shape = [1, 1, 1]
            shape[ax] = n
            masks.append((m >= n / (2 * tau)).reshape(shape))
        high = masks[0] | masks[1] | masks[2]
        tail = (spec * high).max()
        if tail > tol * total:
            raise ValueError(
                f"tau={tau} unresolvable: {name} has spectral content {tail / total:.2e} above the coarse Nyquist"
            )


def rescale(state: State, params: PhysParams, tau: int) -> tuple[State, PhysParams]:
    """(rho, u, d)(x) -> (rho(tau x), tau u(tau x), d(tau x)) on the same torus, with a -> tau^2 a."""
    s = state
    if tau == 1:
        return s, params
    out = State(
        s.grid,
        _tile(_subsample(s.rho, tau), tau),
        tau * _tile(_subsample(s.u, tau), tau),
        _tile(_subsample(s.d, tau), tau),
        s.t / tau**2,
    )
    return out, params.with_(a=params.a * tau**2)


def _rel(diff: float, ref: float) -> float:
    return diff / ref if ref > 0 else diff


@dataclass(frozen=True)
class ScalingReport:
    tau: int
    defect: float  # max over (rho_t, u_t, d_t) of relative L2 mismatch
    self_convergence: float  # same measure between the coarse (N/tau) and fine RHS
    components: dict[str, float]

    @property
    def ratio(self) -> float:
        if self.defect == 0:
            return 0.0
        return self.defect / self.self_convergence if self.self_convergence > 0 else math.inf


def scaling_invariance_study(
    state: State, params: PhysParams, tau: int, scheme: Scheme | str = Scheme.SPECTRAL
) -> ScalingReport:
    """Covariance of the right-hand sides under the parabolic rescaling.

    Rates of the rescaled state must equal tau^2, tau^3, tau^2 times the
    original rates (continuity, velocity, director) at the rescaled nodes.
    The reference scale is the mismatch between the same rates computed on
    the coarse N/tau grid and on the fine grid.
    """
    _check_resolvable(state, tau)
    calc = get_calculus(state.grid, scheme)
    base = tendencies(state, params, calc)
    scaled_state, scaled_params = rescale(state, params, tau)
    scaled = tendencies(scaled_state, scaled_params, calc)
    grid = state.grid

    factors = {"rho_t": tau**2, "u_t": tau**3, "d_t": tau**2}
    components = {}
    for name, k in factors.items():
        expected = k * _tile(_subsample(getattr(base, name), tau), tau)
        got = getattr(scaled, name)
        components[name] = _rel(lp_norm(got - expected, grid, 2), lp_norm(expected, grid, 2))
    defect = max(components.values())

    if tau == 1:
        return ScalingReport(1, defect, 0.0, components)
    coarse_grid = Grid(tuple(n // tau for n in grid.dims), grid.lengths)
    coarse = State(coarse_grid, _subsample(state.rho, tau), _subsample(state.u, tau), _subsample(state.d, tau))
    coarse_rates = tendencies(coarse, params, get_calculus(coarse_grid, scheme))
    sc = 0.0
    for name in factors:
        fine = _subsample(getattr(base, name), tau)
        diff = lp_norm(getattr(coarse_rates, name) - fine, coarse_grid, 2)
        sc = max(sc, _rel(diff, lp_norm(fine, coarse_grid, 2)))
    return ScalingReport(tau, defect, sc, components)


# -- convergence studies -------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceTable:
    label: str
    resolutions: tuple[float, ...]
    errors: tuple[float, ...]

    @property
    def orders(self) -> tuple[float, ...]:
        out = []
        for (h0, e0), (h1, e1) in zip(zip(self.resolutions, self.errors), zip(self.resolutions[1:], self.errors[1:])):
            out.append(math.log(e0 / e1) / abs(math.log(h1 / h0)) if e0 > 0 and e1 > 0 else math.nan)
        return tuple(out)

    @property
    def monotone(self) -> bool:
        return all(a > b for a, b in zip(self.errors, self.errors[1:]))

    def as_text(self) -> str:
        lines = [f"[{self.label}]"]
        orders = (math.nan,) + self.orders
        for n, e, o in zip(self.resolutions, self.errors, orders):
            lines.append(f"{format_float(n)}  error={e:.6e}  order={o:.3f}")
        if not self.monotone:
            lines.append("WARNING: errors are not monotone under refinement")
        return "\n".join(lines) + "\n"


def _advect_density(rho, u_const, calc, dt, steps):
    """RK4 on rho_t = -div(rho u) with a frozen uniform velocity."""

    def rate(r):
        return -calc.divergence(r * u_const)

    for _ in range(steps):
        k1 = rate(rho)
        k2 = rate(rho + 0.5 * dt * k1)
        k3 = rate(rho + 0.5 * dt * k2)
        k4 = rate(rho + dt * k3)
        rho = rho + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def advection_convergence(
    sizes: Sequence[int] = (16, 32, 64),
    scheme: Scheme | str = Scheme.FD2,
    velocity: tuple[float, float, float] = (1.0, 0.5, 0.0),
    t_end: float = 1.0,
    courant: float = 0.1,
) -> ConvergenceTable:
    """Transport of a smooth density bump by a uniform velocity against the exact translate.

    The velocity is frozen, which isolates the continuity discretization.
    """
    errors = []
    for n in sizes:
        grid = Grid((n, n, 4))
        calc = get_calculus(grid, scheme)
        x, y, _ = grid.coordinates()

        def profile(t):
            xs, ys = x - velocity[0] * t, y - velocity[1] * t
            return 1.0 + 0.3 * np.sin(xs) * np.cos(ys) + 0.1 * np.cos(2 * xs)

        u = np.stack([np.full(grid.dims, c) for c in velocity])
        steps = int(math.ceil(t_end / (courant * grid.h_min)))
        rho = _advect_density(profile(0.0), u, calc, t_end / steps, steps)
        errors.append(lp_norm(rho - profile(t_end), grid, 2) / lp_norm(profile(t_end), grid, 2))
    return ConvergenceTable(f"advection {Scheme(scheme).value}", tuple(float(n) for n in sizes), tuple(errors))


def acoustic_state(grid: Grid, params: PhysParams, amplitude: float, k: int = 1) -> State:
    x, _, _ = grid.coordinates()
    rho = params.rho_bar * (1.0 + amplitude * np.cos(k * x))
    base = State.equilibrium(grid, params)
    return State(grid, rho, base.u, base.d)


@dataclass(frozen=True)
class AcousticResult:
    omega: float
    omega_exact: float

    @property
    def relative_error(self) -> float:
        return abs(self.omega - self.omega_exact) / self.omega_exact


def acoustic_frequency(
    n: int = 32,
    params: PhysParams | None = None,
    scheme: Scheme | str = Scheme.SPECTRAL,
    amplitude: float = 1e-6,
    k: int = 1,
    periods: float = 1.0,
    cfl: float = 0.2,
) -> AcousticResult:
    """Phase speed of a standing sound wave on a thin (n, 4, 4) box.

    The phase atan2(velocity sine mode / c_s, density cosine mode / rho_bar)
    advances at omega; a least-squares slope over the window gives it.
    """
    params = params or PhysParams(mu1=1e-3, alpha=2.0, rho_bar=4.0)
    grid = Grid((n, 4, 4))
    calc = get_calculus(grid, scheme)
    c_s = math.sqrt(params.a * params.gamma * params.rho_bar ** (params.gamma - 1))
    omega_exact = c_s * k
    x, _, _ = grid.coordinates()
    cos_k, sin_k = np.cos(k * x), np.sin(k * x)
    norm = float(np.sum(cos_k * cos_k))
    state = acoustic_state(grid, params, amplitude, k)
    config = SolverConfig(t_end=1e9, cfl_number=cfl, scheme=Scheme(scheme))
    period = 2 * math.pi / omega_exact
    steps = int(math.ceil(periods * period / (cfl * grid.h_min / c_s)))
    dt = periods * period / steps
    times, phases = [0.0], [0.0]
    for i in range(steps):
        state = step(state, params, config, dt, calc)
        a_rho = float(np.sum((state.rho - params.rho_bar) * cos_k)) / norm / (amplitude * params.rho_bar)
        a_u = float(np.sum(state.u[0] * sin_k)) / norm / (amplitude * c_s)
        times.append(state.t)
        phases.append(math.atan2(a_u, a_rho))
    phase = np.unwrap(np.array(phases))
    slope = np.polyfit(np.array(times), phase, 1)[0]
    return AcousticResult(float(slope), omega_exact)


def acoustic_convergence(
    sizes: Sequence[int] = (16, 32, 64), scheme: Scheme | str = Scheme.FD2, **kwargs
) -> ConvergenceTable:
    errors = tuple(acoustic_frequency(n, scheme=scheme, **kwargs).relative_error for n in sizes)
    return ConvergenceTable(f"acoustic {Scheme(scheme).value}", tuple(float(n) for n in sizes), errors)


def temporal_self_convergence(
    state: State,
    params: PhysParams,
    dt: float,
    steps: int,
    scheme: Scheme | str = Scheme.SPECTRAL,
    levels: int = 3,
) -> ConvergenceTable:
    """Successive differences of runs with dt, dt/2, dt/4, ... to a common time."""
    config = SolverConfig(t_end=1e9, scheme=Scheme(scheme))
    calc = get_calculus(state.grid, scheme)
    finals = []
    for lev in range(levels + 1):
        h = dt / 2**lev
        s = state
        for _ in range(steps * 2**lev):
            s = step(s, params, config, h, calc)
        finals.append(np.concatenate([s.rho[None], s.u, s.d]))
    diffs = tuple(lp_norm(a - b, state.grid, 2) for a, b in zip(finals, finals[1:]))
    return ConvergenceTable("temporal", tuple(dt / 2**lev for lev in range(levels)), diffs)


def geodesic_twist(grid: Grid, params: PhysParams, k: int = 1) -> State:
    """d = (cos kz, sin kz, 0): a harmonic map with constant |grad d|, stationary for u = 0."""
    _, _, z = grid.coordinates()
    base = State.equilibrium(grid, params)
    d = np.stack([np.cos(k * z), np.sin(k * z), np.zeros(grid.dims)])
    return State(grid, base.rho, base.u, d)


def twist_drift(grid: Grid, params: PhysParams, steps: int, dt: float, scheme=Scheme.SPECTRAL) -> float:
    state = geodesic_twist(grid, params)
    config = SolverConfig(t_end=1e9, scheme=Scheme(scheme))
    calc = get_calculus(grid, scheme)
    s = state
    for _ in range(steps):
        s = step(s, params, config, dt, calc)
    return float(np.abs(s.d - state.d).max())


def manufactured_state(
    grid: Grid, params: PhysParams, seed: int = 0, cutoff: int = 2,
    rho_amp: float = 0.05, u_amp: float = 0.3, d_amp: float = 0.1,
) -> State:
    """Smooth band-limited state for identity checks on resolved data."""
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]
    rho = params.rho_bar * (1 + rho_amp * random_band_limited(grid, rngs[0], cutoff, components=None))
    u = u_amp * random_band_limited(grid, rngs[1], cutoff)
    d = params.e_vector[:, None, None, None] + d_amp * random_band_limited(grid, rngs[2], cutoff)
    d = d / np.sqrt(np.einsum("i...,i...->...", d, d))
    return State(grid, rho, u, d)
