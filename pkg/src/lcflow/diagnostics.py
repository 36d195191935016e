"""Energies, bootstrap functionals, effective viscous flux and inequality probes."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .grid import (
    Calculus,
    Grid,
    deformation_tensor,
    get_calculus,
    identity_tensor,
    lp_norm,
    magnitude,
    total,
    trace,
    unit_defect,
)
from .model import PhysParams, State, VacuumError, tendencies

LOG_BRANCH_TOL = 1e-12


# -- pressure potential and energy ---------------------------------------------


def _binomial_tail(y: np.ndarray, gamma: float, terms: int = 8) -> np.ndarray:
    # sum_{n>=2} C(gamma, n) y^n
    coef = gamma * (gamma - 1.0) / 2.0
    out = coef * y * y
    power = y * y
    for n in range(3, terms + 1):
        coef *= (gamma - n + 1.0) / n
        power = power * y
        out = out + coef * power
    return out


def g_potential(rho: np.ndarray, params: PhysParams) -> np.ndarray:
    """G(rho) = rho * integral_{rho_bar}^{rho} (P(s) - P(rho_bar)) / s^2 ds.

    Evaluated as a rho_bar^gamma ((1+y)^gamma - 1 - gamma y) / (gamma - 1) with
    y = rho/rho_bar - 1, which vanishes exactly at rho = rho_bar.
    """
    rho = np.asarray(rho, dtype=float)
    if np.min(rho) <= 0:
        raise VacuumError("G(rho) needs positive density")
    g = params.gamma
    y = (rho - params.rho_bar) / params.rho_bar
    tail = np.where(
        np.abs(y) < 1e-3,
        _binomial_tail(y, g),
        np.expm1(g * np.log1p(y)) - g * y,
    )
    return params.a * params.rho_bar**g * tail / (g - 1.0)


def g_potential_l1(rho: np.ndarray, params: PhysParams, grid: Grid) -> float:
    return lp_norm(g_potential(rho, params), grid, 1)


def total_energy(state: State, params: PhysParams, calc: Calculus | None = None) -> float:
    """Kinetic + pressure potential + Dirichlet director energy."""
    calc = calc or get_calculus(state.grid)
    grid = state.grid
    kinetic = 0.5 * total(state.rho * np.einsum("i...,i...->...", state.u, state.u)) * grid.cell_volume
    potential = total(g_potential(state.rho, params)) * grid.cell_volume
    grad_d = calc.gradient(state.d)
    dirichlet = 0.5 * params.nu * total(grad_d * grad_d) * grid.cell_volume
    return kinetic + potential + dirichlet


def mass(state: State) -> float:
    return total(state.rho) * state.grid.cell_volume


# -- velocity time derivative and effective flux ----------------------------


def u_time_derivative(
    state: State, params: PhysParams, calc: Calculus | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """(u_t, material derivative u_t + u . grad u), both from the spatial RHS."""
    calc = calc or get_calculus(state.grid)
    tend = tendencies(state, params, calc)
    u_dot = tend.u_t + np.einsum("ij...,j...->i...", tend.grad_u, state.u)
    return tend.u_t, u_dot


def transformed_pressure(rho: np.ndarray, params: PhysParams) -> np.ndarray:
    """Potential whose gradient is rho^-alpha grad P (log branch when gamma == alpha)."""
    if np.min(rho) <= 0:
        raise VacuumError("transformed pressure needs positive density")
    g, al = params.gamma, params.alpha
    if abs(g - al) < LOG_BRANCH_TOL:
        return params.a * g * np.log(rho)
    return params.a * g / (g - al) * rho ** (g - al)


def effective_flux(
    state: State, params: PhysParams, calc: Calculus | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Effective viscous flux F and vorticity w = curl u.

    F = (2 mu1 + mu2) div u - (Pt(rho) - Pt(rho_bar)) with Pt the transformed
    pressure; with this sign -lap F = div H holds along the momentum equation.
    """
    calc = calc or get_calculus(state.grid)
    div_u = calc.divergence(state.u)
    p_ref = transformed_pressure(np.array([params.rho_bar]), params)[0]
    flux = (2 * params.mu1 + params.mu2) * div_u - (transformed_pressure(state.rho, params) - p_ref)
    return flux, calc.curl(state.u)


def flux_source(
    state: State,
    params: PhysParams,
    calc: Calculus | None = None,
    u_t: np.ndarray | None = None,
    h_coefficient: str = "mu2",
) -> np.ndarray:
    """H = -rho^(1-alpha) u_dot + alpha rho^-1 (2 mu1 D(u) + c div(u) I) grad rho - nu rho^-alpha grad d^T lap d.

    ``h_coefficient`` picks c: "mu2" (consistent with the stress law) or
    "lam" (the director relaxation constant), for sensitivity runs only.
    ``u_t`` overrides the model velocity tendency (negative controls).
    """
    calc = calc or get_calculus(state.grid)
    rho, u = state.rho, state.u
    if np.min(rho) <= 0:
        raise VacuumError("flux source needs positive density")
    al = params.alpha
    tend = tendencies(state, params, calc)
    ut = tend.u_t if u_t is None else u_t
    u_dot = ut + np.einsum("ij...,j...->i...", tend.grad_u, u)
    if h_coefficient == "mu2":
        c2 = params.mu2
    elif h_coefficient == "lam":
        c2 = params.lam
    else:
        raise ValueError(f"unknown h_coefficient {h_coefficient!r}")
    grad_rho = calc.gradient(rho)
    visc = 2 * params.mu1 * deformation_tensor(tend.grad_u) + identity_tensor(c2 * trace(tend.grad_u))
    visc_term = al / rho * np.einsum("ij...,j...->i...", visc, grad_rho)
    director_term = np.einsum("ki...,k...->i...", tend.grad_d, tend.lap_d)
    rho_ma = rho ** (-al)
    return -rho ** (1 - al) * u_dot + visc_term - params.nu * rho_ma * director_term


def flux_residual(
    state: State,
    params: PhysParams,
    calc: Calculus | None = None,
    u_t: np.ndarray | None = None,
    h_coefficient: str = "mu2",
) -> float:
    """Normalized || -lap F - div H ||_2 / (||lap F||_2 + ||div H||_2 + eps)."""
    calc = calc or get_calculus(state.grid)
    flux, _ = effective_flux(state, params, calc)
    source = flux_source(state, params, calc, u_t=u_t, h_coefficient=h_coefficient)
    lap_f = calc.laplacian(flux)
    div_h = calc.divergence(source)
    grid = state.grid
    num = lp_norm(-lap_f - div_h, grid, 2)
    den = lp_norm(lap_f, grid, 2) + lp_norm(div_h, grid, 2) + np.finfo(float).eps
    return num / den


def vorticity_residual(state: State, params: PhysParams, calc: Calculus | None = None) -> float:
    """Normalized || -mu1 lap w - curl H ||_2, the rotational companion of the flux identity."""
    calc = calc or get_calculus(state.grid)
    _, w = effective_flux(state, params, calc)
    source = flux_source(state, params, calc)
    lhs = -params.mu1 * calc.laplacian(w)
    rhs = calc.curl(source)
    grid = state.grid
    den = lp_norm(lhs, grid, 2) + lp_norm(rhs, grid, 2) + np.finfo(float).eps
    return lp_norm(lhs - rhs, grid, 2) / den


# -- director identities --------------------------------------------------------


@dataclass(frozen=True)
class DirectorIdentities:
    tension_defect: float
    splitting_defect: float
    lap_d_sq: float

    @property
    def splitting_relative(self) -> float:
        return self.splitting_defect / max(self.lap_d_sq, np.finfo(float).tiny)


def director_identities(d: np.ndarray, grid: Grid, calc: Calculus | None = None) -> DirectorIdentities:
    """Defects of lap d . d = -|grad d|^2 and of the L^2 splitting of ||lap d||^2."""
    calc = calc or get_calculus(grid)
    grad_d = calc.gradient(d)
    lap_d = calc.laplacian(d)
    grad_sq = np.einsum("ij...,ij...->...", grad_d, grad_d)
    tension = np.einsum("i...,i...->...", lap_d, d) + grad_sq
    lap_sq = lp_norm(lap_d, grid, 2) ** 2
    harmonic_sq = lp_norm(lap_d + grad_sq * d, grid, 2) ** 2
    quartic = total(grad_sq * grad_sq) * grid.cell_volume
    return DirectorIdentities(
        tension_defect=lp_norm(tension, grid, 2),
        splitting_defect=abs(lap_sq - harmonic_sq - quartic),
        lap_d_sq=lap_sq,
    )


# -- per-tick measurements ----------------------------------------------------


@dataclass(frozen=True)
class Measurements:
    t: float
    total_energy: float
    mass: float
    grad_d_l2: float
    grad_d_l3: float
    hess_d_l2: float
    rho_dev_linf: float
    grad_rho_l2: float
    grad_rho_lq: float
    grad_u_l2: float
    grad_u_linf: float
    sqrt_rho_ut_l2: float
    grad_ut_l2: float
    flux_residual: float
    unit_defect: float


def measure(state: State, params: PhysParams, calc: Calculus | None = None) -> Measurements:
    calc = calc or get_calculus(state.grid)
    grid = state.grid
    rho, u, d = state.rho, state.u, state.d
    tend = tendencies(state, params, calc)
    grad_rho = calc.gradient(rho)
    kinetic = 0.5 * total(rho * np.einsum("i...,i...->...", u, u)) * grid.cell_volume
    potential = total(g_potential(rho, params)) * grid.cell_volume
    grad_d_l2 = lp_norm(tend.grad_d, grid, 2)
    energy = kinetic + potential + 0.5 * params.nu * grad_d_l2**2
    return Measurements(
        t=state.t,
        total_energy=energy,
        mass=mass(state),
        grad_d_l2=grad_d_l2,
        grad_d_l3=lp_norm(tend.grad_d, grid, 3),
        hess_d_l2=lp_norm(calc.gradient(tend.grad_d), grid, 2),
        rho_dev_linf=float(np.abs(rho - params.rho_bar).max()),
        grad_rho_l2=lp_norm(grad_rho, grid, 2),
        grad_rho_lq=lp_norm(grad_rho, grid, params.q),
        grad_u_l2=lp_norm(tend.grad_u, grid, 2),
        grad_u_linf=lp_norm(tend.grad_u, grid, math.inf),
        sqrt_rho_ut_l2=lp_norm(np.sqrt(rho) * tend.u_t, grid, 2),
        grad_ut_l2=lp_norm(calc.gradient(tend.u_t), grid, 2),
        flux_residual=flux_residual(state, params, calc),
        unit_defect=unit_defect(d),
    )


@dataclass(frozen=True)
class RunRecord:
    t: float
    total_energy: float
    mass: float
    grad_d_l2: float
    grad_d_l3: float
    hess_d_l2: float
    rho_dev_linf: float
    grad_rho_l2: float
    grad_rho_lq: float
    grad_u_l2: float
    grad_u_linf: float
    sqrt_rho_ut_l2: float
    flux_residual: float
    unit_defect: float
    dt: float
    blowup_nonfinite: int = 0
    blowup_band: int = 0
    blowup_gradu: int = 0
    blowup_dt: int = 0

    @classmethod
    def from_measurements(cls, m: Measurements, dt: float, **flags: int) -> "RunRecord":
        values = {f.name: getattr(m, f.name) for f in fields(cls) if hasattr(m, f.name)}
        return cls(dt=dt, **values, **flags)

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list[str]:
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            out.append(str(value) if isinstance(value, int) else format_float(value))
        return out


def format_float(x: float) -> str:
    return "%.17g" % x


class RecordCSV:
    """RunRecord sink writing a header and one 17-digit row per tick."""

    def __init__(self, stream: io.TextIOBase, header: bool = True):
        self.stream = stream
        self.writer = csv.writer(stream, lineterminator="\n")
        if header:
            self.writer.writerow(RunRecord.columns())

    def __call__(self, record: RunRecord, state: State | None = None, measurements=None) -> None:
        self.writer.writerow(record.row())


def read_records(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for row in reader:
            values = {}
            for f in fields(RunRecord):
                raw = row[f.name]
                values[f.name] = int(raw) if f.name.startswith("blowup_") else float(raw)
            out.append(RunRecord(**values))
    return out


# -- bootstrap functionals ------------------------------------------------------


WEIGHT_CONVENTIONS = ("mu1", "2mu1+mu2")


@dataclass(frozen=True)
class BootstrapReport:
    """Running sup and trapezoid-integral accumulators of the bootstrap functionals."""

    rho_bar: float
    rho_weight: float  # rho_bar^(gamma - alpha)
    u_weight: float  # mu rho_bar^alpha / 2^(alpha + 1)
    ticks: int = 0
    t: float = 0.0
    N3: float = 0.0
    sup_grad_d_l3: float = 0.0
    sup_rho_dev: float = 0.0
    sup_grad_rho_lq_sq: float = 0.0
    int_grad_rho_lq_sq: float = 0.0
    sup_grad_rho_l2_sq: float = 0.0
    int_grad_rho_l2_sq: float = 0.0
    sup_grad_u_l2_sq: float = 0.0
    int_sqrt_rho_ut_sq: float = 0.0
    sup_sqrt_rho_ut_sq: float = 0.0
    int_grad_ut_sq: float = 0.0
    last_integrands: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    initial: tuple[float, ...] = field(default=())

    @classmethod
    def start(cls, params: PhysParams, weight: str = "mu1") -> "BootstrapReport":
        if weight == "mu1":
            mu = params.mu1
        elif weight == "2mu1+mu2":
            mu = 2 * params.mu1 + params.mu2
        else:
            raise ValueError(f"weight convention must be one of {WEIGHT_CONVENTIONS}")
        return cls(
            rho_bar=params.rho_bar,
            rho_weight=params.rho_bar ** (params.gamma - params.alpha),
            u_weight=mu * params.rho_bar**params.alpha / 2 ** (params.alpha + 1),
        )

    @property
    def E_d(self) -> float:
        return self.sup_grad_d_l3

    @property
    def E_rho1(self) -> float:
        return self.sup_rho_dev

    @property
    def E_rho2(self) -> float:
        return self.sup_grad_rho_lq_sq + self.rho_weight * self.int_grad_rho_lq_sq

    @property
    def E_rho3(self) -> float:
        return self.sup_grad_rho_l2_sq + self.rho_weight * self.int_grad_rho_l2_sq

    @property
    def E_u1(self) -> float:
        return self.u_weight * self.sup_grad_u_l2_sq + 0.5 * self.int_sqrt_rho_ut_sq

    @property
    def E_u2(self) -> float:
        return self.sup_sqrt_rho_ut_sq + self.u_weight * self.int_grad_ut_sq

    def functionals(self) -> dict[str, float]:
        return {
            "E_d": self.E_d,
            "E_rho1": self.E_rho1,
            "E_rho2": self.E_rho2,
            "E_rho3": self.E_rho3,
            "E_u1": self.E_u1,
            "E_u2": self.E_u2,
        }

    def initial_functionals(self) -> dict[str, float]:
        names = ("E_d", "E_rho1", "E_rho2", "E_rho3", "E_u1", "E_u2")
        return dict(zip(names, self.initial)) if self.initial else {}

    def as_text(self) -> str:
        lines = ["[bootstrap]", f"ticks = {self.ticks}", f"t = {format_float(self.t)}"]
        for name, value in self.functionals().items():
            lines.append(f"{name} = {format_float(value)}")
        lines.append(f"N3 = {format_float(self.N3)}")
        for name, value in self.initial_functionals().items():
            lines.append(f"{name}_initial = {format_float(value)}")
        return "\n".join(lines) + "\n"


def initial_dissipation_constant(state: State, params: PhysParams, calc: Calculus | None = None) -> float:
    """N3 = 2 mu1 ||D(u0)||^2 + mu2 ||div u0||^2."""
    calc = calc or get_calculus(state.grid)
    grad_u = calc.gradient(state.u)
    grid = state.grid
    return (
        2 * params.mu1 * lp_norm(deformation_tensor(grad_u), grid, 2) ** 2
        + params.mu2 * lp_norm(trace(grad_u), grid, 2) ** 2
    )


def bootstrap_update(
    report: BootstrapReport,
    state: State,
    params: PhysParams,
    dt: float,
    calc: Calculus | None = None,
    measurements: Measurements | None = None,
) -> BootstrapReport:
    """Fold one diagnostic tick into the report; ``dt`` is the time since the previous tick."""
    calc = calc or get_calculus(state.grid)
    m = measurements or measure(state, params, calc)
    integrands = (
        m.grad_rho_lq**2,
        m.grad_rho_l2**2,
        m.sqrt_rho_ut_l2**2,
        m.grad_ut_l2**2,
    )
    if report.ticks == 0:
        dt = 0.0
    half = 0.5 * dt
    prev = report.last_integrands if report.ticks else integrands
    inc = tuple(half * (a + b) for a, b in zip(prev, integrands))
    new = replace(
        report,
        ticks=report.ticks + 1,
        t=m.t,
        sup_grad_d_l3=max(report.sup_grad_d_l3, m.grad_d_l3),
        sup_rho_dev=max(report.sup_rho_dev, m.rho_dev_linf),
        sup_grad_rho_lq_sq=max(report.sup_grad_rho_lq_sq, integrands[0]),
        int_grad_rho_lq_sq=report.int_grad_rho_lq_sq + inc[0],
        sup_grad_rho_l2_sq=max(report.sup_grad_rho_l2_sq, integrands[1]),
        int_grad_rho_l2_sq=report.int_grad_rho_l2_sq + inc[1],
        sup_grad_u_l2_sq=max(report.sup_grad_u_l2_sq, m.grad_u_l2**2),
        int_sqrt_rho_ut_sq=report.int_sqrt_rho_ut_sq + inc[2],
        sup_sqrt_rho_ut_sq=max(report.sup_sqrt_rho_ut_sq, integrands[2]),
        int_grad_ut_sq=report.int_grad_ut_sq + inc[3],
        last_integrands=integrands,
    )
    if report.ticks == 0:
        new = replace(
            new,
            N3=initial_dissipation_constant(state, params, calc),
            initial=tuple(new.functionals().values()),
        )
    return new


class BootstrapTracker:
    """Sink that keeps a BootstrapReport current along a run."""

    def __init__(self, params: PhysParams, weight: str = "mu1"):
        self.params = params
        self.report = BootstrapReport.start(params, weight)
        self._last_t: float | None = None

    def __call__(self, record: RunRecord, state: State, measurements: Measurements | None = None) -> None:
        dt = 0.0 if self._last_t is None else state.t - self._last_t
        self.report = bootstrap_update(self.report, state, self.params, dt, measurements=measurements)
        self._last_t = state.t

    def to_json(self) -> str:
        return json.dumps({"report": asdict(self.report), "last_t": self._last_t})

    def restore(self, text: str) -> None:
        data = json.loads(text)
        raw = data["report"]
        raw["last_integrands"] = tuple(raw["last_integrands"])
        raw["initial"] = tuple(raw["initial"])
        self.report = BootstrapReport(**raw)
        self._last_t = data["last_t"]


# -- Gagliardo-Nirenberg probes ------------------------------------------------------


def random_band_limited(
    grid: Grid, rng: np.random.Generator, cutoff: int, components: int | None = 3
) -> np.ndarray:
    """Zero-mean real field with Fourier support in max |m_i| <= cutoff, scaled to max |f| = 1."""
    shape = grid.dims if components is None else (components,) + grid.dims
    spec = np.zeros(shape, dtype=complex)
    idx = [np.r_[0 : cutoff + 1, n - cutoff : n] for n in grid.dims]
    sub = np.ix_(*idx)
    lead = spec.shape[:-3]
    block_shape = lead + tuple(len(i) for i in idx)
    block = rng.standard_normal(block_shape) + 1j * rng.standard_normal(block_shape)
    if lead:
        for c in np.ndindex(*lead):
            spec[c][sub] = block[c]
    else:
        spec[sub] = block
    spec[..., 0, 0, 0] = 0.0
    field_ = np.fft.ifftn(spec, axes=(-3, -2, -1)).real
    field_ -= field_.mean(axis=(-3, -2, -1), keepdims=True)
    return field_ / np.abs(field_).max()


def gn_theta(j: int, m: int, p: float, q: float, r: float, n: int = 3) -> float:
    """Solve 1/p = j/n + theta (1/r - m/n) + (1 - theta)/q and check j/m <= theta <= 1."""
    if not (0 <= j < m):
        raise ValueError(f"need 0 <= j < m, got j={j}, m={m}")
    inv = lambda x: 0.0 if math.isinf(x) else 1.0 / x  # noqa: E731
    denom = inv(r) - m / n - inv(q)
    if denom == 0:
        raise ValueError("degenerate exponent tuple: theta undetermined")
    theta = (inv(p) - j / n - inv(q)) / denom
    if not (j / m - 1e-12 <= theta <= 1 + 1e-12):
        raise ValueError(f"exponent tuple gives theta={theta:.6g} outside [{j}/{m}, 1]")
    return min(max(theta, j / m), 1.0)


def _nabla(f: np.ndarray, k: int, calc: Calculus) -> np.ndarray:
    for _ in range(k):
        f = calc.gradient(f)
    return f


@dataclass(frozen=True)
class GNEstimate:
    name: str
    exponents: dict
    ratios: tuple[float, ...]

    @property
    def running_max(self) -> np.ndarray:
        return np.maximum.accumulate(np.asarray(self.ratios))

    @property
    def constant(self) -> float:
        return float(max(self.ratios))

    def tail_increase(self, window: int = 50) -> float:
        """Relative growth of the running max over the last ``window`` samples."""
        rm = self.running_max
        if len(rm) <= window:
            return math.inf
        before = rm[-window - 1]
        return float((rm[-1] - before) / before)


def _sample_fields(grid, samples, seed, cutoff, fields_):
    if fields_ is not None:
        yield from fields_
        return
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        yield random_band_limited(grid, rng, cutoff)


def gn_estimate(
    samples: int,
    grid: Grid,
    j: int,
    m: int,
    p_exp: float,
    q_exp: float,
    r_exp: float,
    seed: int = 0,
    cutoff: int = 3,
    fields: Iterable[np.ndarray] | None = None,
    calc: Calculus | None = None,
) -> GNEstimate:
    """Empirical sup of ||grad^j u||_p / (||grad^m u||_r^theta ||u||_q^(1-theta)) over random fields."""
    theta = gn_theta(j, m, p_exp, q_exp, r_exp)
    calc = calc or get_calculus(grid)
    ratios = []
    for u in _sample_fields(grid, samples, seed, cutoff, fields):
        lhs = lp_norm(_nabla(u, j, calc), grid, p_exp)
        top = lp_norm(_nabla(u, m, calc), grid, r_exp)
        base = lp_norm(u, grid, q_exp)
        ratios.append(lhs / (top**theta * base ** (1 - theta)))
    exps = {"j": j, "m": m, "p": p_exp, "q": q_exp, "r": r_exp, "theta": theta}
    return GNEstimate(f"gn(j={j},m={m},p={p_exp},q={q_exp},r={r_exp})", exps, tuple(ratios))


def _c1(f, calc, grid, g=None):
    g1 = calc.gradient(f)
    g2 = calc.gradient(g1)
    return lp_norm(g1, grid, 4) ** 4 / (lp_norm(g1, grid, 3) ** 2 * lp_norm(g2, grid, 2) ** 2)


def _c2(f, calc, grid, g=None):
    g1 = calc.gradient(f)
    w = magnitude(g1) ** 1.5
    fifth = total(magnitude(g1) ** 5) * grid.cell_volume
    return fifth / (lp_norm(g1, grid, 3) ** 2 * lp_norm(calc.gradient(w), grid, 2) ** 2)


def _c3(f, calc, grid, g=None):
    g2 = calc.gradient(calc.gradient(f))
    g3 = calc.gradient(g2)
    grad_lap = calc.gradient(calc.laplacian(f))
    return lp_norm(g2, grid, 6) * lp_norm(grad_lap, grid, 2) / lp_norm(g3, grid, 2) ** 2


def _c4(f, calc, grid, g):
    # two-field form: f plays d, g plays d_t
    g1 = calc.gradient(g)
    g2 = calc.gradient(g1)
    cubic = total(magnitude(calc.gradient(f)) * magnitude(g1) * np.abs(magnitude(calc.laplacian(g))))
    return cubic * grid.cell_volume / (lp_norm(calc.gradient(f), grid, 3) * lp_norm(g2, grid, 2) ** 2)


def _l3_interp(f, calc, grid, g=None):
    g1 = calc.gradient(f)
    g2 = calc.gradient(g1)
    return lp_norm(g1, grid, 3) / math.sqrt(lp_norm(g1, grid, 2) * lp_norm(g2, grid, 2))


def _l6_sobolev(f, calc, grid, g=None):
    g1 = calc.gradient(f)
    return lp_norm(g1, grid, 6) / lp_norm(calc.gradient(g1), grid, 2)


# name -> (ratio functional, description)
DIRECTOR_INEQUALITIES: dict[str, tuple[Callable, str]] = {
    "c1": (_c1, "||grad d||_4^4 <= c1 ||grad d||_3^2 ||grad^2 d||_2^2"),
    "c2": (_c2, "int |grad d|^5 <= c2 ||grad d||_3^2 ||grad |grad d|^(3/2)||_2^2"),
    "c3": (_c3, "||grad^2 d||_6 ||grad lap d||_2 <= c3 ||grad^3 d||_2^2"),
    "c4": (_c4, "int |grad d| |grad g| |lap g| <= c4 ||grad d||_3 ||grad^2 g||_2^2"),
    "l3_interp": (_l3_interp, "||grad d||_3 <= C ||grad d||_2^(1/2) ||grad^2 d||_2^(1/2)"),
    "l6_sobolev": (_l6_sobolev, "||grad d||_6 <= C ||grad^2 d||_2"),
}


TWO_FIELD = frozenset({"c4"})


def estimate_inequality(
    name: str,
    samples: int,
    grid: Grid,
    seed: int = 0,
    cutoff: int = 1,
    fields: Iterable | None = None,
    calc: Calculus | None = None,
) -> GNEstimate:
    """Running ratios for one named inequality.

    Injected ``fields`` are single rasters, or (f, g) pairs for two-field
    inequalities.
    """
    func, text = DIRECTOR_INEQUALITIES[name]
    calc = calc or get_calculus(grid)
    if fields is None:
        rng = np.random.default_rng(seed)
        draws = 2 if name in TWO_FIELD else 1
        fields = (
            tuple(random_band_limited(grid, rng, cutoff) for _ in range(draws)) for _ in range(samples)
        )
        fields = (pair if len(pair) == 2 else pair[0] for pair in fields)
    ratios = []
    for item in fields:
        if name in TWO_FIELD:
            f, g = item
            ratios.append(func(f, calc, grid, g))
        else:
            ratios.append(func(item, calc, grid))
    return GNEstimate(name, {"inequality": text}, tuple(ratios))


@dataclass(frozen=True)
class SmallnessConstants:
    estimates: dict[str, GNEstimate]

    @property
    def c(self) -> dict[str, float]:
        return {k: v.constant for k, v in self.estimates.items()}

    @property
    def delta(self) -> float:
        c = self.c
        return min(
            1.0 / (2.0 * math.sqrt(2.0 * c["c1"])),
            1.0 / (9.0 * c["c2"]),
            1.0 / (2.0 * c["c3"]),
            1.0 / (4.0 * c["c4"]),
        )

    @property
    def epsilon0(self) -> float:
        return self.delta / 2.0

    def as_text(self) -> str:
        lines = []
        for name, est in self.estimates.items():
            lines.append(
                f"{name} = {format_float(est.constant)}  # samples={len(est.ratios)} "
                f"tail_increase={est.tail_increase():.3e}"
            )
        lines.append(f"delta = {format_float(self.delta)}")
        lines.append(f"epsilon0 = {format_float(self.epsilon0)}")
        return "\n".join(lines) + "\n"


def smallness_constants(
    samples: int = 200,
    grid: Grid = Grid((16, 16, 16)),
    seed: int = 0,
    cutoff: int = 1,
    names: Sequence[str] = ("c1", "c2", "c3", "c4", "l3_interp", "l6_sobolev"),
) -> SmallnessConstants:
    """Estimate the director inequality constants on one shared sample of fields."""
    calc = get_calculus(grid)
    rng = np.random.default_rng(seed)
    ratios = {name: [] for name in names}
    for _ in range(samples):
        f = random_band_limited(grid, rng, cutoff)
        g = random_band_limited(grid, rng, cutoff)
        for name in names:
            ratios[name].append(DIRECTOR_INEQUALITIES[name][0](f, calc, grid, g))
    return SmallnessConstants(
        {
            name: GNEstimate(name, {"inequality": DIRECTOR_INEQUALITIES[name][1]}, tuple(vals))
            for name, vals in ratios.items()
        }
    )
