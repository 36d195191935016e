"""Explicit RK4 time stepping with director projection, initial data and blow-up detection."""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .diagnostics import Measurements, RunRecord, measure, random_band_limited
from .grid import (
    Calculus,
    FieldKind,
    Grid,
    NonFiniteFieldError,
    Scheme,
    get_calculus,
    lp_norm,
    project_to_sphere,
    read_snapshot,
    unit_defect,
    write_snapshot,
)
from .model import ParameterError, PhysParams, State, VacuumError, tendencies

log = logging.getLogger(__name__)

DT_FLOOR = 1e-12
INIT_RHO_BAND = (0.75, 1.25)


class BlowUpError(RuntimeError):
    def __init__(self, reason: str, t: float, what: str = ""):
        self.reason = reason
        self.t = t
        self.what = what
        super().__init__(f"{reason} at t={t:.6g}" + (f" ({what})" if what else ""))


class TimeStepUnderflow(BlowUpError):
    pass


class SinkError(RuntimeError):
    """A diagnostic sink failed; ``outcome`` describes the partial run."""

    def __init__(self, outcome: "RunOutcome", cause: BaseException):
        self.outcome = outcome
        self.cause = cause
        super().__init__(f"diagnostic sink failed at t={outcome.t:.6g}: {cause}")


@dataclass(frozen=True)
class SolverConfig:
    t_end: float = 1.0
    cfl_number: float = 0.2
    dt_max: float = 0.05
    projection: str = "per_step"
    blowup_gradu_threshold: float = 1.0e3
    blowup_density_band: tuple[float, float] = (2.0 / 3.0, 4.0 / 3.0)
    scheme: Scheme = Scheme.SPECTRAL
    dt_override: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "blowup_density_band", tuple(float(x) for x in self.blowup_density_band))
        if not 0 < self.cfl_number <= 1:
            raise ParameterError("cfl_number", f"cfl_number must lie in (0, 1], got {self.cfl_number}")
        if self.dt_max <= 0:
            raise ParameterError("dt_max", "dt_max must be positive")
        if self.t_end <= 0:
            raise ParameterError("t_end", "t_end must be positive")
        if self.projection not in ("per_stage", "per_step"):
            raise ParameterError("projection", f"projection must be per_stage or per_step, got {self.projection!r}")
        if self.blowup_gradu_threshold <= 0:
            raise ParameterError("blowup_gradu_threshold", "blowup_gradu_threshold must be positive")
        lo, hi = self.blowup_density_band
        if not lo < 1 < hi:
            raise ParameterError("blowup_density_band", f"density band multipliers must satisfy lo < 1 < hi, got {(lo, hi)}")
        if self.dt_override is not None and self.dt_override <= 0:
            raise ParameterError("dt_override", "dt_override must be positive")


@dataclass(frozen=True)
class InitSpec:
    rho_perturbation_amplitude: float = 0.0
    velocity_amplitude: float = 0.0
    director_gradient_target: float = 0.0
    mode_cutoff: int = 2
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.rho_perturbation_amplitude <= 0.25:
            raise ParameterError(
                "rho_perturbation_amplitude",
                "rho_perturbation_amplitude must lie in [0, 1/4] so that "
                f"3/4 rho_bar <= rho0 <= 5/4 rho_bar; got {self.rho_perturbation_amplitude}"
            )
        if self.velocity_amplitude < 0:
            raise ParameterError("velocity_amplitude", "velocity_amplitude must be nonnegative")
        if self.director_gradient_target < 0:
            raise ParameterError("director_gradient_target", "director_gradient_target must be nonnegative")
        if self.mode_cutoff < 1:
            raise ParameterError("mode_cutoff", "mode_cutoff must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed", "seed must be a 64-bit unsigned integer")


# -- initial data ------------------------------------------------------------------


def _director_gradient_l3(d, calc, grid) -> float:
    return lp_norm(calc.gradient(d), grid, 3)


def _tilt(e, psi, s):
    with np.errstate(invalid="ignore", divide="ignore"):
        return project_to_sphere(e + s * psi)


def build_initial_data(
    grid: Grid, params: PhysParams, spec: InitSpec, scheme: Scheme | str = Scheme.SPECTRAL
) -> State:
    """Seeded band-limited perturbation of the far-field state.

    The director is e + s psi renormalized, with s found by bisection so that
    ||grad d0||_3 hits the requested target within 1%.
    """
    calc = get_calculus(grid, scheme)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(3)]
    state = State.equilibrium(grid, params)
    cutoff = min(spec.mode_cutoff, min(grid.dims) // 3)

    rho = state.rho
    if spec.rho_perturbation_amplitude > 0:
        psi = random_band_limited(grid, streams[0], cutoff, components=None)
        rho = params.rho_bar * (1.0 + spec.rho_perturbation_amplitude * psi)
        lo, hi = INIT_RHO_BAND
        rho = np.clip(rho, lo * params.rho_bar, hi * params.rho_bar)

    u = state.u
    if spec.velocity_amplitude > 0:
        psi = random_band_limited(grid, streams[1], cutoff)
        peak = np.sqrt(np.einsum("i...,i...->...", psi, psi)).max()
        u = spec.velocity_amplitude * psi / peak

    d = state.d
    target = spec.director_gradient_target
    if target > 0:
        e = params.e_vector[:, None, None, None]
        psi = random_band_limited(grid, streams[2], cutoff)
        d = _fit_director(grid, calc, e, psi, target)
    return State(grid, rho, u, d, 0.0)


def _fit_director(grid, calc, e, psi, target, rel_tol=0.01, max_iter=50):
    def norm_at(s):
        d = _tilt(e, psi, s)
        if not np.isfinite(d).all():
            return math.inf, d
        return _director_gradient_l3(d, calc, grid), d

    lo, hi = 0.0, 1e-3
    best = 0.0
    value, d = norm_at(hi)
    while value < target:
        best = max(best, value)
        lo = hi
        hi *= 2.0
        if hi > 1e3:
            raise ValueError(
                f"director gradient target {target} unreachable on this grid; "
                f"achievable range is [0, {best:.4g}]"
            )
        value, d = norm_at(hi)
    if abs(value - target) <= rel_tol * target:
        return d
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        value, d = norm_at(mid)
        if abs(value - target) <= rel_tol * target:
            return d
        if value < target:
            lo = mid
        else:
            hi = mid
    raise ValueError(f"bisection for director gradient target {target} did not converge")


# -- time step ---------------------------------------------------------------------


@dataclass(frozen=True)
class StepBounds:
    acoustic: float
    viscous: float
    director: float
    sound_speed: float

    def limit(self) -> float:
        return min(self.acoustic, self.viscous, self.director)


def step_bounds(state: State, params: PhysParams) -> StepBounds:
    h = state.grid.h_min
    rho_min = float(state.rho.min())
    rho_max = float(state.rho.max())
    if rho_min <= 0:
        raise VacuumError(f"density not positive (min {rho_min:.3e})")
    c_s = math.sqrt(params.a * params.gamma * rho_max ** (params.gamma - 1.0))
    speed = float(np.sqrt(np.einsum("i...,i...->...", state.u, state.u)).max())
    visc = (2 * params.mu1 + params.mu2) * rho_max**params.alpha
    return StepBounds(
        acoustic=h / (speed + c_s),
        viscous=h * h * rho_min / visc,
        director=h * h / params.lam,
        sound_speed=c_s,
    )


def stable_dt(state: State, params: PhysParams, config: SolverConfig) -> float:
    dt = min(config.cfl_number * step_bounds(state, params).limit(), config.dt_max)
    if not dt >= DT_FLOOR:
        raise TimeStepUnderflow("time step underflow", state.t, f"dt={dt:.3e}")
    return dt


# -- RK4 -----------------------------------------------------------------------------


def _rates(state: State, params: PhysParams, calc: Calculus):
    try:
        tend = tendencies(state, params, calc)
    except NonFiniteFieldError as exc:
        raise BlowUpError("non-finite field", state.t, str(exc)) from exc
    except VacuumError as exc:
        raise BlowUpError("vacuum", state.t, str(exc)) from exc
    d, d_t = state.d, calc.dealias(tend.d_t)
    # filtering breaks d . d_t = 0; restore tangency so renormalization stays O(dt^5)
    d_t = d_t - np.einsum("i...,i...->...", d, d_t) / np.einsum("i...,i...->...", d, d) * d
    rates = (calc.dealias(tend.rho_t), calc.dealias(tend.u_t), d_t)
    for name, r in zip(("rho_t", "u_t", "d_t"), rates):
        if not np.isfinite(r).all():
            raise BlowUpError("non-finite field", state.t, name)
    return rates


def step(
    state: State, params: PhysParams, config: SolverConfig, dt: float, calc: Calculus | None = None
) -> State:
    """One classical RK4 step followed by renormalization of the director."""
    calc = calc or get_calculus(state.grid, config.scheme)
    per_stage = config.projection == "per_stage"

    def shifted(k, frac):
        d = state.d + frac * dt * k[2]
        if per_stage:
            d = project_to_sphere(d)
        return State(state.grid, state.rho + frac * dt * k[0], state.u + frac * dt * k[1], d, state.t + frac * dt)

    k1 = _rates(state, params, calc)
    k2 = _rates(shifted(k1, 0.5), params, calc)
    k3 = _rates(shifted(k2, 0.5), params, calc)
    k4 = _rates(shifted(k3, 1.0), params, calc)
    w = dt / 6.0
    rho = state.rho + w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    u = state.u + w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    d = state.d + w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    if log.isEnabledFor(logging.DEBUG):
        log.debug("t=%.6g projection magnitude %.3e", state.t + dt, unit_defect(d))
    d = project_to_sphere(d)
    t = state.t + dt
    for name, arr in (("rho", rho), ("u", u), ("d", d)):
        if not np.isfinite(arr).all():
            raise BlowUpError("non-finite field", t, name)
    return State(state.grid, rho, u, d, t)


# -- driver ----------------------------------------------------------------------------


@dataclass
class RunOutcome:
    status: str  # "completed" or "blew_up"
    t: float
    steps: int
    reason: str = ""
    state: State | None = field(default=None, repr=False)
    ticks: int = 0
    band_respected: bool = True

    @property
    def completed(self) -> bool:
        return self.status == "completed"


Sink = Callable[[RunRecord, State, Measurements], None]


def _band_ok(state: State, params: PhysParams, band) -> bool:
    lo, hi = band
    return bool(state.rho.min() > lo * params.rho_bar and state.rho.max() < hi * params.rho_bar)


def run(
    init: State,
    params: PhysParams,
    config: SolverConfig,
    sinks: Sequence[Sink] = (),
    cadence: int = 1,
    start_step: int = 0,
    last_dt: float = 0.0,
    checkpoint_every: int = 0,
    on_checkpoint: Callable[[State, int, float], None] | None = None,
    max_steps: int | None = None,
) -> RunOutcome:
    """Integrate to ``config.t_end`` or the first blow-up trigger.

    A RunRecord goes to every sink each ``cadence`` steps (counted from step
    0, so resumed runs tick on the same steps) and at termination.
    ``on_checkpoint(state, step_index, last_dt)`` fires every
    ``checkpoint_every`` steps.
    """
    if cadence < 1:
        raise ValueError("cadence must be >= 1")
    calc = get_calculus(init.grid, config.scheme)
    state = init
    n = start_step
    dt_prev = last_dt
    band_held = True
    ticks = 0

    def emit(flags):
        nonlocal ticks
        m = measure(state, params, calc)
        record = RunRecord.from_measurements(m, dt_prev, **flags)
        for sink in sinks:
            try:
                sink(record, state, m)
            except OSError as exc:
                raise SinkError(
                    RunOutcome("io_error", state.t, n, str(exc), state, ticks, band_held), exc
                ) from exc
        ticks += 1

    def finish(status, reason="", flags=None, emit_row=True):
        if emit_row:
            emit(flags or {})
        return RunOutcome(status, state.t, n, reason, state, ticks, band_held)

    try:
        state.validate(unit_tol=1e-10)
    except (VacuumError, NonFiniteFieldError) as exc:
        return finish("blew_up", str(exc), emit_row=False)
    if not _band_ok(state, params, config.blowup_density_band):
        band_held = False
        return finish("blew_up", "density band exit", {"blowup_band": 1})

    if n % cadence == 0:
        emit({})
    t_end = config.t_end
    while t_end - state.t > 1e-12 * t_end:
        if max_steps is not None and n - start_step >= max_steps:
            return finish("completed", "max_steps", emit_row=n % cadence != 0)
        try:
            dt = config.dt_override if config.dt_override else stable_dt(state, params, config)
            dt = min(dt, t_end - state.t)
            state = step(state, params, config, dt, calc)
        except TimeStepUnderflow as exc:
            return finish("blew_up", str(exc), {"blowup_dt": 1})
        except BlowUpError as exc:
            state = replace(state, t=exc.t)
            return finish("blew_up", str(exc), emit_row=False)
        n += 1
        dt_prev = dt
        if checkpoint_every and on_checkpoint is not None and n % checkpoint_every == 0:
            on_checkpoint(state, n, dt_prev)
        if not _band_ok(state, params, config.blowup_density_band):
            band_held = False
            return finish("blew_up", "density band exit", {"blowup_band": 1})
        gradu = lp_norm(calc.gradient(state.u), state.grid, math.inf)
        if gradu > config.blowup_gradu_threshold:
            return finish("blew_up", f"velocity gradient {gradu:.3e} above threshold", {"blowup_gradu": 1})
        if n % cadence == 0:
            emit({})
    if n % cadence != 0:
        emit({})
    return RunOutcome("completed", state.t, n, "", state, ticks, band_held)


# -- checkpoints -----------------------------------------------------------------------

CHECKPOINT_MAGIC = b"ELCK"
_CKPT_HEADER = struct.Struct("<4sIdQd32s")


def write_checkpoint(path: str | Path, state: State, params: PhysParams, step_index: int, last_dt: float) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(CHECKPOINT_MAGIC, 1, state.t, step_index, last_dt, params.digest()))
        write_snapshot(fh, state.rho, state.grid, FieldKind.SCALAR)
        write_snapshot(fh, state.u, state.grid, FieldKind.VECTOR)
        write_snapshot(fh, state.d, state.grid, FieldKind.DIRECTOR)
    tmp.replace(path)


@dataclass(frozen=True)
class Checkpoint:
    state: State
    step_index: int
    last_dt: float
    params_digest: bytes


def read_checkpoint(path: str | Path, params: PhysParams | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        head = fh.read(_CKPT_HEADER.size)
        if len(head) != _CKPT_HEADER.size:
            raise ValueError("truncated checkpoint header")
        magic, version, t, step_index, last_dt, digest = _CKPT_HEADER.unpack(head)
        if magic != CHECKPOINT_MAGIC or version != 1:
            raise ValueError("not a checkpoint file")
        rho = read_snapshot(fh)
        u = read_snapshot(fh)
        d = read_snapshot(fh)
    if params is not None and params.digest() != digest:
        raise ValueError("checkpoint was written with different physical parameters")
    state = State(rho.grid, rho.data, u.data, d.data, t)
    return Checkpoint(state, step_index, last_dt, digest)
