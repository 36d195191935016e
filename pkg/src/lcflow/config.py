"""Run configuration files: strict ``section.key = value`` text.

    # comment
    physics.rho_bar = 4.0
    grid.dims = 32          # or 32, 32, 16
    solver.t_end = 0.5

Unknown keys and unknown sections are errors. Every key can be overridden
from the environment as LCFLOW_<SECTION>_<KEY>, e.g. LCFLOW_SOLVER_T_END=2.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields
from typing import Any, Callable, Mapping

from .grid import Grid, Scheme
from .integrator import InitSpec, SolverConfig
from .model import ParameterError, PhysParams, RegimeVerdict, regime_check

ENV_PREFIX = "LCFLOW_"
TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


# -- value codecs ------------------------------------------------------------------------


def _real(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"expected a real number, got {text!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"expected a finite real number, got {text!r}")
    return value


def _integer(text: str) -> int:
    try:
        return int(text, 10)
    except ValueError:
        raise ValueError(f"expected an integer, got {text!r}") from None


def _items(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _reals(text: str) -> tuple[float, ...]:
    return tuple(_real(t) for t in _items(text))


def _integers(text: str) -> tuple[int, ...]:
    return tuple(_integer(t) for t in _items(text))


def _triple(parse):
    def inner(text):
        values = tuple(parse(t) for t in _items(text))
        if len(values) == 1:
            return values * 3
        if len(values) != 3:
            raise ValueError(f"expected one or three values, got {text!r}")
        return values

    return inner


def _pair(text: str) -> tuple[float, float]:
    values = _reals(text)
    if len(values) != 2:
        raise ValueError(f"expected two values, got {text!r}")
    return values


def _optional_real(text: str):
    return None if text.lower() == "none" else _real(text)


def _choice(*options):
    def inner(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    return inner


def _pairs(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ValueError(f"expected alpha:gamma pairs separated by ';', got {item!r}")
        a, g = item.split(":", 1)
        out.append((_real(a.strip()), _real(g.strip())))
    return tuple(out)


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        if value and isinstance(value[0], tuple):
            return "; ".join(f"{_fmt(a)}:{_fmt(b)}" for a, b in value)
        return ", ".join(_fmt(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    doc: str
    required: bool = False


_phys = PhysParams()
_solver = SolverConfig()
_init = InitSpec()

SCHEMA: dict[str, dict[str, Key]] = {
    "physics": {
        "a": Key(_real, _phys.a, "pressure constant in P = a rho^gamma"),
        "gamma": Key(_real, _phys.gamma, "adiabatic exponent, > 1"),
        "mu1": Key(_real, _phys.mu1, "shear viscosity coefficient, > 0"),
        "mu2": Key(_real, _phys.mu2, "bulk coefficient, 2 mu1 + 3 mu2 >= 0"),
        "nu": Key(_real, _phys.nu, "Ericksen stress coupling, > 0"),
        "lam": Key(_real, _phys.lam, "director relaxation constant, > 0"),
        "alpha": Key(_real, _phys.alpha, "viscosity exponent, mu_i(rho) = mu_i rho^alpha"),
        "rho_bar": Key(_real, _phys.rho_bar, "background density"),
        "e": Key(_triple(_real), _phys.e, "far-field unit director"),
        "q": Key(_real, _phys.q, "integrability exponent for grad rho, in (3, 6)"),
    },
    "grid": {
        "dims": Key(_triple(_integer), None, "nodes per axis (one value or three)", required=True),
        "lengths": Key(_triple(_real), (TWO_PI,) * 3, "box lengths (one value or three)"),
    },
    "solver": {
        "t_end": Key(_real, _solver.t_end, "final time"),
        "cfl_number": Key(_real, _solver.cfl_number, "safety factor on the stability bounds, in (0, 1]"),
        "dt_max": Key(_real, _solver.dt_max, "upper cap on the time step"),
        "dt_override": Key(_optional_real, None, "fixed time step instead of the adaptive one, or none"),
        "projection": Key(_choice("per_step", "per_stage"), _solver.projection, "director renormalization"),
        "blowup_gradu_threshold": Key(_real, _solver.blowup_gradu_threshold, "max |grad u| before blow-up"),
        "blowup_density_band": Key(_pair, _solver.blowup_density_band, "allowed rho / rho_bar range"),
        "mode": Key(_choice("spectral", "fd2"), "spectral", "spatial discretization"),
    },
    "init": {
        "rho_perturbation_amplitude": Key(_real, _init.rho_perturbation_amplitude, "relative density bump, <= 1/4"),
        "velocity_amplitude": Key(_real, _init.velocity_amplitude, "max |u0|"),
        "director_gradient_target": Key(_real, _init.director_gradient_target, "target ||grad d0||_3"),
        "mode_cutoff": Key(_integer, _init.mode_cutoff, "highest Fourier mode of the perturbations"),
        "seed": Key(_integer, _init.seed, "random seed"),
    },
    "output": {
        "directory": Key(str, "run", "output directory"),
        "cadence": Key(_integer, 1, "steps between diagnostic records"),
        "checkpoint_every": Key(_integer, 0, "steps between checkpoints, 0 disables"),
        "bootstrap_weight": Key(_choice("mu1", "2mu1+mu2"), "mu1", "viscosity in the velocity functionals"),
    },
}

SWEEP_SCHEMA: dict[str, Key] = {
    "rho_bar_values": Key(_reals, None, "background densities", required=True),
    "grad_d_targets": Key(_reals, None, "director gradient targets", required=True),
    "alpha_gamma_pairs": Key(_pairs, ((2.0, 1.5),), "alpha:gamma pairs separated by ';'"),
    "seeds": Key(_integers, (0, 1), "replicate seeds"),
    "workers": Key(_integer, 1, "parallel processes"),
    "delta": Key(_optional_real, None, "closure delta, or none to estimate it"),
}


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "run"
    cadence: int = 1
    checkpoint_every: int = 0
    bootstrap_weight: str = "mu1"

    def __post_init__(self):
        if self.cadence < 1:
            raise ParameterError("cadence", "cadence must be >= 1")
        if self.checkpoint_every < 0:
            raise ParameterError("checkpoint_every", "checkpoint_every must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    params: PhysParams
    grid: Grid
    solver: SolverConfig
    init: InitSpec
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def regime(self) -> RegimeVerdict:
        return regime_check(self.params.alpha, self.params.gamma)

    @property
    def scheme(self) -> Scheme:
        return self.solver.scheme


@dataclass(frozen=True)
class SweepSection:
    rho_bar_values: tuple[float, ...]
    grad_d_targets: tuple[float, ...]
    alpha_gamma_pairs: tuple[tuple[float, float], ...]
    seeds: tuple[int, ...]
    workers: int
    delta: float | None


# -- parsing -------------------------------------------------------------------------------


def _raw_pairs(text: str) -> list[tuple[int, str, str]]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'section.key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(key or f"line {lineno}", "keys must be written as section.key")
        out.append((lineno, key, value))
    return out


def _env_pairs(env: Mapping[str, str], schema) -> list[tuple[int, str, str]]:
    out = []
    for name in sorted(env):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        section, _, key = rest.partition("_")
        if section not in schema or key not in schema[section]:
            raise ConfigError(name, "environment override does not match any section.key")
        out.append((0, f"{section}.{key}", env[name]))
    return out


def _collect(text: str, schema, env) -> dict[str, dict[str, Any]]:
    values: dict[str, dict[str, Any]] = {s: {} for s in schema}
    seen = set()
    pairs = _raw_pairs(text)
    if env is not None:
        pairs += _env_pairs(env, schema)
    for lineno, path, raw in pairs:
        section, key = path.split(".", 1)
        if section not in schema:
            raise ConfigError(path, f"unknown section {section!r}")
        if key not in schema[section]:
            raise ConfigError(path, "unknown key")
        if lineno and path in seen:
            raise ConfigError(path, "duplicate key")
        seen.add(path)
        try:
            values[section][key] = schema[section][key].parse(raw)
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None
    for section, keys in schema.items():
        for key, spec in keys.items():
            if key not in values[section]:
                if spec.required:
                    raise ConfigError(f"{section}.{key}", "missing required key")
                values[section][key] = spec.default
    return values


def _build(section: str, factory, kwargs: dict, rename: Mapping[str, str] = {}):
    try:
        return factory(**kwargs)
    except ParameterError as exc:
        key = {v: k for k, v in rename.items()}.get(exc.key, exc.key)
        raise ConfigError(f"{section}.{key}", str(exc)) from None
    except ValueError as exc:
        raise ConfigError(section, str(exc)) from None


def _run_config(v: dict[str, dict[str, Any]]) -> RunConfig:
    params = _build("physics", PhysParams, v["physics"])
    try:
        grid = Grid(v["grid"]["dims"], v["grid"]["lengths"])
    except ValueError as exc:
        raise ConfigError("grid.dims", str(exc)) from None
    solver_kw = dict(v["solver"])
    solver_kw["scheme"] = Scheme(solver_kw.pop("mode"))
    solver = _build("solver", SolverConfig, solver_kw, rename={"mode": "scheme"})
    init = _build("init", InitSpec, v["init"])
    output = _build("output", OutputConfig, v["output"])
    return RunConfig(params, grid, solver, init, output)


def parse_config(text: str, env: Mapping[str, str] | None = None) -> RunConfig:
    """Validated RunConfig from configuration text plus optional environment overrides."""
    return _run_config(_collect(text, SCHEMA, env))


def parse_sweep_config(text: str, env: Mapping[str, str] | None = None) -> tuple[RunConfig, SweepSection]:
    schema = {**SCHEMA, "sweep": SWEEP_SCHEMA}
    v = _collect(text, schema, env)
    sweep_values = v.pop("sweep")
    section = SweepSection(**sweep_values)
    if section.workers < 1:
        raise ConfigError("sweep.workers", "workers must be >= 1")
    return _run_config(v), section


def load_config(path, env: Mapping[str, str] | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), os.environ if env is None else env)


# -- emitting -----------------------------------------------------------------------------


def config_values(cfg: RunConfig) -> dict[str, dict[str, Any]]:
    p, s, i, o = cfg.params, cfg.solver, cfg.init, cfg.output
    return {
        "physics": {f.name: getattr(p, f.name) for f in fields(p)},
        "grid": {"dims": cfg.grid.dims, "lengths": cfg.grid.lengths},
        "solver": {
            "t_end": s.t_end,
            "cfl_number": s.cfl_number,
            "dt_max": s.dt_max,
            "dt_override": s.dt_override,
            "projection": s.projection,
            "blowup_gradu_threshold": s.blowup_gradu_threshold,
            "blowup_density_band": s.blowup_density_band,
            "mode": s.scheme.value,
        },
        "init": {f.name: getattr(i, f.name) for f in fields(i)},
        "output": {f.name: getattr(o, f.name) for f in fields(o)},
    }


def emit_config(cfg: RunConfig, docs: bool = False, sweep: SweepSection | None = None) -> str:
    """Effective configuration text; parse_config(emit_config(c)) == c."""
    values = config_values(cfg)
    schema = dict(SCHEMA)
    if sweep is not None:
        values["sweep"] = {f.name: getattr(sweep, f.name) for f in fields(sweep)}
        schema["sweep"] = SWEEP_SCHEMA
    lines = []
    for section, keys in schema.items():
        if lines:
            lines.append("")
        for key, spec in keys.items():
            line = f"{section}.{key} = {_fmt(values[section][key])}"
            if docs:
                line += f"  # {spec.doc}"
            lines.append(line)
    verdict = cfg.regime
    if not verdict.admissible:
        lines.append("")
        lines.append("# warning: (alpha, gamma) outside the large-density regime: " + "; ".join(verdict.failures()))
    return "\n".join(lines) + "\n"


def defaults_table() -> str:
    """Markdown table of every key with its default and meaning."""
    rows = ["| key | default | meaning |", "|---|---|---|"]
    for section, keys in {**SCHEMA, "sweep": SWEEP_SCHEMA}.items():
        for key, spec in keys.items():
            default = "required" if spec.required else _fmt(spec.default)
            doc = spec.doc.replace("|", "\\|")
            rows.append(f"| `{section}.{key}` | `{default}` | {doc} |")
    return "\n".join(rows) + "\n"
