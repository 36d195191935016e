"""Constitutive laws and right-hand sides of the compressible nematic system.

    rho_t + div(rho u) = 0
    (rho u)_t + div(rho u x u) + grad P - div T = -nu div(grad d (.) grad d - |grad d|^2 I / 2)
    d_t + u . grad d = lambda (lap d + |grad d|^2 d),   |d| = 1

with P = a rho^gamma and T = 2 mu1 rho^alpha D(u) + mu2 rho^alpha div(u) I.
The momentum equation is advanced in velocity form (divided by rho).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import (
    Calculus,
    Grid,
    Scheme,
    check_finite,
    deformation_tensor,
    get_calculus,
    identity_tensor,
    outer_contract,
    trace,
    unit_defect,
)

UNIT_TOL = 1e-12


class VacuumError(ValueError):
    """Density reached zero or became negative."""


class ParameterError(ValueError):
    """Invalid parameter value; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(message)


@dataclass(frozen=True)
class PhysParams:
    a: float = 1.0
    gamma: float = 1.5
    mu1: float = 1.0
    mu2: float = 0.0
    nu: float = 1.0
    lam: float = 1.0
    alpha: float = 2.0
    rho_bar: float = 4.0
    e: tuple[float, float, float] = (0.0, 0.0, 1.0)
    q: float = 4.0

    def __post_init__(self):
        for name in ("a", "gamma", "mu1", "mu2", "nu", "lam", "alpha", "rho_bar", "q"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParameterError(name, f"{name} must be finite")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "e", tuple(float(c) for c in self.e))
        self.validate()

    def validate(self) -> None:
        if self.a <= 0:
            raise ParameterError("a", f"entropy constant a must be positive, got {self.a}")
        if self.gamma <= 1:
            raise ParameterError("gamma", f"adiabatic exponent gamma must exceed 1, got {self.gamma}")
        if self.mu1 <= 0:
            raise ParameterError("mu1", f"mu1 must be positive, got {self.mu1}")
        if 2 * self.mu1 + 3 * self.mu2 < 0:
            raise ParameterError(
                "mu2",
                f"viscosity constraint 2*mu1 + 3*mu2 >= 0 violated: 2*{self.mu1} + 3*{self.mu2} < 0",
            )
        if self.nu <= 0:
            raise ParameterError("nu", f"nu must be positive, got {self.nu}")
        if self.lam <= 0:
            raise ParameterError("lam", f"lambda must be positive, got {self.lam}")
        if self.alpha < 0:
            raise ParameterError("alpha", f"alpha must be >= 0, got {self.alpha}")
        if self.rho_bar <= 0:
            raise ParameterError("rho_bar", f"rho_bar must be positive, got {self.rho_bar}")
        if len(self.e) != 3 or abs(math.sqrt(sum(c * c for c in self.e)) - 1.0) > 1e-14:
            raise ParameterError("e", f"far-field director e must be a unit 3-vector, got {self.e}")
        if not 3.0 < self.q < 6.0:
            raise ParameterError("q", f"q must lie in (3, 6), got {self.q}")

    @property
    def e_vector(self) -> np.ndarray:
        return np.asarray(self.e, dtype=float)

    def canonical_text(self) -> str:
        keys = ("a", "gamma", "mu1", "mu2", "nu", "lam", "alpha", "rho_bar", "q")
        parts = [f"{k}={getattr(self, k)!r}" for k in keys]
        parts.append("e=" + ",".join(repr(c) for c in self.e))
        return ";".join(parts)

    def digest(self) -> bytes:
        return hashlib.sha256(self.canonical_text().encode()).digest()

    def with_(self, **changes) -> "PhysParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class State:
    grid: Grid
    rho: np.ndarray
    u: np.ndarray
    d: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        dims = self.grid.dims
        if self.rho.shape != dims or self.u.shape != (3,) + dims or self.d.shape != (3,) + dims:
            raise ValueError(
                f"state rasters {self.rho.shape}, {self.u.shape}, {self.d.shape} do not fit grid {dims}"
            )
        if self.t < 0:
            raise ValueError("time must be nonnegative")

    def validate(self, unit_tol: float = UNIT_TOL) -> None:
        check_finite(self.rho, "rho")
        check_finite(self.u, "u")
        check_finite(self.d, "d")
        if self.rho.min() <= 0:
            raise VacuumError(f"density not positive (min {self.rho.min():.3e})")
        defect = unit_defect(self.d)
        if defect > unit_tol:
            raise ValueError(f"director unit-norm defect {defect:.3e} exceeds {unit_tol:.1e}")

    @classmethod
    def equilibrium(cls, grid: Grid, params: PhysParams, t: float = 0.0) -> "State":
        rho = np.full(grid.dims, params.rho_bar)
        u = np.zeros((3,) + grid.dims)
        d = np.broadcast_to(params.e_vector[:, None, None, None], (3,) + grid.dims).copy()
        return cls(grid, rho, u, d, t)

    def copy_with(self, **changes) -> "State":
        return replace(self, **changes)


def _require_positive(rho: np.ndarray) -> None:
    if rho.min() <= 0:
        raise VacuumError(f"density not positive (min {rho.min():.3e})")


def pressure(rho: np.ndarray, params: PhysParams) -> np.ndarray:
    _require_positive(rho)
    return params.a * rho**params.gamma


def viscosities(rho: np.ndarray, params: PhysParams) -> tuple[np.ndarray, np.ndarray]:
    _require_positive(rho)
    if params.alpha == 0:
        w = np.ones_like(rho)
    else:
        w = rho**params.alpha
    return params.mu1 * w, params.mu2 * w


def _stress_from_gradient(grad_u: np.ndarray, rho: np.ndarray, params: PhysParams) -> np.ndarray:
    m1, m2 = viscosities(rho, params)
    return 2.0 * m1 * deformation_tensor(grad_u) + identity_tensor(m2 * trace(grad_u))


def viscous_stress(u: np.ndarray, rho: np.ndarray, params: PhysParams, calc: Calculus) -> np.ndarray:
    if u.shape[1:] != rho.shape:
        raise ValueError(f"grid mismatch between u {u.shape} and rho {rho.shape}")
    return _stress_from_gradient(calc.gradient(u), rho, params)


def _ericksen_from_gradient(grad_d: np.ndarray) -> np.ndarray:
    dd = outer_contract(grad_d)
    return dd - identity_tensor(0.5 * trace(dd))


def ericksen_stress(d: np.ndarray, calc: Calculus) -> np.ndarray:
    """grad d (.) grad d - |grad d|^2 I / 2."""
    return _ericksen_from_gradient(calc.gradient(d))


@dataclass
class Tendencies:
    """Time derivatives of (rho, u, d) plus intermediates reused by diagnostics."""

    rho_t: np.ndarray
    u_t: np.ndarray
    d_t: np.ndarray
    grad_u: np.ndarray = field(repr=False)
    grad_d: np.ndarray = field(repr=False)
    lap_d: np.ndarray = field(repr=False)


def _advect(grad_f: np.ndarray, u: np.ndarray) -> np.ndarray:
    # (u . grad) f for grad_f[i, j] = d_j f_i
    return np.einsum("ij...,j...->i...", grad_f, u)


def tendencies(state: State, params: PhysParams, calc: Calculus | None = None) -> Tendencies:
    """All three right-hand sides from one pass over the shared derivatives."""
    calc = calc or get_calculus(state.grid, Scheme.SPECTRAL)
    rho, u, d = state.rho, state.u, state.d
    _require_positive(rho)

    rho_t = -calc.divergence(rho * u)

    grad_u = calc.gradient(u)
    grad_d = calc.gradient(d)
    lap_d = calc.laplacian(d)

    stress = _stress_from_gradient(grad_u, rho, params)
    force = calc.divergence(stress) - calc.gradient(pressure(rho, params))
    force = force - params.nu * calc.divergence(_ericksen_from_gradient(grad_d))
    u_t = force / rho - _advect(grad_u, u)

    grad_d_sq = np.einsum("ij...,ij...->...", grad_d, grad_d)
    d_t = params.lam * (lap_d + grad_d_sq * d) - _advect(grad_d, u)
    return Tendencies(rho_t, u_t, d_t, grad_u, grad_d, lap_d)


def continuity_rhs(state: State, params: PhysParams, calc: Calculus | None = None) -> np.ndarray:
    calc = calc or get_calculus(state.grid, Scheme.SPECTRAL)
    return -calc.divergence(state.rho * state.u)


def velocity_rhs(state: State, params: PhysParams, calc: Calculus | None = None) -> np.ndarray:
    return tendencies(state, params, calc).u_t


def director_rhs(state: State, params: PhysParams, calc: Calculus | None = None) -> np.ndarray:
    calc = calc or get_calculus(state.grid, Scheme.SPECTRAL)
    d = state.d
    grad_d = calc.gradient(d)
    grad_d_sq = np.einsum("ij...,ij...->...", grad_d, grad_d)
    return params.lam * (calc.laplacian(d) + grad_d_sq * d) - _advect(grad_d, state.u)


# -- exponent bookkeeping ----------------------------------------------------


@dataclass(frozen=True)
class RegimeVerdict:
    alpha_gt_1: bool
    gamma_gt_1: bool
    alpha_gt_half_gamma_plus_1: bool
    alpha_ge_gamma_minus_1: bool
    beta: float

    @property
    def admissible(self) -> bool:
        return (
            self.alpha_gt_1
            and self.gamma_gt_1
            and self.alpha_gt_half_gamma_plus_1
            and self.alpha_ge_gamma_minus_1
        )

    def failures(self) -> list[str]:
        labels = {
            "alpha_gt_1": "alpha > 1",
            "gamma_gt_1": "gamma > 1",
            "alpha_gt_half_gamma_plus_1": "alpha > (gamma + 1)/2",
            "alpha_ge_gamma_minus_1": "alpha >= gamma - 1",
        }
        return [text for name, text in labels.items() if not getattr(self, name)]


def regime_check(alpha: float, gamma: float) -> RegimeVerdict:
    """Exponent conditions under which large background density gives global solutions."""
    return RegimeVerdict(
        alpha_gt_1=alpha > 1,
        gamma_gt_1=gamma > 1,
        alpha_gt_half_gamma_plus_1=alpha > (gamma + 1) / 2,
        alpha_ge_gamma_minus_1=alpha >= gamma - 1,
        beta=beta_exponent(gamma) if gamma > 1 else float("nan"),
    )


def beta_exponent(gamma: float) -> float:
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    return max(3.0 - gamma, 0.0)


def theta_exponent(q: float) -> float:
    """Interpolation exponent 2(q-3)/(5q-6), valid for q in (3, 6]."""
    if not 3.0 < q <= 6.0:
        raise ValueError(f"q must lie in (3, 6], got {q}")
    return 2.0 * (q - 3.0) / (5.0 * q - 6.0)
