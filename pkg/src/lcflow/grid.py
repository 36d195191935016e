"""Periodic structured grids, field rasters and discrete calculus.

Fields are plain float64 numpy arrays whose trailing three axes are the
grid axes.  The leading axes carry components:

    scalar    (N1, N2, N3)
    vector    (3, N1, N2, N3)
    tensor    (3, 3, N1, N2, N3)

A director is a vector raster constrained to the unit sphere.  Derivative
axes are appended after the component axes, so ``gradient(u)[i, j]`` is
``d u_i / d x_j`` and ``divergence`` contracts the last component axis.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import BinaryIO

import numpy as np
import scipy.fft as sfft

SPATIAL_AXES = (-3, -2, -1)

NORM_EXPONENTS = (1.0, 2.0, 3.0, 4.0, 6.0)


class NonFiniteFieldError(ValueError):
    """Raised when a field carries NaN or Inf entries."""

    def __init__(self, what: str, index: tuple[int, ...]):
        self.what = what
        self.index = index
        super().__init__(f"non-finite value in {what} at index {index}")


class Scheme(str, enum.Enum):
    SPECTRAL = "spectral"
    FD2 = "fd2"


class FieldKind(enum.IntEnum):
    SCALAR = 0
    VECTOR = 1
    TENSOR = 2
    DIRECTOR = 3


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the box [0, L1) x [0, L2) x [0, L3)."""

    dims: tuple[int, int, int]
    lengths: tuple[float, float, float] = (2 * math.pi, 2 * math.pi, 2 * math.pi)

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        lengths = tuple(float(x) for x in self.lengths)
        if len(dims) != 3 or len(lengths) != 3:
            raise ValueError("grid needs three dims and three lengths")
        if min(dims) < 4:
            raise ValueError(f"all grid dims must be >= 4, got {dims}")
        if not all(x > 0 and math.isfinite(x) for x in lengths):
            raise ValueError(f"box lengths must be positive, got {lengths}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "lengths", lengths)

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(L / n for L, n in zip(self.lengths, self.dims))

    @property
    def h_min(self) -> float:
        return min(self.spacing)

    @property
    def cell_volume(self) -> float:
        h1, h2, h3 = self.spacing
        return h1 * h2 * h3

    @property
    def volume(self) -> float:
        L1, L2, L3 = self.lengths
        return L1 * L2 * L3

    @property
    def n_nodes(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        axes = [np.arange(n) * h for n, h in zip(self.dims, self.spacing)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def zeros(self, kind: FieldKind = FieldKind.SCALAR) -> np.ndarray:
        return np.zeros(component_shape(kind) + self.dims)


def component_shape(kind: FieldKind) -> tuple[int, ...]:
    return {
        FieldKind.SCALAR: (),
        FieldKind.VECTOR: (3,),
        FieldKind.DIRECTOR: (3,),
        FieldKind.TENSOR: (3, 3),
    }[FieldKind(kind)]


def kind_of(data: np.ndarray) -> FieldKind:
    lead = data.shape[:-3]
    if lead == ():
        return FieldKind.SCALAR
    if lead == (3,):
        return FieldKind.VECTOR
    if lead == (3, 3):
        return FieldKind.TENSOR
    raise ValueError(f"unsupported component shape {lead}")


def check_finite(data: np.ndarray, what: str = "field") -> None:
    if not np.isfinite(data).all():
        bad = np.argwhere(~np.isfinite(data))[0]
        raise NonFiniteFieldError(what, tuple(int(i) for i in bad))


def total(values: np.ndarray) -> float:
    """Deterministic sum of all entries.

    numpy reduces a contiguous 1-D float64 buffer with a fixed pairwise
    blocking, so the association order depends only on the length.
    """
    return float(np.add.reduce(np.ascontiguousarray(values, dtype=np.float64).ravel()))


def magnitude(data: np.ndarray) -> np.ndarray:
    """Pointwise Euclidean (vector) or Frobenius (tensor) magnitude."""
    if data.ndim == 3:
        return np.abs(data)
    flat = data.reshape((-1,) + data.shape[-3:])
    return np.sqrt(np.einsum("c...,c...->...", flat, flat))


def _check_exponent(p) -> float:
    if p in ("inf", math.inf, np.inf):
        return math.inf
    p = float(p)
    if p in NORM_EXPONENTS or 3.0 < p < 6.0:
        return p
    raise ValueError(f"unsupported norm exponent {p!r}; use 1, 2, 3, 4, 6, q in (3, 6) or inf")


def lp_norm(data: np.ndarray, grid: Grid, p=2) -> float:
    """Rectangle-rule L^p norm; p = inf gives the nodal max."""
    p = _check_exponent(p)
    mag = magnitude(data)
    if math.isinf(p):
        return float(mag.max())
    if p == 2.0:
        integrand = mag * mag
    elif p == 1.0:
        integrand = mag
    else:
        integrand = mag**p
    return (total(integrand) * grid.cell_volume) ** (1.0 / p)


def inner(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    """L^2 inner product summed over components."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return total(a * b) * grid.cell_volume


def dot_field(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise contraction over the first component axis."""
    if a.shape != b.shape:
        raise ValueError(f"grid or kind mismatch: {a.shape} vs {b.shape}")
    return np.einsum("i...,i...->...", a, b)


def outer_contract(grad_d: np.ndarray) -> np.ndarray:
    """(grad d (.) grad d)_ij = sum_k d_i d_k * d_j d_k for grad_d[k, j] = d_j d_k."""
    return np.einsum("ki...,kj...->ij...", grad_d, grad_d)


def transpose(t: np.ndarray) -> np.ndarray:
    return np.swapaxes(t, 0, 1)


def trace(t: np.ndarray) -> np.ndarray:
    return t[0, 0] + t[1, 1] + t[2, 2]


def identity_tensor(s: np.ndarray) -> np.ndarray:
    """The tensor field s * I."""
    out = np.zeros((3, 3) + s.shape)
    for i in range(3):
        out[i, i] = s
    return out


def project_to_sphere(d: np.ndarray) -> np.ndarray:
    return d / np.sqrt(np.einsum("i...,i...->...", d, d))


def unit_defect(d: np.ndarray) -> float:
    return float(np.abs(np.sqrt(np.einsum("i...,i...->...", d, d)) - 1.0).max())


@dataclass(frozen=True)
class Calculus:
    """Periodic derivative operators for one grid and one scheme.

    Spectral first derivatives drop the Nyquist mode; the spectral Laplacian
    keeps it.  ``dealias`` applies the 2/3 rule (spectral) or is the
    identity (finite differences).
    """

    grid: Grid
    scheme: Scheme = Scheme.SPECTRAL
    check_inputs: bool = True

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @cached_property
    def _wavenumbers(self):
        n1, n2, n3 = self.grid.dims
        L1, L2, L3 = self.grid.lengths
        k1 = 2 * np.pi * sfft.fftfreq(n1, L1 / n1)
        k2 = 2 * np.pi * sfft.fftfreq(n2, L2 / n2)
        k3 = 2 * np.pi * sfft.rfftfreq(n3, L3 / n3)
        ksq = k1[:, None, None] ** 2 + k2[None, :, None] ** 2 + k3[None, None, :] ** 2
        # Nyquist modes carry no odd derivative on a real raster
        k1d, k2d, k3d = k1.copy(), k2.copy(), k3.copy()
        if n1 % 2 == 0:
            k1d[n1 // 2] = 0.0
        if n2 % 2 == 0:
            k2d[n2 // 2] = 0.0
        if n3 % 2 == 0:
            k3d[-1] = 0.0
        ik = (
            1j * k1d[:, None, None],
            1j * k2d[None, :, None],
            1j * k3d[None, None, :],
        )
        m1 = sfft.fftfreq(n1, 1.0 / n1)
        m2 = sfft.fftfreq(n2, 1.0 / n2)
        m3 = sfft.rfftfreq(n3, 1.0 / n3)
        keep = (
            (np.abs(m1)[:, None, None] < n1 / 3.0)
            & (np.abs(m2)[None, :, None] < n2 / 3.0)
            & (np.abs(m3)[None, None, :] < n3 / 3.0)
        )
        return ik, -ksq, keep

    def _fft(self, a):
        return sfft.rfftn(a, axes=SPATIAL_AXES)

    def _ifft(self, a):
        return sfft.irfftn(a, s=self.grid.dims, axes=SPATIAL_AXES)

    def _check(self, a, what):
        if a.shape[-3:] != self.grid.dims:
            raise ValueError(f"{what}: raster shape {a.shape[-3:]} does not match grid {self.grid.dims}")
        if self.check_inputs:
            check_finite(a, what)

    @staticmethod
    def _constant_mask(a: np.ndarray) -> np.ndarray:
        flat = a.reshape(a.shape[:-3] + (-1,))
        return flat.min(axis=-1) == flat.max(axis=-1)

    # -- first derivatives -------------------------------------------------

    def partial(self, a: np.ndarray, axis: int) -> np.ndarray:
        """Derivative along grid axis 0, 1 or 2 of every component."""
        self._check(a, "partial")
        return self._partials(a, (axis,))[0]

    def _partials(self, a, axes):
        if self.scheme is Scheme.FD2:
            out = []
            for ax in axes:
                h = self.grid.spacing[ax]
                sp = a.ndim - 3 + ax
                out.append((np.roll(a, -1, axis=sp) - np.roll(a, 1, axis=sp)) / (2.0 * h))
            return out
        const = self._constant_mask(a)
        if const.all():
            return [np.zeros_like(a) for _ in axes]
        ik, _, _ = self._wavenumbers
        fa = self._fft(a)
        out = []
        for ax in axes:
            da = self._ifft(fa * ik[ax])
            if const.any():
                da[const] = 0.0
            out.append(da)
        return out

    def gradient(self, a: np.ndarray) -> np.ndarray:
        """Append a derivative axis: result[..., j, :, :, :] = d a / d x_j."""
        self._check(a, "gradient")
        return np.stack(self._partials(a, (0, 1, 2)), axis=a.ndim - 3)

    def divergence(self, a: np.ndarray) -> np.ndarray:
        """Contract the last component axis with the derivative."""
        self._check(a, "divergence")
        if a.ndim < 4 or a.shape[-4] != 3:
            raise ValueError(f"divergence needs a trailing component axis of length 3, got {a.shape}")
        if self.scheme is Scheme.FD2:
            out = 0.0
            for j in range(3):
                out = out + self._partials(a[..., j, :, :, :], (j,))[0]
            return out
        if self._constant_mask(a).all():
            return np.zeros_like(a[..., 0, :, :, :])
        ik, _, _ = self._wavenumbers
        fa = self._fft(a)
        acc = fa[..., 0, :, :, :] * ik[0] + fa[..., 1, :, :, :] * ik[1] + fa[..., 2, :, :, :] * ik[2]
        out = self._ifft(acc)
        const = self._constant_mask(a).all(axis=-1)
        if np.ndim(const) == 0:
            if const:
                out[...] = 0.0
        elif const.any():
            out[const] = 0.0
        return out

    def curl(self, v: np.ndarray) -> np.ndarray:
        g = self.gradient(v)
        return np.stack([g[2, 1] - g[1, 2], g[0, 2] - g[2, 0], g[1, 0] - g[0, 1]])

    def laplacian(self, a: np.ndarray) -> np.ndarray:
        self._check(a, "laplacian")
        if self.scheme is Scheme.FD2:
            out = np.zeros_like(a)
            for ax, h in enumerate(self.grid.spacing):
                sp = a.ndim - 3 + ax
                out += (np.roll(a, -1, axis=sp) - 2.0 * a + np.roll(a, 1, axis=sp)) / (h * h)
            return out
        const = self._constant_mask(a)
        if np.all(const):
            return np.zeros_like(a)
        _, neg_ksq, _ = self._wavenumbers
        out = self._ifft(self._fft(a) * neg_ksq)
        if np.ndim(const) == 0:
            if const:
                out[...] = 0.0
        elif const.any():
            out[const] = 0.0
        return out

    def hessian(self, a: np.ndarray) -> np.ndarray:
        return self.gradient(self.gradient(a))

    def dealias(self, a: np.ndarray) -> np.ndarray:
        if self.scheme is Scheme.FD2:
            return a
        if np.all(self._constant_mask(a)):
            return a.copy()
        _, _, keep = self._wavenumbers
        return self._ifft(self._fft(a) * keep)


def deformation_tensor(grad_u: np.ndarray) -> np.ndarray:
    """Symmetric part of the velocity gradient, (grad u + grad u^T) / 2."""
    return 0.5 * (grad_u + transpose(grad_u))


# -- snapshot format -------------------------------------------------------

SNAPSHOT_MAGIC = b"ELF1"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sII3Q3d")


@dataclass(frozen=True)
class Snapshot:
    grid: Grid
    kind: FieldKind
    data: np.ndarray


def write_snapshot(fh: BinaryIO, data: np.ndarray, grid: Grid, kind: FieldKind | None = None) -> None:
    kind = kind_of(data) if kind is None else FieldKind(kind)
    if data.shape != component_shape(kind) + grid.dims:
        raise ValueError(f"data shape {data.shape} inconsistent with {kind.name} on {grid.dims}")
    fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, int(kind), *grid.dims, *grid.lengths))
    ncomp = data.ndim - 3
    # component-fastest node order
    nodes_first = np.moveaxis(data, tuple(range(ncomp)), tuple(range(3, 3 + ncomp)))
    fh.write(np.ascontiguousarray(nodes_first, dtype="<f8").tobytes())


def read_snapshot(fh: BinaryIO) -> Snapshot:
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ValueError("truncated snapshot header")
    magic, version, kind, n1, n2, n3, L1, L2, L3 = _HEADER.unpack(head)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    grid = Grid((n1, n2, n3), (L1, L2, L3))
    kind = FieldKind(kind)
    comp = component_shape(kind)
    count = int(np.prod(comp, dtype=np.int64)) * grid.n_nodes
    raw = fh.read(8 * count)
    if len(raw) != 8 * count:
        raise ValueError("truncated snapshot data")
    nodes_first = np.frombuffer(raw, dtype="<f8").reshape(grid.dims + comp)
    ncomp = len(comp)
    data = np.moveaxis(nodes_first, tuple(range(3, 3 + ncomp)), tuple(range(ncomp))).astype(np.float64)
    return Snapshot(grid, kind, np.ascontiguousarray(data))


def save_snapshot(path: str | Path, data: np.ndarray, grid: Grid, kind: FieldKind | None = None) -> None:
    with open(path, "wb") as fh:
        write_snapshot(fh, data, grid, kind)


def load_snapshot(path: str | Path) -> Snapshot:
    with open(path, "rb") as fh:
        return read_snapshot(fh)


@lru_cache(maxsize=32)
def get_calculus(grid: Grid, scheme: Scheme | str = Scheme.SPECTRAL) -> Calculus:
    """Shared operator instance per (grid, scheme); wavenumber tables are cached on it."""
    return Calculus(grid, Scheme(scheme))
