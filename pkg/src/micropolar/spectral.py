"""Truncated Fourier representation of periodic fields on the unit torus.

A field is stored by its full complex spectrum, so both ``k`` and ``-k`` have a
slot.  The convention is

    f(x) = sum_k f_hat(k) exp(2 pi i k.x),

with the wavenumber lattice laid out in FFT order along each axis.  The
Nyquist planes (any component equal to N/2) have no conjugate partner inside
the lattice, so they are held at zero: every operator here is an exact
per-mode multiplier that keeps them zero, and :func:`analyze` discards them.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Union

import numpy as np
import scipy.fft

from .errors import DomainError, GridMismatchError

TWO_PI = 2.0 * math.pi
PARALLEL_TOL = 1e-10


def fft_workers() -> int:
    """Worker count for transforms, capped by the MPS_THREADS environment variable."""
    raw = os.environ.get("MPS_THREADS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        return Fraction(value).limit_denominator(1000)
    return Fraction(value)


@dataclass(frozen=True)
class Grid:
    """Spectral grid with ``n_modes`` modes per dimension.

    Attributes:
        n_modes: Even integer N >= 4.
        dealias_fraction: Fraction of the half-width kept by the product
            dealiasing mask; 2/3 gives the usual two-thirds rule.
    """

    n_modes: int
    dealias_fraction: Fraction = field(default=Fraction(2, 3))

    def __post_init__(self):
        n = self.n_modes
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
            raise DomainError(f"n_modes must be an integer, got {n!r}")
        if n < 4 or n % 2:
            raise DomainError(f"n_modes must be even and >= 4, got {n}")
        object.__setattr__(self, "n_modes", int(n))
        frac = _as_fraction(self.dealias_fraction)
        if not (0 < frac <= 1):
            raise DomainError(f"dealias_fraction must lie in (0, 1], got {frac}")
        object.__setattr__(self, "dealias_fraction", frac)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_modes,) * 3

    @cached_property
    def k_int(self) -> np.ndarray:
        """Integer wavenumbers, shape (3, N, N, N)."""
        n = self.n_modes
        axis = np.fft.fftfreq(n, 1.0 / n).round().astype(np.int64)
        k = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"))
        k.setflags(write=False)
        return k

    @cached_property
    def k(self) -> np.ndarray:
        k = self.k_int.astype(float)
        k.setflags(write=False)
        return k

    @cached_property
    def k2(self) -> np.ndarray:
        k2 = np.sum(self.k**2, axis=0)
        k2.setflags(write=False)
        return k2

    @cached_property
    def k2_safe(self) -> np.ndarray:
        """|k|^2 with the zero mode replaced by 1, for divisions."""
        k2 = self.k2.copy()
        k2[0, 0, 0] = 1.0
        k2.setflags(write=False)
        return k2

    @cached_property
    def retained(self) -> np.ndarray:
        """Modes with a conjugate partner on the lattice (all |k_i| < N/2)."""
        mask = np.all(np.abs(self.k_int) < self.n_modes // 2, axis=0)
        mask.setflags(write=False)
        return mask

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        cutoff = float(self.dealias_fraction) * self.n_modes / 2
        mask = np.all(np.abs(self.k) < cutoff, axis=0) & self.retained
        mask.setflags(write=False)
        return mask

    def reflect(self, arr: np.ndarray) -> np.ndarray:
        """Return ``arr`` evaluated at ``-k`` along the last three axes."""
        axes = (-3, -2, -1)
        return np.roll(np.flip(arr, axes), 1, axes)


@dataclass(frozen=True)
class SobolevIndex:
    """Regularity index ``s`` with the homogeneous / inhomogeneous weight choice."""

    s: float
    homogeneous: bool = False

    def __post_init__(self):
        if not math.isfinite(self.s):
            raise DomainError(f"Sobolev index must be finite, got {self.s}")

    def weights(self, grid: Grid) -> np.ndarray:
        if self.homogeneous:
            w = np.zeros(grid.shape)
            nz = grid.k2 > 0
            w[nz] = grid.k2[nz] ** self.s
            return w
        return (1.0 + grid.k2) ** self.s


IndexLike = Union[SobolevIndex, float, int]


def _index(index: IndexLike, homogeneous: bool = False) -> SobolevIndex:
    if isinstance(index, SobolevIndex):
        return index
    return SobolevIndex(float(index), homogeneous)


class _Field:
    """Immutable spectral coefficients on a grid."""

    __slots__ = ("grid", "coeffs")
    _lead: tuple = ()

    def __init__(self, grid: Grid, coeffs):
        arr = np.array(coeffs, dtype=np.complex128)
        expected = self._lead + grid.shape
        if arr.shape != expected:
            raise GridMismatchError(f"coefficient shape {arr.shape} does not match grid {expected}")
        outside = arr[..., ~grid.retained]
        if outside.size and np.max(np.abs(outside)) > 0:
            raise DomainError("Nyquist-plane coefficients must be zero")
        arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def _wrap(cls, grid: Grid, arr: np.ndarray):
        # Internal constructor for arrays known to be well-formed; takes ownership.
        obj = cls.__new__(cls)
        arr.setflags(write=False)
        object.__setattr__(obj, "grid", grid)
        object.__setattr__(obj, "coeffs", arr)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    @classmethod
    def zeros(cls, grid: Grid):
        return cls._wrap(grid, np.zeros(cls._lead + grid.shape, dtype=np.complex128))

    def _check(self, other):
        if type(other) is not type(self):
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return self._wrap(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return self._wrap(self.grid, self.coeffs - other.coeffs)

    def __neg__(self):
        return self._wrap(self.grid, -self.coeffs)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return self._wrap(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return self._wrap(self.grid, self.coeffs / scalar)

    def __eq__(self, other):
        return type(other) is type(self) and other.grid == self.grid and np.array_equal(self.coeffs, other.coeffs)

    __hash__ = None

    def __repr__(self):
        return f"{type(self).__name__}(N={self.grid.n_modes}, L2={l2_norm(self):.6g})"

    def mean(self):
        return self.coeffs[..., 0, 0, 0].copy()

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def hermitian_defect(self) -> float:
        """Relative violation of conj(f(k)) = f(-k)."""
        scale = self.max_abs()
        if scale == 0.0:
            return 0.0
        diff = np.conj(self.coeffs) - self.grid.reflect(self.coeffs)
        return float(np.max(np.abs(diff)) / scale)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))


class SpectralVectorField(_Field):
    """Spectrum of an R^3-valued field, coefficients of shape (3, N, N, N)."""

    __slots__ = ()
    _lead = (3,)

    def with_mean(self, b):
        arr = self.coeffs.copy()
        arr[:, 0, 0, 0] = np.asarray(b, dtype=float)
        return self._wrap(self.grid, arr)

    def solenoidal_defect(self) -> float:
        """max over k != 0 of |k.f(k)|/|k|, relative to the largest coefficient."""
        scale = self.max_abs()
        if scale == 0.0:
            return 0.0
        kf = np.abs(np.sum(self.grid.k * self.coeffs, axis=0)) / np.sqrt(self.grid.k2_safe)
        return float(np.max(kf) / scale)

    def curl_defect(self) -> float:
        """max over k of |k x f(k)|, relative to the largest coefficient."""
        scale = self.max_abs()
        if scale == 0.0:
            return 0.0
        kx = np.cross(self.grid.k, self.coeffs, axis=0)
        return float(np.max(np.abs(kx)) / scale)


class SpectralScalarField(_Field):
    """Spectrum of a real scalar field, coefficients of shape (N, N, N)."""

    __slots__ = ()
    _lead = ()


Field = Union[SpectralVectorField, SpectralScalarField]


def _same_grid(*fields):
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError("fields live on different grids")
    return grid


# --- transforms -------------------------------------------------------------

def _to_physical(arr: np.ndarray) -> np.ndarray:
    n3 = arr.shape[-1] ** 3
    return scipy.fft.ifftn(arr, axes=(-3, -2, -1), workers=fft_workers()) * n3


def _to_spectral(arr: np.ndarray, grid: Grid) -> np.ndarray:
    out = scipy.fft.fftn(arr, axes=(-3, -2, -1), workers=fft_workers()) / grid.n_modes**3
    out[..., ~grid.retained] = 0.0
    return out


def synthesize(f: Field, *, keep_imag: bool = False) -> np.ndarray:
    """Sample ``f`` on the uniform N^3 grid x = (i, j, l)/N.

    The imaginary part is dropped unless ``keep_imag`` is set; for Hermitian
    input it is round-off.
    """
    samples = _to_physical(f.coeffs)
    return samples if keep_imag else samples.real.copy()


def analyze(samples, grid: Grid) -> Field:
    """Inverse of :func:`synthesize`; returns a vector or scalar field by shape."""
    arr = np.asarray(samples)
    if arr.shape == (3,) + grid.shape:
        return SpectralVectorField._wrap(grid, _to_spectral(arr, grid))
    if arr.shape == grid.shape:
        return SpectralScalarField._wrap(grid, _to_spectral(arr, grid))
    raise GridMismatchError(f"sample array of shape {arr.shape} does not fit grid N={grid.n_modes}")


def hermitian_part(f: Field) -> Field:
    """Project onto Hermitian-symmetric spectra: (f(k) + conj f(-k))/2."""
    arr = 0.5 * (f.coeffs + np.conj(f.grid.reflect(f.coeffs)))
    return type(f)._wrap(f.grid, arr)


# --- norms ------------------------------------------------------------------

def _check_mean_zero(f: Field):
    mean = np.abs(f.coeffs[..., 0, 0, 0])
    scale = max(f.max_abs(), np.finfo(float).tiny)
    if np.max(mean) > 1e-13 * scale:
        raise DomainError("homogeneous Sobolev norm requires a mean-zero field")


def sobolev_inner(f: Field, g: Field, index: IndexLike = 0.0, homogeneous: bool = False) -> float:
    """Real inner product sum_k w(k)^s Re(conj f(k) . g(k))."""
    _same_grid(f, g)
    idx = _index(index, homogeneous)
    if idx.homogeneous:
        _check_mean_zero(f)
        _check_mean_zero(g)
    w = idx.weights(f.grid)
    prod = np.real(np.conj(f.coeffs) * g.coeffs)
    if prod.ndim == 4:
        prod = prod.sum(axis=0)
    return float(np.sum(w * prod))


def sobolev_norm(f: Field, index: IndexLike = 0.0, homogeneous: bool = False) -> float:
    """(sum_k w(k)^s |f(k)|^2)^(1/2) with w = 1+|k|^2, or |k|^2 when homogeneous."""
    idx = _index(index, homogeneous)
    if idx.homogeneous:
        _check_mean_zero(f)
    w = idx.weights(f.grid)
    mag = np.abs(f.coeffs) ** 2
    if mag.ndim == 4:
        mag = mag.sum(axis=0)
    return math.sqrt(float(np.sum(w * mag)))


def l2_norm(f: Field) -> float:
    return sobolev_norm(f, 0.0)


# --- multipliers ------------------------------------------------------------

def apply_Js(f: Field, s: float) -> Field:
    """Bessel potential J^s: multiply mode k by (1+|k|^2)^(s/2)."""
    if s == 0:
        return f
    return type(f)._wrap(f.grid, f.coeffs * (1.0 + f.grid.k2) ** (0.5 * s))


def _k_dot(f: SpectralVectorField) -> np.ndarray:
    return np.sum(f.grid.k * f.coeffs, axis=0)


def leray_project(f: SpectralVectorField) -> SpectralVectorField:
    """Per-mode projection I - k k^T/|k|^2; the mean passes through."""
    grid = f.grid
    par = grid.k * (_k_dot(f) / grid.k2_safe)
    return SpectralVectorField._wrap(grid, f.coeffs - par)


def leray_complement(f: SpectralVectorField) -> SpectralVectorField:
    """Gradient part k (k.f)/|k|^2; zero at k = 0."""
    grid = f.grid
    return SpectralVectorField._wrap(grid, grid.k * (_k_dot(f) / grid.k2_safe))


def grad(phi: SpectralScalarField) -> SpectralVectorField:
    return SpectralVectorField._wrap(phi.grid, (1j * TWO_PI) * phi.grid.k * phi.coeffs)


def div(f: SpectralVectorField) -> SpectralScalarField:
    return SpectralScalarField._wrap(f.grid, (1j * TWO_PI) * _k_dot(f))


def curl(f: SpectralVectorField) -> SpectralVectorField:
    return SpectralVectorField._wrap(f.grid, (1j * TWO_PI) * np.cross(f.grid.k, f.coeffs, axis=0))


def laplacian(f: Field) -> Field:
    return type(f)._wrap(f.grid, (-(TWO_PI**2)) * f.grid.k2 * f.coeffs)


def grad_div(f: SpectralVectorField) -> SpectralVectorField:
    return grad(div(f))


def grad_potential(f: SpectralVectorField) -> SpectralScalarField:
    """Scalar potential of a mean-zero gradient field: (k.f(k)) / (2 pi i |k|^2).

    Raises:
        DomainError: if the field carries solenoidal content or a mean above
            1e-10 times its L2 norm.
    """
    grid = f.grid
    sol = leray_project(f)
    if l2_norm(sol) > PARALLEL_TOL * l2_norm(f):
        raise DomainError("grad_potential expects a mean-zero gradient field; input has solenoidal content")
    phi = _k_dot(f) / (1j * TWO_PI * grid.k2_safe)
    phi[0, 0, 0] = 0.0
    return SpectralScalarField._wrap(grid, phi)


def advect(v: SpectralVectorField, w: SpectralVectorField) -> SpectralVectorField:
    """Dealiased pseudo-spectral v . grad(w).

    Both factors are truncated to the dealiasing mask, multiplied on the
    physical grid, and the product is truncated again.
    """
    grid = _same_grid(v, w)
    mask = grid.dealias_mask
    vp = _to_physical(v.coeffs * mask).real
    dw = (1j * TWO_PI) * grid.k[None, :] * (w.coeffs * mask)[:, None]
    dwp = _to_physical(dw).real
    prod = np.einsum("j...,ij...->i...", vp, dwp)
    out = _to_spectral(prod, grid)
    out *= mask
    return SpectralVectorField._wrap(grid, out)


def transport(v: SpectralVectorField, w: SpectralVectorField) -> SpectralVectorField:
    """v . grad(w) with the mean of v applied as an exact multiplier on every mode.

    Only the fluctuating part of v enters the dealiased product, so uniform
    translation is not truncated by the dealiasing mask.
    """
    grid = _same_grid(v, w)
    b = v.coeffs[:, 0, 0, 0].real
    if not np.any(b):
        return advect(v, w)
    fluct = v.coeffs.copy()
    fluct[:, 0, 0, 0] = 0.0
    out = advect(SpectralVectorField._wrap(grid, fluct), w).coeffs.copy()
    out += (1j * TWO_PI) * np.tensordot(b, grid.k, axes=1) * w.coeffs
    return SpectralVectorField._wrap(grid, out)


def mode_field(grid: Grid, k, vector, *, scalar: bool = False) -> Field:
    """Real single-mode field: coefficient ``vector`` at k and its conjugate at -k."""
    n = grid.n_modes
    idx = tuple(int(c) % n for c in k)
    neg = tuple((-int(c)) % n for c in k)
    if scalar:
        c = complex(vector)
        arr = np.zeros(grid.shape, dtype=np.complex128)
        if idx == neg:
            arr[idx] = c.real
        else:
            arr[idx] = c
            arr[neg] = np.conj(c)
        return SpectralScalarField(grid, arr)
    vec = np.asarray(vector, dtype=np.complex128)
    arr = np.zeros((3,) + grid.shape, dtype=np.complex128)
    if idx == neg:
        arr[(slice(None),) + idx] = vec.real
    else:
        arr[(slice(None),) + idx] = vec
        arr[(slice(None),) + neg] = np.conj(vec)
    return SpectralVectorField(grid, arr)
