"""Reproducible pseudo-random spectra.

Each mode draws from a Philox stream whose key is (seed, stream) and whose
counter encodes the wavenumber, so the value at a given k does not depend on
the grid size, iteration order or platform.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .spectral import (
    Grid,
    SpectralScalarField,
    SpectralVectorField,
    l2_norm,
    leray_complement,
    leray_project,
)

_OFFSET = 1 << 20

# Stream identifiers keep independent quantities decorrelated for one seed.
STREAM_POTENTIAL = 1
STREAM_VELOCITY = 2
STREAM_MICROROTATION = 3
STREAM_FORCE_U = 4
STREAM_FORCE_W = 5


def _mode_draws(seed: int, stream: int, k, count: int) -> np.ndarray:
    enc = ((int(k[0]) + _OFFSET) << 42) | ((int(k[1]) + _OFFSET) << 21) | (int(k[2]) + _OFFSET)
    key = (int(stream) << 64) | (int(seed) & 0xFFFFFFFFFFFFFFFF)
    counter = np.array([0, enc, 0, 0], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key, counter=counter))
    return gen.standard_normal(count)


def hermitian_noise(grid: Grid, seed: int, stream: int, n_components: int, *,
                    cutoff: float | None = None, include_mean: bool = False) -> np.ndarray:
    """Complex Gaussian coefficients with conj(c(k)) = c(-k), supported on |k| <= cutoff."""
    if seed < 0:
        raise DomainError("seed must be nonnegative")
    kx, ky, kz = grid.k_int
    canon = (kx > 0) | ((kx == 0) & (ky > 0)) | ((kx == 0) & (ky == 0) & (kz > 0))
    support = grid.retained & canon
    if cutoff is not None:
        support &= grid.k2 <= cutoff**2 + 1e-9
    out = np.zeros((n_components,) + grid.shape, dtype=np.complex128)
    for a, b, c in np.argwhere(support):
        k = (kx[a, b, c], ky[a, b, c], kz[a, b, c])
        d = _mode_draws(seed, stream, k, 2 * n_components)
        out[:, a, b, c] = (d[0::2] + 1j * d[1::2]) / np.sqrt(2.0)
    out = out + np.conj(grid.reflect(out))
    if include_mean:
        out[:, 0, 0, 0] = _mode_draws(seed, stream, (0, 0, 0), n_components)
    return out


def spectral_envelope(grid: Grid, exponent: float) -> np.ndarray:
    """Magnitude profile (1+|k|^2)^(-exponent/2)."""
    return (1.0 + grid.k2) ** (-0.5 * exponent)


def random_vector_field(grid: Grid, seed: int, stream: int = 0, *, decay: float = 0.0,
                        cutoff: float | None = None, kind: str = "general",
                        include_mean: bool = False, l2: float | None = None) -> SpectralVectorField:
    """Random real vector field with coefficients shaped by (1+|k|^2)^(-decay/2).

    ``kind`` is one of ``general``, ``solenoidal`` or ``gradient``; the latter
    two are mean-zero.  When ``l2`` is given the result is rescaled to that
    L2 norm.
    """
    noise = hermitian_noise(grid, seed, stream, 3, cutoff=cutoff,
                            include_mean=include_mean and kind == "general")
    f = SpectralVectorField._wrap(grid, noise * spectral_envelope(grid, decay))
    if kind == "solenoidal":
        f = leray_project(f)
    elif kind == "gradient":
        f = leray_complement(f)
    elif kind != "general":
        raise DomainError(f"unknown field kind {kind!r}")
    if l2 is not None:
        norm = l2_norm(f)
        f = f * (l2 / norm) if norm > 0 else f
    return f


def random_scalar_field(grid: Grid, seed: int, stream: int = 0, *, decay: float = 0.0,
                        cutoff: float | None = None, include_mean: bool = False) -> SpectralScalarField:
    noise = hermitian_noise(grid, seed, stream, 1, cutoff=cutoff, include_mean=include_mean)[0]
    return SpectralScalarField._wrap(grid, noise * spectral_envelope(grid, decay))
