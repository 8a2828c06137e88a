"""Potential microflows: gradient microrotation fields evolved by the damped Lame flow.

With u = 0 and p = 0 the angular momentum equation reduces to

    j d_t zeta - (alpha+gamma) Lap zeta - (alpha/3+beta-gamma) grad div zeta + 2 kappa zeta = 0,

and a gradient initial field stays a gradient.  Each mode then decays at the
rate (4 pi^2 (4 alpha/3 + beta) |k|^2 + 2 kappa)/j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .params import PhysicalParams
from .random_fields import STREAM_POTENTIAL, hermitian_noise
from .spectral import (
    PARALLEL_TOL,
    TWO_PI,
    Grid,
    SobolevIndex,
    SpectralScalarField,
    SpectralVectorField,
    grad,
    grad_div,
    l2_norm,
    laplacian,
    leray_project,
)


@dataclass(frozen=True)
class MicroflowSpec:
    """Recipe for a conservative initial microrotation.

    Coefficient magnitudes follow (1+|k|^2)^(-(q+spectrum_slope)/2) up to the
    Euclidean cutoff ``mode_cutoff``; ``amplitude`` fixes the L2 norm of the
    result (0 gives the zero field).
    """

    q: float = 3.0
    seed: int = 0
    spectrum_slope: float = 2.0
    mode_cutoff: int = 2
    amplitude: float = 0.1

    def __post_init__(self):
        if self.spectrum_slope <= 1.5:
            raise DomainError("spectrum_slope must exceed 3/2")
        if self.mode_cutoff < 1:
            raise DomainError("mode_cutoff must be at least 1")
        if self.amplitude < 0:
            raise DomainError("amplitude must be nonnegative")
        if self.seed < 0:
            raise DomainError("seed must be nonnegative")

    @property
    def q_index(self) -> SobolevIndex:
        return SobolevIndex(self.q)


def make_conservative_data(spec: MicroflowSpec, grid: Grid) -> SpectralVectorField:
    """Return grad(phi) for a reproducible random mean-zero potential phi."""
    if spec.mode_cutoff > grid.n_modes // 2:
        raise DomainError(f"mode_cutoff {spec.mode_cutoff} exceeds the grid half-width {grid.n_modes // 2}")
    noise = hermitian_noise(grid, spec.seed, STREAM_POTENTIAL, 1, cutoff=spec.mode_cutoff)[0]
    # The gradient adds one power of |k|, so shape phi one order steeper.
    envelope = (1.0 + grid.k2) ** (-0.5 * (spec.q + spec.spectrum_slope + 1.0))
    phi = SpectralScalarField._wrap(grid, noise * envelope)
    zeta = grad(phi)
    norm = l2_norm(zeta)
    if norm == 0.0 or spec.amplitude == 0.0:
        return SpectralVectorField.zeros(grid)
    return zeta * (spec.amplitude / norm)


def check_parallel(zeta0: SpectralVectorField, what: str = "zeta0"):
    if l2_norm(leray_project(zeta0)) > PARALLEL_TOL * l2_norm(zeta0):
        raise DomainError(f"{what} must be a mean-zero gradient field")


class PotentialMicroflow:
    """Closed-form evaluator t -> zeta(t) for a fixed gradient initial field."""

    def __init__(self, zeta0: SpectralVectorField, params: PhysicalParams):
        check_parallel(zeta0)
        self.zeta0 = zeta0
        self.params = params
        alpha, beta, gamma, delta = params.micro_lame
        self.rate = (TWO_PI**2) * (alpha + beta) * zeta0.grid.k2 + delta
        self.is_zero = zeta0.max_abs() == 0.0

    def __call__(self, t: float) -> SpectralVectorField:
        if t < 0:
            raise DomainError("microflow time must be nonnegative")
        if self.is_zero or t == 0:
            return self.zeta0
        return SpectralVectorField._wrap(self.zeta0.grid, np.exp(-self.rate * t) * self.zeta0.coeffs)

    def time_derivative(self, t: float) -> SpectralVectorField:
        return SpectralVectorField._wrap(self.zeta0.grid, -self.rate * self(t).coeffs)


def potential_microflow(zeta0: SpectralVectorField, params: PhysicalParams, t: float) -> SpectralVectorField:
    """zeta(t) obtained by the Lame flow with coefficients params.micro_lame."""
    return PotentialMicroflow(zeta0, params)(t)


def angular_operator(zeta: SpectralVectorField, params: PhysicalParams) -> SpectralVectorField:
    """-(alpha+gamma) Lap zeta - (alpha/3+beta-gamma) grad div zeta + 2 kappa zeta."""
    p = params
    return (2.0 * p.kappa) * zeta - (p.alpha + p.gamma) * laplacian(zeta) - p.grad_div_coefficient * grad_div(zeta)


def microflow_residual(zeta0: SpectralVectorField, params: PhysicalParams, t: float, dt_probe: float,
                       *, exact_derivative: bool = False) -> float:
    """L2 norm of the microflow equation residual at time t.

    The time derivative is a centered difference with spacing ``dt_probe``
    unless ``exact_derivative`` substitutes the analytic one.
    """
    if not (t > dt_probe > 0):
        raise DomainError("microflow_residual needs t > dt_probe > 0")
    flow = PotentialMicroflow(zeta0, params)
    if exact_derivative:
        dzdt = flow.time_derivative(t)
    else:
        dzdt = (flow(t + dt_probe) - flow(t - dt_probe)) / (2.0 * dt_probe)
    return l2_norm(params.j * dzdt + angular_operator(flow(t), params))
