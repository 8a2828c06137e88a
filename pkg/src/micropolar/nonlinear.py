"""Full micropolar system near a potential microflow.

    rho (d_t u + u.grad u) - (eps + kappa/2) Lap u - kappa curl omega + grad p = f
    j (d_t omega + u.grad omega) - (alpha+gamma) Lap omega
        - (alpha/3+beta-gamma) grad div omega + 2 kappa omega - kappa curl u = g
    div u = 0

The pressure is eliminated by the Leray projection and recovered after each
step.  The velocity mean is a constant of motion; it is carried separately so
that boosted (nonzero-mean) data can be integrated as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ConvergenceError, DomainError
from .flows import FlowOperator
from .linear import MAX_ITERS, PICARD_TOL, clean_velocity
from .microflow import PotentialMicroflow, angular_operator
from .params import PhysicalParams
from .spectral import (
    TWO_PI,
    SpectralScalarField,
    SpectralVectorField,
    curl,
    grad,
    grad_potential,
    l2_norm,
    laplacian,
    leray_complement,
    leray_project,
    sobolev_norm,
    transport,
)

ENVELOPES = ("none", "algebraic", "exponential")


class MicropolarState(NamedTuple):
    t: float
    u: SpectralVectorField
    omega: SpectralVectorField
    p: SpectralScalarField


@dataclass(frozen=True)
class ForcingProfile:
    """Forcing t -> (f, g) shaped by a decay envelope.

    ``base`` returns the undamped pair, or is None for zero forcing.  The
    envelope multiplies it by 1, (1+t)^(-mu/2) or exp(-mu t/2), so that
    ||f||^2 + ||g||^2 <= C (1+t)^(-mu) (resp. C exp(-mu t)) whenever the base
    pair has squared norm at most C.
    """

    base: Optional[Callable[[float], tuple]] = None
    decay: str = "none"
    mu: float = 0.0
    C: float = 0.0

    def __post_init__(self):
        if self.decay not in ENVELOPES:
            raise DomainError(f"unknown forcing envelope {self.decay!r}")
        if self.mu < 0 or self.C < 0:
            raise DomainError("forcing envelope needs mu >= 0 and C >= 0")

    @classmethod
    def from_fields(cls, f0, g0, decay: str = "none", mu: float = 0.0, C: float = 1.0) -> "ForcingProfile":
        """Constant-in-shape base pair rescaled so that ||f0||^2 + ||g0||^2 = C."""
        size = l2_norm(f0) ** 2 + l2_norm(g0) ** 2
        if size == 0 or C == 0:
            return cls(None, decay, mu, C)
        c = math.sqrt(C / size)
        f0, g0 = f0 * c, g0 * c
        return cls(lambda t: (f0, g0), decay, mu, C)

    def envelope(self, t: float) -> float:
        if self.decay == "algebraic":
            return (1.0 + t) ** (-0.5 * self.mu)
        if self.decay == "exponential":
            return math.exp(-0.5 * self.mu * t)
        return 1.0

    @property
    def is_zero(self) -> bool:
        return self.base is None

    def __call__(self, t: float, grid=None):
        if self.base is None:
            zero = SpectralVectorField.zeros(grid)
            return zero, zero
        f, g = self.base(t)
        e = self.envelope(t)
        return f * e, g * e


def pressure_from_state(u: SpectralVectorField, f: SpectralVectorField, params: PhysicalParams) -> SpectralScalarField:
    """p with grad p = (I - P)(f - rho u.grad u)."""
    return grad_potential(leray_complement(f - params.rho * transport(u, u)))


@dataclass
class NonlinearTrajectory:
    dt: float
    states: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    contractions: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])


class NonlinearStepper:
    """Picard iteration on the exponential-trapezoid form of one step."""

    def __init__(self, params: PhysicalParams, zeta0: SpectralVectorField, forcing: ForcingProfile,
                 dt: float, *, s: float = 0.0, picard_tol: float = PICARD_TOL, max_iters: int = MAX_ITERS):
        if not dt > 0:
            raise DomainError("dt must be positive")
        if params.gamma <= 0:
            raise DomainError("the nonlinear solver requires gamma > 0")
        self.params = params
        self.grid = zeta0.grid
        self.microflow = PotentialMicroflow(zeta0, params)
        self.forcing = forcing
        self.dt = float(dt)
        self.s = s
        self.picard_tol = picard_tol
        self.max_iters = max_iters
        self.flow_u = FlowOperator.heat(self.grid, params.velocity_diffusivity, dt)
        self.flow_w = FlowOperator(self.grid, "lame", params.micro_lame, dt)

    def forcing_at(self, t):
        return self.forcing(t, self.grid)

    def rhs_u(self, u, omega, f):
        p = self.params
        r = f / p.rho + (p.kappa / p.rho) * curl(omega) - transport(u, u)
        return clean_velocity(r)

    def rhs_w(self, u, omega, g):
        p = self.params
        return g / p.j + (p.kappa / p.j) * curl(u) - transport(u, omega)

    def step(self, u, omega, t: float):
        """Return (u, omega, iterations, contraction) at t + dt; u may carry a constant mean."""
        # Blow-up is detected explicitly below, so numpy's overflow warnings are noise.
        with np.errstate(over="ignore", invalid="ignore"):
            return self._step(u, omega, t)

    def _step(self, u, omega, t: float):
        mean = u.mean().real
        fluct = u.with_mean((0.0, 0.0, 0.0))
        f0, g0 = self.forcing_at(t)
        f1, g1 = self.forcing_at(t + self.dt)
        ru0 = self.rhs_u(u, omega, f0)
        rw0 = self.rhs_w(u, omega, g0)
        new_fluct = self.flow_u.duhamel(fluct, ru0, ru0)
        new_w = self.flow_w.duhamel(omega, rw0, rw0)
        prev, ratio = None, 0.0
        for it in range(1, self.max_iters + 1):
            new_u = new_fluct.with_mean(mean)
            fl_next = self.flow_u.duhamel(fluct, ru0, self.rhs_u(new_u, new_w, f1))
            w_next = self.flow_w.duhamel(omega, rw0, self.rhs_w(new_u, new_w, g1))
            diff = sobolev_norm(fl_next - new_fluct, self.s) + sobolev_norm(w_next - new_w, self.s)
            scale = sobolev_norm(fl_next, self.s) + sobolev_norm(w_next, self.s)
            if not math.isfinite(diff) or not math.isfinite(scale):
                raise ConvergenceError(f"non-finite Picard iterate at t={t:.6g}", t=t, iterations=it,
                                       contraction=ratio)
            if prev:
                ratio = diff / prev
            prev = diff
            new_fluct, new_w = fl_next, w_next
            if diff <= self.picard_tol * scale:
                u_out = clean_velocity(new_fluct).with_mean(mean)
                return u_out, new_w, it, ratio
            if it >= 4 and ratio > 1.0 and diff > scale:
                raise ConvergenceError(f"Picard iteration diverges at t={t:.6g} (contraction ratio {ratio:.3g})",
                                       t=t, iterations=it, contraction=ratio)
        raise ConvergenceError(f"Picard iteration did not converge in {self.max_iters} sweeps at t={t:.6g}",
                               t=t, iterations=self.max_iters, contraction=ratio)

    def pressure(self, u, t):
        f, _ = self.forcing_at(t)
        return pressure_from_state(u, f, self.params)


def solve_micropolar(data, zeta0: SpectralVectorField, forcing: Optional[ForcingProfile], params: PhysicalParams,
                     horizon: float, dt: float, *, s: float = 0.0, picard_tol: float = PICARD_TOL,
                     max_iters: int = MAX_ITERS, store_every: int = 1,
                     callback: Optional[Callable] = None) -> NonlinearTrajectory:
    """Integrate the full system from (u0, omega0).

    ``u0`` must be divergence-free; its mean is conserved.  States are stored
    every ``store_every`` steps (the first and last are always kept) and
    ``callback(state, iterations, contraction)`` sees every step.
    """
    u0, omega0 = data
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    if u0.solenoidal_defect() > 1e-10:
        raise DomainError("u0 must be divergence-free")
    forcing = forcing if forcing is not None else ForcingProfile()
    stepper = NonlinearStepper(params, zeta0, forcing, dt, s=s, picard_tol=picard_tol, max_iters=max_iters)
    n_steps = max(1, int(round(horizon / dt)))
    if abs(n_steps * dt - horizon) > 1e-9 * horizon:
        raise DomainError("horizon must be an integer multiple of dt")
    traj = NonlinearTrajectory(dt)
    u, w = clean_velocity(u0).with_mean(u0.mean().real), omega0
    state = MicropolarState(0.0, u, w, stepper.pressure(u, 0.0))
    traj.states.append(state)
    traj.iterations.append(0)
    traj.contractions.append(0.0)
    if callback:
        callback(state, 0, 0.0)
    for n in range(n_steps):
        t = n * dt
        u, w, iters, ratio = stepper.step(u, w, t)
        state = MicropolarState((n + 1) * dt, u, w, stepper.pressure(u, (n + 1) * dt))
        if callback:
            callback(state, iters, ratio)
        if (n + 1) % store_every == 0 or n + 1 == n_steps:
            traj.states.append(state)
            traj.iterations.append(iters)
            traj.contractions.append(ratio)
    return traj


class QResidual(NamedTuple):
    r_u0: Optional[SpectralVectorField]
    r_w0: Optional[SpectralVectorField]
    r_mom: SpectralVectorField
    r_ang: SpectralVectorField

    def norms(self) -> dict:
        out = {"mom": l2_norm(self.r_mom), "ang": l2_norm(self.r_ang)}
        if self.r_u0 is not None:
            out["u0"] = l2_norm(self.r_u0)
            out["w0"] = l2_norm(self.r_w0)
        return out


def residual_Q(states, params: PhysicalParams, *, data=None, forcing=None) -> QResidual:
    """Residual of the full system at the middle of three equally spaced states.

    ``forcing`` is a callable t -> (f, g) (or a ForcingProfile); ``data`` the
    initial pair (u0, omega0), compared against the first state when it sits
    at t = 0.
    """
    s0, s1, s2 = states
    h1, h2 = s1.t - s0.t, s2.t - s1.t
    if h1 <= 0 or abs(h1 - h2) > 1e-9 * h1:
        raise DomainError("residual_Q needs three equally spaced samples")
    p = params
    grid = s1.u.grid
    if forcing is None:
        f = g = SpectralVectorField.zeros(grid)
    elif isinstance(forcing, ForcingProfile):
        f, g = forcing(s1.t, grid)
    else:
        f, g = forcing(s1.t)
    dudt = (s2.u - s0.u) / (2 * h1)
    dwdt = (s2.omega - s0.omega) / (2 * h1)
    u, w = s1.u, s1.omega
    r_mom = (p.rho * (dudt + transport(u, u)) - (p.eps + 0.5 * p.kappa) * laplacian(u)
             - p.kappa * curl(w) + grad(s1.p) - f)
    r_ang = p.j * (dwdt + transport(u, w)) + angular_operator(w, p) - p.kappa * curl(u) - g
    r_u0 = r_w0 = None
    if data is not None and s0.t == 0.0:
        r_u0 = s0.u - data[0]
        r_w0 = s0.omega - data[1]
    return QResidual(r_u0, r_w0, r_mom, r_ang)


def galilean_phase(grid, b, t) -> np.ndarray:
    return np.exp((1j * TWO_PI * t) * np.tensordot(np.asarray(b, dtype=float), grid.k, axes=1))


def galilean_shift(traj, b, direction: str = "forward"):
    """Change of frame by the constant velocity b.

    forward:  v(t,x) = u(t, x + t b) - b,  chi(t,x) = omega(t, x + t b),  q(t,x) = p(t, x + t b)
    inverse:  the same map with -b.
    Accepts a NonlinearTrajectory or a list of MicropolarState; returns a list.
    """
    if direction not in ("forward", "inverse"):
        raise DomainError("direction must be 'forward' or 'inverse'")
    b = np.asarray(b, dtype=float)
    if direction == "inverse":
        b = -b
    states = traj.states if isinstance(traj, NonlinearTrajectory) else list(traj)
    out = []
    for st in states:
        grid = st.u.grid
        phase = galilean_phase(grid, b, st.t)
        u_arr = st.u.coeffs * phase
        u_arr[:, 0, 0, 0] -= b
        out.append(MicropolarState(
            st.t,
            SpectralVectorField._wrap(grid, u_arr),
            SpectralVectorField._wrap(grid, st.omega.coeffs * phase),
            SpectralScalarField._wrap(grid, st.p.coeffs * phase),
        ))
    return out


def perturbation_energy(u, omega, zeta_t, params: PhysicalParams) -> float:
    """L2 energy rho/2 |u|^2 + j/2 |omega - zeta|^2."""
    return 0.5 * params.rho * l2_norm(u) ** 2 + 0.5 * params.j * l2_norm(omega - zeta_t) ** 2
