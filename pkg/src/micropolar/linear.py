"""Linearization around a potential microflow.

The unknowns (u, omega) solve

    rho d_t u - (eps + kappa/2) Lap u - kappa curl omega = f
    j d_t omega + j u.grad(zeta) - (alpha+gamma) Lap omega
        - (alpha/3+beta-gamma) grad div omega + 2 kappa omega - kappa curl u = g

with zeta(t) the potential microflow.  Each step solves the mild (Duhamel)
form by Picard iteration: the velocity is carried by the heat flow with
diffusivity (2 eps + kappa)/(2 rho), the microrotation by the damped Lame
flow, and the couplings are refreshed every sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ConvergenceError, DomainError
from .flows import FlowOperator
from .microflow import PotentialMicroflow
from .params import PhysicalParams
from .spectral import (
    TWO_PI,
    SobolevIndex,
    SpectralVectorField,
    _to_physical,
    _to_spectral,
    advect,
    apply_Js,
    curl,
    div,
    l2_norm,
    leray_project,
    sobolev_inner,
    sobolev_norm,
)

PICARD_TOL = 1e-10
MAX_ITERS = 50
CONTRACTION_LIMIT = 0.5
SOLENOIDAL_TOL = 1e-10

Forcing = Callable[[float], tuple]


def clean_velocity(u: SpectralVectorField) -> SpectralVectorField:
    """Leray-project and zero the mean, removing round-off drift."""
    arr = leray_project(u).coeffs.copy()
    arr[:, 0, 0, 0] = 0.0
    return SpectralVectorField._wrap(u.grid, arr)


def check_velocity(u: SpectralVectorField, what: str = "u0"):
    if np.max(np.abs(u.mean())) > SOLENOIDAL_TOL * max(u.max_abs(), 1e-300):
        raise DomainError(f"{what} must be mean-zero")
    if u.solenoidal_defect() > SOLENOIDAL_TOL:
        raise DomainError(f"{what} must be divergence-free")


@dataclass
class LinearProblem:
    """Data of one linearized run.

    ``forcing`` maps t to a pair (f, g) or is None for the unforced problem;
    f must be mean-zero and solenoidal.
    """

    params: PhysicalParams
    zeta0: SpectralVectorField
    u0: SpectralVectorField
    omega0: SpectralVectorField
    forcing: Optional[Forcing] = None
    s: float = 0.0
    microflow: PotentialMicroflow = field(init=False, repr=False)

    def __post_init__(self):
        grid = self.zeta0.grid
        if self.u0.grid != grid or self.omega0.grid != grid:
            raise DomainError("problem fields must share one grid")
        check_velocity(self.u0)
        self.microflow = PotentialMicroflow(self.zeta0, self.params)

    @property
    def grid(self):
        return self.zeta0.grid

    def forcing_at(self, t: float):
        if self.forcing is None:
            zero = SpectralVectorField.zeros(self.grid)
            return zero, zero
        f, g = self.forcing(t)
        return f, g


class EnergyTriple(NamedTuple):
    E: float
    D: float
    F: float
    t: float = 0.0


class CoercivityConstants(NamedTuple):
    C0: float
    C1: float


def coercivity_constants(params: PhysicalParams) -> CoercivityConstants:
    p = params
    pi2 = math.pi**2
    c0 = min(pi2 * p.eps / p.rho, p.eps * p.kappa / (2 * p.j * (p.eps + p.kappa)))
    c1 = min(pi2 * p.eps / 2, p.eps * p.kappa / (4 * (p.eps + p.kappa)), 2 * p.alpha, 3 * p.beta, 2 * p.gamma)
    return CoercivityConstants(c0, c1)


def _grad_sq(f: SpectralVectorField) -> float:
    """||D f||^2 = sum_k 4 pi^2 |k|^2 |f(k)|^2 over all components."""
    return float(np.sum((TWO_PI**2) * f.grid.k2 * np.sum(np.abs(f.coeffs) ** 2, axis=0)))


def functionals(u, omega, f, g, zeta_t, params: PhysicalParams, s: float = 0.0, t: float = 0.0) -> EnergyTriple:
    """Energy E, dissipation D and forcing functional F at regularity s.

    The transport term enters F as j <J^s(u.grad zeta), J^s omega>, matching
    the j-weighted transport in the angular equation.
    """
    p = params
    U, W = apply_Js(u, s), apply_Js(omega, s)
    energy = 0.5 * p.rho * l2_norm(U) ** 2 + 0.5 * p.j * l2_norm(W) ** 2
    diss = (p.eps * _grad_sq(U) + (p.alpha + p.gamma) * _grad_sq(W)
            + p.grad_div_coefficient * l2_norm(div(W)) ** 2
            + 2 * p.kappa * l2_norm(0.5 * curl(U) - W) ** 2)
    forcing = sobolev_inner(f, u, s) + sobolev_inner(g, omega, s)
    if zeta_t is not None and zeta_t.max_abs() > 0:
        forcing -= p.j * sobolev_inner(advect(u, zeta_t), omega, s)
    return EnergyTriple(energy, diss, forcing, t)


class StepResult(NamedTuple):
    u: SpectralVectorField
    omega: SpectralVectorField
    iterations: int
    contraction: float


@dataclass
class LinearTrajectory:
    times: np.ndarray
    u: list
    omega: list
    iterations: list
    dt: float

    def __len__(self):
        return len(self.times)


def _state_norm(u, w, s):
    return sobolev_norm(u, s) + sobolev_norm(w, s)


class LinearStepper:
    """Reusable Picard stepper for one problem and step size."""

    def __init__(self, problem: LinearProblem, dt: float, picard_tol: float = PICARD_TOL,
                 max_iters: int = MAX_ITERS):
        if not dt > 0:
            raise DomainError("dt must be positive")
        self.problem = problem
        self.dt = float(dt)
        self.picard_tol = picard_tol
        self.max_iters = max_iters
        p = problem.params
        self.flow_u = FlowOperator.heat(problem.grid, p.velocity_diffusivity, dt)
        self.flow_w = FlowOperator(problem.grid, "lame", p.micro_lame, dt)

    def rhs_u(self, omega, f):
        p = self.problem.params
        return clean_velocity(f / p.rho + (p.kappa / p.rho) * curl(omega))

    def rhs_w(self, u, g, zeta):
        p = self.problem.params
        r = g / p.j + (p.kappa / p.j) * curl(u)
        if not self.problem.microflow.is_zero:
            r = r - advect(u, zeta)
        return r

    def step(self, u, omega, t: float) -> StepResult:
        prob = self.problem
        f0, g0 = prob.forcing_at(t)
        f1, g1 = prob.forcing_at(t + self.dt)
        z0, z1 = prob.microflow(t), prob.microflow(t + self.dt)
        ru0 = self.rhs_u(omega, f0)
        rw0 = self.rhs_w(u, g0, z0)
        # Exponential Euler predictor, then trapezoidal Picard sweeps.
        u_new = self.flow_u.duhamel(u, ru0, ru0)
        w_new = self.flow_w.duhamel(omega, rw0, rw0)
        prev_diff = None
        ratio = 0.0
        for it in range(1, self.max_iters + 1):
            u_next = self.flow_u.duhamel(u, ru0, self.rhs_u(w_new, f1))
            w_next = self.flow_w.duhamel(omega, rw0, self.rhs_w(u_new, g1, z1))
            diff = _state_norm(u_next - u_new, w_next - w_new, prob.s)
            scale = _state_norm(u_next, w_next, prob.s)
            if not math.isfinite(diff):
                raise ConvergenceError("non-finite Picard iterate", t=t, iterations=it, contraction=ratio)
            if prev_diff:
                ratio = diff / prev_diff
            prev_diff = diff
            u_new, w_new = u_next, w_next
            if diff <= self.picard_tol * scale:
                return StepResult(clean_velocity(u_new), w_new, it, ratio)
        raise ConvergenceError(f"Picard iteration did not converge in {self.max_iters} sweeps at t={t:.6g}",
                               t=t, iterations=self.max_iters, contraction=ratio)


def linear_step(state, problem: LinearProblem, t: float, dt: float, *, picard_tol: float = PICARD_TOL,
                max_iters: int = MAX_ITERS) -> StepResult:
    """Advance (u, omega) from t to t + dt."""
    u, omega = state
    return LinearStepper(problem, dt, picard_tol, max_iters).step(u, omega, t)


def solve_linear(problem: LinearProblem, horizon: float, dt: float, *, picard_tol: float = PICARD_TOL,
                 max_iters: int = MAX_ITERS, enforce_contraction: bool = True) -> LinearTrajectory:
    """Integrate to ``horizon`` with steps of ``dt``.

    When ``enforce_contraction`` is set, dt is halved until the empirical
    contraction ratio of one window falls below 0.5.
    """
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    n_steps = max(1, int(round(horizon / dt)))
    if enforce_contraction:
        for _ in range(30):
            if empirical_contraction(problem, horizon / n_steps) < CONTRACTION_LIMIT:
                break
            n_steps *= 2
        else:
            raise ConvergenceError("no step size gives a contraction", contraction=1.0)
    dt = horizon / n_steps
    stepper = LinearStepper(problem, dt, picard_tol, max_iters)
    u, w = problem.u0, problem.omega0
    times, us, ws, iters = [0.0], [u], [w], [0]
    for n in range(n_steps):
        res = stepper.step(u, w, n * dt)
        u, w = res.u, res.omega
        times.append((n + 1) * dt)
        us.append(u)
        ws.append(w)
        iters.append(res.iterations)
    return LinearTrajectory(np.array(times), us, ws, iters, dt)


def energy_series(traj: LinearTrajectory, problem: LinearProblem, s: Optional[float] = None) -> list:
    s = problem.s if s is None else s
    out = []
    for t, u, w in zip(traj.times, traj.u, traj.omega):
        f, g = problem.forcing_at(t)
        out.append(functionals(u, w, f, g, problem.microflow(t), problem.params, s, t))
    return out


def energy_identity_check(traj: LinearTrajectory, problem: LinearProblem, s: Optional[float] = None) -> float:
    """max |(E(t+dt)-E(t-dt))/(2dt) + D(t) - F(t)| over interior samples, divided by max D."""
    if len(traj.times) < 3:
        raise DomainError("energy identity check needs at least three samples")
    steps = np.diff(traj.times)
    if np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
        raise DomainError("trajectory must be uniformly sampled")
    dt = steps[0]
    series = energy_series(traj, problem, s)
    E = np.array([e.E for e in series])
    D = np.array([e.D for e in series])
    F = np.array([e.F for e in series])
    defect = (E[2:] - E[:-2]) / (2 * dt) + D[1:-1] - F[1:-1]
    dmax = np.max(D)
    if dmax == 0:
        return float(np.max(np.abs(defect)))
    return float(np.max(np.abs(defect)) / dmax)


# --- contraction of the windowed fixed-point map ---------------------------------


class _Window:
    """Discretized fixed-point map on [T0, T0 + window] with ``substeps`` linear pieces."""

    def __init__(self, problem: LinearProblem, window: float, substeps: int, t0: float = 0.0):
        self.problem = problem
        self.h = window / substeps
        self.m = substeps
        self.times = t0 + self.h * np.arange(substeps + 1)
        p = problem.params
        self.flow_u = FlowOperator.heat(problem.grid, p.velocity_diffusivity, self.h)
        self.flow_w = FlowOperator(problem.grid, "lame", p.micro_lame, self.h)
        self.zetas = [problem.microflow(t) for t in self.times]
        self.time_weights = np.full(substeps + 1, self.h)
        self.time_weights[[0, -1]] = 0.5 * self.h
        grid = problem.grid
        self.sigma_u = SobolevIndex(problem.s, homogeneous=True).weights(grid)
        self.sigma_u[0, 0, 0] = 1.0
        self.sigma_w = SobolevIndex(problem.s).weights(grid)

    def norm(self, traj) -> float:
        total = 0.0
        for wt, (v, chi) in zip(self.time_weights, traj):
            total += wt * (sobolev_norm(v, self.problem.s) ** 2 + sobolev_norm(chi, self.problem.s) ** 2)
        return math.sqrt(total)

    def coupling(self, v, chi, m):
        p = self.problem.params
        cu = (p.kappa / p.rho) * clean_velocity(curl(chi))
        cw = (p.kappa / p.j) * curl(v)
        if not self.problem.microflow.is_zero:
            cw = cw - advect(v, self.zetas[m])
        return cu, cw

    def psi(self, traj, with_data: bool = True):
        """Apply the fixed-point map to a sampled trial pair."""
        prob = self.problem
        p = prob.params
        zero = SpectralVectorField.zeros(prob.grid)
        cu, cw = [], []
        for m, (v, chi) in enumerate(traj):
            a, b = self.coupling(clean_velocity(v), chi, m)
            if with_data:
                f, g = prob.forcing_at(self.times[m])
                a = a + clean_velocity(f / p.rho)
                b = b + g / p.j
            cu.append(a)
            cw.append(b)
        yu = [prob.u0 if with_data else zero]
        yw = [prob.omega0 if with_data else zero]
        for m in range(self.m):
            yu.append(self.flow_u.duhamel(yu[-1], cu[m], cu[m + 1]))
            yw.append(self.flow_w.duhamel(yw[-1], cw[m], cw[m + 1]))
        return list(zip(yu, yw))

    def _transpose_sweep(self, flow, ys):
        # Transpose of y_{m+1} = E y_m + a c_m + b c_{m+1}, y_0 = 0.
        acc = [None] * (self.m + 1)
        acc[self.m] = ys[self.m]
        for m in range(self.m - 1, -1, -1):
            acc[m] = ys[m] + flow.apply(acc[m + 1])
        out = []
        for m in range(self.m + 1):
            z = SpectralVectorField.zeros(flow.grid)
            if m < self.m:
                z = z + flow.apply_weight(acc[m + 1], "a")
            if m >= 1:
                z = z + flow.apply_weight(acc[m], "b")
            out.append(z)
        return out

    def _advect_transpose(self, y, zeta):
        # Coefficient-space adjoint of v -> advect(v, zeta).
        grid = y.grid
        mask = grid.dealias_mask
        yp = _to_physical(y.coeffs * mask).real
        dz = (1j * TWO_PI) * grid.k[None, :] * (zeta.coeffs * mask)[:, None]
        dzp = _to_physical(dz).real
        z = np.einsum("i...,ij...->j...", yp, dzp)
        out = _to_spectral(z, grid) * mask
        return SpectralVectorField._wrap(grid, out)

    def psi_transpose(self, traj):
        p = self.problem.params
        yu = [clean_velocity(v) for v, _ in traj]
        yw = [chi for _, chi in traj]
        su = self._transpose_sweep(self.flow_u, yu)
        sw = self._transpose_sweep(self.flow_w, yw)
        out = []
        for m in range(self.m + 1):
            v = (p.kappa / p.j) * curl(sw[m])
            if not self.problem.microflow.is_zero:
                v = v - self._advect_transpose(sw[m], self.zetas[m])
            chi = (p.kappa / p.rho) * curl(clean_velocity(su[m]))
            out.append((clean_velocity(v), chi))
        return out

    # Weighted scaling G^{1/2} (time weight times Sobolev weight) and its inverse.
    def scale(self, traj, power: float):
        out = []
        for wt, (v, chi) in zip(self.time_weights, traj):
            su = (wt * self.sigma_u) ** power
            sw = (wt * self.sigma_w) ** power
            out.append((SpectralVectorField._wrap(v.grid, v.coeffs * su),
                        SpectralVectorField._wrap(chi.grid, chi.coeffs * sw)))
        return out


def _traj_l2(traj) -> float:
    return math.sqrt(sum(l2_norm(v) ** 2 + l2_norm(c) ** 2 for v, c in traj))


def _traj_scale(traj, c):
    return [(v * c, w * c) for v, w in traj]


def _traj_sub(a, b):
    return [(v1 - v2, w1 - w2) for (v1, w1), (v2, w2) in zip(a, b)]


def lipschitz_ratio(problem: LinearProblem, window: float, pair_a, pair_b, *, substeps: int = 8,
                    t0: float = 0.0) -> float:
    """||Psi(a) - Psi(b)|| / ||a - b|| in L^2(window; H^s) for sampled trial pairs."""
    win = _Window(problem, window, substeps, t0)
    a = [(clean_velocity(v), c) for v, c in pair_a]
    b = [(clean_velocity(v), c) for v, c in pair_b]
    den = win.norm(_traj_sub(a, b))
    if den == 0.0:
        return 0.0
    num = win.norm(_traj_sub(win.psi(a), win.psi(b)))
    return num / den


def empirical_contraction(problem: LinearProblem, dt_window: float, *, substeps: int = 8,
                          t0: float = 0.0, max_power_iters: int = 200, rtol: float = 1e-6,
                          seed: int = 12345) -> float:
    """Largest observed Lipschitz ratio of the fixed-point map over one window.

    The worst-case trial difference is located by power iteration on the
    weighted normal operator; the ratio is then measured by running the map
    on two trial pairs that differ by that direction.
    """
    from .random_fields import random_vector_field

    win = _Window(problem, dt_window, substeps, t0)
    grid = problem.grid
    x = []
    for m in range(substeps + 1):
        v = random_vector_field(grid, seed, 100 + 2 * m, kind="solenoidal")
        c = random_vector_field(grid, seed, 101 + 2 * m)
        x.append((v, c))
    norm = _traj_l2(x)
    x = _traj_scale(x, 1.0 / norm)
    sigma = 0.0
    for _ in range(max_power_iters):
        y = win.scale(win.psi(win.scale(x, -0.5), with_data=False), 0.5)
        new_sigma = _traj_l2(y)
        if new_sigma == 0.0:
            return 0.0
        xt = win.scale(win.psi_transpose(win.scale(y, 0.5)), -0.5)
        nx = _traj_l2(xt)
        x = _traj_scale(xt, 1.0 / nx)
        if abs(new_sigma - sigma) <= rtol * new_sigma:
            sigma = new_sigma
            break
        sigma = new_sigma
    direction = win.scale(x, -0.5)
    base = [(problem.u0, problem.omega0)] * (substeps + 1)
    shifted = [(v0 + dv, w0 + dw) for (v0, w0), (dv, dw) in zip(base, direction)]
    return lipschitz_ratio(problem, dt_window, base, shifted, substeps=substeps, t0=t0)
