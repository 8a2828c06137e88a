"""Built-in oracle suites behind ``micropolar verify``.

The oracles deliberately avoid the package operators: wavenumbers come from
``numpy.fft.fftfreq``, products are dense convolution sums over retained
modes, semigroups are ``scipy.linalg.expm`` of the per-mode 3x3 generator and
time integration is ``scipy.integrate.solve_ivp`` on the coefficient vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable, Optional

import numpy as np
import scipy.integrate
import scipy.linalg

from .flows import damped_flow, heat_flow, lame_flow
from .linear import LinearProblem, solve_linear
from .microflow import MicroflowSpec, make_conservative_data
from .nonlinear import solve_micropolar
from .params import PhysicalParams
from .random_fields import random_vector_field
from .spectral import (
    Grid,
    SpectralVectorField,
    advect,
    div,
    l2_norm,
    leray_complement,
    leray_project,
    sobolev_inner,
    transport,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: {self.value:.3e} (tolerance {self.tolerance:.1e})"


# --- oracle building blocks -----------------------------------------------------

def wavenumbers(n: int) -> np.ndarray:
    """Integer wavenumbers, shape (3, n, n, n), in FFT order."""
    k1 = np.fft.fftfreq(n, 1.0 / n)
    return np.array(np.meshgrid(k1, k1, k1, indexing="ij"))


def retained_modes(n: int, fraction: float = 1.0):
    """Index tuples and integer wavevectors with every |k_i| < fraction * n/2."""
    k1 = np.fft.fftfreq(n, 1.0 / n).astype(int)
    out = []
    for a, b, c in product(range(n), repeat=3):
        k = np.array([k1[a], k1[b], k1[c]])
        if np.all(np.abs(k) < fraction * n / 2):
            out.append(((a, b, c), k))
    return out


def dense_advect(v: np.ndarray, w: np.ndarray, n: int, fraction: float = 2.0 / 3.0,
                 exact_mean: bool = False) -> np.ndarray:
    """Truncated convolution sum_{p+q=k} v(p) . (2 pi i q) w(q) over dealiased p, q and k.

    With ``exact_mean`` the mean of v acts on every retained k and only the
    fluctuation of v enters the truncated sum.
    """
    modes = retained_modes(n, fraction)
    lookup = {tuple(k): idx for idx, k in retained_modes(n)}
    out = np.zeros((3, n, n, n), dtype=complex)
    for ip, p in modes:
        if exact_mean and not p.any():
            continue
        vp = v[(slice(None),) + ip]
        for iq, q in modes:
            k = tuple(p + q)
            if k not in lookup or not np.all(np.abs(np.array(k)) < fraction * n / 2):
                continue
            grad_w = w[(slice(None),) + iq] * (TWO_PI * 1j * np.dot(vp, q))
            out[(slice(None),) + lookup[k]] += grad_w
    if exact_mean:
        b = v[:, 0, 0, 0]
        for ik, k in retained_modes(n):
            out[(slice(None),) + ik] += TWO_PI * 1j * np.dot(b, k) * w[(slice(None),) + ik]
    return out


def lame_generator(k: np.ndarray, alpha, beta, gamma, delta) -> np.ndarray:
    """3x3 generator -(4 pi^2 ((alpha+gamma)|k|^2 I + (beta-gamma) k k^T) + delta I)."""
    kk = np.outer(k, k)
    return -(TWO_PI**2 * ((alpha + gamma) * np.dot(k, k) * np.eye(3) + (beta - gamma) * kk) + delta * np.eye(3))


def expm_flow(g: np.ndarray, n: int, t: float, generator: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    out = np.zeros_like(g)
    for idx, k in retained_modes(n):
        sl = (slice(None),) + idx
        out[sl] = scipy.linalg.expm(t * generator(k.astype(float))) @ g[sl]
    return out


def _proj(k):
    k2 = float(np.dot(k, k))
    if k2 == 0:
        return np.eye(3)
    return np.eye(3) - np.outer(k, k) / k2


def _curl(k, a):
    return TWO_PI * 1j * np.cross(k, a)


def dense_rhs(n: int, params: PhysicalParams, zeta: Optional[Callable], forcing: Optional[Callable],
              nonlinear: bool, fraction: float = 2.0 / 3.0):
    """Right-hand side of the (linearized or full) system on stacked (u, omega) coefficients."""
    modes = retained_modes(n)
    p = params
    shape = (3, n, n, n)

    def rhs(t, y):
        u = y[: y.size // 2].reshape(shape)
        w = y[y.size // 2:].reshape(shape)
        f, g = forcing(t) if forcing else (np.zeros(shape), np.zeros(shape))
        du = np.zeros(shape, dtype=complex)
        dw = np.zeros(shape, dtype=complex)
        if nonlinear:
            uu = dense_advect(u, u, n, fraction, exact_mean=True)
            uw = dense_advect(u, w, n, fraction, exact_mean=True)
        else:
            uu = np.zeros(shape)
            uw = dense_advect(u, zeta(t), n, fraction) if zeta else np.zeros(shape)
        for idx, k in modes:
            sl = (slice(None),) + idx
            kf = k.astype(float)
            k2 = float(np.dot(kf, kf))
            mom = (-(p.eps + 0.5 * p.kappa) * TWO_PI**2 * k2 * u[sl] + p.kappa * _curl(kf, w[sl]) + f[sl]) / p.rho
            mom = mom - uu[sl]
            du[sl] = 0.0 if k2 == 0 else _proj(kf) @ mom
            dw[sl] = (lame_generator(kf, p.alpha, p.alpha / 3 + p.beta, p.gamma, 2 * p.kappa) @ w[sl]
                      + p.kappa * _curl(kf, u[sl]) + g[sl]) / p.j - uw[sl]
        return np.concatenate([du.ravel(), dw.ravel()])

    return rhs


def dense_solve(rhs, u0: np.ndarray, w0: np.ndarray, times: np.ndarray):
    y0 = np.concatenate([u0.ravel(), w0.ravel()]).astype(complex)
    sol = scipy.integrate.solve_ivp(rhs, (times[0], times[-1]), y0, method="DOP853", t_eval=times,
                                    rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise RuntimeError(sol.message)
    half = y0.size // 2
    shape = u0.shape
    return [(sol.y[:half, i].reshape(shape), sol.y[half:, i].reshape(shape)) for i in range(len(times))]


# --- suites ---------------------------------------------------------------------

def _rel(a, b) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / (nb if nb > 0 else 1.0))


def check_flows(n: int = 4, seed: int = 7) -> list:
    grid = Grid(n)
    g = random_vector_field(grid, seed, 1)
    g0 = random_vector_field(grid, seed, 2)  # mean-zero, as the heat flow requires
    results = []
    t = 0.0137
    alpha = 0.8
    ref = expm_flow(g0.coeffs, n, t, lambda k: -TWO_PI**2 * alpha * np.dot(k, k) * np.eye(3))
    err = _rel(heat_flow(g0, alpha, t).coeffs, ref)
    results.append(CheckResult("heat_flow vs expm", err <= 1e-10, err, 1e-10))
    mu, nu = 0.6, 1.9
    ref = expm_flow(g.coeffs, n, t, lambda k: -(TWO_PI**2 * mu * np.dot(k, k) + nu) * np.eye(3))
    err = _rel(damped_flow(g, mu, nu, t).coeffs, ref)
    results.append(CheckResult("damped_flow vs expm", err <= 1e-10, err, 1e-10))
    coeffs = (0.7, 1.3, 0.4, 2.2)
    ref = expm_flow(g.coeffs, n, t, lambda k: lame_generator(k, *coeffs))
    err = _rel(lame_flow(g, coeffs, t).coeffs, ref)
    results.append(CheckResult("lame_flow vs expm", err <= 1e-10, err, 1e-10))
    return results


def check_leray(n: int = 8, seed: int = 11, samples: int = 20) -> list:
    grid = Grid(n)
    idem = orth = flag = 0.0
    for i in range(samples):
        f = random_vector_field(grid, seed, 10 + 2 * i)
        h = random_vector_field(grid, seed, 11 + 2 * i)
        pf = leray_project(f)
        scale = l2_norm(f) * l2_norm(h)
        idem = max(idem, l2_norm(leray_project(pf) - pf) / l2_norm(f))
        orth = max(orth, abs(sobolev_inner(pf, leray_complement(h))) / scale)
        flag = max(flag, l2_norm(div(pf)) / l2_norm(f))
    tol = 1e-12
    return [
        CheckResult("leray idempotent", idem <= tol, idem, tol),
        CheckResult("leray orthogonal", orth <= tol, orth, tol),
        CheckResult("leray divergence-free", flag <= tol, flag, tol),
    ]


def check_advect(n: int = 4, seed: int = 3) -> list:
    grid = Grid(n)
    v = random_vector_field(grid, seed, 1, include_mean=True)
    w = random_vector_field(grid, seed, 2)
    ref = dense_advect(v.coeffs, w.coeffs, n)
    err = _rel(advect(v, w).coeffs, ref)
    ref_t = dense_advect(v.coeffs, w.coeffs, n, exact_mean=True)
    err_t = _rel(transport(v, w).coeffs, ref_t)
    return [CheckResult("advect vs dense convolution", err <= 1e-12, err, 1e-12),
            CheckResult("transport vs dense convolution", err_t <= 1e-12, err_t, 1e-12)]


def _dense_fields(n, seed):
    grid = Grid(n)
    zeta0 = make_conservative_data(MicroflowSpec(seed=seed, amplitude=0.5, mode_cutoff=1), grid)
    u0 = random_vector_field(grid, seed, 2, kind="solenoidal", decay=2, l2=0.2)
    w0 = random_vector_field(grid, seed, 3, decay=2, l2=0.2)
    f0 = random_vector_field(grid, seed, 4, kind="solenoidal", decay=2, l2=0.3)
    g0 = random_vector_field(grid, seed, 5, decay=2, l2=0.3)
    return grid, zeta0, u0, w0, f0, g0


def _zeta_oracle(zeta0: np.ndarray, n: int, params: PhysicalParams):
    p = params

    def zeta(t):
        return expm_flow(zeta0, n, t, lambda k: lame_generator(k, p.alpha, p.alpha / 3 + p.beta, p.gamma,
                                                                2 * p.kappa) / p.j)
    return zeta


def linear_dense_errors(n: int = 4, seed: int = 5, horizon: float = 0.04, dts=(0.004, 0.002)) -> list:
    """Max relative L2 error of solve_linear against the dense ODE oracle for each dt."""
    params = PhysicalParams()
    grid, zeta0, u0, w0, f0, g0 = _dense_fields(n, seed)

    def forcing(t):
        return f0 * math.cos(3 * t), g0 * math.sin(2 * t)

    problem = LinearProblem(params, zeta0, u0, w0, forcing=forcing)
    rhs = dense_rhs(n, params, _zeta_oracle(zeta0.coeffs, n, params),
                    lambda t: tuple(x.coeffs for x in forcing(t)), nonlinear=False)
    errors = []
    for dt in dts:
        traj = solve_linear(problem, horizon, dt, picard_tol=1e-13, enforce_contraction=False)
        ref = dense_solve(rhs, u0.coeffs, w0.coeffs, traj.times)
        err = max(_rel(np.concatenate([u.coeffs.ravel(), w.coeffs.ravel()]),
                       np.concatenate([ru.ravel(), rw.ravel()]))
                  for u, w, (ru, rw) in zip(traj.u, traj.omega, ref))
        errors.append(err)
    return errors


def nonlinear_dense_errors(n: int = 4, seed: int = 5, horizon: float = 0.04, dts=(0.004, 0.002),
                           velocity_mean=(0.2, -0.1, 0.3)) -> list:
    params = PhysicalParams()
    grid, zeta0, u0, w0, f0, g0 = _dense_fields(n, seed)
    u0 = u0.with_mean(velocity_mean)
    w0 = zeta0 + w0
    from .nonlinear import ForcingProfile

    forcing = ForcingProfile(lambda t: (f0 * math.cos(3 * t), g0 * math.sin(2 * t)))
    rhs = dense_rhs(n, params, None, lambda t: tuple(x.coeffs for x in forcing(t, grid)), nonlinear=True)
    errors = []
    for dt in dts:
        traj = solve_micropolar((u0, w0), zeta0, forcing, params, horizon, dt, picard_tol=1e-13)
        times = traj.times
        ref = dense_solve(rhs, u0.coeffs, w0.coeffs, times)
        err = max(_rel(np.concatenate([st.u.coeffs.ravel(), st.omega.coeffs.ravel()]),
                       np.concatenate([ru.ravel(), rw.ravel()]))
                  for st, (ru, rw) in zip(traj.states, ref))
        errors.append(err)
    return errors


def check_linear(n: int = 4) -> list:
    e1, e2 = linear_dense_errors(n)
    ratio = e1 / e2
    return [CheckResult("linear solver vs dense ODE (dt=0.002)", e2 <= 1e-3, e2, 1e-3),
            CheckResult("linear solver refinement ratio - 4", abs(ratio - 4) <= 0.6, abs(ratio - 4), 0.6)]


def check_nonlinear(n: int = 4) -> list:
    e1, e2 = nonlinear_dense_errors(n)
    ratio = e1 / e2
    return [CheckResult("nonlinear solver vs dense ODE (dt=0.002)", e2 <= 1e-3, e2, 1e-3),
            CheckResult("nonlinear solver refinement ratio - 4", abs(ratio - 4) <= 0.6, abs(ratio - 4), 0.6)]


SUITES = {
    "flows": check_flows,
    "leray": check_leray,
    "advect": check_advect,
    "linear": check_linear,
    "nonlinear": check_nonlinear,
}


def run_all(print_fn=print) -> bool:
    ok = True
    for name, suite in SUITES.items():
        for res in suite():
            print_fn(res.line())
            ok &= res.passed
    return ok
