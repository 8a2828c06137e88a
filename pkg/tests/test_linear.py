import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from micropolar.errors import ConvergenceError, DomainError
from micropolar.linear import (
    LinearProblem,
    LinearStepper,
    coercivity_constants,
    empirical_contraction,
    energy_identity_check,
    energy_series,
    functionals,
    linear_step,
    lipschitz_ratio,
    solve_linear,
)
from micropolar.microflow import MicroflowSpec, make_conservative_data
from micropolar.params import PhysicalParams
from micropolar.random_fields import random_vector_field
from micropolar.spectral import Grid, SpectralVectorField, l2_norm, leray_project, sobolev_norm
from micropolar.verify import linear_dense_errors

from scenarios import contraction_problem, energy_problem, linear_problem


def coercive_params(draw_rho, draw_j, eps, alpha, beta, gamma_frac, kappa):
    gamma = gamma_frac * (alpha / 3 + beta)  # keeps alpha/3 + beta - gamma >= 0
    return PhysicalParams(rho=draw_rho, j=draw_j, eps=eps, alpha=alpha, beta=beta, gamma=gamma, kappa=kappa)


params_strategy = st.builds(
    coercive_params, st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0.1, 3), st.floats(0.1, 3),
    st.floats(0.1, 3), st.floats(0.0, 1.0), st.floats(0.1, 3))


class TestConstants:
    def test_reference_values(self, unit_params):
        c = coercivity_constants(unit_params)
        assert c.C0 == pytest.approx(0.25)
        assert c.C1 == pytest.approx(0.125)

    @given(params_strategy, st.integers(0, 10**6), st.floats(0.0, 1.5))
    def test_coercivity_on_random_states(self, params, seed, s):
        g = Grid(8)
        u = random_vector_field(g, seed, 1, kind="solenoidal", decay=1)
        w = random_vector_field(g, seed, 2, include_mean=True, decay=1)
        zero = SpectralVectorField.zeros(g)
        e = functionals(u, w, zero, zero, None, params, s)
        c = coercivity_constants(params)
        top = sobolev_norm(u, 1 + s, homogeneous=True) ** 2 + sobolev_norm(w, 1 + s) ** 2
        assert e.D >= (c.C0 * e.E + c.C1 * top) * (1 - 1e-10)

    def test_functionals_single_mode(self, grid8):
        p = PhysicalParams(rho=2.0, j=3.0)
        w = SpectralVectorField.zeros(grid8).with_mean((1.0, 0.0, 0.0))
        zero = SpectralVectorField.zeros(grid8)
        e = functionals(zero, w, zero, w, None, p)
        assert e.E == pytest.approx(1.5)
        assert e.D == pytest.approx(2 * p.kappa)   # only the |omega|^2 coupling term survives
        assert e.F == pytest.approx(1.0)


class TestSolver:
    def test_zero_data_stays_zero(self, grid8, unit_params):
        zero = SpectralVectorField.zeros(grid8)
        prob = LinearProblem(unit_params, zero, zero, zero)
        traj = solve_linear(prob, 0.05, 0.01, enforce_contraction=False)
        assert all(u.max_abs() == 0 and w.max_abs() == 0 for u, w in zip(traj.u, traj.omega))

    def test_velocity_stays_solenoidal(self):
        prob = linear_problem()
        traj = solve_linear(prob, 0.05, 0.005, enforce_contraction=False)
        for u in traj.u:
            assert u.solenoidal_defect() < 1e-12
            assert np.all(u.mean() == 0)
        assert traj.iterations[0] == 0 and max(traj.iterations) < 20

    def test_dense_oracle_second_order(self):
        e1, e2 = linear_dense_errors()
        assert e2 < 1e-3
        assert e1 / e2 == pytest.approx(4.0, rel=0.15)

    def test_linear_step_matches_stepper(self):
        prob = linear_problem()
        res = linear_step((prob.u0, prob.omega0), prob, 0.0, 0.01)
        res2 = LinearStepper(prob, 0.01).step(prob.u0, prob.omega0, 0.0)
        assert res.u == res2.u and res.omega == res2.omega
        assert 0 <= res.contraction < 1

    def test_convergence_error(self):
        prob = linear_problem()
        with pytest.raises(ConvergenceError) as info:
            LinearStepper(prob, 0.01, picard_tol=1e-15, max_iters=2).step(prob.u0, prob.omega0, 0.0)
        assert info.value.iterations == 2

    def test_domain_errors(self, grid8, unit_params):
        zero = SpectralVectorField.zeros(grid8)
        with pytest.raises(DomainError):
            LinearProblem(unit_params, zero, random_vector_field(grid8, 1), zero)
        with pytest.raises(DomainError):
            LinearProblem(unit_params, zero, zero.with_mean((1, 0, 0)), zero)
        prob = LinearProblem(unit_params, zero, zero, zero)
        with pytest.raises(DomainError):
            solve_linear(prob, -1.0, 0.1)
        with pytest.raises(DomainError):
            LinearStepper(prob, 0.0)


class TestEnergyIdentity:
    def test_defect_and_order(self):
        prob = energy_problem()
        defects = []
        for dt in (1e-3, 5e-4):
            traj = solve_linear(prob, 0.05, dt, picard_tol=1e-13, enforce_contraction=False)
            defects.append(energy_identity_check(traj, prob))
        assert defects[0] <= 1e-4
        assert defects[0] / defects[1] == pytest.approx(4.0, rel=0.15)

    def test_series_length(self):
        prob = linear_problem(forced=False)
        traj = solve_linear(prob, 0.02, 0.01, enforce_contraction=False)
        assert len(energy_series(traj, prob)) == 3
        with pytest.raises(DomainError):
            energy_identity_check(solve_linear(prob, 0.01, 0.01, enforce_contraction=False), prob)

    def test_unforced_energy_decreases(self):
        prob = linear_problem(forced=False, zeta_amp=0.0)
        traj = solve_linear(prob, 0.05, 0.005, enforce_contraction=False)
        E = [e.E for e in energy_series(traj, prob)]
        assert all(b < a for a, b in zip(E, E[1:]))


class TestCoercivityRuns:
    def test_ten_randomized_runs(self):
        rng = np.random.default_rng(2024)
        violations = 0
        for run in range(10):
            alpha, beta, kappa, eps = rng.uniform(0.2, 2.0, 4)
            gamma = rng.uniform(0, 1) * (alpha / 3 + beta)
            p = PhysicalParams(rho=rng.uniform(0.5, 3), j=rng.uniform(0.5, 3), eps=eps, alpha=alpha, beta=beta,
                               gamma=gamma, kappa=kappa)
            s = float(rng.uniform(0, 1.5))
            prob = linear_problem(p, seed=run, decay=3.0, s=s)
            traj = solve_linear(prob, 0.04, 0.004, enforce_contraction=False)
            c = coercivity_constants(p)
            for t, u, w in zip(traj.times, traj.u, traj.omega):
                f, g = prob.forcing_at(t)
                e = functionals(u, w, f, g, prob.microflow(t), p, s, t)
                top = sobolev_norm(u, 1 + s, homogeneous=True) ** 2 + sobolev_norm(w, 1 + s) ** 2
                if e.D < (c.C0 * e.E + c.C1 * top) * (1 - 1e-10):
                    violations += 1
        assert violations == 0


class TestContraction:
    def test_sqrt_window_scaling(self):
        prob = contraction_problem()
        c1 = empirical_contraction(prob, 0.008)
        c2 = empirical_contraction(prob, 0.004)
        assert c1 / c2 == pytest.approx(math.sqrt(2), rel=0.2)
        assert c1 < 0.5

    def test_default_step_contracts(self):
        assert empirical_contraction(contraction_problem(), 0.01) < 0.5

    def test_lipschitz_ratio_pairs(self):
        prob = contraction_problem()
        g = prob.grid
        a = [(prob.u0, prob.omega0)] * 9
        b = [(prob.u0 + random_vector_field(g, 5, 1, kind="solenoidal", l2=0.01),
              prob.omega0 + random_vector_field(g, 5, 2, l2=0.01))] * 9
        r = lipschitz_ratio(prob, 0.01, a, b)
        assert 0 < r < 1
        assert lipschitz_ratio(prob, 0.01, a, a) == 0.0

    @pytest.mark.slow
    def test_solver_halves_large_step(self):
        # strong coupling and weak diffusion: the window map expands at dt = 0.05
        p = PhysicalParams(eps=0.02, alpha=0.02, beta=0.02, gamma=0.02, kappa=3.0)
        prob = linear_problem(p, zeta_amp=3.0, decay=2, forced=False)
        assert empirical_contraction(prob, 0.05) > 0.5
        traj = solve_linear(prob, 0.05, 0.05, enforce_contraction=True)
        assert traj.dt < 0.05
        assert empirical_contraction(prob, traj.dt) < 0.5
