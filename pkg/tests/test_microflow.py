import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from micropolar.diagnostics import fit_decay
from micropolar.errors import DomainError
from micropolar.microflow import (
    MicroflowSpec,
    PotentialMicroflow,
    angular_operator,
    check_parallel,
    make_conservative_data,
    microflow_residual,
    potential_microflow,
)
from micropolar.params import PhysicalParams
from micropolar.random_fields import random_vector_field
from micropolar.spectral import Grid, l2_norm, mode_field, sobolev_norm

params_strategy = st.builds(
    PhysicalParams,
    rho=st.floats(0.2, 5), j=st.floats(0.2, 5), eps=st.floats(0.1, 3), alpha=st.floats(0.1, 3),
    beta=st.floats(0.1, 3), gamma=st.floats(0.0, 3), kappa=st.floats(0.1, 3),
)


def single_mode(grid, k=(1, 1, 0), amp=0.3):
    k = np.asarray(k, dtype=float)
    return mode_field(grid, tuple(int(c) for c in k), 1j * amp * k)


class TestData:
    def test_gradient_and_normalized(self, grid8):
        z = make_conservative_data(MicroflowSpec(q=3, seed=4, amplitude=0.2), grid8)
        assert z.curl_defect() < 1e-14
        assert l2_norm(z) == pytest.approx(0.2, rel=1e-13)
        assert np.all(z.mean() == 0)
        assert z.hermitian_defect() < 1e-14

    def test_cutoff(self, grid8):
        z = make_conservative_data(MicroflowSpec(mode_cutoff=1), grid8)
        assert np.all(z.coeffs[:, grid8.k2 > 1] == 0)
        with pytest.raises(DomainError):
            make_conservative_data(MicroflowSpec(mode_cutoff=5), grid8)

    def test_zero_amplitude(self, grid8):
        assert make_conservative_data(MicroflowSpec(amplitude=0.0), grid8).max_abs() == 0

    def test_spec_validation(self):
        with pytest.raises(DomainError):
            MicroflowSpec(spectrum_slope=1.5)
        with pytest.raises(DomainError):
            MicroflowSpec(amplitude=-1)
        assert MicroflowSpec(q=2.5).q_index.s == 2.5

    def test_deterministic(self, grid8):
        spec = MicroflowSpec(seed=11)
        assert make_conservative_data(spec, grid8) == make_conservative_data(spec, grid8)

    def test_rejects_non_gradient(self, grid8, unit_params):
        with pytest.raises(DomainError):
            PotentialMicroflow(random_vector_field(grid8, 1, kind="solenoidal"), unit_params)
        with pytest.raises(DomainError):
            check_parallel(random_vector_field(grid8, 1))


@given(params_strategy, st.floats(0.0, 0.3), st.integers(0, 100))
def test_stays_gradient_and_decays(params, t, seed):
    grid = Grid(8)
    z0 = make_conservative_data(MicroflowSpec(seed=seed), grid)
    z = potential_microflow(z0, params, t)
    assert z.curl_defect() <= 1e-12
    assert l2_norm(z) <= l2_norm(z0) * (1 + 1e-14)
    assert l2_norm(z) <= math.exp(-2 * params.kappa / params.j * t) * l2_norm(z0) * (1 + 1e-12)


def test_single_mode_rate_via_fit(grid8):
    p = PhysicalParams(rho=1.0, j=2.0, eps=1.0, alpha=0.7, beta=0.4, gamma=0.3, kappa=1.5)
    k = (1, 2, 0)
    z0 = single_mode(grid8, k)
    flow = PotentialMicroflow(z0, p)
    times = np.linspace(0.0, 0.05, 21)
    series = [l2_norm(flow(t)) ** 2 for t in times]
    fit = fit_decay(times, series, "exponential")
    k2 = 5
    rate = (4 * math.pi**2 * (4 * p.alpha / 3 + p.beta) * k2 + 2 * p.kappa) / p.j
    # squared norm decays at twice the amplitude rate
    assert fit.fitted_rate / 2 == pytest.approx(rate, rel=1e-6)


def test_residual_second_order(grid8, unit_params):
    z0 = make_conservative_data(MicroflowSpec(seed=2), grid8)
    r1 = microflow_residual(z0, unit_params, 0.02, 1e-4)
    r2 = microflow_residual(z0, unit_params, 0.02, 5e-5)
    assert r1 / r2 == pytest.approx(4.0, rel=0.1)
    exact = microflow_residual(z0, unit_params, 0.02, 5e-5, exact_derivative=True)
    assert exact < 1e-12 * l2_norm(angular_operator(potential_microflow(z0, unit_params, 0.02), unit_params))
    with pytest.raises(DomainError):
        microflow_residual(z0, unit_params, 0.01, 0.02)


def test_time_derivative_and_negative_time(grid8, unit_params):
    z0 = single_mode(grid8)
    flow = PotentialMicroflow(z0, unit_params)
    h = 1e-6
    fd = (flow(0.01 + h) - flow(0.01 - h)) / (2 * h)
    assert l2_norm(fd - flow.time_derivative(0.01)) < 1e-6 * l2_norm(fd)
    with pytest.raises(DomainError):
        flow(-1.0)


def test_q_norm_finite_for_smooth_data(grid8):
    z = make_conservative_data(MicroflowSpec(q=3, spectrum_slope=2), grid8)
    assert math.isfinite(sobolev_norm(z, 3))
