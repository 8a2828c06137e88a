import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from micropolar.errors import DomainError, GridMismatchError
from micropolar.random_fields import random_scalar_field, random_vector_field
from micropolar.spectral import (
    TWO_PI,
    Grid,
    SobolevIndex,
    SpectralScalarField,
    SpectralVectorField,
    advect,
    analyze,
    apply_Js,
    curl,
    div,
    fft_workers,
    grad,
    grad_div,
    grad_potential,
    hermitian_part,
    l2_norm,
    laplacian,
    leray_complement,
    leray_project,
    mode_field,
    sobolev_inner,
    sobolev_norm,
    synthesize,
    transport,
)
from micropolar.verify import dense_advect

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def sample_points(grid):
    x = np.arange(grid.n_modes) / grid.n_modes
    return np.array(np.meshgrid(x, x, x, indexing="ij"))


class TestGrid:
    def test_rejects_odd_or_small(self):
        for n in (3, 2, 7, 0):
            with pytest.raises(DomainError):
                Grid(n)

    def test_dealias_fraction_parsing(self):
        assert Grid(8, "1/2").dealias_fraction == Fraction(1, 2)
        assert Grid(8).dealias_fraction == Fraction(2, 3)
        with pytest.raises(DomainError):
            Grid(8, 0)
        with pytest.raises(DomainError):
            Grid(8, Fraction(4, 3))

    def test_nyquist_planes_not_retained(self, grid8):
        k = grid8.k_int
        assert not grid8.retained[4, 0, 0]
        assert grid8.retained[3, 5, 1]
        assert np.all(np.abs(k[:, grid8.retained]) <= 3)

    def test_two_thirds_mask(self, grid8):
        # cutoff 8/3: |k_i| <= 2 kept
        kept = grid8.k_int[:, grid8.dealias_mask]
        assert np.max(np.abs(kept)) == 2
        assert grid8.dealias_mask.sum() == 5**3

    def test_reflect(self, grid8):
        k = grid8.k_int
        refl = grid8.reflect(k[0].astype(float))
        assert np.array_equal(refl[grid8.retained], -k[0][grid8.retained])

    def test_fft_workers(self, monkeypatch):
        monkeypatch.setenv("MPS_THREADS", "3")
        assert fft_workers() == 3
        monkeypatch.setenv("MPS_THREADS", "junk")
        assert fft_workers() == 1
        monkeypatch.delenv("MPS_THREADS")
        assert fft_workers() == 1


class TestFields:
    def test_constructor_rejects_nyquist_content(self, grid4):
        arr = np.zeros((3, 4, 4, 4), complex)
        arr[0, 2, 0, 0] = 1.0
        with pytest.raises(DomainError):
            SpectralVectorField(grid4, arr)

    def test_constructor_rejects_shape(self, grid4):
        with pytest.raises(GridMismatchError):
            SpectralVectorField(grid4, np.zeros((4, 4, 4)))

    def test_immutable(self, grid4):
        f = SpectralVectorField.zeros(grid4)
        with pytest.raises(ValueError):
            f.coeffs[0, 0, 0, 0] = 1
        with pytest.raises(AttributeError):
            f.grid = grid4

    def test_grid_mismatch(self, grid4, grid8):
        with pytest.raises(GridMismatchError):
            SpectralVectorField.zeros(grid4) + SpectralVectorField.zeros(grid8)

    def test_mode_field_synthesis(self, grid8):
        f = mode_field(grid8, (1, -2, 3), (1.0, 2j, 0.5 - 0.5j))
        x = sample_points(grid8)
        phase = TWO_PI * (1 * x[0] - 2 * x[1] + 3 * x[2])
        expected = 2 * np.array([np.cos(phase), -2 * np.sin(phase), 0.5 * np.cos(phase) + 0.5 * np.sin(phase)])
        np.testing.assert_allclose(synthesize(f), expected, atol=1e-12)

    def test_mean_and_hermitian(self, grid8):
        f = random_vector_field(grid8, 1, include_mean=True)
        assert f.hermitian_defect() < 1e-15
        assert np.all(f.mean().imag == 0)


@given(seeds)
def test_transform_round_trip(seed):
    grid = Grid(8)
    f = random_vector_field(grid, seed, 9, include_mean=True)
    back = analyze(synthesize(f), grid)
    assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-14 * max(1.0, f.max_abs())


def test_analyze_discards_nyquist(grid4):
    x = sample_points(grid4)
    samples = np.cos(TWO_PI * 2 * x[0])  # Nyquist wave
    assert analyze(samples, grid4).max_abs() == 0.0
    with pytest.raises(GridMismatchError):
        analyze(np.zeros((5, 5, 5)), grid4)


def test_hermitian_part_realifies(grid4):
    rng = np.random.default_rng(0)
    arr = rng.standard_normal((3, 4, 4, 4)) + 1j * rng.standard_normal((3, 4, 4, 4))
    arr[..., ~grid4.retained] = 0
    h = hermitian_part(SpectralVectorField(grid4, arr))
    assert h.hermitian_defect() < 1e-15
    assert np.max(np.abs(synthesize(h, keep_imag=True).imag)) < 1e-13


class TestNorms:
    def test_single_mode_norms(self, grid8):
        f = mode_field(grid8, (1, 2, 0), (0.0, 0.0, 1.0))
        # two coefficients of modulus 1 at |k|^2 = 5
        assert sobolev_norm(f, 0) == pytest.approx(math.sqrt(2))
        assert sobolev_norm(f, 1.5) == pytest.approx(math.sqrt(2 * 6**1.5))
        assert sobolev_norm(f, 1.5, homogeneous=True) == pytest.approx(math.sqrt(2 * 5**1.5))

    def test_parseval(self, grid8):
        f = random_vector_field(grid8, 4, include_mean=True)
        samples = synthesize(f)
        assert l2_norm(f) ** 2 == pytest.approx(np.mean(np.sum(samples**2, axis=0)), rel=1e-13)

    def test_homogeneous_requires_mean_zero(self, grid8):
        f = random_vector_field(grid8, 4, include_mean=True)
        with pytest.raises(DomainError):
            sobolev_norm(f, 1, homogeneous=True)

    def test_index_object(self, grid8):
        f = random_vector_field(grid8, 4)
        assert sobolev_norm(f, SobolevIndex(0.7, True)) == sobolev_norm(f, 0.7, homogeneous=True)

    def test_Js_is_isometry_shift(self, grid8):
        f = random_vector_field(grid8, 3)
        assert l2_norm(apply_Js(f, 1.3)) == pytest.approx(sobolev_norm(f, 1.3), rel=1e-13)

    @given(seeds, st.floats(-2, 3), st.floats(-2, 3))
    def test_norm_monotone_in_index(self, seed, s1, s2):
        f = random_vector_field(Grid(8), seed, 2)
        lo, hi = sorted((s1, s2))
        assert sobolev_norm(f, lo) <= sobolev_norm(f, hi) * (1 + 1e-12)

    @given(seeds)
    def test_cauchy_schwarz(self, seed):
        g = Grid(8)
        f, h = random_vector_field(g, seed, 1), random_vector_field(g, seed, 2)
        assert abs(sobolev_inner(f, h, 0.5)) <= sobolev_norm(f, 0.5) * sobolev_norm(h, 0.5) * (1 + 1e-12)


class TestLeray:
    @given(seeds)
    def test_algebra(self, seed):
        g = Grid(8)
        f = random_vector_field(g, seed, 1, include_mean=True)
        h = random_vector_field(g, seed, 2)
        pf = leray_project(f)
        n = l2_norm(f)
        assert l2_norm(leray_project(pf) - pf) <= 1e-12 * n
        assert abs(sobolev_inner(pf, leray_complement(h))) <= 1e-12 * n * l2_norm(h)
        assert l2_norm(div(pf)) <= 1e-12 * n
        assert l2_norm(pf + leray_complement(f) - f) <= 1e-14 * n
        assert leray_complement(f).curl_defect() < 1e-12

    def test_mean_passes_through(self, grid8):
        f = SpectralVectorField.zeros(grid8).with_mean((1.0, 2.0, 3.0))
        assert np.array_equal(leray_project(f).mean(), f.mean())
        assert leray_complement(f).max_abs() == 0.0


class TestDifferentialOperators:
    def test_against_analytic_derivatives(self, grid8):
        x = sample_points(grid8)
        phase = TWO_PI * (x[0] + 2 * x[1] - x[2])
        phi = analyze(np.sin(phase), grid8)
        g = synthesize(grad(phi))
        np.testing.assert_allclose(g, TWO_PI * np.cos(phase) * np.array([1, 2, -1])[:, None, None, None],
                                   atol=1e-11)
        lap = synthesize(laplacian(phi))
        np.testing.assert_allclose(lap, -(TWO_PI**2) * 6 * np.sin(phase), atol=1e-10)

    def test_identities(self, grid8):
        f = random_vector_field(grid8, 2)
        phi = random_scalar_field(grid8, 2)
        assert curl(grad(phi)).max_abs() < 1e-12 * grad(phi).max_abs()
        assert div(curl(f)).max_abs() < 1e-12 * curl(f).max_abs()
        # curl curl = grad div - Lap
        lhs = curl(curl(f))
        rhs = grad_div(f) - laplacian(f)
        assert l2_norm(lhs - rhs) < 1e-12 * l2_norm(lhs)

    def test_grad_potential_inverts_grad(self, grid8):
        phi = random_scalar_field(grid8, 6)
        back = grad_potential(grad(phi))
        assert l2_norm(back - phi) < 1e-13 * l2_norm(phi)
        with pytest.raises(DomainError):
            grad_potential(random_vector_field(grid8, 6, kind="solenoidal"))


class TestAdvect:
    def test_matches_dense_convolution(self, grid4):
        v = random_vector_field(grid4, 3, 1, include_mean=True)
        w = random_vector_field(grid4, 3, 2)
        ref = dense_advect(v.coeffs, w.coeffs, 4)
        assert np.max(np.abs(advect(v, w).coeffs - ref)) < 1e-12 * np.max(np.abs(ref))

    def test_matches_dense_convolution_n8(self, grid8):
        v = random_vector_field(grid8, 5, 1)
        w = random_vector_field(grid8, 5, 2)
        ref = dense_advect(v.coeffs, w.coeffs, 8)
        assert np.max(np.abs(advect(v, w).coeffs - ref)) < 1e-12 * np.max(np.abs(ref))

    def test_exact_for_band_limited_product(self, grid8):
        # modes inside the mask: the physical-space product is exact
        v = mode_field(grid8, (1, 0, 0), (0.0, 1.0, 0.0))
        w = mode_field(grid8, (0, 1, 0), (0.0, 0.0, 1.0))
        x = sample_points(grid8)
        vy = 2 * np.cos(TWO_PI * x[0])
        dwz_dy = -2 * TWO_PI * np.sin(TWO_PI * x[1])
        expected = np.zeros((3,) + grid8.shape)
        expected[2] = vy * dwz_dy
        np.testing.assert_allclose(synthesize(advect(v, w)), expected, atol=1e-11)

    def test_output_is_truncated(self, grid8):
        out = advect(random_vector_field(grid8, 1, 1), random_vector_field(grid8, 1, 2))
        assert np.all(out.coeffs[:, ~grid8.dealias_mask] == 0)
        assert out.hermitian_defect() < 1e-13

    def test_solenoidal_transport_is_skew(self, grid8):
        v = random_vector_field(grid8, 7, 1, kind="solenoidal")
        w = random_vector_field(grid8, 7, 2)
        wm = SpectralVectorField._wrap(grid8, w.coeffs * grid8.dealias_mask)
        assert abs(sobolev_inner(advect(v, wm), wm)) < 1e-12 * l2_norm(advect(v, wm)) * l2_norm(wm)

    def test_transport_mean_exact(self, grid8):
        w = random_vector_field(grid8, 8, 2, decay=1)
        b = np.array([0.3, -1.0, 2.0])
        v = SpectralVectorField.zeros(grid8).with_mean(b)
        expected = (1j * TWO_PI) * np.tensordot(b, grid8.k, axes=1) * w.coeffs
        np.testing.assert_allclose(transport(v, w).coeffs, expected, atol=1e-13)
        # advect truncates the same product
        assert np.any(advect(v, w).coeffs[:, ~grid8.dealias_mask] == 0)

    def test_transport_dense(self, grid4):
        v = random_vector_field(grid4, 3, 1, include_mean=True)
        w = random_vector_field(grid4, 3, 2)
        ref = dense_advect(v.coeffs, w.coeffs, 4, exact_mean=True)
        assert np.max(np.abs(transport(v, w).coeffs - ref)) < 1e-12 * np.max(np.abs(ref))
