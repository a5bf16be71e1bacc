from __future__ import annotations

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from pinowave.errors import InvalidArgument
from pinowave.wavecore import (
    Grid,
    SpectrumParams,
    WaveField,
    build_grid,
    dispersion_omega,
    fourier_derivative,
    jonswap_tma_wavenumber,
    sample_spectrum_realization,
    space_time_window,
    tukey_window,
)


def test_default_grid_spacing():
    g = build_grid(1953, 500, 100, 500)
    assert g.dx == pytest.approx(3.906, abs=5e-4)
    assert g.dt == pytest.approx(0.2, rel=1e-12)
    assert g.dx * g.n_x == pytest.approx(1953, rel=1e-12)
    assert g.dt * g.n_t == pytest.approx(100, rel=1e-12)


def test_minimal_grid_wavenumbers():
    g = build_grid(2 * math.pi, 2, 2 * math.pi, 2, 1)
    # entry 0 is exactly zero, entry 1 is the Nyquist alias -1 in numpy ordering
    assert g.wavenumbers[0] == 0.0
    assert abs(g.wavenumbers[1]) == pytest.approx(1.0)


def test_wavenumber_step_against_explicit_formula():
    g = build_grid(100, 10, 10, 10, 50)
    n = 10
    expected = [2 * math.pi * (j if j < n / 2 else j - n) / 100 for j in range(n)]
    np.testing.assert_allclose(g.wavenumbers, expected, rtol=1e-14, atol=0)
    assert g.wavenumbers[1] - g.wavenumbers[0] == pytest.approx(2 * math.pi / 100)


@pytest.mark.parametrize("args", [(0, 10, 1, 10), (10, 1, 1, 10), (10, 10, -1, 10), (10, 10, 1, 1)])
def test_grid_rejects_bad_dimensions(args):
    with pytest.raises(InvalidArgument):
        build_grid(*args)


def test_grid_rejects_bad_depth():
    with pytest.raises(InvalidArgument):
        build_grid(10, 10, 10, 10, depth=0)


def test_grid_dict_roundtrip():
    g = build_grid(1000, 128, 51.2, 128, 300)
    assert Grid.from_dict(g.to_dict()) == g


def test_column_of_nearest_and_bounds():
    g = build_grid(1953, 500, 100, 500)
    assert g.column_of(0.0) == 0
    assert g.column_of(5 * g.dx) == 5
    with pytest.raises(InvalidArgument):
        g.column_of(1953.0)
    with pytest.raises(InvalidArgument):
        g.column_of(-1.0)


# --- derivatives -----------------------------------------------------------

def test_derivative_of_fundamental_sine():
    g = build_grid(200, 64, 10, 8)
    k1 = 2 * math.pi / 200
    f = np.sin(k1 * g.x)
    d = fourier_derivative(f, g, "space")
    assert np.max(np.abs(d - k1 * np.cos(k1 * g.x))) < 1e-10


def test_derivative_of_constant_is_exactly_zero():
    g = build_grid(50, 16, 8, 16)
    f = np.full(g.shape, 3.7)
    assert np.all(fourier_derivative(f, g, "space") == 0)
    assert np.all(fourier_derivative(f, g, "time") == 0)


def test_derivative_matches_fourth_order_finite_differences():
    g = build_grid(100, 256, 10, 8)
    rng = np.random.default_rng(0)
    f = np.zeros(g.n_x)
    for m in range(1, 6):
        f += rng.normal() * np.cos(2 * math.pi * m * g.x / 100 + rng.uniform(0, 6))
    d_spec = fourier_derivative(f, g, "space")
    h = g.dx
    d_fd = (-np.roll(f, -2) + 8 * np.roll(f, -1) - 8 * np.roll(f, 1) + np.roll(f, 2)) / (12 * h)
    # fifth harmonic: error constant k^5 h^4 / 30
    k = 2 * math.pi * 5 / 100
    bound = 6 * k**5 * h**4 / 30 * np.abs(f).max() + 1e-12
    assert np.max(np.abs(d_spec - d_fd)) < bound


def test_time_axis_derivative():
    g = build_grid(10, 4, 40, 80)
    w = 2 * math.pi * 3 / 40
    f = np.tile(np.cos(w * g.t), (4, 1))
    np.testing.assert_allclose(fourier_derivative(f, g, "time"), -w * np.sin(w * g.t)[None].repeat(4, 0), atol=1e-10)


def test_derivative_order_validation():
    g = build_grid(10, 8, 1, 8)
    with pytest.raises(InvalidArgument):
        fourier_derivative(np.zeros(8), g, "space", order=0)
    with pytest.raises(InvalidArgument):
        fourier_derivative(np.zeros(7), g, "space")
    with pytest.raises(InvalidArgument):
        fourier_derivative(np.zeros(8), g, "depth")


def test_derivative_accepts_torch_and_batches():
    g = build_grid(30, 12, 6, 10)
    f = torch.randn(3, 12, 10, dtype=torch.float64)
    out = fourier_derivative(f, g, "space")
    assert isinstance(out, torch.Tensor)
    for b in range(3):
        np.testing.assert_allclose(out[b].numpy(), fourier_derivative(f[b].numpy(), g, "space"), atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 40), st.integers(0, 2**31 - 1))
def test_first_derivative_twice_equals_second(n, seed):
    g = build_grid(17.0, n, 1.0, 4)
    rng = np.random.default_rng(seed)
    spec = np.zeros(n, complex)
    m = (n - 1) // 2  # band-limited below Nyquist
    spec[1:m + 1] = rng.normal(size=m) + 1j * rng.normal(size=m)
    f = np.fft.ifft(spec + np.conj(np.roll(spec[::-1], 1))).real
    twice = fourier_derivative(fourier_derivative(f, g), g)
    once = fourier_derivative(f, g, order=2)
    scale = max(np.abs(once).max(), 1e-300)
    assert np.max(np.abs(twice - once)) <= 1e-9 * scale


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**31 - 1))
def test_parseval(n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    energy = np.sum(x**2)
    spec = np.sum(np.abs(np.fft.fft(x)) ** 2) / n
    assert spec == pytest.approx(energy, rel=1e-10)
    spec_t = float(torch.sum(torch.fft.fft(torch.as_tensor(x)).abs() ** 2)) / n
    assert spec_t == pytest.approx(energy, rel=1e-10)


# --- windows ---------------------------------------------------------------

def test_tukey_degenerate_cases():
    np.testing.assert_array_equal(tukey_window(17, 0.0), np.ones(17))
    hann = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(17) / 16)
    np.testing.assert_allclose(tukey_window(17, 1.0), hann, atol=1e-15)
    assert tukey_window(17, 1.0)[0] == pytest.approx(0.0)


def _tukey_closed_form(n, alpha):
    out = np.ones(n)
    width = alpha * (n - 1) / 2
    for i in range(n):
        j = min(i, n - 1 - i)
        if j < width:
            out[i] = 0.5 * (1 - math.cos(math.pi * j / width))
    return out


def test_tukey_flat_region_default_width():
    w = tukey_window(500, 0.5)
    np.testing.assert_allclose(w, _tukey_closed_form(500, 0.5), atol=1e-14)
    assert np.all(w[125:375] == 1.0)
    assert w[124] < 1 and w[375] < 1


def test_tukey_validation():
    with pytest.raises(InvalidArgument):
        tukey_window(1, 0.5)
    with pytest.raises(InvalidArgument):
        tukey_window(10, 1.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 300), st.floats(0, 1))
def test_tukey_symmetric(n, alpha):
    w = tukey_window(n, alpha)
    np.testing.assert_allclose(w, w[::-1], atol=1e-15)


def test_space_time_window_is_separable():
    g = build_grid(100, 40, 20, 50)
    w = space_time_window(g)
    assert w.shape == g.shape
    assert w[20, 25] == 1.0


# --- spectra ---------------------------------------------------------------

def test_spectrum_argmax_at_peak_wavenumber():
    g = build_grid(1953, 500, 100, 500)
    f = sample_spectrum_realization(SpectrumParams(150, 0.05, 3.3, 500, 7), g)
    amp = np.abs(np.fft.rfft(f.eta))
    k = 2 * np.pi * np.fft.rfftfreq(g.n_x, g.dx)
    # with random phases every mode keeps its spectral amplitude exactly
    assert abs(k[np.argmax(amp)] - 2 * np.pi / 150) <= 2 * np.pi / 1953 / 2 + 1e-12


def test_spectrum_shape_peaks_at_kp():
    k = np.linspace(0.005, 0.3, 5000)
    s = jonswap_tma_wavenumber(k, 150.0)
    assert k[np.argmax(s)] == pytest.approx(2 * np.pi / 150, rel=0.02)


def test_realization_steepness_and_mean():
    g = build_grid(1953, 500, 100, 500)
    f = sample_spectrum_realization(SpectrumParams(120, 0.08, rng_seed=3), g)
    kp = 2 * np.pi / 120
    assert kp * 4 * f.eta.std() / 2 == pytest.approx(0.08, rel=1e-12)
    assert abs(f.eta.mean()) < 1e-10 * f.eta.std()


def test_realization_small_steepness_limit():
    g = build_grid(1000, 128, 10, 8)
    f = sample_spectrum_realization(SpectrumParams(150, 1e-12, rng_seed=1), g)
    assert np.max(np.abs(f.eta)) < 1e-10


def test_realization_deterministic():
    g = build_grid(1000, 128, 10, 8)
    p = SpectrumParams(150, 0.05, rng_seed=2**63 + 5)
    a = sample_spectrum_realization(p, g)
    b = sample_spectrum_realization(p, g)
    assert a.eta.tobytes() == b.eta.tobytes() and a.phis.tobytes() == b.phis.tobytes()


def test_realization_potential_is_linear_theory():
    g = build_grid(1000, 256, 10, 8)
    f = sample_spectrum_realization(SpectrumParams(150, 0.05, rng_seed=4), g)
    k = 2 * np.pi * np.fft.rfftfreq(g.n_x, g.dx)
    e_hat = np.fft.rfft(f.eta)
    p_hat = np.fft.rfft(f.phis)
    w = dispersion_omega(k[1:], g.depth)
    # phi = (g / omega) * quadrature of eta, component by component
    np.testing.assert_allclose(p_hat[1:], -1j * g.g / w * e_hat[1:], atol=1e-9 * np.abs(p_hat).max())


def test_realization_rejects_long_peak():
    g = build_grid(400, 64, 10, 8)
    with pytest.raises(InvalidArgument):
        sample_spectrum_realization(SpectrumParams(150, 0.05), g)


@pytest.mark.parametrize("kw", [dict(peak_wavelength=0, steepness=0.1), dict(peak_wavelength=100, steepness=0.0),
                                dict(peak_wavelength=100, steepness=0.25),
                                dict(peak_wavelength=100, steepness=0.1, peak_enhancement=0.5)])
def test_spectrum_params_validation(kw):
    with pytest.raises(InvalidArgument):
        SpectrumParams(**kw)


def test_wavefield_validation():
    g = build_grid(10, 4, 1, 3)
    with pytest.raises(InvalidArgument):
        WaveField(np.zeros((4, 3)), np.zeros((4, 2)), g)
    with pytest.raises(InvalidArgument):
        WaveField(np.full((4, 3), np.nan), np.zeros((4, 3)), g)
