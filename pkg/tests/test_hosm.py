from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from pinowave.errors import InvalidArgument, SolverDiverged
from pinowave.hosm import (
    DEFAULT_PEAK_WAVELENGTHS,
    DEFAULT_STEEPNESSES,
    HosmConfig,
    SolverState,
    _expand_grid,
    advance,
    compute_vertical_velocity,
    fsbc_rhs,
    generate_dataset,
    integrate,
    sample_seed,
    simulate_sample,
)
from pinowave.io import DatasetReader, DatasetWriter
from pinowave.wavecore import SpectrumParams, build_grid, dispersion_omega, peak_period, sample_spectrum_realization


def _k(grid):
    return 2 * np.pi * np.fft.fftfreq(grid.n_x, grid.dx)


def _apply(f, mult):
    return np.fft.ifft(np.fft.fft(f) * mult).real


def test_config_validation():
    with pytest.raises(InvalidArgument):
        HosmConfig(order=0)
    with pytest.raises(InvalidArgument):
        HosmConfig(order=9)
    with pytest.raises(InvalidArgument):
        HosmConfig(internal_dt=0)
    with pytest.raises(InvalidArgument):
        HosmConfig(relaxation_periods=-1)


@pytest.mark.parametrize("order", [1, 3, 6])
def test_flat_surface_gives_linear_operator(order):
    g = build_grid(300, 64, 1, 2, depth=40)
    rng = np.random.default_rng(order)
    phis = rng.normal(size=g.n_x)
    w = compute_vertical_velocity(np.zeros(g.n_x), phis, HosmConfig(order=order), g)
    k = _k(g)
    expected = _apply(phis, np.abs(k) * np.tanh(np.abs(k) * g.depth))
    # the resampling drops the Nyquist mode; compare on the resolved band
    expected = _apply(expected, (np.arange(g.n_x) != g.n_x // 2))
    np.testing.assert_allclose(w, expected, atol=1e-12)


def test_single_harmonic_deep_water():
    g = build_grid(200, 32, 1, 2, depth=1e4)
    k1 = 2 * np.pi * 3 / 200
    w = compute_vertical_velocity(np.zeros(g.n_x), np.cos(k1 * g.x), HosmConfig(order=1), g)
    np.testing.assert_allclose(w, k1 * np.cos(k1 * g.x), atol=1e-12)


def test_second_order_against_direct_expansion():
    # W = K phi + eta * d2z phi - K(eta * K phi), K = k tanh(kd)
    g = build_grid(100, 64, 1, 2, depth=30)
    x = g.x
    k = np.abs(_k(g))
    kt = k * np.tanh(k * g.depth)
    eta = 0.3 * np.cos(2 * np.pi * 2 * x / 100) + 0.1 * np.sin(2 * np.pi * 3 * x / 100)
    phis = 2.0 * np.sin(2 * np.pi * 2 * x / 100 + 0.4) + 0.5 * np.cos(2 * np.pi * 5 * x / 100)
    w1 = _apply(phis, kt)
    w2 = eta * _apply(phis, k**2) - _apply(eta * _apply(phis, kt), kt)
    for dealias in (True, False):
        w = compute_vertical_velocity(eta, phis, HosmConfig(order=2, dealias=dealias), g)
        np.testing.assert_allclose(w, w1 + w2, atol=1e-11)


def test_vertical_velocity_batches_trailing_axes_and_torch():
    g = build_grid(100, 32, 1, 2)
    rng = np.random.default_rng(1)
    eta = 0.05 * rng.normal(size=(32, 3))
    phis = rng.normal(size=(32, 3))
    cfg = HosmConfig(order=4)
    w = compute_vertical_velocity(eta, phis, cfg, g)
    for j in range(3):
        np.testing.assert_allclose(w[:, j], compute_vertical_velocity(eta[:, j], phis[:, j], cfg, g), atol=1e-13)
    wt = compute_vertical_velocity(torch.as_tensor(eta), torch.as_tensor(phis), cfg, g)
    assert isinstance(wt, torch.Tensor)
    np.testing.assert_array_equal(wt.numpy(), w)


def test_still_water_is_fixed_point():
    g = build_grid(100, 32, 1, 2)
    de, dp = fsbc_rhs(SolverState(np.zeros(32), np.zeros(32)), HosmConfig(), g)
    assert np.all(de == 0) and np.all(dp == 0)


def test_small_airy_rates():
    g = build_grid(400, 64, 1, 2)
    a = 1e-3
    k = 2 * np.pi * 4 / 400
    w = float(dispersion_omega(k, g.depth))
    eta = a * np.cos(k * g.x)
    phis = a * g.g / w * np.sin(k * g.x)
    de, dp = fsbc_rhs(SolverState(eta, phis), HosmConfig(order=4), g)
    # linear rates: eta_t = W = a w sin(kx), phi_t = -g eta
    np.testing.assert_allclose(de, a * w * np.sin(k * g.x), atol=10 * (a * k) * a * w)
    np.testing.assert_allclose(dp, -g.g * eta, atol=10 * (a * k) * a * g.g)


def test_mean_dynamic_rate_bounded_by_nonlinear_terms():
    g = build_grid(1000, 128, 1, 2)
    f = sample_spectrum_realization(SpectrumParams(150, 0.1, rng_seed=5), g)
    cfg = HosmConfig(order=4)
    de, dp = fsbc_rhs(SolverState(f.eta, f.phis), cfg, g)
    phix = np.gradient(f.phis, g.dx)
    w = compute_vertical_velocity(f.eta, f.phis, cfg, g)
    nonlinear = np.max(0.5 * phix**2 + 0.5 * w**2 * 2)
    assert abs(np.mean(dp + g.g * f.eta)) <= nonlinear


def test_rhs_rejects_non_finite():
    g = build_grid(10, 8, 1, 2)
    with pytest.raises(InvalidArgument):
        fsbc_rhs(SolverState(np.full(8, np.nan), np.zeros(8)), HosmConfig(), g)


def test_zero_state_gives_zero_trajectory():
    g = build_grid(100, 32, 2, 10)
    traj = integrate(SolverState(np.zeros(32), np.zeros(32)), 1.8, HosmConfig(), g)
    assert traj.eta.shape == (32, 10)
    assert np.all(traj.eta == 0) and np.all(traj.phis == 0)
    np.testing.assert_allclose(traj.times, g.t)


def test_integrate_validation():
    g = build_grid(100, 32, 2, 10)
    s = SolverState(np.zeros(32), np.zeros(32), 1.0)
    with pytest.raises(InvalidArgument):
        integrate(s, 0.5, HosmConfig(), g)
    with pytest.raises(InvalidArgument):
        advance(s, -1.0, HosmConfig(), g)


def test_divergence_guard_names_step():
    g = build_grid(200, 32, 4, 20)
    k = 2 * np.pi * 4 / 200
    eta = 0.5 * np.cos(k * g.x)
    phis = 0.5 * g.g / float(dispersion_omega(k, g.depth)) * np.sin(k * g.x)
    with pytest.raises(SolverDiverged) as info:
        integrate(SolverState(eta, phis), 3.8, HosmConfig(amplitude_cap=0.26), g)
    assert info.value.step is not None and info.value.step >= 1


def test_airy_linear_propagation():
    g = build_grid(400, 32, 20, 100)
    k = 2 * np.pi * 4 / 400
    w = float(dispersion_omega(k, g.depth))
    a = 0.01 / k
    eta = a * np.cos(k * g.x)
    phis = a * g.g / w * np.sin(k * g.x)
    traj = integrate(SolverState(eta, phis), 19.8, HosmConfig(order=1, consistent=True, internal_dt=0.05), g)
    expected = a * np.cos(k * g.x[:, None] - w * traj.times[None, :])
    assert np.max(np.abs(traj.eta - expected)) < 1e-6 * a


def test_mass_drift_over_100s():
    g = build_grid(1000, 128, 100, 100)
    f = sample_spectrum_realization(SpectrumParams(150, 0.08, rng_seed=11), g)
    traj = integrate(SolverState(f.eta, f.phis), 99.0, HosmConfig(order=4, internal_dt=0.1), g)
    drift = np.max(np.abs(traj.eta.mean(axis=0) - traj.eta[:, 0].mean()))
    assert drift < 1e-6 * f.eta.std()


def test_time_step_convergence():
    g = build_grid(1000, 64, 20, 20)
    f = sample_spectrum_realization(SpectrumParams(150, 0.05, rng_seed=2), g)
    s = SolverState(f.eta, f.phis)
    a = integrate(s, 19.0, HosmConfig(order=4, internal_dt=0.05), g).eta[:, -1]
    b = integrate(s, 19.0, HosmConfig(order=4, internal_dt=0.025), g).eta[:, -1]
    assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-5


def _order_gaps(eps):
    g = build_grid(1000, 128, 20, 20)
    f = sample_spectrum_realization(SpectrumParams(150, eps, rng_seed=9), g)
    s = SolverState(f.eta, f.phis)
    runs = {m: integrate(s, 19.0, HosmConfig(order=m, internal_dt=0.1), g).eta for m in (1, 2, 3, 4)}
    scale = np.linalg.norm(runs[4])
    return {m: np.linalg.norm(runs[m] - runs[4]) / scale for m in (1, 2, 3)}


def test_orders_agree_at_small_steepness():
    # relative gaps O(eps^M), i.e. O(eps^(M+1)) in absolute elevation
    small, large = _order_gaps(0.02), _order_gaps(0.04)
    for m in (1, 2, 3):
        assert small[m] < 10 * 0.02**m
        assert 0.6 * 2**m < large[m] / small[m] < 1.5 * 2**m


def test_simulate_sample_relaxes_then_records():
    g = build_grid(1000, 64, 8, 20)
    p = SpectrumParams(150, 0.03, rng_seed=4)
    cfg = HosmConfig(order=2, internal_dt=0.2, relaxation_periods=2)
    field = simulate_sample(p, g, cfg)
    assert field.eta.shape == (64, 20)
    tp = peak_period(150, g.depth)
    assert tp == pytest.approx(2 * math.pi / float(dispersion_omega(2 * math.pi / 150, g.depth)))
    init = sample_spectrum_realization(p, g)
    relaxed = advance(SolverState(init.eta, init.phis), 2 * tp, cfg, g)
    np.testing.assert_allclose(field.eta[:, 0], relaxed.eta, atol=1e-12)
    np.testing.assert_allclose(field.phis.mean(axis=0), 0, atol=1e-12)


def test_default_grid_size():
    assert len(_expand_grid((DEFAULT_PEAK_WAVELENGTHS, DEFAULT_STEEPNESSES))) * 8 == 1056
    assert DEFAULT_STEEPNESSES[-1] == 0.13 and DEFAULT_PEAK_WAVELENGTHS[-1] == 200


def test_seeds_are_distinct_and_stable():
    seeds = {sample_seed(0, lp, eps, r) for lp in (100, 110) for eps in (0.02, 0.03) for r in range(3)}
    assert len(seeds) == 12
    assert sample_seed(0, 100, 0.02, 0) == sample_seed(0, 100, 0.02, 0)


def test_generate_dataset_single_sample(tmp_path):
    g = build_grid(600, 32, 4, 10)
    cfg = HosmConfig(order=2, internal_dt=0.2, relaxation_periods=1)
    manifest = generate_dataset([(150, 0.05)], 1, cfg, DatasetWriter(tmp_path), g, base_seed=3)
    assert len(manifest["samples"]) == 1
    rec = manifest["samples"][0]
    assert rec["status"] == "ok" and rec["lp"] == 150 and rec["eps"] == 0.05
    r = DatasetReader(tmp_path)
    assert r.read_array(rec["id"], "eta").shape == (32, 10)
    assert r.meta["grid"]["n_x"] == 32


def test_generate_dataset_records_failures(tmp_path):
    g = build_grid(600, 32, 4, 10)
    cfg = HosmConfig(order=2, internal_dt=0.2, relaxation_periods=1, amplitude_cap=0.3)
    manifest = generate_dataset([(150, 0.12), (150, 0.02)], 1, cfg, DatasetWriter(tmp_path), g)
    status = {s["eps"]: s["status"] for s in manifest["samples"]}
    assert status[0.12] == "failed"
    assert "error" in manifest["samples"][0]
    assert len(manifest["samples"]) == 2
