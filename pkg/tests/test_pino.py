from __future__ import annotations

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from pinowave import pino
from pinowave.errors import ContractViolation, InvalidArgument
from pinowave.pino import ArchConfig, init_parameters, parameter_count, spectral_conv

# rows of the reference parameter table: (case, n_F, n_m, n_w) -> #weights
TABLE = [
    ("A_buoy", 2, 64, 16, 5, 8_398_521),
    ("A_buoy", 2, 128, 32, 5, 134_231_289),
    ("A_buoy", 3, 128, 32, 5, 201_341_209),
    ("A_buoy", 3, 64, 64, 5, 201_354_681),
    ("A_buoy", 4, 256, 16, 5, 268_445_913),
    ("A_buoy", 4, 128, 48, 5, 604_002_713),
    ("B_radar", 3, 128, 64, 50, 805_356_957),
    ("B_radar", 2, 64, 16, 50, 8_421_021),
]


@pytest.mark.parametrize("case,n_f,n_m,n_w,n_s,count", TABLE)
def test_parameter_count_table(case, n_f, n_m, n_w, n_s, count):
    assert parameter_count(ArchConfig(case, n_f, n_m, n_w, 12, n_s, 500, 500)) == count


@pytest.mark.parametrize("cfg", [ArchConfig("A_buoy", 2, 4, 3, 4, 3, 16, 12), ArchConfig("B_radar", 1, 3, 5, 2, 4, 10, 14),
                                 ArchConfig("A_buoy", 1, 2, 2, 0, 2, 8, 8, coord_channels=True)])
def test_parameter_count_matches_module(cfg):
    assert init_parameters(cfg).n_parameters() == parameter_count(cfg)


def test_mode_bound_validation():
    ArchConfig("A_buoy", 1, 256, 4, 12, 5, 500, 500)
    with pytest.raises(InvalidArgument):
        ArchConfig("A_buoy", 1, 257, 4, 12, 5, 500, 500)
    with pytest.raises(InvalidArgument):
        ArchConfig("A_buoy", 1, 8, 4, 0, 5, 32, 12)  # 8 > 12 // 2 + 1
    with pytest.raises(InvalidArgument):
        ArchConfig("C", 1, 2, 2)


def test_output_shapes_both_cases():
    a = init_parameters(ArchConfig("A_buoy", 2, 4, 4, 4, 5, 20, 24))
    assert a(torch.zeros(5, 24)).shape == (20, 24)
    assert a(torch.zeros(3, 5, 24)).shape == (3, 20, 24)
    b = init_parameters(ArchConfig("B_radar", 2, 4, 4, 4, 6, 20, 24))
    assert b(torch.zeros(20, 6)).shape == (20, 24)
    with pytest.raises(InvalidArgument):
        b(torch.zeros(6, 20))


def test_zero_parameters_give_zero_output():
    m = init_parameters(ArchConfig("A_buoy", 2, 4, 4, 4, 5, 20, 24))
    with torch.no_grad():
        for p in m.parameters():
            p.zero_()
    out = m(torch.randn(5, 24))
    assert torch.all(out == 0)


def _lowpass_oracle(v: np.ndarray, n_modes: int) -> np.ndarray:
    n1, n2 = v.shape[-2:]
    spec = np.fft.rfft2(v)
    mask = np.zeros(spec.shape, bool)
    mask[np.r_[0:n_modes, n1 - n_modes:n1], :n_modes] = True
    mask[n1 - n_modes, 0] = False  # keep the retained set conjugate-closed
    return np.fft.irfft2(spec * mask, s=(n1, n2))


def test_identity_spectral_weights_are_lowpass():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(1, 1, 16, 16))
    w_re = torch.ones(2, 3, 3, 1, 1, dtype=torch.float64)
    w_im = torch.zeros_like(w_re)
    out = spectral_conv(torch.as_tensor(v), w_re, w_im, 3).numpy()[0, 0]
    np.testing.assert_allclose(out, _lowpass_oracle(v[0, 0], 3), atol=1e-12)


def test_spectral_conv_idempotent_with_identity_weights():
    v = torch.randn(2, 1, 12, 10, dtype=torch.float64)
    w_re = torch.ones(2, 3, 3, 1, 1, dtype=torch.float64)
    w_im = torch.zeros_like(w_re)
    once = spectral_conv(v, w_re, w_im, 3)
    twice = spectral_conv(once, w_re, w_im, 3)
    torch.testing.assert_close(twice, once, atol=1e-12, rtol=0)


def test_single_mode_input_maps_to_scaled_mode():
    n1, n2 = 16, 12
    x = np.arange(n1)[:, None]
    t = np.arange(n2)[None, :]
    v = np.cos(2 * np.pi * (2 * x / n1 + 1 * t / n2))
    w_re = torch.zeros(2, 3, 3, 1, 1, dtype=torch.float64)
    w_im = torch.zeros_like(w_re)
    w_re[0, 2, 1] = 0.5  # positive row 2, column 1
    w_im[0, 2, 1] = 0.5
    out = spectral_conv(torch.as_tensor(v)[None, None], w_re, w_im, 3).numpy()[0, 0]
    # multiplying e^{i theta} by (0.5 + 0.5i) = r e^{i pi/4}
    expected = np.sqrt(0.5) * np.cos(2 * np.pi * (2 * x / n1 + 1 * t / n2) + np.pi / 4)
    np.testing.assert_allclose(out, expected, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4), st.integers(1, 3))
def test_spectral_conv_matches_complex_einsum(seed, n_modes, width):
    gen = torch.Generator().manual_seed(seed)
    v = torch.randn(2, width, 10, 9, generator=gen, dtype=torch.float64)
    w_re = torch.randn(2, n_modes, n_modes, width, width, generator=gen, dtype=torch.float64)
    w_im = torch.randn(2, n_modes, n_modes, width, width, generator=gen, dtype=torch.float64)
    spec = torch.fft.rfft2(v)
    out_spec = torch.zeros(2, width, 10, 9 // 2 + 1, dtype=torch.complex128)
    w = torch.complex(w_re, w_im)
    out_spec[..., :n_modes, :n_modes] = torch.einsum("bixy,xyio->boxy", spec[..., :n_modes, :n_modes], w[0])
    out_spec[..., -n_modes:, :n_modes] = torch.einsum("bixy,xyio->boxy", spec[..., -n_modes:, :n_modes], w[1])
    if 2 * n_modes < 10:
        out_spec[..., 10 - n_modes, 0] = 0
    expected = torch.fft.irfft2(out_spec, s=(10, 9))
    torch.testing.assert_close(spectral_conv(v, w_re, w_im, n_modes), expected, atol=1e-12, rtol=0)


def test_seeded_init_is_deterministic_and_bounded():
    cfg = ArchConfig("A_buoy", 2, 4, 4, 4, 5, 20, 24)
    a, b, c = init_parameters(cfg, 3), init_parameters(cfg, 3), init_parameters(cfg, 4)
    for (n, pa), pb, pc in zip(a.named_parameters(), b.parameters(), c.parameters()):
        assert torch.equal(pa, pb), n
    assert not torch.equal(a.layers[0].spectral_re, c.layers[0].spectral_re)
    s = a.layers[0].spectral_re
    assert s.min() >= 0 and s.max() < 1 / 16


def test_forward_backward_contract():
    cfg = ArchConfig("A_buoy", 1, 3, 3, 2, 2, 8, 8)
    m = init_parameters(cfg, 0, torch.float64)
    x = torch.randn(2, 8, dtype=torch.float64)
    with pytest.raises(ContractViolation):
        pino.backward(m, x, torch.ones(8, 8))
    out = pino.forward(m, x)
    with pytest.raises(ContractViolation):
        pino.backward(m, x + 1, torch.ones_like(out))
    pino.forward(m, x)
    with torch.no_grad():
        m.layers[0].bias.add_(0.1)  # parameters changed since the forward pass
    with pytest.raises(ContractViolation):
        pino.backward(m, x, torch.ones_like(out))
    pino.forward(m, x)
    with pytest.raises(InvalidArgument):
        pino.backward(m, x, torch.ones(3, 3))


def test_zero_upstream_gives_zero_gradients():
    m = init_parameters(ArchConfig("B_radar", 2, 3, 3, 2, 3, 8, 8), 0, torch.float64)
    x = torch.randn(8, 3, dtype=torch.float64)
    out = pino.forward(m, x)
    grads = pino.backward(m, x, torch.zeros_like(out))
    assert set(grads) == {n for n, _ in m.named_parameters()}
    assert all(torch.all(g == 0) for g in grads.values())


def test_output_bias_gradient_is_upstream_sum():
    m = init_parameters(ArchConfig("A_buoy", 1, 3, 3, 2, 2, 8, 8), 0, torch.float64)
    x = torch.randn(2, 8, dtype=torch.float64)
    up = torch.randn(8, 8, dtype=torch.float64)
    out = pino.forward(m, x)
    grads = pino.backward(m, x, up)
    last = f"projection.{len(m.projection) - 1}.bias"
    assert grads[last].item() == pytest.approx(up.sum().item(), rel=1e-12)


def test_linear_model_gradient_matches_closed_form():
    # identity activations make the output linear in the lift-I bias: out = A b + c
    cfg = ArchConfig("A_buoy", 1, 2, 2, 2, 2, 6, 6, activation="identity")
    m = init_parameters(cfg, 1, torch.float64)
    x = torch.randn(2, 6, dtype=torch.float64)
    up = torch.randn(6, 6, dtype=torch.float64)
    pino.forward(m, x)
    g = pino.backward(m, x, up)["lift_i_bias"]
    base = m(x).detach()
    cols = []
    for i in range(6):
        with torch.no_grad():
            m.lift_i_bias[i] += 1.0
            cols.append((m(x) - base).reshape(-1))
            m.lift_i_bias[i] -= 1.0
    jac = torch.stack(cols, dim=1)  # exact for an affine map
    torch.testing.assert_close(g, jac.t() @ up.reshape(-1), atol=1e-10, rtol=1e-10)
