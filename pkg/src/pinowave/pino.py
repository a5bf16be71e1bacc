"""Fourier neural operator mapping sparse wave measurements to a space-time field.

Dataflow (channels-first internally)::

    measurement --center, I--> (n_x, n_t) --P--> (n_w, n_x, n_t) --pad--> n_F Fourier layers
        --unpad--> Q: n_w -> 128 -> 32 -> 1 --> eta (n_x, n_t)

``I`` is a dense map over the sparse axis: buoys -> space for buoy input,
snapshots -> time for radar input. Each Fourier layer computes
``sigma(spectral_conv(v) + W v + b)``.

Spectral truncation keeps, on the zero-padded grid of shape (N1, N2), the
rows ``0..n_m-1`` and ``N1-n_m..N1-1`` of the space frequencies and columns
``0..n_m-1`` of the real-transform (time) half spectrum; a separate complex
weight block acts on each row set. In the self-conjugate columns (zero and,
when kept, Nyquist) row ``N1-n_m`` is dropped so the retained set is closed
under conjugation and the truncation is a projection. Complex weights are stored as separate
real and imaginary tensors laid out mode-major for batched matrix products.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import ContractViolation, InvalidArgument

Case = Literal["A_buoy", "B_radar"]
PROJECTION_HIDDEN = (128, 32)
PROJECTION_CHUNK = 8192


@dataclass(frozen=True)
class ArchConfig:
    case: Case = "A_buoy"
    n_layers: int = 3
    n_modes: int = 128
    width: int = 32
    pad: int = 12
    n_sparse: int = 5  # buoys (case A) or radar snapshots (case B)
    n_x: int = 500
    n_t: int = 500
    activation: Literal["gelu", "identity"] = "gelu"
    coord_channels: bool = False
    center_input: bool = True  # remove each sensor channel's time mean before lifting

    def __post_init__(self):
        if self.case not in ("A_buoy", "B_radar"):
            raise InvalidArgument(f"unknown case {self.case!r}")
        if self.n_layers < 1 or self.width < 1 or self.n_modes < 1:
            raise InvalidArgument("n_layers, width and n_modes must be positive")
        if self.pad < 0 or self.n_sparse < 1:
            raise InvalidArgument("pad must be >= 0 and n_sparse >= 1")
        n1, n2 = self.padded_shape
        if 2 * self.n_modes > n1 or self.n_modes > n2 // 2 + 1:
            raise InvalidArgument(f"n_modes={self.n_modes} too large for padded grid {n1}x{n2}")
        if self.activation not in ("gelu", "identity"):
            raise InvalidArgument(f"unknown activation {self.activation!r}")

    @property
    def padded_shape(self) -> tuple[int, int]:
        return self.n_x + self.pad, self.n_t + self.pad

    @property
    def input_shape(self) -> tuple[int, int]:
        if self.case == "A_buoy":
            return (self.n_sparse, self.n_t)
        return (self.n_x, self.n_sparse)

    @property
    def in_channels(self) -> int:
        return 3 if self.coord_channels else 1

    def to_dict(self) -> dict:
        return asdict(self)


def parameter_count(cfg: ArchConfig) -> int:
    """Number of real trainable scalars; complex weights count twice."""
    n_w, n_m = cfg.width, cfg.n_modes
    expand = cfg.n_x if cfg.case == "A_buoy" else cfg.n_t
    lift = cfg.n_sparse * expand + expand + (cfg.in_channels + 1) * n_w
    layers = cfg.n_layers * (2 * 2 * n_m * n_m * n_w * n_w + n_w * n_w + n_w)
    dims = (n_w, *PROJECTION_HIDDEN, 1)
    proj = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    return lift + layers + proj


def _gelu(x, activation):
    # exact erf form
    return F.gelu(x, approximate="none") if activation == "gelu" else x


def spectral_conv(v: torch.Tensor, weights_re: torch.Tensor, weights_im: torch.Tensor, n_modes: int) -> torch.Tensor:
    """Truncated Fourier channel mixing on the last two axes of ``v`` (B, C, N1, N2).

    ``weights_re``/``weights_im`` hold the real and imaginary parts of the mode
    weights, shape (2, n_modes, n_modes, C_in, C_out); block 0 acts on the
    non-negative space-frequency rows, block 1 on the negative ones.
    """
    b, c, n1, n2 = v.shape
    c_out = weights_re.shape[-1]
    n_kept = 2 * n_modes * n_modes
    half = torch.fft.rfft(v, dim=-1)[..., :n_modes]
    spec = torch.fft.fft(half, dim=-2)
    kept = torch.cat([spec[..., :n_modes, :], spec[..., n1 - n_modes:, :]], dim=-2)
    # (modes, [real; imag] x batch, C): each weight tensor is streamed once
    x = torch.view_as_real(kept).permute(2, 3, 4, 0, 1).reshape(n_kept, 2 * b, c)
    by_re = torch.bmm(x, weights_re.reshape(n_kept, c, c_out))
    by_im = torch.bmm(x, weights_im.reshape(n_kept, c, c_out))
    real = by_re[:, :b] - by_im[:, b:]
    imag = by_im[:, :b] + by_re[:, b:]
    out = torch.complex(real, imag).reshape(2 * n_modes, n_modes, b, c_out).permute(2, 3, 0, 1)
    mixed = out.new_zeros((b, c_out, n1, n_modes))
    mixed[..., :n_modes, :] = out[..., :n_modes, :]
    mixed[..., n1 - n_modes:, :] = out[..., n_modes:, :]
    if 2 * n_modes < n1:
        # row -n_modes has no conjugate partner in the self-conjugate columns
        unpaired = [0] + ([n2 // 2] if n2 % 2 == 0 and n_modes > n2 // 2 else [])
        mixed[..., n1 - n_modes, unpaired] = 0
    mixed = torch.fft.ifft(mixed, dim=-2)
    return torch.fft.irfft(mixed, n=n2, dim=-1)


class FourierLayer(nn.Module):
    def __init__(self, width: int, n_modes: int, dtype=torch.float32):
        super().__init__()
        self.n_modes = n_modes
        shape = (2, n_modes, n_modes, width, width)
        self.spectral_re = nn.Parameter(torch.zeros(shape, dtype=dtype))
        self.spectral_im = nn.Parameter(torch.zeros(shape, dtype=dtype))
        self.pointwise = nn.Parameter(torch.zeros((width, width), dtype=dtype))
        self.bias = nn.Parameter(torch.zeros(width, dtype=dtype))

    @property
    def spectral_weights(self) -> torch.Tensor:
        """Complex mode weights, shape (2, n_modes, n_modes, C_in, C_out)."""
        return torch.complex(self.spectral_re, self.spectral_im)

    def forward(self, v, activation="gelu"):
        out = spectral_conv(v, self.spectral_re, self.spectral_im, self.n_modes)
        local = F.conv2d(v, self.pointwise.t()[:, :, None, None], self.bias)
        return _gelu(out.add_(local), activation)


class OperatorModel(nn.Module):
    """Parameter container and forward map for one :class:`ArchConfig`."""

    def __init__(self, cfg: ArchConfig, dtype=torch.float32):
        super().__init__()
        self.cfg = cfg
        self.dtype = dtype
        expand = cfg.n_x if cfg.case == "A_buoy" else cfg.n_t
        self.lift_i_weight = nn.Parameter(torch.zeros((expand, cfg.n_sparse), dtype=dtype))
        self.lift_i_bias = nn.Parameter(torch.zeros(expand, dtype=dtype))
        self.lift_p_weight = nn.Parameter(torch.zeros((cfg.in_channels, cfg.width), dtype=dtype))
        self.lift_p_bias = nn.Parameter(torch.zeros(cfg.width, dtype=dtype))
        self.layers = nn.ModuleList(FourierLayer(cfg.width, cfg.n_modes, dtype) for _ in range(cfg.n_layers))
        dims = (cfg.width, *PROJECTION_HIDDEN, 1)
        self.projection = nn.ModuleList(nn.Linear(a, b, dtype=dtype) for a, b in zip(dims[:-1], dims[1:]))
        self._cache = None

    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, measurement: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        m = measurement.to(self.dtype)
        squeeze = m.ndim == 2
        if squeeze:
            m = m[None]
        if tuple(m.shape[1:]) != cfg.input_shape:
            raise InvalidArgument(f"measurement shape {tuple(m.shape[1:])} does not match {cfg.input_shape}")
        if cfg.center_input:
            # the last axis is time for both inputs; drops the range-dependent tilt offset of radar rows
            m = m - m.mean(dim=-1, keepdim=True)
        if cfg.case == "A_buoy":
            u = torch.einsum("xs,bst->bxt", self.lift_i_weight, m) + self.lift_i_bias[:, None]
        else:
            u = torch.einsum("ts,bxs->bxt", self.lift_i_weight, m) + self.lift_i_bias
        chans = [u]
        if cfg.coord_channels:
            xs = torch.linspace(0, 1, cfg.n_x, dtype=self.dtype)[:, None].expand(cfg.n_x, cfg.n_t)
            ts = torch.linspace(0, 1, cfg.n_t, dtype=self.dtype)[None, :].expand(cfg.n_x, cfg.n_t)
            chans += [xs.expand_as(u), ts.expand_as(u)]
        u = torch.stack(chans, dim=1)  # (B, c, X, T)
        v = torch.einsum("bcxt,cw->bwxt", u, self.lift_p_weight) + self.lift_p_bias[:, None, None]
        v = F.pad(v, (0, cfg.pad, 0, cfg.pad))
        for layer in self.layers:
            v = layer(v, cfg.activation)
        v = v[..., : cfg.n_x, : cfg.n_t].permute(0, 2, 3, 1).reshape(-1, cfg.width)
        # row chunks keep the 128-wide hidden activations cache-resident
        out = torch.cat([self._project(chunk) for chunk in v.split(PROJECTION_CHUNK)])
        out = out.reshape(-1, cfg.n_x, cfg.n_t)
        return out[0] if squeeze else out

    def _project(self, v):
        for i, lin in enumerate(self.projection):
            v = lin(v)
            if i < len(self.projection) - 1:
                v = _gelu(v, self.cfg.activation)
        return v[:, 0]


def init_parameters(cfg: ArchConfig, seed: int = 0, dtype=torch.float32) -> OperatorModel:
    """Seeded initialization: spectral blocks ~ U[0,1)/n_w^2 (real and imaginary
    parts), every dense weight and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    model = OperatorModel(cfg, dtype)
    gen = torch.Generator().manual_seed(int(seed))

    def uniform_(p, bound):
        with torch.no_grad():
            p.copy_((torch.rand(p.shape, generator=gen, dtype=dtype) * 2 - 1) * bound)

    uniform_(model.lift_i_weight, cfg.n_sparse**-0.5)
    uniform_(model.lift_i_bias, cfg.n_sparse**-0.5)
    uniform_(model.lift_p_weight, cfg.in_channels**-0.5)
    uniform_(model.lift_p_bias, cfg.in_channels**-0.5)
    scale = 1.0 / (cfg.width * cfg.width)
    for layer in model.layers:
        with torch.no_grad():
            layer.spectral_re.copy_(scale * torch.rand(layer.spectral_re.shape, generator=gen, dtype=dtype))
            layer.spectral_im.copy_(scale * torch.rand(layer.spectral_im.shape, generator=gen, dtype=dtype))
        uniform_(layer.pointwise, cfg.width**-0.5)
        uniform_(layer.bias, cfg.width**-0.5)
    for lin in model.projection:
        uniform_(lin.weight, lin.in_features**-0.5)
        uniform_(lin.bias, lin.in_features**-0.5)
    return model


# --- explicit forward / backward contract ----------------------------------

def _digest(model: OperatorModel, measurement: torch.Tensor) -> str:
    h = hashlib.sha1()
    m = measurement.detach().contiguous().cpu()
    h.update(str((tuple(m.shape), str(m.dtype))).encode())
    h.update(m.numpy().tobytes())
    h.update(str([p._version for p in model.parameters()]).encode())
    return h.hexdigest()


def _as_tensor(x, dtype):
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def forward(model: OperatorModel, measurement) -> torch.Tensor:
    """Run the operator and cache activations for a subsequent :func:`backward`."""
    m = _as_tensor(measurement, model.dtype)
    with torch.enable_grad():
        out = model(m)
    model._cache = (_digest(model, m), out)
    return out.detach()


def backward(model: OperatorModel, measurement, upstream) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of ``<upstream, forward(measurement)>`` per parameter."""
    m = _as_tensor(measurement, model.dtype)
    if model._cache is None:
        raise ContractViolation("backward called without a cached forward pass")
    digest, out = model._cache
    if digest != _digest(model, m):
        raise ContractViolation("cached forward pass belongs to a different input or parameter state")
    up = _as_tensor(upstream, model.dtype).to(out.dtype)
    if up.shape != out.shape:
        raise InvalidArgument(f"upstream gradient shape {tuple(up.shape)} != output {tuple(out.shape)}")
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(out, params, grad_outputs=up, allow_unused=True)
    model._cache = None
    return {n: (torch.zeros_like(p) if g is None else g) for n, p, g in zip(names, params, grads)}
