"""Physics-informed loss for reconstructed wave fields.

All terms are evaluated on torch tensors so gradients reach the operator
parameters through the spectral transfer, the HOSM recursion and every
Fourier derivative. Fields are ``(n_x, n_t)`` or batched ``(B, n_x, n_t)``.

Evaluation regions (half-open, floor rounding):

* sensor, normalization: time indices ``[floor(0.04 n_t), floor(0.96 n_t))``
* residuals, regularization: additionally space ``[n_x // 4, 3 n_x // 4)``
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch

from .errors import InvalidArgument, InvalidSample
from .hosm import HosmConfig, compute_vertical_velocity
from .wavecore import (SPACE_TAPER, TIME_TAPER, Grid, fourier_derivative, space_slice, space_time_window,
                       time_slice, tukey_window)

RECOVERY_ORDER = 4


@dataclass(frozen=True)
class LossWeights:
    reg: float = 0.25
    use_sensor: bool = True
    use_phy1: bool = True
    use_phy2: bool = True
    use_reg: bool = True
    # False treats W as a constant of the current iterate (no gradient through HOSM)
    differentiate_hosm: bool = True

    def __post_init__(self):
        if not self.reg >= 0:
            raise InvalidArgument(f"regularization weight must be >= 0, got {self.reg}")


@dataclass
class LossReport:
    sensor: float
    phy1: float
    phy2: float
    reg: float
    n_norm: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


def _tensor(x, dtype=torch.float64) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def _window(grid: Grid, like: torch.Tensor) -> torch.Tensor:
    return torch.as_tensor(space_time_window(grid), dtype=like.dtype)


def _check_field(f: torch.Tensor, grid: Grid):
    if tuple(f.shape[-2:]) != grid.shape:
        raise InvalidArgument(f"field shape {tuple(f.shape[-2:])} does not match grid {grid.shape}")


def recover_surface_potential(eta, grid: Grid):
    """Linear dynamic-condition estimate of the surface potential from elevation.

    The elevation is tapered on both axes, transformed in space and time and
    mapped bin-wise by ``phi = i g eta / nu`` with ``nu`` the angular frequency
    of the ``exp(+i nu t)`` basis. The mean (``nu = 0``) and Nyquist time bins
    are set to zero.

    A tapered record generally has a nonzero time integral, which the periodic
    transform would turn into a ramp in the potential. Before transforming,
    that integral is cancelled by a multiple of ``1 - w(t)``, a component that
    lives only in the time taper, so the flat region keeps the plain elevation.
    """
    is_numpy = not isinstance(eta, torch.Tensor)
    e = _tensor(eta)
    _check_field(e, grid)
    w_t = torch.as_tensor(tukey_window(grid.n_t, TIME_TAPER), dtype=e.dtype)
    w_x = torch.as_tensor(tukey_window(grid.n_x, SPACE_TAPER), dtype=e.dtype)
    tapered = e * w_t
    edge = 1 - w_t
    tapered = tapered - tapered.sum(dim=-1, keepdim=True) / edge.sum() * edge
    spec = torch.fft.fft(torch.fft.rfft(tapered * w_x[:, None], dim=-1), dim=-2)
    nu = 2 * np.pi * np.fft.rfftfreq(grid.n_t, d=grid.dt)
    transfer = np.zeros(nu.shape, dtype=complex)
    keep = nu > 0
    transfer[keep] = 1j * grid.g / nu[keep]
    if grid.n_t % 2 == 0:
        transfer[-1] = 0.0
    dtype = torch.complex128 if e.dtype == torch.float64 else torch.complex64
    phis = torch.fft.irfft(torch.fft.ifft(spec * torch.as_tensor(transfer, dtype=dtype), dim=-2), n=grid.n_t, dim=-1)
    return phis.numpy() if is_numpy else phis


def recover_vertical_velocity(eta, phis, grid: Grid, order: int = RECOVERY_ORDER, dealias: bool = True):
    """HOSM vertical velocity applied to every time column (and batch member)."""
    is_numpy = not isinstance(eta, torch.Tensor)
    e, p = _tensor(eta), _tensor(phis)
    if e.shape != p.shape:
        raise InvalidArgument(f"eta {tuple(e.shape)} and phis {tuple(p.shape)} differ in shape")
    _check_field(e, grid)
    cfg = HosmConfig(order=order, dealias=dealias)
    space_axis = e.ndim - 2
    w = compute_vertical_velocity(e.movedim(space_axis, 0), p.movedim(space_axis, 0), cfg, grid)
    w = w.movedim(0, space_axis)
    return w.numpy() if is_numpy else w


def _time_window(n_t: int) -> slice:
    sl = time_slice(n_t)
    if sl.stop <= sl.start:
        raise InvalidArgument(f"empty loss time window for n_t={n_t}")
    return sl


def normalization_factor(eta_cal):
    """Mean square of the calibration series over the loss time window."""
    c = _tensor(eta_cal)
    if c.ndim == 1:
        c = c[None]
    n_norm = (c[..., _time_window(c.shape[-1])] ** 2).mean(dim=(-2, -1))
    if torch.any(n_norm <= 0):
        raise InvalidSample("calibration series is identically zero on the loss window")
    return n_norm


def sensor_loss(eta_tilde, eta_cal, columns, n_norm):
    """Mean squared misfit at the calibration columns, divided by ``n_norm``."""
    e = _tensor(eta_tilde)
    c = _tensor(eta_cal, e.dtype).to(e.dtype)
    if c.ndim == 1:
        c = c[None]
    cols = torch.as_tensor(np.asarray(columns, dtype=np.int64).reshape(-1))
    if cols.numel() == 0:
        raise InvalidArgument("no calibration columns given")
    if c.shape[-2] != cols.numel():
        raise InvalidArgument(f"{c.shape[-2]} calibration series for {cols.numel()} columns")
    sl = _time_window(e.shape[-1])
    diff = e[..., cols, sl] - c[..., sl]
    return (diff**2).mean(dim=(-2, -1)) / n_norm


def fsbc_residuals(eta, phis, w, grid: Grid):
    """Pointwise kinematic and dynamic free-surface residuals on the full grid.

    Fields are tapered on both axes before differentiation; only the interior
    region where the taper equals one is meaningful.
    """
    e, p, w = _tensor(eta), _tensor(phis), _tensor(w)
    win = _window(grid, e)
    e_w, p_w = e * win, p * win
    ex = fourier_derivative(e_w, grid, "space")
    et = fourier_derivative(e_w, grid, "time")
    px = fourier_derivative(p_w, grid, "space")
    pt = fourier_derivative(p_w, grid, "time")
    slope = 1 + ex * ex
    r1 = et + ex * px - w * slope
    r2 = pt + grid.g * e_w + 0.5 * px * px - 0.5 * w * w * slope
    return r1, r2


def physics_residual_losses(eta, phis, w, grid: Grid, n_norm, order: int = RECOVERY_ORDER):
    """Mean squared FSBC residuals over the interior region, divided by ``n_norm``.

    ``w=None`` computes the vertical velocity from the tapered fields.
    """
    if w is None:
        e, p = _tensor(eta), _tensor(phis)
        win = _window(grid, e)
        w = recover_vertical_velocity(e * win, p * win, grid, order)
    r1, r2 = fsbc_residuals(eta, phis, w, grid)
    region = (..., space_slice(grid.n_x), _time_window(grid.n_t))
    phy1 = (r1[region] ** 2).mean(dim=(-2, -1)) / n_norm
    phy2 = (r2[region] ** 2).mean(dim=(-2, -1)) / n_norm
    return phy1, phy2


def _std(x: torch.Tensor) -> torch.Tensor:
    flat = x.reshape(*x.shape[:-2], -1)
    return flat.std(dim=-1, unbiased=False)


def regularization_loss(eta_tilde, eta_cal, n_norm, grid: Grid | None = None):
    """Squared gap between the calibration and reconstruction standard deviations."""
    e = _tensor(eta_tilde)
    c = _tensor(eta_cal, e.dtype).to(e.dtype)
    if c.ndim == 1:
        c = c[None]
    n_x, n_t = e.shape[-2:]
    inner = e[..., space_slice(n_x), _time_window(n_t)]
    cal = c[..., _time_window(c.shape[-1])]
    return (_std(cal) - _std(inner)) ** 2 / n_norm


def loss_terms(eta_tilde: torch.Tensor, eta_cal, columns, grid: Grid,
               weights: LossWeights = LossWeights()) -> dict[str, torch.Tensor]:
    """Every loss component as a tensor (per batch member when batched)."""
    e = _tensor(eta_tilde)
    _check_field(e, grid)
    n_norm = normalization_factor(eta_cal).to(e.dtype)
    zero = e.new_zeros(e.shape[:-2])
    terms = {"n_norm": n_norm}
    terms["sensor"] = sensor_loss(e, eta_cal, columns, n_norm) if weights.use_sensor else zero
    if weights.use_phy1 or weights.use_phy2:
        phis = recover_surface_potential(e, grid)
        win = _window(grid, e)
        e_w, p_w = e * win, phis * win
        if not weights.differentiate_hosm:
            e_w, p_w = e_w.detach(), p_w.detach()
        w = recover_vertical_velocity(e_w, p_w, grid)
        phy1, phy2 = physics_residual_losses(e, phis, w, grid, n_norm)
        terms["phy1"] = phy1 if weights.use_phy1 else zero
        terms["phy2"] = phy2 if weights.use_phy2 else zero
    else:
        terms["phy1"] = terms["phy2"] = zero
    terms["reg"] = regularization_loss(e, eta_cal, n_norm) if weights.use_reg else zero
    terms["total"] = terms["sensor"] + terms["phy1"] + terms["phy2"] + weights.reg * terms["reg"]
    return terms


def report(terms: dict[str, torch.Tensor]) -> LossReport:
    """Collapse (possibly batched) loss tensors to a :class:`LossReport` of means."""
    vals = {k: float(v.detach().mean()) for k, v in terms.items()}
    return LossReport(vals["sensor"], vals["phy1"], vals["phy2"], vals["reg"], vals["n_norm"], vals["total"])


def total_loss(model, sample, grid: Grid, weights: LossWeights = LossWeights(), with_grad: bool = True):
    """Loss of ``model`` on one :class:`~pinowave.sensors.SensorSample`.

    Returns ``(LossReport, grads)``; ``grads`` maps parameter names to exact
    reverse-mode gradients of the total (None when ``with_grad`` is False).
    """
    from . import pino

    kind = "buoy" if model.cfg.case == "A_buoy" else "radar"
    if sample.kind != kind:
        raise InvalidArgument(f"{model.cfg.case} model cannot be trained on a {sample.kind} sample")
    eta = pino.forward(model, sample.measurement)
    eta = eta.clone().requires_grad_(with_grad)
    with torch.enable_grad():
        terms = loss_terms(eta, sample.eta_cal, sample.columns, grid, weights)
    rep = report(terms)
    if not with_grad:
        model._cache = None
        return rep, None
    (upstream,) = torch.autograd.grad(terms["total"], eta)
    return rep, pino.backward(model, sample.measurement, upstream)
