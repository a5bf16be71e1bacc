"""Finite-difference audit of the reverse-mode gradient of the total loss."""

from __future__ import annotations

import numpy as np
import torch

from .physloss import LossWeights, total_loss
from .pino import ArchConfig, OperatorModel, init_parameters
from .sensors import RadarGeometry, assemble_sample
from .wavecore import Grid, WaveField, build_grid, dispersion_omega

TOY_GRID = dict(domain_length=160.0, n_x=16, duration=32.0, n_t=16)


def toy_field(grid: Grid, amplitudes=(0.3, 0.15), modes=(2, 3), phases=(0.0, 1.1)) -> WaveField:
    """Superposed linear waves on ``grid`` (analytic eta and phi_s)."""
    x, t = np.meshgrid(grid.x, grid.t, indexing="ij")
    eta = np.zeros(grid.shape)
    phis = np.zeros(grid.shape)
    for a, m, ph in zip(amplitudes, modes, phases):
        k = 2 * np.pi * m / grid.domain_length
        w = float(dispersion_omega(k, grid.depth, grid.g))
        arg = k * x - w * t + ph
        eta += a * np.cos(arg)
        phis += a * grid.g / w * np.sin(arg)
    return WaveField(eta, phis, grid)


def toy_problem(case: str = "A_buoy", seed: int = 0, n_layers: int = 2, n_modes: int = 4, width: int = 4,
                dtype=torch.float64):
    """Model, sample and grid of the 16x16 gradient-check configuration."""
    grid = build_grid(**TOY_GRID)
    field = toy_field(grid)
    if case == "A_buoy":
        sample = assemble_sample(field, "buoy")
        n_sparse = sample.measurement.shape[0]
    else:
        sample = assemble_sample(field, "radar", RadarGeometry(rotation_dt=4.0))
        n_sparse = sample.measurement.shape[1]
    cfg = ArchConfig(case, n_layers, n_modes, width, pad=4, n_sparse=n_sparse, n_x=grid.n_x, n_t=grid.n_t)
    return init_parameters(cfg, seed, dtype), sample, grid


def check_gradients(model: OperatorModel, sample, grid: Grid, weights: LossWeights = LossWeights(),
                    step: float = 1e-4, entries_per_group: int = 8, seed: int = 0) -> dict[str, float]:
    """Relative error between autograd and central differences per parameter tensor.

    For each tensor ``entries_per_group`` entries are probed (all of them when
    the tensor is smaller); the error is ``|g_fd - g_ad| / max(|g_ad|, |g_fd|)``
    measured as vector norms over the probed entries.
    """
    _, grads = total_loss(model, sample, grid, weights)
    rng = np.random.default_rng(seed)
    errors = {}
    params = dict(model.named_parameters())
    for name, p in params.items():
        n = p.numel()
        picks = np.arange(n) if n <= entries_per_group else rng.choice(n, entries_per_group, replace=False)
        flat = p.data.view(-1)
        fd = np.empty(len(picks))
        for j, idx in enumerate(picks):
            orig = float(flat[idx])
            flat[idx] = orig + step
            up = total_loss(model, sample, grid, weights, with_grad=False)[0].total
            flat[idx] = orig - step
            down = total_loss(model, sample, grid, weights, with_grad=False)[0].total
            flat[idx] = orig
            fd[j] = (up - down) / (2 * step)
        ad = grads[name].reshape(-1).detach().numpy()[picks]
        scale = max(np.linalg.norm(ad), np.linalg.norm(fd))
        errors[name] = float(np.linalg.norm(fd - ad) / scale) if scale > 0 else 0.0
    return errors
