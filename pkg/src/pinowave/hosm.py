"""High-order spectral method (West / Dommermuth) for 1D periodic gravity waves.

The vertical velocity on the free surface is built from the perturbation
recursion around z = 0,

    phi(1)  = phi_s
    phi(m)  = -sum_{l=1}^{m-1} eta^l / l! * d^l phi(m-l) / dz^l
    W(m)    =  sum_{l=0}^{m-1} eta^l / l! * d^{l+1} phi(m-l) / dz^{l+1}

with vertical derivatives evaluated in wavenumber space through the
finite-depth eigenfunction cosh(k(z+d)) / cosh(kd). Products are formed in
physical space on a grid enlarged by (M+1)/2 when dealiasing is enabled.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
import torch

from .errors import InvalidArgument, SolverDiverged
from .wavecore import Grid, SpectrumParams, WaveField, peak_period, sample_spectrum_realization

log = logging.getLogger(__name__)

MAX_ORDER = 8


@dataclass(frozen=True)
class HosmConfig:
    order: int = 4
    internal_dt: float = 0.05
    relaxation_periods: float = 20.0
    dealias: bool = True
    amplitude_cap: float = 5.0  # multiples of the initial H_s
    # True truncates every FSBC product at total order M (West et al.);
    # False evaluates the free-surface conditions in full with W = sum W(m).
    consistent: bool = False

    def __post_init__(self):
        if not (1 <= self.order <= MAX_ORDER):
            raise InvalidArgument(f"HOSM order must lie in [1, {MAX_ORDER}], got {self.order}")
        if not self.internal_dt > 0:
            raise InvalidArgument("internal_dt must be positive")
        if self.relaxation_periods < 0:
            raise InvalidArgument("relaxation_periods must be non-negative")


@dataclass
class SolverState:
    eta: np.ndarray
    phis: np.ndarray
    time: float = 0.0


@dataclass
class Trajectory:
    times: np.ndarray
    eta: np.ndarray  # (n_x, n_out)
    phis: np.ndarray


# --- spectral tables --------------------------------------------------------

def _fine_size(n: int, order: int, dealias: bool) -> int:
    if not dealias or order == 1:
        return n
    m = int(math.ceil(n * (order + 1) / 2))
    return m + (m % 2)


@lru_cache(maxsize=64)
def _vertical_factors(n_fine: int, length: float, depth: float, order: int) -> np.ndarray:
    """Rows l = 0..order: multipliers of d^l/dz^l at z=0 on the rfft half-spectrum."""
    k = 2 * np.pi / length * np.arange(n_fine // 2 + 1)
    th = np.tanh(k * depth)
    rows = [np.ones_like(k)]
    for ell in range(1, order + 1):
        rows.append(k**ell * (th if ell % 2 else 1.0))
    return np.stack(rows)


def _to_fine(f: torch.Tensor, n_fine: int) -> torch.Tensor:
    """Spectral interpolation along the last axis; drops the coarse Nyquist mode."""
    n = f.shape[-1]
    spec = torch.fft.rfft(f, dim=-1)
    if n % 2 == 0:
        spec = spec[..., : n // 2]
    if n_fine == n and n % 2 == 1:
        return torch.fft.irfft(spec, n=n, dim=-1)
    pad = n_fine // 2 + 1 - spec.shape[-1]
    spec = torch.nn.functional.pad(spec, (0, pad))
    return torch.fft.irfft(spec, n=n_fine, dim=-1) * (n_fine / n)


def _to_coarse(f: torch.Tensor, n: int) -> torch.Tensor:
    n_fine = f.shape[-1]
    spec = torch.fft.rfft(f, dim=-1)
    keep = n // 2 if n % 2 == 0 else n // 2 + 1
    spec = spec[..., :keep]
    if n % 2 == 0:
        spec = torch.nn.functional.pad(spec, (0, 1))
    return torch.fft.irfft(spec, n=n, dim=-1) * (n / n_fine)


def _derivative_x(f: torch.Tensor, length: float) -> torch.Tensor:
    n = f.shape[-1]
    k = 2 * np.pi / length * np.arange(n // 2 + 1)
    if n % 2 == 0:
        k[-1] = 0.0
    kk = torch.as_tensor(k, dtype=f.dtype)
    return torch.fft.irfft(torch.fft.rfft(f, dim=-1) * (1j * kk), n=n, dim=-1)


def _vertical_velocity_fine(eta_f: torch.Tensor, phis_f: torch.Tensor, length: float, depth: float,
                            order: int) -> torch.Tensor:
    """Sum of W(m), m=1..order, on an already refined grid (space on last axis)."""
    return sum(_vertical_velocity_orders(eta_f, phis_f, length, depth, order))


def _vertical_velocity_orders(eta_f, phis_f, length, depth, order) -> list[torch.Tensor]:
    n_fine = eta_f.shape[-1]
    factors = torch.as_tensor(_vertical_factors(n_fine, length, depth, order), dtype=eta_f.dtype)

    def dz(spec: torch.Tensor, ell: int) -> torch.Tensor:
        return torch.fft.irfft(spec * factors[ell], n=n_fine, dim=-1)

    eta_pow = [torch.ones_like(eta_f)]
    for ell in range(1, order):
        eta_pow.append(eta_pow[-1] * eta_f / ell)  # eta^l / l!

    spectra = [torch.fft.rfft(phis_f, dim=-1)]
    terms = []
    for m in range(1, order + 1):
        if m > 1:
            phi_m = torch.zeros_like(eta_f)
            for ell in range(1, m):
                phi_m = phi_m - eta_pow[ell] * dz(spectra[m - ell - 1], ell)
            spectra.append(torch.fft.rfft(phi_m, dim=-1))
        w_m = torch.zeros_like(eta_f)
        for ell in range(0, m):
            w_m = w_m + eta_pow[ell] * dz(spectra[m - ell - 1], ell + 1)
        terms.append(w_m)
    return terms


def _prepare(eta, phis):
    is_numpy = not isinstance(eta, torch.Tensor)
    e = torch.as_tensor(np.asarray(eta, dtype=float)) if is_numpy else eta
    p = torch.as_tensor(np.asarray(phis, dtype=float)) if is_numpy else phis
    if e.shape != p.shape:
        raise InvalidArgument(f"eta {tuple(e.shape)} and phis {tuple(p.shape)} differ in shape")
    return e, p, is_numpy


def compute_vertical_velocity(eta, phis, cfg: HosmConfig, grid: Grid):
    """Surface vertical velocity W = sum_m W(m) up to order ``cfg.order``.

    Space is axis 0; extra trailing axes (e.g. time columns) are processed
    independently. Accepts NumPy arrays or torch tensors (differentiable).
    """
    if not (1 <= cfg.order <= MAX_ORDER):
        raise InvalidArgument(f"HOSM order must lie in [1, {MAX_ORDER}], got {cfg.order}")
    e, p, is_numpy = _prepare(eta, phis)
    if e.shape[0] != grid.n_x:
        raise InvalidArgument(f"expected {grid.n_x} points along space, got {e.shape[0]}")
    e = e.movedim(0, -1)
    p = p.movedim(0, -1)
    n = grid.n_x
    n_fine = _fine_size(n, cfg.order, cfg.dealias)
    w_f = _vertical_velocity_fine(_to_fine(e, n_fine), _to_fine(p, n_fine), grid.domain_length,
                                  grid.depth, cfg.order)
    w = _to_coarse(w_f, n).movedim(-1, 0)
    return w.numpy() if is_numpy else w


def fsbc_rhs(state: SolverState, cfg: HosmConfig, grid: Grid):
    """Time derivatives of (eta, phi_s) from the Zakharov free-surface conditions."""
    e, p, is_numpy = _prepare(state.eta, state.phis)
    if not (torch.all(torch.isfinite(e)) and torch.all(torch.isfinite(p))):
        raise InvalidArgument("state contains non-finite values")
    e = e.movedim(0, -1)
    p = p.movedim(0, -1)
    deta, dphi = _rhs(e, p, cfg, grid)
    deta = deta.movedim(-1, 0)
    dphi = dphi.movedim(-1, 0)
    if is_numpy:
        return deta.numpy(), dphi.numpy()
    return deta, dphi


def _rhs(e: torch.Tensor, p: torch.Tensor, cfg: HosmConfig, grid: Grid):
    n = e.shape[-1]
    length = grid.domain_length
    n_fine = _fine_size(n, cfg.order, cfg.dealias)
    e_f = _to_fine(e, n_fine)
    p_f = _to_fine(p, n_fine)
    ex = _derivative_x(e_f, length)
    px = _derivative_x(p_f, length)
    if cfg.consistent:
        deta, dphi = _consistent_rhs(e_f, ex, px, _vertical_velocity_orders(e_f, p_f, length, grid.depth, cfg.order),
                                     cfg.order, grid.g)
    else:
        w = _vertical_velocity_fine(e_f, p_f, length, grid.depth, cfg.order)
        slope = 1 + ex * ex
        deta = -ex * px + w * slope
        dphi = -grid.g * e_f - 0.5 * px * px + 0.5 * w * w * slope
    deta = _to_coarse(deta, n)
    # exact mass conservation: the continuous eta_t integrates to zero
    deta = deta - deta.mean(dim=-1, keepdim=True)
    return deta, _to_coarse(dphi, n)


def _consistent_rhs(e, ex, px, w_terms, order, g):
    """FSBC right-hand sides keeping only products of total order <= M."""
    ex2 = ex * ex
    deta = sum(w_terms)
    dphi = -g * e
    if order >= 2:
        deta = deta - ex * px
        dphi = dphi - 0.5 * px * px
    for m in range(1, order - 1):
        deta = deta + ex2 * w_terms[m - 1]
    for m in range(1, order):
        for ell in range(1, order - m + 1):
            dphi = dphi + 0.5 * w_terms[m - 1] * w_terms[ell - 1]
    for m in range(1, order - 2):
        for ell in range(1, order - 1 - m):
            dphi = dphi + 0.5 * ex2 * w_terms[m - 1] * w_terms[ell - 1]
    return deta, dphi


# --- time integration -------------------------------------------------------

def _rk4_step(e, p, h, cfg, grid):
    k1e, k1p = _rhs(e, p, cfg, grid)
    k2e, k2p = _rhs(e + 0.5 * h * k1e, p + 0.5 * h * k1p, cfg, grid)
    k3e, k3p = _rhs(e + 0.5 * h * k2e, p + 0.5 * h * k2p, cfg, grid)
    k4e, k4p = _rhs(e + h * k3e, p + h * k3p, cfg, grid)
    e = e + h / 6 * (k1e + 2 * k2e + 2 * k3e + k4e)
    p = p + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
    return e, p


class _Guard:
    def __init__(self, eta0: torch.Tensor, cap: float):
        hs = 4 * float(eta0.std(unbiased=False))
        self.limit = cap * hs if hs > 0 else math.inf

    def check(self, e, p, step, time):
        if not (torch.all(torch.isfinite(e)) and torch.all(torch.isfinite(p))):
            raise SolverDiverged(f"non-finite state at step {step} (t={time:.3f} s)", step, time)
        peak = float(e.abs().max())
        if peak > self.limit:
            raise SolverDiverged(
                f"elevation {peak:.3f} m exceeds cap {self.limit:.3f} m at step {step} (t={time:.3f} s)",
                step, time)


def advance(state: SolverState, duration: float, cfg: HosmConfig, grid: Grid) -> SolverState:
    """Advance ``state`` by ``duration`` seconds without recording."""
    if duration < 0:
        raise InvalidArgument("duration must be non-negative")
    e = torch.as_tensor(np.asarray(state.eta, dtype=float))
    p = torch.as_tensor(np.asarray(state.phis, dtype=float))
    if duration == 0:
        return SolverState(e.numpy().copy(), p.numpy().copy(), state.time)
    n_steps = max(1, int(math.ceil(duration / cfg.internal_dt - 1e-9)))
    h = duration / n_steps
    guard = _Guard(e, cfg.amplitude_cap)
    for step in range(1, n_steps + 1):
        e, p = _rk4_step(e, p, h, cfg, grid)
        guard.check(e, p, step, state.time + step * h)
    return SolverState(e.numpy(), p.numpy(), state.time + duration)


def integrate(state: SolverState, until: float, cfg: HosmConfig, grid: Grid) -> Trajectory:
    """RK4 integration from ``state.time`` to ``until``, sampled every ``grid.dt``.

    The returned trajectory includes the starting state; ``until - state.time``
    is rounded to a whole number of output steps.
    """
    span = until - state.time
    if not span > 0:
        raise InvalidArgument(f"until ({until}) must exceed the state time ({state.time})")
    n_out = int(round(span / grid.dt))
    if n_out < 1:
        raise InvalidArgument("integration span shorter than one output step")
    n_sub = max(1, int(math.ceil(grid.dt / cfg.internal_dt - 1e-9)))
    h = grid.dt / n_sub

    e = torch.as_tensor(np.asarray(state.eta, dtype=float))
    p = torch.as_tensor(np.asarray(state.phis, dtype=float))
    guard = _Guard(e, cfg.amplitude_cap)
    eta_out = np.empty((e.shape[0], n_out + 1))
    phi_out = np.empty_like(eta_out)
    eta_out[:, 0] = e.numpy()
    phi_out[:, 0] = p.numpy()
    step = 0
    for j in range(1, n_out + 1):
        for _ in range(n_sub):
            e, p = _rk4_step(e, p, h, cfg, grid)
            step += 1
        guard.check(e, p, step, state.time + j * grid.dt)
        eta_out[:, j] = e.numpy()
        phi_out[:, j] = p.numpy()
    times = state.time + grid.dt * np.arange(n_out + 1)
    return Trajectory(times, eta_out, phi_out)


# --- dataset generation -----------------------------------------------------

DEFAULT_PEAK_WAVELENGTHS = tuple(float(v) for v in range(100, 201, 10))
DEFAULT_STEEPNESSES = tuple(round(0.02 + 0.01 * i, 2) for i in range(12))


def sample_seed(base_seed: int, lp: float, eps: float, replicate: int) -> int:
    ss = np.random.SeedSequence([int(base_seed), int(round(lp * 1000)), int(round(eps * 1e6)), int(replicate)])
    return int(ss.generate_state(1, np.uint64)[0])


def simulate_sample(params: SpectrumParams, grid: Grid, cfg: HosmConfig,
                    k_cut_factor: float | None = 5.0) -> WaveField:
    """Initial linear sea, relaxation, then ``grid.n_t`` recorded steps."""
    init = sample_spectrum_realization(params, grid, k_cut_factor=k_cut_factor)
    relax = cfg.relaxation_periods * peak_period(params.peak_wavelength, params.depth, grid.g)
    state = advance(SolverState(init.eta, init.phis, 0.0), relax, cfg, grid)
    state.time = 0.0
    traj = integrate(state, (grid.n_t - 1) * grid.dt, cfg, grid)
    phis = traj.phis - traj.phis.mean(axis=0, keepdims=True)  # gauge: zero spatial mean per step
    return WaveField(traj.eta, phis, grid)


def _simulate_job(job):
    sample_id, params, grid, cfg, k_cut = job
    try:
        return sample_id, simulate_sample(params, grid, cfg, k_cut), None
    except SolverDiverged as exc:
        return sample_id, None, str(exc)


def generate_dataset(param_grid, per_combo: int, cfg: HosmConfig, out, grid: Grid, base_seed: int = 0,
                     workers: int = 1, k_cut_factor: float | None = 5.0, depth: float | None = None,
                     gamma: float = 3.3) -> dict:
    """Simulate ``per_combo`` sea states for every (Lp, eps) pair and write them to ``out``.

    ``param_grid`` is an iterable of ``(lp, eps)`` pairs or a ``(lps, epss)``
    tuple of axes. ``out`` is a :class:`pinowave.io.DatasetWriter`. Diverged
    samples are recorded with ``status="failed"`` and generation continues.
    """
    pairs = _expand_grid(param_grid)
    if per_combo < 1:
        raise InvalidArgument("per_combo must be at least 1")
    depth = grid.depth if depth is None else depth
    out.set_meta(grid=grid.to_dict(), hosm=asdict(cfg), k_cut_factor=k_cut_factor, gamma=gamma, base_seed=base_seed)

    jobs = []
    for lp, eps in pairs:
        for rep in range(per_combo):
            seed = sample_seed(base_seed, lp, eps, rep)
            sample_id = f"lp{lp:g}_eps{eps:g}_r{rep}"
            params = SpectrumParams(lp, eps, gamma, depth, seed)
            out.add_sample({"id": sample_id, "lp": lp, "eps": eps, "seed": seed, "replicate": rep,
                            "status": "pending"})
            jobs.append((sample_id, params, grid, cfg, k_cut_factor))

    def handle(result):
        sample_id, field, err = result
        if field is None:
            log.warning("sample %s diverged: %s", sample_id, err)
            out.update_sample(sample_id, status="failed", error=err)
        else:
            out.write_array(sample_id, "eta", field.eta)
            out.write_array(sample_id, "phis", field.phis)
            out.update_sample(sample_id, status="ok")

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(_simulate_job, jobs):
                handle(result)
    else:
        for job in jobs:
            handle(_simulate_job(job))
    return out.flush()


def _expand_grid(param_grid):
    if isinstance(param_grid, tuple) and len(param_grid) == 2 and all(
            isinstance(a, (list, tuple, np.ndarray)) for a in param_grid):
        lps, epss = param_grid
        return [(float(lp), float(eps)) for lp in lps for eps in epss]
    return [(float(lp), float(eps)) for lp, eps in param_grid]
