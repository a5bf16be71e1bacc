"""Grids, spectra, spectral differentiation and window primitives.

Spectral operators accept either NumPy arrays or torch tensors and return the
same kind they were given, so the solver and the differentiable losses run
through one implementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import torch
from scipy.signal import windows

from .errors import InvalidArgument

GRAVITY = 9.81
DEFAULT_DEPTH = 500.0

Axis = Literal["space", "time"]


@dataclass(frozen=True)
class Grid:
    """Periodic space-time grid. Arrays on this grid are shaped ``(n_x, n_t)``."""

    domain_length: float
    n_x: int
    duration: float
    n_t: int
    depth: float = DEFAULT_DEPTH
    g: float = GRAVITY
    dx: float = field(init=False)
    dt: float = field(init=False)

    def __post_init__(self):
        if self.n_x < 2 or self.n_t < 2:
            raise InvalidArgument(f"grid needs at least 2 points per axis, got {self.n_x}x{self.n_t}")
        for name in ("domain_length", "duration", "depth", "g"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidArgument(f"{name} must be positive, got {value}")
        object.__setattr__(self, "dx", self.domain_length / self.n_x)
        object.__setattr__(self, "dt", self.duration / self.n_t)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n_x) * self.dx

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n_t) * self.dt

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n_x, d=self.dx)

    @property
    def frequencies(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n_t, d=self.dt)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_t)

    def column_of(self, position: float) -> int:
        """Index of the grid column nearest ``position`` (metres)."""
        if not (0.0 <= position < self.domain_length):
            raise InvalidArgument(f"position {position} m outside domain [0, {self.domain_length})")
        return int(np.floor(position / self.dx + 0.5)) % self.n_x

    def to_dict(self) -> dict:
        return {
            "domain_length": self.domain_length,
            "n_x": self.n_x,
            "duration": self.duration,
            "n_t": self.n_t,
            "depth": self.depth,
            "g": self.g,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(**{k: d[k] for k in ("domain_length", "n_x", "duration", "n_t", "depth", "g") if k in d})


@dataclass(frozen=True)
class SpectrumParams:
    peak_wavelength: float
    steepness: float
    peak_enhancement: float = 3.3
    depth: float = DEFAULT_DEPTH
    rng_seed: int = 0

    def __post_init__(self):
        if not self.peak_wavelength > 0:
            raise InvalidArgument("peak_wavelength must be positive")
        if not (0 < self.steepness <= 0.2):
            raise InvalidArgument(f"steepness must lie in (0, 0.2], got {self.steepness}")
        if self.peak_enhancement < 1:
            raise InvalidArgument("peak_enhancement must be >= 1")
        if not self.depth > 0:
            raise InvalidArgument("depth must be positive")


@dataclass
class WaveField:
    eta: np.ndarray
    phis: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.eta = np.asarray(self.eta)
        self.phis = np.asarray(self.phis)
        if self.eta.shape != self.phis.shape:
            raise InvalidArgument(f"eta {self.eta.shape} and phis {self.phis.shape} differ in shape")
        if self.eta.shape[0] != self.grid.n_x:
            raise InvalidArgument(f"field has {self.eta.shape[0]} columns, grid has {self.grid.n_x}")
        if self.eta.ndim == 2 and self.eta.shape[1] != self.grid.n_t:
            raise InvalidArgument(f"field has {self.eta.shape[1]} time steps, grid has {self.grid.n_t}")
        if not (np.all(np.isfinite(self.eta)) and np.all(np.isfinite(self.phis))):
            raise InvalidArgument("wave field contains non-finite values")


def build_grid(domain_length: float, n_x: int, duration: float, n_t: int,
               depth: float = DEFAULT_DEPTH, g: float = GRAVITY) -> Grid:
    return Grid(float(domain_length), int(n_x), float(duration), int(n_t), float(depth), float(g))


# --- dispersion and spectra -------------------------------------------------

def dispersion_omega(k, depth: float = DEFAULT_DEPTH, g: float = GRAVITY):
    """Angular frequency from the finite-depth relation omega^2 = g k tanh(k d)."""
    k = np.abs(np.asarray(k, dtype=float))
    return np.sqrt(g * k * np.tanh(k * depth))


def peak_period(peak_wavelength: float, depth: float = DEFAULT_DEPTH, g: float = GRAVITY) -> float:
    return float(2 * np.pi / dispersion_omega(2 * np.pi / peak_wavelength, depth, g))


def group_velocity(k, depth: float = DEFAULT_DEPTH, g: float = GRAVITY):
    k = np.abs(np.asarray(k, dtype=float))
    kd = k * depth
    omega = dispersion_omega(k, depth, g)
    # sech^2 underflows harmlessly to 0 for large kd
    sech2 = np.where(kd < 350, 1.0 / np.cosh(np.minimum(kd, 350)) ** 2, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cg = g * (np.tanh(kd) + kd * sech2) / (2 * omega)
    return np.where(k > 0, cg, np.sqrt(g * depth))


def jonswap_omega(omega, peak_omega: float, gamma: float = 3.3, alpha: float = 1.0,
                  g: float = GRAVITY):
    """JONSWAP frequency spectrum (arbitrary overall scale ``alpha``)."""
    omega = np.asarray(omega, dtype=float)
    out = np.zeros_like(omega)
    pos = omega > 0
    w = omega[pos]
    sigma = np.where(w <= peak_omega, 0.07, 0.09)
    r = np.exp(-((w - peak_omega) ** 2) / (2 * sigma**2 * peak_omega**2))
    out[pos] = alpha * g**2 * w**-5 * np.exp(-1.25 * (peak_omega / w) ** 4) * gamma**r
    return out


def tma_factor(k, depth: float):
    """Kitaigorodskii depth attenuation, tanh^2(kd) / (1 + 2kd / sinh 2kd)."""
    kd = np.abs(np.asarray(k, dtype=float)) * depth
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        ratio = np.where(kd < 350, 2 * kd / np.sinh(np.minimum(2 * kd, 700)), 0.0)
    ratio = np.where(kd > 0, ratio, 1.0)
    return np.tanh(kd) ** 2 / (1 + ratio)


def jonswap_tma_wavenumber(k, peak_wavelength: float, gamma: float = 3.3,
                           depth: float = DEFAULT_DEPTH, g: float = GRAVITY):
    """JONSWAP-TMA variance density in wavenumber space, S(k) = S(w) phi(k) dw/dk."""
    k = np.abs(np.asarray(k, dtype=float))
    peak_omega = float(dispersion_omega(2 * np.pi / peak_wavelength, depth, g))
    omega = dispersion_omega(k, depth, g)
    return jonswap_omega(omega, peak_omega, gamma, g=g) * tma_factor(k, depth) * group_velocity(k, depth, g)


def sample_spectrum_realization(params: SpectrumParams, grid: Grid, k_cut_factor: float | None = 5.0) -> WaveField:
    """Random-phase linear sea state at t=0 on ``grid``.

    Amplitudes follow the JONSWAP-TMA spectrum; the realization is rescaled so
    that ``k_p * H_s / 2`` equals the requested steepness with ``H_s = 4 std(eta)``.
    Components above ``k_cut_factor * k_p`` are dropped (None keeps every mode
    below Nyquist). Returned arrays are 1D over space.
    """
    lp = params.peak_wavelength
    if lp > grid.domain_length / 4:
        raise InvalidArgument(f"peak wavelength {lp} m exceeds a quarter of the domain ({grid.domain_length} m)")
    if lp < 4 * grid.dx:
        raise InvalidArgument(f"peak wavelength {lp} m is under-resolved at dx={grid.dx:.3f} m")

    depth = params.depth if params.depth is not None else grid.depth
    g = grid.g
    k_p = 2 * np.pi / lp
    dk = 2 * np.pi / grid.domain_length
    n_modes = (grid.n_x - 1) // 2  # strictly below Nyquist
    k = dk * np.arange(1, n_modes + 1)
    spectrum = jonswap_tma_wavenumber(k, lp, params.peak_enhancement, depth, g)
    if k_cut_factor is not None:
        spectrum = np.where(k <= k_cut_factor * k_p, spectrum, 0.0)
    amp = np.sqrt(2 * spectrum * dk)

    rng = np.random.default_rng(np.uint64(params.rng_seed))
    phase = rng.uniform(0.0, 2 * np.pi, size=n_modes)

    omega = dispersion_omega(k, depth, g)
    x = grid.x
    arg = np.outer(x, k) + phase
    eta = np.cos(arg) @ amp
    phis = np.sin(arg) @ (amp * g / omega)

    hs = 4 * eta.std()
    scale = (2 * params.steepness / k_p) / hs
    eta = eta * scale
    phis = phis * scale
    # remove round-off mean; the mode sum has no k=0 term
    eta = eta - eta.mean()
    phis = phis - phis.mean()
    return WaveField(eta, phis, grid)


# --- spectral calculus ------------------------------------------------------

def _axis_params(grid: Grid, axis: Axis) -> tuple[int, float]:
    if axis == "space":
        return grid.n_x, grid.dx
    if axis == "time":
        return grid.n_t, grid.dt
    raise InvalidArgument(f"axis must be 'space' or 'time', got {axis!r}")


def derivative_wavenumbers(n: int, spacing: float) -> np.ndarray:
    """DFT angular wavenumbers with the Nyquist entry zeroed for differentiation."""
    k = 2 * np.pi * np.fft.fftfreq(n, d=spacing)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return k


def fourier_derivative(field, grid: Grid, axis: Axis = "space", order: int = 1):
    """Periodic spectral derivative of ``field`` along ``axis``.

    ``field`` is ``(n_x, n_t)`` or a 1D vector along the chosen axis; a leading
    batch dimension is allowed for 3D inputs. NumPy in, NumPy out.
    """
    if int(order) != order or order < 1:
        raise InvalidArgument(f"derivative order must be a positive integer, got {order}")
    n, spacing = _axis_params(grid, axis)
    is_numpy = not isinstance(field, torch.Tensor)
    f = torch.as_tensor(np.asarray(field)) if is_numpy else field
    if f.ndim == 1:
        dim = 0
    elif f.ndim == 2:
        dim = 0 if axis == "space" else 1
    else:
        dim = f.ndim - 2 if axis == "space" else f.ndim - 1
    if f.shape[dim] != n:
        raise InvalidArgument(f"field has {f.shape[dim]} points along {axis}, grid expects {n}")

    k = torch.as_tensor(derivative_wavenumbers(n, spacing), dtype=f.real.dtype if f.is_complex() else f.dtype)
    shape = [1] * f.ndim
    shape[dim] = n
    mult = (1j * k.reshape(shape)) ** order
    out = torch.fft.ifft(torch.fft.fft(f, dim=dim) * mult, dim=dim)
    if not f.is_complex():
        out = out.real
    return out.numpy() if is_numpy else out


def tukey_window(n: int, taper_fraction: float) -> np.ndarray:
    if n < 2:
        raise InvalidArgument("window length must be at least 2")
    if not (0.0 <= taper_fraction <= 1.0):
        raise InvalidArgument(f"taper_fraction must lie in [0, 1], got {taper_fraction}")
    if 0 < taper_fraction * (n - 1) / 2 < 1:
        # taper narrower than one sample: only the end points are affected
        w = np.ones(n)
        w[[0, -1]] = 0.0
        return w
    return windows.tukey(n, taper_fraction, sym=True)


SPACE_TAPER = 0.5
TIME_TAPER = 2 / 25


def space_time_window(grid: Grid) -> np.ndarray:
    """Outer product of the space and time Tukey tapers, shape ``(n_x, n_t)``."""
    return np.outer(tukey_window(grid.n_x, SPACE_TAPER), tukey_window(grid.n_t, TIME_TAPER))


def space_slice(n_x: int) -> slice:
    return slice(n_x // 4, (3 * n_x) // 4)


def time_slice(n_t: int) -> slice:
    return slice(int(np.floor(0.04 * n_t)), int(np.floor(0.96 * n_t)))
