"""Synthetic buoy records and X-band radar snapshots from reference wave fields."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from .errors import InvalidArgument, InvalidGeometry
from .wavecore import Grid, WaveField, fourier_derivative

DEFAULT_DOMAIN = 1953.0
DEFAULT_BUOY_POSITIONS = (488.76, 731.18, 973.61, 1216.03, 1462.37)
DEFAULT_CALIBRATION_POSITION = 973.61

Kind = Literal["buoy", "radar"]


@dataclass(frozen=True)
class RadarGeometry:
    antenna_x: float = 0.0
    antenna_height: float = 20.0
    c1: float = 1.0
    c2: float = 0.0
    rotation_dt: float = 2.0

    def __post_init__(self):
        if not self.antenna_height > 0:
            raise InvalidArgument("antenna height must be positive")
        if not self.rotation_dt > 0:
            raise InvalidArgument("rotation period must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SensorSample:
    kind: Kind
    eta_cal: np.ndarray
    positions: np.ndarray
    columns: np.ndarray
    buoy_series: np.ndarray | None = None  # (n_buoy, n_t)
    radar: np.ndarray | None = None  # (n_x, n_snap)
    provenance: dict = field(default_factory=dict)

    @property
    def measurement(self) -> np.ndarray:
        """The network input: buoy series for case A, radar snapshots for case B."""
        return self.buoy_series if self.kind == "buoy" else self.radar


def scaled_positions(grid: Grid, positions=DEFAULT_BUOY_POSITIONS) -> list[float]:
    """Default 1953 m sensor positions mapped proportionally onto ``grid``'s domain."""
    if np.isclose(grid.domain_length, DEFAULT_DOMAIN):
        return list(positions)
    return [p / DEFAULT_DOMAIN * grid.domain_length for p in positions]


def buoy_columns(grid: Grid, positions) -> np.ndarray:
    positions = list(positions)
    if not positions:
        raise InvalidArgument("at least one sensor position is required")
    return np.array([grid.column_of(float(p)) for p in positions], dtype=int)


def extract_buoys(field: WaveField, positions) -> np.ndarray:
    """Elevation time series at the grid columns nearest ``positions``."""
    cols = buoy_columns(field.grid, positions)
    return np.asarray(field.eta)[cols, :].copy()


def _ranges(grid: Grid, geom: RadarGeometry, n: int) -> np.ndarray:
    return np.arange(n) * grid.dx - geom.antenna_x


def tilt_modulation(eta_snapshot, geom: RadarGeometry, grid: Grid) -> np.ndarray:
    """c1 * cos(local incidence) + c2 per column; zero for facets facing away."""
    eta = np.asarray(eta_snapshot, dtype=float)
    slope = fourier_derivative(eta, grid, "space")
    horizontal = geom.antenna_x - grid.x[: eta.size]
    vertical = geom.antenna_height - eta
    cos = (-slope * horizontal + vertical) / (np.hypot(slope, 1.0) * np.hypot(horizontal, vertical))
    return np.where(cos >= 0, geom.c1 * cos + geom.c2, 0.0)


def incidence_angles(eta_snapshot, geom: RadarGeometry, grid: Grid) -> np.ndarray:
    eta = np.asarray(eta_snapshot, dtype=float)
    if np.any(eta >= geom.antenna_height):
        raise InvalidGeometry(f"surface reaches antenna height {geom.antenna_height} m")
    return np.arctan2(_ranges(grid, geom, eta.size), geom.antenna_height - eta)


def shadow_mask(eta_snapshot, geom: RadarGeometry, grid: Grid) -> np.ndarray:
    """True where a closer column's nominal incidence angle is >= this column's.

    Single outward sweep with a running maximum. Columns behind the antenna
    (negative range) are outside the beam and reported as shadowed.
    """
    theta = incidence_angles(eta_snapshot, geom, grid)
    ranges = _ranges(grid, geom, theta.size)
    mask = ranges < 0
    running = -np.inf
    prev_range = None
    pending = -np.inf  # max over the current equal-range group
    for i in np.argsort(ranges, kind="stable"):
        r = ranges[i]
        if r < 0:
            continue
        if prev_range is not None and r > prev_range:
            running = max(running, pending)
            pending = -np.inf
        mask[i] = running >= theta[i]
        pending = max(pending, theta[i])
        prev_range = r
    return mask


def snapshot_indices(grid: Grid, rotation_dt: float) -> np.ndarray:
    ratio = rotation_dt / grid.dt
    step = int(round(ratio))
    if step < 1 or not np.isclose(ratio, step, rtol=1e-9, atol=1e-9):
        raise InvalidArgument(f"rotation period {rotation_dt} s is not a multiple of dt={grid.dt} s")
    return np.arange(0, grid.n_t, step)[: grid.n_t // step]


def radar_image(eta_snapshot, geom: RadarGeometry, grid: Grid) -> np.ndarray:
    tilt = tilt_modulation(eta_snapshot, geom, grid)
    return np.where(shadow_mask(eta_snapshot, geom, grid), 0.0, tilt)


def radar_snapshots(field: WaveField, geom: RadarGeometry) -> np.ndarray:
    """Radar intensities, shape ``(n_x, n_snap)``, one column per antenna rotation."""
    idx = snapshot_indices(field.grid, geom.rotation_dt)
    eta = np.asarray(field.eta)
    return np.stack([radar_image(eta[:, j], geom, field.grid) for j in idx], axis=1)


def shadow_fraction(field: WaveField, geom: RadarGeometry) -> float:
    idx = snapshot_indices(field.grid, geom.rotation_dt)
    eta = np.asarray(field.eta)
    return float(np.mean([shadow_mask(eta[:, j], geom, field.grid).mean() for j in idx]))


def assemble_sample(field: WaveField, kind: Kind, geom: RadarGeometry | None = None, positions=None,
                    provenance: dict | None = None) -> SensorSample:
    """Pack the network input and calibration series for one sea state.

    Buoy samples use the five series both as input and as calibration; radar
    samples carry snapshots plus a single calibration buoy.
    """
    grid = field.grid
    if kind == "buoy":
        if positions is None:
            positions = scaled_positions(grid)
        positions = list(positions)
        series = extract_buoys(field, positions)
        return SensorSample("buoy", series, np.asarray(positions, float), buoy_columns(grid, positions),
                            buoy_series=series, provenance=dict(provenance or {}))
    if kind == "radar":
        if geom is None:
            raise InvalidArgument("radar samples need a RadarGeometry")
        if positions is None:
            positions = scaled_positions(grid, (DEFAULT_CALIBRATION_POSITION,))
        positions = list(positions)
        if len(positions) != 1:
            raise InvalidArgument(f"radar samples take exactly one calibration position, got {len(positions)}")
        cal = extract_buoys(field, positions)
        return SensorSample("radar", cal, np.asarray(positions, float), buoy_columns(grid, positions),
                            radar=radar_snapshots(field, geom), provenance=dict(provenance or {}))
    raise InvalidArgument(f"unknown sample kind {kind!r}")
