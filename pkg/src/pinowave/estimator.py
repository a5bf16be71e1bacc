"""scikit-learn style wrapper around the operator, its loss and the trainer."""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import InvalidArgument
from .metrics import ssp
from .physloss import LossWeights
from .pino import ArchConfig, init_parameters
from .sensors import buoy_columns, scaled_positions
from .trainer import TrainConfig, TrainItem, train
from .wavecore import build_grid


def check_measurements(X, expected_shape: tuple[int, int] | None = None) -> np.ndarray:
    """Finite float array of shape ``(n_samples, rows, cols)``; a single 2D sample is promoted."""
    X = check_array(X, allow_nd=True, ensure_2d=False, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise InvalidArgument(f"measurements must be 3D (n_samples, rows, cols), got {X.ndim}D")
    if expected_shape is not None and tuple(X.shape[1:]) != tuple(expected_shape):
        raise InvalidArgument(f"measurement shape {tuple(X.shape[1:])} does not match {tuple(expected_shape)}")
    return X


def check_fields(Y, grid_shape: tuple[int, int]) -> np.ndarray:
    Y = check_array(Y, allow_nd=True, ensure_2d=False, dtype=np.float64)
    if Y.ndim == 2:
        Y = Y[None]
    if Y.ndim != 3 or tuple(Y.shape[1:]) != tuple(grid_shape):
        raise InvalidArgument(f"reference fields must be (n_samples, {grid_shape[0]}, {grid_shape[1]}), got {Y.shape}")
    return Y


class PINOReconstructor(BaseEstimator):
    """Physics-informed reconstruction of eta(x, t) from buoy or radar input.

    ``fit(X, y)`` trains without ground-truth fields: ``X`` holds the
    measurements and ``y`` the calibration series at ``calibration_positions``
    (for buoy input ``y`` defaults to ``X``). ``predict`` returns elevation
    fields and ``score`` is ``1 - mean SSP`` against reference fields.
    """

    def __init__(self, case="A_buoy", n_layers=2, n_modes=32, width=16, pad=12, domain_length=1953.0, n_x=500,
                 duration=100.0, n_t=500, depth=500.0, calibration_positions=None, lr0=1e-3, halve_every=25,
                 batch_size=8, max_epochs=300, patience=50, weight_decay=1e-4, lambda_reg=0.25,
                 validation_fraction=0.2, random_state=0):
        self.case = case
        self.n_layers = n_layers
        self.n_modes = n_modes
        self.width = width
        self.pad = pad
        self.domain_length = domain_length
        self.n_x = n_x
        self.duration = duration
        self.n_t = n_t
        self.depth = depth
        self.calibration_positions = calibration_positions
        self.lr0 = lr0
        self.halve_every = halve_every
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.weight_decay = weight_decay
        self.lambda_reg = lambda_reg
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _grid(self):
        return build_grid(self.domain_length, self.n_x, self.duration, self.n_t, self.depth)

    def _columns(self, grid, n_cal: int) -> np.ndarray:
        positions = self.calibration_positions
        if positions is None:
            if self.case == "A_buoy":
                positions = scaled_positions(grid)
            else:
                positions = [grid.domain_length / 2]
        cols = buoy_columns(grid, positions)
        if len(cols) != n_cal:
            raise InvalidArgument(f"{n_cal} calibration series for {len(cols)} calibration positions")
        return cols

    def fit(self, X, y=None):
        grid = self._grid()
        X = check_measurements(X)
        if self.case == "A_buoy":
            n_sparse = X.shape[1]
        elif self.case == "B_radar":
            n_sparse = X.shape[2]
        else:
            raise InvalidArgument(f"unknown case {self.case!r}")
        cfg = ArchConfig(self.case, self.n_layers, self.n_modes, self.width, self.pad, n_sparse, grid.n_x, grid.n_t)
        X = check_measurements(X, cfg.input_shape)
        if y is None:
            if self.case != "A_buoy":
                raise InvalidArgument("radar input needs calibration series y")
            y = X
        y = check_measurements(y)
        if y.shape[0] != X.shape[0] or y.shape[2] != grid.n_t:
            raise InvalidArgument(f"calibration series shape {y.shape} does not fit {X.shape[0]} samples of {grid.n_t} steps")
        cols = self._columns(grid, y.shape[1])
        items = [TrainItem(str(i), X[i].astype(np.float32), y[i], cols) for i in range(X.shape[0])]
        order = np.random.default_rng(self.random_state).permutation(len(items))
        n_val = int(round(self.validation_fraction * len(items)))
        if n_val >= len(items):
            raise InvalidArgument("validation_fraction leaves no training samples")
        val = [items[i] for i in order[:n_val]]
        tr = [items[i] for i in order[n_val:]]
        tcfg = TrainConfig(self.lr0, self.halve_every, self.batch_size, min(self.patience, self.max_epochs),
                           self.max_epochs, self.weight_decay, self.random_state)
        model = init_parameters(cfg, self.random_state)
        self.model_, self.record_ = train(model, tr, val, tcfg, grid, LossWeights(reg=self.lambda_reg))
        self.grid_ = grid
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_measurements(X, self.model_.cfg.input_shape)
        with torch.inference_mode():
            out = self.model_(torch.as_tensor(X, dtype=self.model_.dtype))
        return out.double().numpy()

    def score(self, X, y) -> float:
        """``1 - mean SSP`` of the predicted elevation against reference fields ``y``."""
        pred = self.predict(X)
        y = check_fields(y, pred.shape[1:])
        if len(y) != len(pred):
            raise InvalidArgument(f"{len(y)} reference fields for {len(pred)} measurements")
        return 1.0 - float(np.mean([ssp(p, t).value for p, t in zip(pred, y)]))
