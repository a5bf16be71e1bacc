"""Surface Similarity Parameter, Lp-eps error tables and timed reconstruction."""

from __future__ import annotations

import csv
import time
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import InvalidArgument, UndefinedMetric
from .wavecore import space_slice, time_slice


@dataclass(frozen=True)
class SspScore:
    value: float
    numerator: float
    denominator: float

    def __float__(self) -> float:
        return self.value


def crop(field: np.ndarray) -> np.ndarray:
    """Interior region left untouched by the space and time tapers."""
    n_x, n_t = field.shape[-2:]
    return field[..., space_slice(n_x), time_slice(n_t)]


def ssp(a, b, full_field: bool = False) -> SspScore:
    """Normalized spectral distance ``|F(a-b)| / (|F(a)| + |F(b)|)`` in [0, 1].

    Computed on the taper-free interior unless ``full_field`` is set.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InvalidArgument(f"ssp needs equal shapes, got {a.shape} and {b.shape}")
    if a.ndim != 2:
        raise InvalidArgument(f"ssp compares 2D fields, got {a.ndim}D")
    if not full_field:
        a, b = crop(a), crop(b)
    fa = np.fft.fft2(a)
    fb = np.fft.fft2(b)
    num = float(np.linalg.norm(fa - fb))
    den = float(np.linalg.norm(fa) + np.linalg.norm(fb))
    if den == 0:
        raise UndefinedMetric("ssp is undefined for two all-zero fields")
    return SspScore(num / den, num, den)


HEATMAP_COLUMNS = ("lp_m", "eps", "n_samples", "mean_ssp", "std_ssp")


def error_heatmap(scores, lps=None, epss=None) -> tuple[list[dict], float]:
    """Per-(Lp, eps) mean and std of SSP plus the grand mean over all scores.

    ``scores`` holds ``(lp, eps, ssp)`` triples. When ``lps``/``epss`` are given
    every combination gets a row; empty cells carry ``n_samples=0`` and NaN.
    """
    cells = defaultdict(list)
    for lp, eps, s in scores:
        cells[(round(float(lp), 6), round(float(eps), 6))].append(float(s))
    if lps is None:
        lps = sorted({k[0] for k in cells})
    if epss is None:
        epss = sorted({k[1] for k in cells})
    rows = []
    for lp in lps:
        for eps in epss:
            vals = cells.get((round(float(lp), 6), round(float(eps), 6)), [])
            rows.append({
                "lp_m": float(lp), "eps": float(eps), "n_samples": len(vals),
                "mean_ssp": float(np.mean(vals)) if vals else float("nan"),
                "std_ssp": float(np.std(vals)) if vals else float("nan"),
            })
    every = [v for vals in cells.values() for v in vals]
    grand = float(np.mean(every)) if every else float("nan")
    return rows, grand


def write_heatmap_csv(rows: list[dict], grand_mean: float, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HEATMAP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
        writer.writerow({"lp_m": "all", "eps": "all", "n_samples": sum(r["n_samples"] for r in rows),
                         "mean_ssp": grand_mean, "std_ssp": ""})
    return path


def render_heatmap(rows: list[dict], grand_mean: float, path) -> Path:
    """Static image of the mean-SSP table (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    lps = sorted({r["lp_m"] for r in rows})
    epss = sorted({r["eps"] for r in rows})
    grid = np.full((len(lps), len(epss)), np.nan)
    for r in rows:
        grid[lps.index(r["lp_m"]), epss.index(r["eps"])] = r["mean_ssp"]
    fig, ax = plt.subplots(figsize=(1 + 0.6 * len(epss), 1 + 0.45 * len(lps)))
    im = ax.imshow(grid, origin="lower", cmap="viridis", vmin=0, vmax=max(0.3, np.nanmax(grid) if np.isfinite(grid).any() else 1))
    for i in range(len(lps)):
        for j in range(len(epss)):
            if np.isfinite(grid[i, j]):
                ax.text(j, i, f"{grid[i, j]:.3f}", ha="center", va="center", fontsize=7, color="w")
    ax.set_xticks(range(len(epss)), [f"{e:g}" for e in epss])
    ax.set_yticks(range(len(lps)), [f"{lp:g}" for lp in lps])
    ax.set_xlabel("eps")
    ax.set_ylabel("Lp [m]")
    ax.set_title(f"mean SSP = {grand_mean:.4f}")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


@dataclass
class Reconstruction:
    eta: np.ndarray
    phis: np.ndarray
    seconds: float


def reconstruct(model, sample, grid) -> Reconstruction:
    """Forward pass plus surface-potential recovery, with wall-clock time."""
    from .physloss import recover_surface_potential

    kind = "buoy" if model.cfg.case == "A_buoy" else "radar"
    if sample.kind != kind:
        raise InvalidArgument(f"{model.cfg.case} model cannot reconstruct a {sample.kind} sample")
    m = torch.as_tensor(np.asarray(sample.measurement), dtype=model.dtype)
    if tuple(m.shape) != model.cfg.input_shape:
        raise InvalidArgument(f"measurement shape {tuple(m.shape)} does not match {model.cfg.input_shape}")
    start = time.perf_counter()
    with torch.inference_mode():
        eta = model(m).double()
        phis = recover_surface_potential(eta, grid)
    seconds = time.perf_counter() - start
    return Reconstruction(eta.numpy(), phis.numpy(), seconds)
