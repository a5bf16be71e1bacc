"""Glue between the on-disk containers, the sensor models, training and evaluation."""

from __future__ import annotations

import logging
import os
from pathlib import Path

import numpy as np

from . import io
from .errors import InvalidArgument
from .metrics import error_heatmap, reconstruct, ssp
from .sensors import RadarGeometry, SensorSample, assemble_sample
from .wavecore import Grid, WaveField

log = logging.getLogger(__name__)


def dataset_grid(reader: io.DatasetReader) -> Grid:
    return Grid.from_dict(reader.meta["grid"])


def load_field(reader: io.DatasetReader, sample_id: str) -> WaveField:
    grid = dataset_grid(reader)
    return WaveField(reader.read_array(sample_id, "eta").astype(float),
                     reader.read_array(sample_id, "phis").astype(float), grid)


def sense_dataset(wave_root, out_root, kind: str, geom: RadarGeometry | None = None, positions=None) -> dict:
    """Turn every successful sea state of a wave dataset into a sensor sample.

    The sensor container keeps the sample ids, sea-state parameters and split
    labels of its source and records the source path in its metadata.
    """
    src = io.DatasetReader(wave_root)
    grid = dataset_grid(src)
    if kind == "radar" and geom is None:
        geom = RadarGeometry()
    out = io.DatasetWriter(out_root, {"source": os.path.abspath(wave_root), "grid": grid.to_dict(), "kind": kind,
                                      "geometry": geom.to_dict() if geom else None})
    for rec in src.samples():
        sample = assemble_sample(load_field(src, rec["id"]), kind, geom, positions)
        entry = {k: rec[k] for k in ("id", "lp", "eps", "seed", "split") if k in rec}
        entry.update(status="ok", kind=kind, columns=sample.columns.tolist(), positions=sample.positions.tolist())
        out.add_sample(entry)
        out.write_array(rec["id"], "measurement", sample.measurement)
        out.write_array(rec["id"], "eta_cal", sample.eta_cal)
    return out.flush()


def sensor_sample(reader: io.DatasetReader, sample_id: str) -> SensorSample:
    rec = reader.record(sample_id)
    meas = reader.read_array(sample_id, "measurement")
    cal = reader.read_array(sample_id, "eta_cal")
    kind = rec["kind"]
    return SensorSample(kind, cal, np.asarray(rec["positions"]), np.asarray(rec["columns"]),
                        buoy_series=meas if kind == "buoy" else None, radar=meas if kind == "radar" else None,
                        provenance={k: rec.get(k) for k in ("id", "lp", "eps", "seed")})


def reference_reader(sensor_reader: io.DatasetReader, wave_root=None) -> io.DatasetReader:
    root = wave_root or sensor_reader.meta.get("source")
    if not root or not Path(root).exists():
        raise InvalidArgument("reference wave dataset not found; pass it explicitly")
    return io.DatasetReader(root)


def evaluate(model, sensor_root, split: str | None = "test", wave_root=None, full_field: bool = False,
             lps=None, epss=None) -> dict:
    """SSP of reconstructed elevation and potential against the HOSM references."""
    sens = io.DatasetReader(sensor_root)
    ref = reference_reader(sens, wave_root)
    grid = dataset_grid(sens)
    per_sample = []
    for rec in sens.samples(split=split):
        sample = sensor_sample(sens, rec["id"])
        field = load_field(ref, rec["id"])
        out = reconstruct(model, sample, grid)
        per_sample.append({
            "id": rec["id"], "lp": rec["lp"], "eps": rec["eps"],
            "ssp_eta": ssp(out.eta, field.eta, full_field).value,
            "ssp_phis": ssp(out.phis, field.phis, full_field).value,
            "seconds": out.seconds,
        })
    if not per_sample:
        raise InvalidArgument(f"no samples in split {split!r}")
    rows, grand = error_heatmap([(s["lp"], s["eps"], s["ssp_eta"]) for s in per_sample], lps, epss)
    return {"samples": per_sample, "rows": rows, "mean_ssp": grand,
            "mean_ssp_phis": float(np.mean([s["ssp_phis"] for s in per_sample]))}
