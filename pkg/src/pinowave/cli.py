"""Command-line entry point: ``pinowave <subcommand> [options]``.

Exit codes: 0 success, 1 validation failure, 2 runtime error (including an
unknown subcommand). Options may also come from a YAML/JSON file given with
``--config``; keys use the long option names with dashes or underscores, and
command-line flags override file values.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch
import yaml

from . import io, pipeline
from .errors import InvalidArgument, InvalidGeometry, InvalidSample, PinowaveError, UndefinedMetric
from .gradcheck import check_gradients, toy_problem
from .hosm import DEFAULT_PEAK_WAVELENGTHS, DEFAULT_STEEPNESSES, HosmConfig, generate_dataset
from .metrics import render_heatmap, write_heatmap_csv
from .physloss import LossWeights
from .pino import ArchConfig, init_parameters, parameter_count
from .sensors import RadarGeometry
from .trainer import TrainConfig, assign_splits, load_checkpoint, load_items, save_checkpoint, split_dataset, train
from .wavecore import build_grid

log = logging.getLogger("pinowave")

VALIDATION_ERRORS = (InvalidArgument, InvalidGeometry, InvalidSample, UndefinedMetric)
GRADCHECK_TOL = 1e-4


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in str(text).replace(",", " ").split()]


def _add_grid_args(p):
    p.add_argument("--domain", type=float, default=1953.0, help="domain length [m]")
    p.add_argument("--nx", type=int, default=500)
    p.add_argument("--duration", type=float, default=100.0, help="record length [s]")
    p.add_argument("--nt", type=int, default=500)
    p.add_argument("--depth", type=float, default=500.0)


def _add_arch_args(p):
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--modes", type=int, default=128)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--pad", type=int, default=12)
    p.add_argument("--coord-channels", action="store_true")


def _add_train_args(p):
    p.add_argument("--epochs", type=int, default=300, help="maximum epochs")
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--halve-every", type=int, default=25)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--micro-batch", type=int, default=None)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--lambda-reg", type=float, default=0.25)
    p.add_argument("--freeze-hosm", action="store_true", help="no gradient through the W recursion")


def _common_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands re-declare the global flags with suppressed defaults so a
    # value given before the subcommand is not reset by the subparser
    def d(value):
        return argparse.SUPPRESS if suppress else value

    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d(None), help="YAML or JSON file with option values")
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--out", default=d(None), help="output file or directory")
    p.add_argument("--threads", type=int, default=d(None))
    p.add_argument("--deterministic", action="store_true", default=d(False))
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="pinowave", description="HOSM wave fields, sensor models and PINO reconstruction",
                                     parents=[_common_flags(suppress=False)])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("wavegen", parents=[common], help="simulate a HOSM wave dataset")
    p.add_argument("--lp", default=None, help="peak wavelengths [m] (default: 100..200 step 10)")
    p.add_argument("--eps", default=None, help="steepnesses (default: 0.02..0.13 step 0.01)")
    p.add_argument("--count", type=int, default=8, help="samples per (Lp, eps) combination")
    _add_grid_args(p)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--internal-dt", type=float, default=0.05)
    p.add_argument("--relax", type=float, default=20.0, help="relaxation length in peak periods")
    p.add_argument("--k-cut", type=float, default=5.0, help="spectral cutoff in multiples of k_p")
    p.add_argument("--gamma", type=float, default=3.3)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("sense", parents=[common], help="buoy or radar samples from a wave dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--kind", choices=("buoy", "radar"), required=True)
    p.add_argument("--positions", default=None, help="sensor positions [m]")
    p.add_argument("--antenna-x", type=float, default=0.0)
    p.add_argument("--antenna-height", type=float, default=20.0)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=0.0)
    p.add_argument("--rotation-dt", type=float, default=2.0)

    p = sub.add_parser("split", parents=[common], help="assign train/val/test splits")
    p.add_argument("--dataset", required=True)
    p.add_argument("--ratios", default="0.6 0.2 0.2")

    p = sub.add_parser("train", parents=[common], help="train a PINO on a sensor dataset")
    p.add_argument("--dataset", required=True, help="sensor dataset")
    _add_arch_args(p)
    _add_train_args(p)

    p = sub.add_parser("eval", parents=[common], help="SSP table of a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True, help="sensor dataset")
    p.add_argument("--reference", default=None, help="wave dataset (default: the sensor dataset's source)")
    p.add_argument("--split", default="test")
    p.add_argument("--full-field", action="store_true", help="score the whole field instead of the taper-free interior")
    p.add_argument("--png", action="store_true", help="also render the table as an image")

    p = sub.add_parser("reconstruct", parents=[common], help="reconstruct one sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True, help="sensor dataset")
    p.add_argument("--id", required=True, help="sample id")
    p.add_argument("--reference", default=None)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient audit")
    p.add_argument("--toy", action="store_true", help="16x16 grid, n_F=2, n_m=4, n_w=4 (the only size offered)")
    p.add_argument("--case", choices=("A_buoy", "B_radar"), default="A_buoy")
    p.add_argument("--entries", type=int, default=8, help="probed entries per parameter tensor")

    p = sub.add_parser("sweep", parents=[common], help="rerun the (n_F, n_m, n_w) hyperparameter grid")
    p.add_argument("--dataset", required=True, help="sensor dataset")
    p.add_argument("--layers", default="2 3 4")
    p.add_argument("--modes", default="64 128 256", help="full-scale modes, rescaled by n_x/500")
    p.add_argument("--widths", default="16 32 48 64")
    p.add_argument("--pad", type=int, default=12)
    p.add_argument("--coord-channels", action="store_true")
    _add_train_args(p)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    text = Path(args.config).read_text()
    values = yaml.safe_load(text) or {}
    if not isinstance(values, dict):
        raise InvalidArgument("config file must hold a mapping")
    # file values become defaults; explicit flags still win
    sub = parser._subparsers._group_actions[0].choices[args.command] if args.command else parser
    defaults = {}
    known = {a.dest for a in sub._actions}
    for key, value in values.items():
        dest = str(key).replace("-", "_")
        if dest not in known:
            raise InvalidArgument(f"unknown config key {key!r} for {args.command}")
        if isinstance(value, list):
            value = " ".join(str(v) for v in value)
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _out_dir(args, default: str) -> Path:
    path = Path(args.out or default)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _train_config(args) -> TrainConfig:
    return TrainConfig(lr0=args.lr, halve_every=args.halve_every, batch_size=args.batch, patience=min(args.patience, args.epochs),
                       max_epochs=args.epochs, weight_decay=args.weight_decay, seed=args.seed,
                       micro_batch=args.micro_batch, deterministic=args.deterministic)


def _arch_for(reader: io.DatasetReader, n_layers, n_modes, width, pad, coord) -> ArchConfig:
    grid = pipeline.dataset_grid(reader)
    kind = reader.meta["kind"]
    first = reader.samples()[0]["arrays"]["measurement"]["shape"]
    n_sparse = first[0] if kind == "buoy" else first[1]
    return ArchConfig("A_buoy" if kind == "buoy" else "B_radar", n_layers, n_modes, width, pad, n_sparse,
                      grid.n_x, grid.n_t, coord_channels=coord)


def cmd_wavegen(args) -> int:
    lps = _floats(args.lp) if args.lp else list(DEFAULT_PEAK_WAVELENGTHS)
    epss = _floats(args.eps) if args.eps else list(DEFAULT_STEEPNESSES)
    grid = build_grid(args.domain, args.nx, args.duration, args.nt, args.depth)
    cfg = HosmConfig(order=args.order, internal_dt=args.internal_dt, relaxation_periods=args.relax)
    out = _out_dir(args, "waves")
    writer = io.DatasetWriter(out)
    manifest = generate_dataset((lps, epss), args.count, cfg, writer, grid, base_seed=args.seed,
                                workers=args.workers, k_cut_factor=args.k_cut, gamma=args.gamma)
    ok = sum(s["status"] == "ok" for s in manifest["samples"])
    print(f"{ok}/{len(manifest['samples'])} samples written to {out}")
    return 0


def cmd_sense(args) -> int:
    geom = None
    if args.kind == "radar":
        geom = RadarGeometry(args.antenna_x, args.antenna_height, args.c1, args.c2, args.rotation_dt)
    positions = _floats(args.positions) if args.positions else None
    out = _out_dir(args, f"{args.kind}")
    manifest = pipeline.sense_dataset(args.dataset, out, args.kind, geom, positions)
    print(f"{len(manifest['samples'])} {args.kind} samples written to {out}")
    return 0


def cmd_split(args) -> int:
    ratios = tuple(_floats(args.ratios))
    reader = io.DatasetReader(args.dataset)
    splits = split_dataset(reader.manifest, ratios, args.seed)
    assign_splits(io.DatasetWriter(args.dataset), splits)
    source = reader.meta.get("source")
    if source and Path(source).exists():
        assign_splits(io.DatasetWriter(source), splits)
    print("train/val/test = " + "/".join(str(len(s)) for s in splits))
    return 0


def _train_one(reader, arch: ArchConfig, args, out: Path, tag: str = ""):
    grid = pipeline.dataset_grid(reader)
    train_items = load_items(reader, "train")
    val_items = load_items(reader, "val")
    if not train_items:
        raise InvalidArgument("dataset has no 'train' split; run `pinowave split` first")
    model = init_parameters(arch, args.seed)
    weights = LossWeights(reg=args.lambda_reg, differentiate_hosm=not args.freeze_hosm)
    cfg = _train_config(args)
    model, record = train(model, train_items, val_items, cfg, grid, weights, log_path=out / f"run{tag}.jsonl")
    save_checkpoint(model, record, out / f"model{tag}.pwck")
    record.write_jsonl(out / f"record{tag}.jsonl", timings=not args.deterministic)
    return model, record


def cmd_train(args) -> int:
    reader = io.DatasetReader(args.dataset)
    arch = _arch_for(reader, args.layers, args.modes, args.width, args.pad, args.coord_channels)
    out = _out_dir(args, "run")
    _, record = _train_one(reader, arch, args, out)
    print(f"best epoch {record.best_epoch} (val {record.best_val:.5g}); checkpoint {out / 'model.pwck'}")
    return 0


def _eval_cells(reader: io.DatasetReader):
    recs = reader.samples(status=None)
    return sorted({r["lp"] for r in recs}), sorted({r["eps"] for r in recs})


def cmd_eval(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    reader = io.DatasetReader(args.dataset)
    lps, epss = _eval_cells(reader)
    result = pipeline.evaluate(model, args.dataset, args.split, args.reference, args.full_field, lps, epss)
    out = _out_dir(args, "eval")
    write_heatmap_csv(result["rows"], result["mean_ssp"], out / "ssp.csv")
    with open(out / "samples.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(result["samples"][0]))
        writer.writeheader()
        writer.writerows(result["samples"])
    if args.png:
        render_heatmap(result["rows"], result["mean_ssp"], out / "ssp.png")
    print(f"{len(result['samples'])} samples, mean SSP(eta) {result['mean_ssp']:.4f}, "
          f"mean SSP(phi_s) {result['mean_ssp_phis']:.4f}; table in {out / 'ssp.csv'}")
    return 0


def cmd_reconstruct(args) -> int:
    from .metrics import reconstruct, ssp

    model, _ = load_checkpoint(args.checkpoint)
    reader = io.DatasetReader(args.dataset)
    grid = pipeline.dataset_grid(reader)
    sample = pipeline.sensor_sample(reader, args.id)
    rec = reconstruct(model, sample, grid)
    out = Path(args.out or f"{args.id}.npz")
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savez(out, eta=rec.eta, phis=rec.phis)
    line = f"reconstructed {args.id} in {rec.seconds:.3f} s -> {out}"
    try:
        field = pipeline.load_field(pipeline.reference_reader(reader, args.reference), args.id)
        line += f"; SSP(eta) {ssp(rec.eta, field.eta).value:.4f}, SSP(phi_s) {ssp(rec.phis, field.phis).value:.4f}"
    except InvalidArgument:
        pass
    print(line)
    return 0


def cmd_gradcheck(args) -> int:
    model, sample, grid = toy_problem(args.case, args.seed)
    errors = check_gradients(model, sample, grid, entries_per_group=args.entries, seed=args.seed)
    worst = max(errors, key=errors.get)
    for name, err in errors.items():
        log.info("%-28s %.3e", name, err)
    print(f"max relative gradient error {errors[worst]:.3e} ({worst})")
    return 0 if errors[worst] < GRADCHECK_TOL else 1


def cmd_sweep(args) -> int:
    reader = io.DatasetReader(args.dataset)
    grid = pipeline.dataset_grid(reader)
    out = _out_dir(args, "sweep")
    rows = []
    for n_f in _ints(args.layers):
        for n_m_full in _ints(args.modes):
            n_m = max(1, int(round(n_m_full * grid.n_x / 500)))
            n_m = min(n_m, (grid.n_x + args.pad) // 2, (grid.n_t + args.pad) // 2 + 1)
            for n_w in _ints(args.widths):
                arch = _arch_for(reader, n_f, n_m, n_w, args.pad, args.coord_channels)
                tag = f"_F{n_f}_m{n_m}_w{n_w}"
                model, record = _train_one(reader, arch, args, out, tag)
                val = pipeline.evaluate(model, args.dataset, "val")
                ssps = [s["ssp_eta"] for s in val["samples"]]
                best = record.epochs[record.best_epoch - 1]
                rows.append({"n_F": n_f, "n_m": n_m, "n_w": n_w, "weights": parameter_count(arch),
                             "epochs": record.best_epoch, "train_loss": best["train"]["total"],
                             "val_loss": best["val"].get("total", float("nan")),
                             "val_ssp": float(np.mean(ssps)), "val_ssp_var": float(np.var(ssps))})
                print(json.dumps(rows[-1]))
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return 0


COMMANDS = {
    "wavegen": cmd_wavegen, "sense": cmd_sense, "split": cmd_split, "train": cmd_train, "eval": cmd_eval,
    "reconstruct": cmd_reconstruct, "gradcheck": cmd_gradcheck, "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    except (OSError, yaml.YAMLError, InvalidArgument) as exc:
        print(f"pinowave: {exc}", file=sys.stderr)
        return 1
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.threads:
        torch.set_num_threads(args.threads)
    if args.deterministic:
        torch.use_deterministic_algorithms(True)
        if not args.threads:
            torch.set_num_threads(1)
    try:
        return COMMANDS[args.command](args)
    except VALIDATION_ERRORS as exc:
        print(f"pinowave {args.command}: {exc}", file=sys.stderr)
        return 1
    except (PinowaveError, OSError, RuntimeError) as exc:
        print(f"pinowave {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
