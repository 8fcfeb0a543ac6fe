"""Command-line entry point. Every command writes CSV tables, each with a
JSON metadata sidecar."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from . import config as cfgmod
from .arraymodel import ArrayModel
from .bounds import aod_crb_closed_form, peb, position_fim
from .channel import GainModel, aggregate_gain, noise_variance
from .e2e import AodAutoencoder, PosAutoencoder, load_system, train_aod_ae, train_pos_ae
from .evaluation import _ARRAY_STREAM, BenchmarkSystem, evaluate_rmse, position_sectors, stream
from .neural import CheckpointError
from .scenario import DEG

log = logging.getLogger("mmwpos")

EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3
EXIT_SWEEP_AXIS = 4

_TRAIN_STREAM = 3


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path: str, header: Sequence[str], rows, cfg: cfgmod.Config, command: str,
                units: Optional[dict] = None, inputs: Sequence[str] = ()) -> str:
    """CSV with a header row plus a ``.meta.json`` sidecar."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    meta = {
        "artifact": "mmwpos",
        "version": __version__,
        "command": command,
        "seed": cfg.seed,
        "columns": list(header),
        "units": units or {},
        "inputs": list(inputs),
        "config": cfg.to_dict(),
    }
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %s", path)
    return path


def _need_axis(cfg, allowed):
    axis = cfg["sweep"]["axis"]
    if axis not in allowed:
        raise cfgmod.SweepAxisError(f"this command sweeps {' or '.join(allowed)}, but [sweep] axis = {axis}")
    return axis


def _benchmark(cfg, sc):
    return BenchmarkSystem(sc, cfg.grid(), **cfg.power_kw())


def _manufactured_arrays(cfg, sc):
    """The true arrays shared by training and evaluation for one seed."""
    return cfg.impairment().true_arrays(sc.n_bs, sc.n_tx, sc.wavelength, stream(cfg.seed, _ARRAY_STREAM))


# -- commands -------------------------------------------------------------------------

def cmd_bounds_sweep(cfg, out):
    _need_axis(cfg, ("snr",))
    sc = cfg.scenario()
    spec = cfg.eval_spec()
    bench = _benchmark(cfg, sc)
    arrays = _manufactured_arrays(cfg, sc)
    theta = spec.sector.center if spec.theta is None else spec.theta
    F = bench.precoder(spec.sector, spec.bs_index)
    p = np.array(cfg["eval"]["position"])
    Fs = [bench.precoder(u, i) for i, u in enumerate(position_sectors(sc, p, spec.position_sector_width))]
    rows = []
    for snr in spec.snr_grid:
        crb = aod_crb_closed_form(F, theta, 1.0, noise_variance(snr), arrays[spec.bs_index])
        pe = peb(position_fim(sc, Fs, p, [GainModel(snr)] * sc.n_bs, arrays))
        rows.append((snr, np.sqrt(crb) / DEG, pe))
    return [write_table(os.path.join(out, "bounds.csv"), ["snr_db", "sqrt_crb_deg", "peb_m"], rows, cfg,
                        "bounds-sweep", {"snr_db": "dB", "sqrt_crb_deg": "deg", "peb_m": "m"})]


def _rmse_rows(points):
    return [(pt.snr_db, pt.rmse, pt.bound, pt.stderr) for pt in points]


def _units(mode):
    u = "deg" if mode == "aod" else "m"
    return {"snr_db": "dB", "rmse": u, "bound": u, "stderr": u}


def cmd_baseline_sweep(cfg, out):
    _need_axis(cfg, ("snr",))
    sc = cfg.scenario()
    mode = cfg["eval"]["mode"]
    pts = evaluate_rmse(_benchmark(cfg, sc), cfg.eval_spec(), sc)
    return [write_table(os.path.join(out, f"baseline_{mode}.csv"), ["snr_db", "rmse", "bound", "stderr"],
                        _rmse_rows(pts), cfg, "baseline-sweep", _units(mode))]


def _train(cfg, out, kind):
    sc = cfg.scenario()
    tc = cfg.train_config(sc)
    arrays = _manufactured_arrays(cfg, sc)
    fn = train_aod_ae if kind == "aod" else train_pos_ae
    system, tlog, _ = fn(tc, stream(cfg.seed, _TRAIN_STREAM), arrays)
    os.makedirs(out, exist_ok=True)
    ckpt = os.path.join(out, f"{kind}_ae_snr{tc.snr_db:g}.ckpt")
    system.save(ckpt)
    log.info("saved %s after %d iterations (%.1f s)", ckpt, len(tlog.loss), tlog.seconds)
    unit = "rad^2" if kind == "aod" else "m^2"
    csv_path = write_table(os.path.join(out, f"train_{kind}_snr{tc.snr_db:g}.csv"), ["iteration", "loss", "lr"],
                           tlog.rows(), cfg, f"train-{kind}", {"loss": unit})
    return [ckpt, csv_path]


def cmd_train_aod(cfg, out):
    return _train(cfg, out, "aod")


def cmd_train_pos(cfg, out):
    return _train(cfg, out, "pos")


def _load(cfg, path, sc):
    return load_system(path, sc.n_tx, sc.n_transmissions, sc.n_bs, cfg["train"]["hidden"])


def cmd_eval(cfg, out):
    paths = cfg["eval"]["checkpoints"]
    if not paths:
        raise cfgmod.ConfigError("[eval] checkpoints: no checkpoint given")
    sc = cfg.scenario()
    arrays = _manufactured_arrays(cfg, sc)
    select = cfg["system"]["select"]
    bench = _benchmark(cfg, sc)
    ae_rows, bench_rows, mode = [], [], None
    for path in paths:
        system = _load(cfg, path, sc)
        kind = "aod" if isinstance(system, AodAutoencoder) else "position"
        if mode not in (None, kind):
            raise CheckpointError(f"{path}: mixes AoD and positioning checkpoints")
        mode = kind
        if kind == "position":
            cfg.values["eval"]["mode"] = "position"
        spec = cfg.eval_spec(snr_grid=(system.snr_db,))
        if select in ("ae", "both"):
            ae_rows += _rmse_rows(evaluate_rmse(system, spec, sc, arrays))
        if select in ("benchmark", "both"):
            bench_rows += _rmse_rows(evaluate_rmse(bench, spec, sc, arrays))
    header = ["snr_db", "rmse", "bound", "stderr"]
    written = []
    for name, rows in (("ae", ae_rows), ("benchmark", bench_rows)):
        if rows:
            written.append(write_table(os.path.join(out, f"eval_{mode}_{name}.csv"), header, rows, cfg,
                                       "eval", _units(mode), inputs=paths))
    return written


def cmd_beampattern(cfg, out):
    sc = cfg.scenario()
    spec = cfg.eval_spec()
    nominal = ArrayModel.ideal(sc.n_tx, sc.wavelength)
    grid = np.arange(-90, 91, dtype=float)
    select = cfg["system"]["select"]
    precoders = {}
    if select in ("benchmark", "both"):
        precoders["benchmark"] = _benchmark(cfg, sc).precoder(spec.sector, spec.bs_index)
    if select in ("ae", "both"):
        paths = cfg["eval"]["checkpoints"]
        if not paths:
            raise cfgmod.ConfigError("[eval] checkpoints: an autoencoder beampattern needs a checkpoint")
        precoders["ae"] = _load(cfg, paths[0], sc).precoder(spec.sector, spec.bs_index)
    written = []
    for name, F in precoders.items():
        gain = aggregate_gain(F, nominal, grid * DEG)
        written.append(write_table(os.path.join(out, f"beampattern_{name}.csv"), ["theta_deg", "gain"],
                                   list(zip(grid, gain)), cfg, "beampattern", {"theta_deg": "deg", "gain": "linear"},
                                   inputs=cfg["eval"]["checkpoints"] if name == "ae" else ()))
    return written


def cmd_hwi_sweep(cfg, out):
    axis = _need_axis(cfg, ("sigma_lambda", "zeta"))
    if cfg["system"]["select"] != "benchmark":
        raise cfgmod.ConfigError("[system] hwi-sweep evaluates the benchmark; train and eval one "
                                 "autoencoder per impairment level instead")
    sc = cfg.scenario()
    kind = "spacing" if axis == "sigma_lambda" else "decay"
    values = cfg["sweep"]["values"]
    if axis == "zeta" and any(v >= 0 for v in values):
        raise cfgmod.ConfigError("[sweep] zeta values must be negative")
    if axis == "sigma_lambda" and any(v <= 0 for v in values):
        raise cfgmod.ConfigError("[sweep] sigma_lambda values must be positive")
    bench = _benchmark(cfg, sc)
    mode = cfg["eval"]["mode"]
    rows = []
    for v in values:
        spec = cfg.eval_spec(snr_grid=(cfg["sweep"]["fixed_snr_db"],), impairment=cfg.impairment(kind, v))
        pt = evaluate_rmse(bench, spec, sc)[0]
        rows.append((v, pt.rmse, pt.bound))
    u = "deg" if mode == "aod" else "m"
    unit_axis = "wavelengths" if axis == "sigma_lambda" else "1"
    return [write_table(os.path.join(out, f"hwi_{axis}_{mode}.csv"), ["axis_value", "rmse", "bound"], rows, cfg,
                        "hwi-sweep", {"axis_value": unit_axis, "rmse": u, "bound": u})]


COMMANDS = {
    "bounds-sweep": (cmd_bounds_sweep, "AoD CRB and PEB of the benchmark precoders over the SNR grid"),
    "baseline-sweep": (cmd_baseline_sweep, "Monte-Carlo RMSE of the model-based benchmark over the SNR grid"),
    "train-aod": (cmd_train_aod, "train the AoD autoencoder at [train] snr_db"),
    "train-pos": (cmd_train_pos, "train the positioning autoencoder at [train] snr_db"),
    "eval": (cmd_eval, "evaluate trained checkpoints at their training SNR"),
    "beampattern": (cmd_beampattern, "aggregate beampattern on a 1 degree grid"),
    "hwi-sweep": (cmd_hwi_sweep, "benchmark RMSE versus spacing error or coupling decay"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmwpos", description="mmWave positioning bounds with model-based and learned beamforming")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="INI-style config file (defaults apply when omitted)")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, help="override [run] seed")
        p.add_argument("--trials", type=int, help="override [eval] trials")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("eval", "beampattern"):
            p.add_argument("--checkpoint", action="append", default=[], help="checkpoint path (repeatable)")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        env = {}
        if args.seed is not None:
            if args.seed < 0:
                raise cfgmod.ConfigError("--seed must be non-negative")
            env["MMWPOS_RUN__SEED"] = str(args.seed)
        if args.trials is not None:
            env["MMWPOS_EVAL__TRIALS"] = str(args.trials)
        cfg = cfgmod.load(args.config)
        cfg = cfgmod.validate(cfgmod.apply_env(cfg, env))
        if getattr(args, "checkpoint", None):
            cfg.values["eval"]["checkpoints"] = list(args.checkpoint)
        written = COMMANDS[args.command][0](cfg, args.out)
    except cfgmod.SweepAxisError as exc:
        print(f"mmwpos: sweep axis error: {exc}", file=sys.stderr)
        return EXIT_SWEEP_AXIS
    except cfgmod.ConfigError as exc:
        print(f"mmwpos: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"mmwpos: checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (ValueError, RuntimeError, OSError, ArithmeticError) as exc:
        print(f"mmwpos: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
