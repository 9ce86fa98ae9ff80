"""Command-line entry point: ``qpskrx <verb> [--config FILE] [options]``.

Exit codes: 0 success, 1 finished with flagged cells, 2 configuration
error, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import Receiver, heterodyne_error
from .config import ConfigError, RunConfig, emit_config, load_config
from .emulator import (
    cell_error_model,
    estimate_error_rates,
    generate_campaign,
    hd_k_extraction,
    hd_od_extraction,
    postselect_feedforward,
)
from .optimizer import SolverError
from .reporting import RecordWriter, SweepResult, SweepRow, config_hash, write_result
from .simulator import RECORD_DTYPE, RngContract, confusion_from_records, iter_trial_batches
from .sweeps import (
    HYBRID,
    displacement_sweep,
    displacement_table,
    error_rate_sweep,
    parameter_table,
    receiver_setup,
)

log = logging.getLogger("qpskrx")

EXIT_OK, EXIT_FLAGGED, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4

SIM_DTYPE = np.dtype(RECORD_DTYPE.descr + [("cell", np.uint32)])


def run_hash(cfg: RunConfig) -> str:
    """Hash of the settings that determine the numbers (not where or how they are written)."""
    d = cfg.to_dict()
    for key in ("output_dir", "output_format"):
        d.pop(key)
    return config_hash(d)


class _Run:
    """Resolved configuration plus the metadata stamped on every output."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.meta = {
            "command": command,
            "config_hash": run_hash(cfg),
            "seed": cfg.seed,
            "version": __version__,
        }
        self.flagged = 0
        self.solver_failed = False

    def write(self, result: SweepResult, name: str) -> None:
        result.meta = {**result.meta, **self.meta}
        for row in result.flagged:
            if row.flag == "solver-failure":
                self.solver_failed = True
        for path in write_result(result, self.out / name, self.cfg.output_format):
            log.info("wrote %s (%d rows)", path, len(result))

    def record_writer(self, name: str, **header) -> RecordWriter:
        return RecordWriter(self.out / f"{name}.ndjson", {**self.meta, **header})


# -- verbs -------------------------------------------------------------------


def cmd_sweep(run: _Run) -> None:
    cfg = run.cfg
    result = error_rate_sweep(
        cfg.alpha2.to_array(), cfg.receivers, cfg.split, cfg.imperfections, cfg.shots, cfg.seed, cfg.optimizer
    )
    run.write(result, "sweep")


def cmd_optimize(run: _Run) -> None:
    cfg = run.cfg
    run.write(parameter_table(cfg.alpha2.to_array(), cfg.optimizer), "optimize_parameters")
    run.write(displacement_table(cfg.t_alpha2.to_array(), cfg.optimizer), "optimize_displacement")


def _hybrid_cells(cfg: RunConfig):
    receivers = [Receiver(r) for r in cfg.receivers if Receiver(r) in HYBRID]
    if not receivers:
        raise ConfigError("simulate needs at least one of HD-K, HD-OD in receivers")
    cells = []
    for alpha2 in cfg.alpha2.to_array():
        alpha = math.sqrt(alpha2)
        for rx in receivers:
            split, setting, _ = receiver_setup(alpha, rx, cfg.split, cfg.optimizer)
            cells.append((float(alpha2), rx, split, setting))
    return cells


def cmd_simulate(run: _Run) -> None:
    cfg = run.cfg
    if cfg.shots < 1:
        raise ConfigError("simulate needs shots >= 1")
    cells = _hybrid_cells(cfg)
    header = {
        "cells": [
            {"cell": k, "alpha2": a2, "receiver": rx.value, "t2": sp.t2, "gamma2": st.gamma2, "phi": st.phi}
            for k, (a2, rx, sp, st) in enumerate(cells)
        ]
    }
    imp = cfg.imperfections
    result = SweepResult(meta={"kind": "simulated"})
    with run.record_writer("simulate_records", **header) as writer:
        for k, (alpha2, rx, split, setting) in enumerate(cells):
            alpha = math.sqrt(alpha2)
            rng = RngContract(cfg.seed, k + 1)
            batches = []
            for batch in iter_trial_batches(cfg.shots, alpha, split, setting, imp, rng):
                ext = np.empty(batch.size, dtype=SIM_DTYPE)
                for name in RECORD_DTYPE.names:
                    ext[name] = batch[name]
                ext["cell"] = k
                writer.write(ext)
                batches.append(batch)
            cm = confusion_from_records(batches)
            het = heterodyne_error(alpha)
            model = cell_error_model(alpha, math.sqrt(setting.gamma2), setting.phi, split, imp)
            params = dict(t2=split.t2, gamma2=setting.gamma2, phi=setting.phi)
            err, std = cm.error_rate, cm.error_std()
            result.append(SweepRow(alpha2, rx.value, model, source="analytic-model", rel_het=model / het, **params))
            result.append(
                SweepRow(alpha2, rx.value, err, err_lo=err - std, err_hi=err + std, source="mc",
                         rel_het=err / het, n=int(cm.shots.sum()), **params)
            )
    run.write(result, "simulate")


def cmd_emulate(run: _Run) -> None:
    cfg = run.cfg
    seq, camp, imp = cfg.probe, cfg.campaign, cfg.imperfections
    batches = generate_campaign(seq, camp, imp, RngContract(cfg.seed, 0))
    counts = {"total": 0, "kept": 0}

    def counted(src):
        for batch in src:
            counts["total"] += batch.size
            yield batch

    def kept(src):
        for batch in src:
            counts["kept"] += batch.size
            yield batch

    if cfg.write_records:
        with run.record_writer("emulate_records", probe=dataclasses.asdict(seq)) as writer:
            cells = estimate_error_rates(kept(postselect_feedforward(writer.tee(counted(batches)))), seq, camp, imp)
    else:
        cells = estimate_error_rates(kept(postselect_feedforward(counted(batches))), seq, camp, imp)
    cells.meta["retention"] = counts["kept"] / counts["total"]
    run.write(cells, "emulate_cells")

    summary = SweepResult(meta={"kind": "emulated-extraction"})
    summary.extend(hd_k_extraction(cells, imp))
    summary.extend(hd_od_extraction(cells))
    summary.extend(_emulation_reference(seq.amplitudes, camp.split, run))
    run.write(summary, "emulate_extraction")
    empty = sum(1 for r in cells if r.flag == "empty")
    run.flagged += empty
    log.info("retention %.4f, %d empty cells", cells.meta["retention"], empty)


def _emulation_reference(alpha2_values, t2, run: _Run):
    """Model curves at the campaign split, with the configured imperfections."""
    imp, settings = run.cfg.imperfections, run.cfg.optimizer
    rows = []
    for alpha2 in alpha2_values:
        alpha = math.sqrt(alpha2)
        het = heterodyne_error(alpha)
        rows.append(SweepRow(float(alpha2), "heterodyne", het, source="analytic", rel_het=1.0))
        for rx in HYBRID:
            try:
                split, setting, _ = receiver_setup(alpha, rx, t2, settings)
            except SolverError:
                rows.append(SweepRow(float(alpha2), rx.value, math.nan, source="analytic-model", flag="solver-failure"))
                continue
            model = cell_error_model(alpha, math.sqrt(setting.gamma2), setting.phi, split, imp)
            rows.append(
                SweepRow(float(alpha2), rx.value, model, t2=split.t2, gamma2=setting.gamma2, phi=setting.phi,
                         source="analytic-model", rel_het=model / het)
            )
    return rows


def cmd_figures(run: _Run) -> None:
    cfg = run.cfg
    run.write(displacement_table(cfg.t_alpha2.to_array(), cfg.optimizer), "stage_displacement")
    run.write(parameter_table(cfg.alpha2.to_array(), cfg.optimizer), "optimal_transmittance")
    ds = cfg.displacement_sweep
    run.write(
        displacement_sweep(ds.alpha2, ds.t2, ds.gamma2.to_array(), cfg.imperfections, cfg.optimizer),
        "displacement_sweep",
    )
    run.write(
        error_rate_sweep(cfg.alpha2.to_array(), cfg.receivers, cfg.split, cfg.imperfections, cfg.shots,
                         cfg.seed, cfg.optimizer),
        "error_rates",
    )


def cmd_config(run: _Run) -> None:
    sys.stdout.write(emit_config(run.cfg))


COMMANDS = {
    "sweep": (cmd_sweep, "error rates against photon number for every receiver"),
    "optimize": (cmd_optimize, "optimal transmittance and displacement tables"),
    "simulate": (cmd_simulate, "Monte Carlo shots with live feed-forward, plus record file"),
    "emulate": (cmd_emulate, "probe-sequence campaign with post-selected feed-forward"),
    "figures": (cmd_figures, "all figure datasets in one run"),
    "config": (cmd_config, "print the resolved configuration as YAML"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpskrx", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, help="override the seed")
        p.add_argument("--shots", type=int, help="override the shot count")
        p.add_argument("-o", "--output-dir", help="override the output directory")
        p.add_argument("--format", choices=("csv", "json", "both"), help="override the output format")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.shots is not None:
        changes["shots"] = args.shots
    if args.output_dir is not None:
        changes["output_dir"] = args.output_dir
    if args.format is not None:
        changes["output_format"] = args.format
    try:
        return dataclasses.replace(cfg, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        run = _Run(args.command, resolve_config(args))
        COMMANDS[args.command][0](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if run.solver_failed:
        print("solver failure in one or more rows (flagged in output)", file=sys.stderr)
        return EXIT_SOLVER
    if run.flagged:
        print(f"{run.flagged} flagged cells", file=sys.stderr)
        return EXIT_FLAGGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
