"""Command line entry point: ``dissipative-euler <command> [options]``.

Commands write their artifacts into one output directory together with a
``manifest.json`` listing every file with its SHA-256 digest. Exit status is
0 on success, 2 when a verification verdict fails and 1 on error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .analysis import build_record, compatibility_check, gronwall_defect_bound, smoothness_report
from .config import ConfigError, RunConfig, default_config, load_config
from .core import EosParams, TorusGrid
from .defects import BlockPartition, sequence_defect
from .initial import acoustic_pulse, constant_state, random_smooth, riemann_problem, stationary_shock
from .oscillation import checkerboard_sequence, l1_separation, weakstar_diagnostics
from .selection import Ensemble, select_admissible
from .solver import SolverConfig, ViscosityModel, run
from .testfunctions import BumpFamily, TestFunctionBank
from .weak_form import consistency_sweep, continuity_residual, energy_inequality_check, momentum_residual

logger = logging.getLogger("dissipative_euler")

COMMANDS = ("solve", "sweep", "defects", "verify", "oscillate", "select")
EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
DEFAULT_ROOT = "del-runs"


class _Run:
    """Output directory plus the manifest being assembled for one command."""

    def __init__(self, command: str, cfg: RunConfig, out: Path, seed: int):
        self.out = out
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = io.RunManifest(command, cfg.echo(), seed)
        if cfg.path is not None:
            self.manifest.add_input(cfg.path)

    def emit(self, paths) -> None:
        for p in paths if isinstance(paths, (list, tuple)) else [paths]:
            self.manifest.add_output(p)

    def finish(self) -> Path:
        return self.manifest.write(self.out / "manifest.json")


# {{{ builders


def eos_from(cfg: RunConfig) -> EosParams:
    return EosParams(cfg["eos"]["a"], cfg["eos"]["gamma"])


def solver_config(cfg: RunConfig) -> SolverConfig:
    s = cfg["solver"]
    return SolverConfig(cfl=s["cfl"], end_time=s["end_time"], flux=s["flux"], time_scheme=s["time_scheme"],
                        output_stride=s["output_stride"], reconstruction=s["reconstruction"],
                        output_times=s["output_times"])


def viscosity(cfg: RunConfig, epsilon: float | None = None) -> ViscosityModel | None:
    v = cfg["viscosity"]
    if v["inviscid"] and epsilon is None:
        return None
    return ViscosityModel(v["epsilon"] if epsilon is None else epsilon, v["shear_mu"], v["bulk_eta"])


def initial_state(cfg: RunConfig, grid: TorusGrid, eos: EosParams, seed: int):
    c = cfg["initial"]
    kind = c["kind"]
    if kind == "constant":
        u = np.zeros(grid.dim)
        vel = np.asarray(c["velocity"], dtype=float)
        u[: min(len(vel), grid.dim)] = vel[: grid.dim]
        return constant_state(grid, c["rho"], u)
    if kind == "acoustic":
        return acoustic_pulse(grid, c["amplitude"], c["rho"], eos)
    if kind == "riemann":
        return riemann_problem(grid, (c["left_rho"], c["left_u"]), (c["right_rho"], c["right_u"]))
    if kind == "stationary_shock":
        return stationary_shock(grid, c["rho"], c["mach"], eos, c["position"], c["ramp_width"])
    return random_smooth(grid, np.random.default_rng(seed), c["modes"])


def bank_from(cfg: RunConfig, dim: int, horizon: float) -> TestFunctionBank:
    b = cfg["bank"]
    return TestFunctionBank(dim, horizon, b["modes"], tuple(b["envelopes"]))


def _solve(cfg: RunConfig, seed: int, epsilon: float | None = None, cells: int | None = None):
    eos = eos_from(cfg)
    grid = TorusGrid(cfg["grid"]["dim"], cells or cfg["grid"]["cells"])
    model = viscosity(cfg, epsilon)
    traj, ledger = run(initial_state(cfg, grid, eos, seed), eos, model, solver_config(cfg))
    prov = {"epsilon": None if model is None else model.epsilon, "cells": grid.cells,
            "initial": cfg["initial"]["kind"], "seed": seed}
    return traj, ledger, prov


def _input_record(cfg: RunConfig, inputs: list[str], seed: int, run_: _Run):
    if len(inputs) > 1:
        raise ValueError("expected at most one record directory")
    if inputs:
        rec = io.load_record(inputs[0])
        for p in sorted(Path(inputs[0]).iterdir()):
            run_.manifest.add_input(p)
        return rec
    traj, ledger, prov = _solve(cfg, seed)
    return build_record(traj, ledger, eos_from(cfg), 1, prov)


# }}}


# {{{ commands


def cmd_solve(cfg: RunConfig, args, run_: _Run) -> int:
    traj, ledger, prov = _solve(cfg, args.seed)
    record = build_record(traj, ledger, eos_from(cfg), 1, prov)
    run_.emit(io.save_record(record, run_.out / "record"))
    passed = ledger.passes()
    run_.manifest.verdicts["energy_ledger"] = "PASS" if passed else "FAIL"
    logger.info("solve: %d snapshots, final time %.6g", len(traj), traj.times[-1])
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args, run_: _Run) -> int:
    eps = list(cfg["sweep"]["epsilons"])
    base = cfg["grid"]["cells"]
    cells = [base * 2**k if cfg["sweep"]["refine"] else base for k in range(len(eps))]
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        jobs = [pool.submit(_solve, cfg, args.seed, e, n) for e, n in zip(eps, cells)]
        results = [j.result() for j in jobs]
    eos = eos_from(cfg)
    trajs = []
    for k, (traj, ledger, prov) in enumerate(results):
        run_.emit(io.save_record(build_record(traj, ledger, eos, 1, prov), run_.out / f"member_{k}"))
        trajs.append(traj)
    finest = trajs[-1]
    bank = bank_from(cfg, finest.grid.dim, cfg["solver"]["end_time"])
    table = consistency_sweep(trajs, eps, bank, eos)
    run_.emit(io.write_csv(run_.out / "consistency.csv", ["kind", "epsilon", "test_function", "value"],
                           table.rows()))
    if len(trajs) >= 3:
        block = cfg["defects"]["block"] or BlockPartition.default(finest.grid).block
        if finest.grid.cells % block:
            raise ValueError(f"defect block {block} does not divide the finest grid ({finest.grid.cells} cells)")
        t = float(finest.times[-1])
        seq = sequence_defect(trajs, eps, BlockPartition(finest.grid, block), eos, t, bank)
        run_.emit(io.write_defect(run_.out / "sequence_defect.bin", seq.defects, t))
        rows = ([("rho", eps[n], lab, v) for n in range(len(eps)) for lab, v in zip(seq.labels, seq.rho_pairings[n])]
                + [(f"m{j}", eps[n], lab, v) for n in range(len(eps)) for j in range(finest.grid.dim)
                   for lab, v in zip(seq.labels, seq.mom_pairings[n, j])])
        run_.emit(io.write_csv(run_.out / "sequence_pairings.csv", ["quantity", "epsilon", "test_function", "pairing"],
                               rows))
    run_.manifest.verdicts.update({
        "consistency_decreasing": bool(table.decreasing),
        "consistency_bound": "PASS" if table.bound_holds else "FAIL",
        "bound_constant": table.bound_constant,
    })
    return EXIT_OK


def cmd_defects(cfg: RunConfig, args, run_: _Run) -> int:
    fine = _input_record(cfg, args.inputs, args.seed, run_)
    if fine.partition.block != 1:
        raise ValueError("defects: input record is already coarse-grained")
    block = cfg["defects"]["block"] or BlockPartition.default(fine.grid).block
    record = build_record(fine.trajectory, fine.ledger, fine.eos, block, dict(fine.provenance))
    run_.emit(io.save_record(record, run_.out / "record"))
    gr = gronwall_defect_bound(record)
    sm = smoothness_report(fine.trajectory, fine.eos)
    compat = compatibility_check(record, smoothness=sm)
    run_.emit(io.write_csv(run_.out / "gronwall.csv", ["time", "defect_mass", "bound"],
                           zip(gr.times, gr.defect_mass, gr.bound)))
    run_.emit(io.write_csv(run_.out / "smoothness.csv",
                           ["time", "rho_min", "d_osl", "grad_max", "cell_increment", "vacuum_fraction"],
                           zip(sm.times, sm.rho_min, sm.d_osl, sm.grad_max, sm.cell_increment, sm.vacuum_fraction)))
    run_.manifest.verdicts.update({"gronwall": gr.verdict, "compatibility": compat.verdict,
                                   "violated": compat.violated, "warnings": gr.warnings})
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args, run_: _Run) -> int:
    record = _input_record(cfg, args.inputs, args.seed, run_)
    traj, eos = record.trajectory, record.eos
    tau = float(traj.times[-1] - traj.times[0])
    bank = bank_from(cfg, traj.grid.dim, tau)
    defects = None if record.partition.block == 1 else record.defects
    cont = continuity_residual(traj, bank, tau)
    mom = momentum_residual(traj, bank, tau, eos, defects)
    energy = energy_inequality_check(traj, bank.envelopes, eos, defects, None if defects else record.ledger)
    rows = [("continuity", *r) for r in cont.rows()] + [("momentum", *r) for r in mom.rows()]
    run_.emit(io.write_csv(run_.out / "residuals.csv", ["equation", "test_function", "residual", "quadrature"], rows))
    run_.emit(io.write_csv(run_.out / "energy_check.csv", ["envelope", "min_slack", "t_from", "t_to"],
                           [(lab, s, a, b) for lab, s, (a, b) in zip(energy.labels, energy.min_slack,
                                                                       energy.worst_pair)]))
    violations = record.violations()
    floor = 2.0 * cont.quadrature + 1.0e-10 * max(1.0, abs(record.initial_energy))
    # residuals of a resolved dynamic run carry the scheme's consistency error, so they
    # are reported but only the energy inequality and record invariants decide the verdict
    continuity_ok = bool(np.all(np.abs(cont.values) <= floor))
    passed = energy.passed and not violations
    run_.manifest.verdicts.update({
        "energy_inequality": energy.verdict,
        "record_invariants": "PASS" if not violations else "FAIL",
        "violations": violations,
        "continuity_at_floor": continuity_ok,
        "continuity_max": cont.max_abs,
        "momentum_max": mom.max_abs,
        "verify": "PASS" if passed else "FAIL",
    })
    return EXIT_OK if passed else EXIT_FAIL


def cmd_oscillate(cfg: RunConfig, args, run_: _Run) -> int:
    o = cfg["oscillation"]
    grid = TorusGrid(o["dim"], o["cells"])
    seq = checkerboard_sequence(o["rho_bar"], o["delta"], o["n_max"], grid)
    table = weakstar_diagnostics(seq, BumpFamily(grid.dim))
    sep = l1_separation(seq)
    rows = [(n, lab, v) for n in range(len(seq.members)) for lab, v in zip(table.labels, table.rho_pairings[n])]
    run_.emit(io.write_csv(run_.out / "weakstar.csv", ["level", "test_function", "pairing"], rows))
    run_.emit(io.write_csv(run_.out / "separation.csv", ["level", "l1_distance"], enumerate(sep.distances)))
    run_.manifest.verdicts.update({
        "weakstar_bound": "PASS" if table.bound_holds(seq.amplitudes) else "FAIL",
        "decay_ratios": [float(r) for r in table.decay_ratios],
        "separation": sep.verdict,
        "separation_estimate": sep.estimate,
    })
    return EXIT_OK


def cmd_select(cfg: RunConfig, args, run_: _Run) -> int:
    if not args.inputs:
        raise ValueError("select needs at least one record directory")
    records = []
    for d in args.inputs:
        records.append(io.load_record(d))
        for p in sorted(Path(d).iterdir()):
            run_.manifest.add_input(p)
    sel = select_admissible(Ensemble(records))
    verdicts = dict(sel.certificate)
    rows = [(i, args.inputs[i], sel.functional[i], "winner" if i == sel.index else verdicts[i].value)
            for i in range(len(records))]
    run_.emit(io.write_csv(run_.out / "selection.csv", ["index", "record", "functional", "comparison"], rows))
    audit = sel.audit(records)
    run_.manifest.verdicts.update({"winner": sel.index, "winner_record": args.inputs[sel.index],
                                   "audit": "PASS" if audit else "FAIL"})
    return EXIT_OK if audit else EXIT_FAIL


HANDLERS = {"solve": cmd_solve, "sweep": cmd_sweep, "defects": cmd_defects, "verify": cmd_verify,
            "oscillate": cmd_oscillate, "select": cmd_select}


# }}}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dissipative-euler", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("inputs", nargs="*", help="record directories (defects, verify, select)")
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--out", help="output directory (default: $DEL_OUT_DIR/<command>)")
    p.add_argument("--threads", type=int, help="worker threads for independent runs")
    p.add_argument("--seed", type=int, help="seed for random initial data")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _output_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get("DEL_OUT_DIR", DEFAULT_ROOT)) / args.command


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else default_config()
        args.seed = cfg["run"]["seed"] if args.seed is None else args.seed
        if not 0 <= args.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        args.threads = cfg["run"]["threads"] if args.threads is None else args.threads
        if args.threads < 1:
            raise ValueError("--threads must be positive")
        for d in args.inputs:
            if not Path(d).exists():
                raise FileNotFoundError(f"input not found: {d}")
        run_ = _Run(args.command, cfg, _output_dir(args), args.seed)
        status = HANDLERS[args.command](cfg, args, run_)
        path = run_.finish()
    except (ConfigError, FileNotFoundError, ValueError, io.ContainerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{args.command}: {'FAIL' if status == EXIT_FAIL else 'ok'} (manifest {path})")
    return status


if __name__ == "__main__":
    sys.exit(main())
