"""Command-line entry point: ``quadnls <subcommand> --config run.toml [overrides]``.

Exit codes: 0 success, 1 config error, 2 numerical failure, 3 invariant
violation detected.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from quadnls.cutoff import build_cutoff
from quadnls.evolve import ConservationError, NumericalFailure, detect_blowup, evolve
from quadnls.groundstate import GroundStateError
from quadnls.harness import (
    ConfigError,
    ScenarioConfig,
    ScenarioFailure,
    build_initial_data,
    check_conditions,
    expand_sweep,
    load_config,
    obtain_ground_state,
    run_scenario,
    sweep,
    thresholds_for,
)
from quadnls.io import save_ground_state, write_diagnostics, write_json, write_snapshot, write_virial_records
from quadnls.virial import calibrate_constants, estimate_check, identity_residual

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("quadnls")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="TOML scenario file")
    p.add_argument("--d", type=int, help="space dimension (4, 5 or 6)")
    p.add_argument("--kappa", type=float, help="coupling κ > 0")
    p.add_argument("--r-max", dest="r_max", type=float, help="outer radius of the grid")
    p.add_argument("--n", type=int, help="number of radial nodes")
    p.add_argument("--dt0", type=float, help="base time step")
    p.add_argument("--t-end", dest="t_end", type=float, help="final time")
    p.add_argument("--cutoff-R", dest="cutoff_R", type=float, help="virial cutoff radius R")
    p.add_argument("--out", type=str, help="output directory")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quadnls", description="Quadratic NLS system laboratory")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("ground-state", "solve for the ground state and write profile + sidecar"),
        ("evolve", "evolve the configured initial data forward in time"),
        ("virial-check", "evolve with a cutoff and check the localized virial identity"),
        ("scenario", "full experiment in both time directions"),
        ("sweep", "run the scenario over the [sweep] grid of d and kappa"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        if name == "sweep":
            p.add_argument("--workers", type=int, default=None, help="parallel processes")
    return ap


def _config(args) -> tuple[ScenarioConfig, dict, dict]:
    overrides = {k: getattr(args, k) for k in ("d", "kappa", "r_max", "n", "dt0", "t_end", "cutoff_R", "out")}
    data, sweep_section = load_config(args.config, overrides)
    return ScenarioConfig.from_dict(data), data, sweep_section


def cmd_ground_state(args) -> int:
    cfg, _, _ = _config(args)
    grid = cfg.make_grid()
    g = obtain_ground_state(cfg, grid)
    out = Path(cfg.outputs)
    save_ground_state(g, out / "ground_state.csv")
    print(f"{g.label}: d={cfg.d} kappa={cfg.kappa:g} residual={g.residual:.3e} E={g.record.energy:.10g} "
          f"M={g.record.mass:.10g} |K|/L={g.pohozaev_relative:.3e} ({g.sign_pattern})")
    return EXIT_OK


def cmd_evolve(args) -> int:
    cfg, _, _ = _config(args)
    grid = cfg.make_grid()
    needs_gs = cfg.d == 5 or cfg.initial_data["kind"] == "ground-state-rescale"
    g = obtain_ground_state(cfg, grid) if needs_gs else None
    s0 = build_initial_data(cfg, grid, g)
    p = build_cutoff(cfg.cutoff_R)
    tr = evolve(s0, cfg.evolve, cutoff=p)
    out = Path(cfg.outputs)
    series = identity_residual(tr, p) if tr.steps >= 2 else None
    write_diagnostics(out / "diagnostics.csv", tr, series)
    for k, (t, snap) in enumerate(tr.snapshots):
        write_snapshot(out / "snapshots" / f"snapshot_{k:04d}.csv", t, snap)
    det = detect_blowup(tr)
    summary = {
        "termination": tr.termination,
        "final_time": float(tr.times[-1]),
        "steps": tr.steps,
        "mass_drift": tr.mass_drift,
        "energy_drift": tr.energy_drift,
        "classification": det["classification"],
        "detector": det,
        "conditions_t0": check_conditions(s0, cfg.d, thresholds_for(cfg, g)) if cfg.d != 6 or g else None,
    }
    write_json(out / "summary.json", summary)
    write_json(out / "manifest.json", {"config": cfg.as_dict()})
    print(f"{tr.termination} at t={tr.times[-1]:.6g} after {tr.steps} steps; mass drift {tr.mass_drift:.2e}, "
          f"energy drift {tr.energy_drift:.2e}; classification {det['classification']}")
    return EXIT_OK


def cmd_virial_check(args) -> int:
    cfg, _, _ = _config(args)
    grid = cfg.make_grid()
    needs_gs = cfg.initial_data["kind"] == "ground-state-rescale"
    g = obtain_ground_state(cfg, grid) if needs_gs else None
    s0 = build_initial_data(cfg, grid, g)
    p = build_cutoff(cfg.cutoff_R)
    tr = evolve(s0, cfg.evolve, cutoff=p)
    series = identity_residual(tr, p)
    constants = calibrate_constants(grid, cfg.kappa, p.R, seed=cfg.seed)
    est = estimate_check(tr, p, constants)
    out = Path(cfg.outputs)
    write_virial_records(out / "virial.csv", series)
    write_diagnostics(out / "diagnostics.csv", tr, series)
    R1_max = float(tr.column("R1").max())
    report = {
        "max_residual_V": series.max_residual_V,
        "max_residual_J": series.max_residual_J,
        "R1_max": R1_max,
        "estimate": est,
        "constants": constants,
        "cutoff_R": p.R,
    }
    write_json(out / "virial_report.json", report)
    print(f"max|residual_V| = {series.max_residual_V:.3e}, max|residual_J| = {series.max_residual_J:.3e}, "
          f"max R1 = {R1_max:.3e}, estimate holds: {est['holds']}")
    finite = all(map(lambda x: x == x, (series.max_residual_V, series.max_residual_J)))
    return EXIT_OK if (R1_max <= 0 and finite) else EXIT_INVARIANT


def cmd_scenario(args) -> int:
    cfg, _, _ = _config(args)
    summary = run_scenario(cfg)
    print(json.dumps(summary.row(), indent=2, default=str))
    for v in summary.invariant_violations:
        print(f"invariant violation: {v}", file=sys.stderr)
    return EXIT_INVARIANT if summary.invariant_violations else EXIT_OK


def cmd_sweep(args) -> int:
    _, data, sweep_section = _config(args)
    workers = args.workers or sweep_section.get("workers")
    cfgs = expand_sweep(data, sweep_section)
    rows = sweep(cfgs, out=Path(data.get("outputs", "runs/sweep")) / "sweep.csv", workers=workers)
    for row in rows:
        print(row.get("name"), row.get("classification", ""), row.get("classification_backward", ""), row.get("error", ""))
    return EXIT_NUMERICAL if any(r.get("error") for r in rows) else EXIT_OK


COMMANDS = {
    "ground-state": cmd_ground_state,
    "evolve": cmd_evolve,
    "virial-check": cmd_virial_check,
    "scenario": cmd_scenario,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioFailure as exc:
        print(f"scenario failed: {exc}", file=sys.stderr)
        if isinstance(exc.cause, ConfigError):
            return EXIT_CONFIG
        return EXIT_INVARIANT if isinstance(exc.cause, ConservationError) else EXIT_NUMERICAL
    except ConservationError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (NumericalFailure, GroundStateError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
