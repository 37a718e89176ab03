"""Persistence: ground-state profiles, diagnostics series, snapshots, JSON reports.

Floats are written with 17 significant digits so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from quadnls.functionals import StatePair, functional_record
from quadnls.groundstate import GroundStateResult, elliptic_residual
from quadnls.radial import RadialGrid

__all__ = [
    "DIAGNOSTIC_COLUMNS",
    "save_ground_state",
    "load_ground_state",
    "write_diagnostics",
    "write_virial_records",
    "write_snapshot",
    "write_json",
    "to_jsonable",
]

DIAGNOSTIC_COLUMNS = (
    "t", "M", "E", "K", "L", "V", "J", "I", "R1", "R2", "R3",
    "residual_V", "residual_J", "sup_u", "sup_v", "dt",
)


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "" if math.isnan(x) else format(x, ".17g")


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for json."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
    return path


def save_ground_state(g: GroundStateResult, path) -> Path:
    """Write ``path`` (r, phi, psi) and the JSON sidecar next to it."""
    path = Path(path)
    grid = g.grid
    _write_rows(path, ("r", "phi", "psi"), zip(grid.nodes, g.pair.u.real, g.pair.v.real))
    from quadnls.groundstate import threshold_quantities

    write_json(
        path.with_suffix(".json"),
        {
            "d": grid.d,
            "kappa": g.kappa,
            "omega": g.omega,
            "residual": g.residual,
            "E": g.record.energy,
            "M": g.record.mass,
            "K": g.record.pohozaev,
            "L": g.record.kinetic,
            "thresholds": threshold_quantities(g),
            "r_max": grid.r_max,
            "n": grid.n,
            "sign_pattern": g.sign_pattern,
            "label": g.label,
        },
    )
    return path


def load_ground_state(path) -> GroundStateResult:
    """Read a profile written by `save_ground_state` without re-solving."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    grid = RadialGrid(int(meta["d"]), float(meta["r_max"]), int(meta["n"]))
    if data.shape != (grid.n, 3) or not np.allclose(data[:, 0], grid.nodes, rtol=1e-12, atol=0):
        raise ValueError(f"{path}: profile does not match the grid in its sidecar")
    pair = StatePair(grid, data[:, 1], data[:, 2], float(meta["kappa"]))
    omega = meta["omega"]
    wall = omega is not None
    result = GroundStateResult(
        pair=pair,
        omega=omega,
        residual=elliptic_residual(pair, omega)[0] if wall else float(meta["residual"]),
        record=functional_record(pair, wall=wall),
        sign_pattern=meta.get("sign_pattern", ""),
        label=meta.get("label", "ground state"),
    )
    if grid.d == 5:
        result.threshold_EM = result.record.energy * result.record.mass
    if grid.d == 6:
        result.threshold_E = result.record.energy
    return result


def write_diagnostics(path, tr, series=None) -> Path:
    """diagnostics.csv in the fixed column order.

    Virial columns are empty when the run had no cutoff; residuals are empty
    at the first and last time, where no centred difference exists.
    """
    D = tr.diagnostics
    n = len(D["t"])
    cols = {k: D.get(k, np.full(n, np.nan)) for k in DIAGNOSTIC_COLUMNS if k not in ("residual_V", "residual_J")}
    for k in ("residual_V", "residual_J"):
        col = np.full(n, np.nan)
        if series is not None and len(series):
            col[1:-1] = series.columns[k]
        cols[k] = col
    rows = zip(*(cols[k] for k in DIAGNOSTIC_COLUMNS))
    return _write_rows(path, DIAGNOSTIC_COLUMNS, rows)


def write_virial_records(path, series) -> Path:
    from quadnls.virial import RECORD_COLUMNS

    return _write_rows(path, RECORD_COLUMNS, zip(*(series.columns[k] for k in RECORD_COLUMNS)))


def write_snapshot(path, t: float, s: StatePair) -> Path:
    """Snapshot in the ground-state layout plus imaginary parts; time in the sidecar."""
    path = Path(path)
    g = s.grid
    _write_rows(path, ("r", "phi", "psi", "phi_im", "psi_im"), zip(g.nodes, s.u.real, s.v.real, s.u.imag, s.v.imag))
    write_json(path.with_suffix(".json"), {"t": t, "d": g.d, "kappa": s.kappa, "r_max": g.r_max, "n": g.n})
    return path
