"""Scenario configuration, hypothesis checks, orchestration and sweeps.

A scenario is one experiment: build the grid, obtain the ground-state
thresholds, build initial data, check which blow-up hypothesis holds at
t = 0, evolve in both time directions (the backward run evolves the
conjugated data forward) and classify each direction.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
import copy
import csv
from dataclasses import dataclass, field, asdict
from functools import lru_cache
import itertools
import logging
import math
from pathlib import Path
import sys

import numpy as np
from scipy.integrate import quad

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from quadnls.cutoff import build_cutoff, validate_cutoff
from quadnls.evolve import ConservationError, EvolveConfig, NumericalFailure, Trajectory, detect_blowup, evolve
from quadnls.functionals import StatePair, functional_record
from quadnls.groundstate import (
    GroundStateError,
    GroundStateResult,
    explicit_static_pair,
    rescale_ground_state,
    solve_ground_state,
    talenti_bubble,
    threshold_quantities,
)
from quadnls.radial import RadialGrid, make_grid, sphere_area
from quadnls.states import gaussian_pair
from quadnls.virial import (
    FitRefused,
    analytic_constants,
    calibrate_constants,
    coercivity_track,
    estimate_check,
    growth_fit,
    identity_residual,
)

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ScenarioFailure",
    "ScenarioConfig",
    "DirectionOutcome",
    "OutcomeSummary",
    "static_pair_energy",
    "load_config",
    "build_initial_data",
    "check_conditions",
    "run_scenario",
    "sweep",
    "expand_sweep",
]

INITIAL_KINDS = ("ground-state-rescale", "gaussian-pair", "file")


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


class ScenarioFailure(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@lru_cache(maxsize=None)
def _grad_bubble_sq() -> float:
    """‖∇W‖² over R^6 by adaptive quadrature of the closed-form profile."""
    dW = lambda r: -(r / 6.0) * (1.0 + r * r / 24.0) ** -3
    val, _ = quad(lambda r: dW(r) ** 2 * r**5, 0.0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return sphere_area(6) * val


def static_pair_energy(kappa: float) -> float:
    """Whole-space energy of the explicit d = 6 pair, (κ/2)‖∇W‖², for every amplitude."""
    return 0.5 * kappa * _grad_bubble_sq()


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ScenarioConfig:
    d: int = 5
    kappa: float = 1.0
    initial_data: dict = field(default_factory=lambda: {"kind": "ground-state-rescale", "lambda_amplitude": 1.05, "omega": 1.0})
    grid: dict = field(default_factory=lambda: {"r_max": 16.0, "n": 4096})
    evolve: EvolveConfig = field(default_factory=EvolveConfig)
    cutoff_R: float = 4.0
    outputs: str = "runs/scenario"
    seed: int = 0
    name: str = "scenario"
    ground_state: dict = field(default_factory=dict)
    backward: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.d not in (4, 5, 6):
            raise ConfigError(f"d must be 4, 5 or 6, got {self.d!r}")
        if not (isinstance(self.kappa, (int, float)) and self.kappa > 0 and math.isfinite(self.kappa)):
            raise ConfigError(f"kappa must be positive, got {self.kappa!r}")
        if not self.cutoff_R > 0:
            raise ConfigError("cutoff_R must be positive")
        r_max, n = self.grid.get("r_max"), self.grid.get("n")
        if not (isinstance(r_max, (int, float)) and r_max > 0) or not (isinstance(n, int) and n >= 16):
            raise ConfigError(f"grid needs r_max > 0 and integer n >= 16, got {self.grid!r}")
        if 2 * self.cutoff_R >= r_max:
            raise ConfigError(f"cutoff support 2R = {2 * self.cutoff_R:g} must lie inside r_max = {r_max:g}")
        kind = self.initial_data.get("kind")
        if kind not in INITIAL_KINDS:
            raise ConfigError(f"initial_data.kind must be one of {INITIAL_KINDS}, got {kind!r}")
        if kind == "file":
            path = self.initial_data.get("path")
            if not path or not Path(path).exists():
                raise ConfigError(f"initial data file {path!r} does not exist")
        if kind == "ground-state-rescale":
            if not self.initial_data.get("lambda_amplitude", 1.0) > 0 or not self.initial_data.get("omega", 1.0) > 0:
                raise ConfigError("lambda_amplitude and omega must be positive")
        gs_file = self.ground_state.get("file")
        if gs_file and not Path(gs_file).exists():
            raise ConfigError(f"ground-state file {gs_file!r} does not exist")

    def make_grid(self) -> RadialGrid:
        return make_grid(self.d, float(self.grid["r_max"]), int(self.grid["n"]))

    def as_dict(self) -> dict:
        out = asdict(self)
        out["evolve"] = self.evolve.as_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = copy.deepcopy(data)
        data.pop("sweep", None)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "evolve" in data:
                data["evolve"] = EvolveConfig(**data["evolve"])
            if "grid" in data:
                data["grid"] = {"r_max": 16.0, "n": 4096, **data["grid"]}
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


OVERRIDES = {
    "d": ("d",),
    "kappa": ("kappa",),
    "r_max": ("grid", "r_max"),
    "n": ("grid", "n"),
    "dt0": ("evolve", "dt0"),
    "t_end": ("evolve", "t_end"),
    "cutoff_R": ("cutoff_R",),
    "out": ("outputs",),
}


def load_config(path=None, overrides: dict | None = None) -> tuple[dict, dict]:
    """Read a TOML config and apply flag overrides.

    Returns (scenario dict, sweep section).  Validation happens when the
    dict is turned into a `ScenarioConfig`.
    """
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        target = data
        *parents, leaf = OVERRIDES[key]
        for p in parents:
            target = target.setdefault(p, {})
        target[leaf] = value
    sweep_section = data.pop("sweep", {}) or {}
    return data, sweep_section


def expand_sweep(base: dict, sweep_section: dict) -> list[dict]:
    """Cartesian product of the listed values of d and kappa over a base config."""
    axes = {k: list(v) for k, v in sweep_section.items() if k in ("d", "kappa")}
    unknown = set(sweep_section) - {"d", "kappa", "workers"}
    if unknown:
        raise ConfigError(f"unknown sweep keys: {sorted(unknown)}")
    if not axes:
        return [copy.deepcopy(base)]
    names = sorted(axes)
    out = []
    root = Path(base.get("outputs", "runs/sweep"))
    for values in itertools.product(*(axes[k] for k in names)):
        cfg = copy.deepcopy(base)
        tag = "_".join(f"{k}={v}" for k, v in zip(names, values))
        cfg.update(dict(zip(names, values)))
        cfg["name"] = f"{base.get('name', 'scenario')}_{tag}"
        cfg["outputs"] = str(root / tag)
        out.append(cfg)
    return out


# ---------------------------------------------------------------------------
# initial data and hypotheses


def _taper(grid: RadialGrid) -> np.ndarray:
    """Smooth factor equal to 1 on [0, 3r_max/4] and 0 at r_max."""
    x = np.clip((grid.nodes - 0.75 * grid.r_max) / (0.25 * grid.r_max), 0.0, 1.0)
    return 1.0 - x**4 * (35 - 84 * x + 70 * x**2 - 20 * x**3)


def obtain_ground_state(cfg: ScenarioConfig, grid: RadialGrid) -> GroundStateResult:
    from quadnls.io import load_ground_state

    gs_cfg = cfg.ground_state
    if gs_cfg.get("file"):
        g = load_ground_state(gs_cfg["file"])
        if not g.grid.same_as(grid) or g.kappa != cfg.kappa:
            raise ConfigError("stored ground state does not match the scenario grid and kappa")
        return g
    if cfg.d == 6:
        return explicit_static_pair(cfg.kappa, float(gs_cfg.get("a", 1.0)), grid, tol=float(gs_cfg.get("tol", 1e-2)))
    return solve_ground_state(cfg.d, cfg.kappa, float(gs_cfg.get("omega", 1.0)), grid, tol=float(gs_cfg.get("tol", 1e-9)))


def thresholds_for(cfg: ScenarioConfig, g: GroundStateResult | None) -> dict:
    if cfg.d == 6:
        return {"d": 6, "kappa": cfg.kappa, "E_threshold": static_pair_energy(cfg.kappa), "label": "candidate ground-state energy"}
    return threshold_quantities(g) if g is not None else {"d": cfg.d, "kappa": cfg.kappa}


def build_initial_data(cfg: ScenarioConfig, grid: RadialGrid, g: GroundStateResult | None) -> StatePair:
    init = cfg.initial_data
    kind = init["kind"]
    if kind == "gaussian-pair":
        return gaussian_pair(
            grid,
            cfg.kappa,
            amplitudes=tuple(complex(a) if not isinstance(a, list) else complex(*a) for a in init.get("amplitudes", (1.0, -1.0))),
            widths=tuple(init.get("widths", (1.0, 1.0))),
            phases=tuple(init.get("phases", (0.0, 0.0))),
            chirps=tuple(init.get("chirps", (0.0, 0.0))),
        )
    if kind == "file":
        data = np.genfromtxt(init["path"], delimiter=",", names=True)
        if len(data) != grid.n or not np.allclose(data["r"], grid.nodes, rtol=1e-12, atol=0):
            raise ConfigError(f"{init['path']}: profile does not match the scenario grid")
        names = data.dtype.names
        u = data["phi"] + (1j * data["phi_im"] if "phi_im" in names else 0)
        v = data["psi"] + (1j * data["psi_im"] if "psi_im" in names else 0)
        return StatePair(grid, u, v, cfg.kappa)
    lam = float(init.get("lambda_amplitude", 1.0))
    if cfg.d == 6:
        return g.pair.replace(lam * g.pair.u * _taper(grid), lam * g.pair.v * _taper(grid))
    omega = float(init.get("omega", g.omega))
    base = g.pair if math.isclose(omega, g.omega) else rescale_ground_state(g, omega)
    return base.scaled(lam)


def check_conditions(s0: StatePair, d: int, thresholds: dict | None, rel_tol: float = 1e-6, wall: bool = True) -> dict:
    """Which blow-up hypothesis holds for the data at t = 0.

    d = 5: E·M below the ground-state value and K < 0;  d = 6: E below the
    static-pair energy and K < 0;  d = 4: E < 0.  K counts as negative only
    below ``-rel_tol · L``.  Pass ``wall=False`` for profiles truncated from
    whole space rather than tapered to zero at the outer wall.
    """
    if d != s0.d:
        raise ValueError(f"state dimension {s0.d} does not match d = {d}")
    rec = functional_record(s0, wall=wall)
    out = {"d": d, "E": rec.energy, "M": rec.mass, "K": rec.pohozaev, "L": rec.kinetic}
    K_negative = rec.pohozaev < -rel_tol * rec.kinetic
    if d == 5:
        if not thresholds or "EM" not in thresholds:
            raise ValueError("d = 5 needs the ground-state E·M threshold")
        EM = rec.energy * rec.mass
        out.update(condition="A5", EM=EM, EM_threshold=thresholds["EM"], margin=thresholds["EM"] - EM, K_negative=K_negative)
        out["holds"] = bool(EM < thresholds["EM"] and K_negative)
    elif d == 6:
        if not thresholds or "E_threshold" not in thresholds:
            raise ValueError("d = 6 needs the static-pair energy threshold")
        out.update(condition="A6", E_threshold=thresholds["E_threshold"], margin=thresholds["E_threshold"] - rec.energy, K_negative=K_negative)
        out["holds"] = bool(rec.energy < thresholds["E_threshold"] and K_negative)
    elif d == 4:
        out.update(condition="negE", margin=-rec.energy)
        out["holds"] = bool(rec.energy < 0)
    else:
        out.update(condition="none", holds=False)
    return out


# ---------------------------------------------------------------------------
# orchestration


@dataclass
class DirectionOutcome:
    direction: str
    classification: str
    termination: str
    final_time: float
    blowup_time_estimate: float | None
    delta_hat: float
    coercive: bool
    riccati_bound: float | None
    growth: dict | None
    mass_drift: float
    energy_drift: float
    max_residual_V: float | None
    max_residual_J: float | None
    detector: dict


@dataclass
class OutcomeSummary:
    name: str
    condition: str
    condition_holds: bool
    forward: DirectionOutcome
    backward: DirectionOutcome | None
    conservation_drift: float
    invariant_violations: list[str] = field(default_factory=list)
    d: int | None = None
    kappa: float | None = None

    @property
    def classification(self) -> str:
        return self.forward.classification

    @property
    def delta_hat(self) -> float:
        return self.forward.delta_hat

    @property
    def blowup_time_estimate(self) -> float | None:
        return self.forward.blowup_time_estimate

    @property
    def riccati_bound(self) -> float | None:
        return self.forward.riccati_bound

    def as_dict(self) -> dict:
        out = asdict(self)
        out["classification"] = self.classification
        return out

    def row(self) -> dict:
        b = self.backward
        return {
            "name": self.name,
            "d": self.d,
            "kappa": self.kappa,
            "condition": self.condition,
            "condition_holds": self.condition_holds,
            "classification": self.classification,
            "classification_backward": b.classification if b else "",
            "blowup_time": self.forward.blowup_time_estimate,
            "blowup_time_backward": b.blowup_time_estimate if b else None,
            "riccati_bound": self.forward.riccati_bound,
            "delta_hat": self.forward.delta_hat,
            "conservation_drift": self.conservation_drift,
            "error": "",
        }


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigError, ScenarioFailure):
        raise
    except Exception as exc:
        raise ScenarioFailure(name, exc) from exc


def _direction(label, s0, cfg: ScenarioConfig, p, thresholds, out_dir: Path, violations: list) -> DirectionOutcome:
    from quadnls.io import write_diagnostics, write_json, write_snapshot, write_virial_records

    tr: Trajectory = _stage(f"evolve-{label}", evolve, s0, cfg.evolve, cutoff=p)
    det = detect_blowup(tr)
    series = identity_residual(tr, p) if tr.steps >= 2 else None
    report = coercivity_track(tr, thresholds)
    if report.violation:
        violations.append(f"{label}: {report.message}")
    if np.any(tr.column("R1") > 0):
        violations.append(f"{label}: R1 > 0 at some recorded time")
    growth = None
    if tr.grid.d in (5, 6) and report.coercive:
        try:
            growth = growth_fit(tr, p, report).as_dict()
        except FitRefused as exc:
            growth = {"refused": str(exc)}
    d_dir = out_dir / label
    write_diagnostics(d_dir / "diagnostics.csv", tr, series)
    if series is not None:
        write_virial_records(d_dir / "virial.csv", series)
    for k, (t, snap) in enumerate(tr.snapshots):
        write_snapshot(d_dir / "snapshots" / f"snapshot_{k:04d}.csv", t, snap)
    write_json(d_dir / "coercivity.json", report.as_dict())
    if growth is not None:
        write_json(d_dir / "growth_fit.json", growth)
    return DirectionOutcome(
        direction=label,
        classification=det["classification"],
        termination=tr.termination,
        final_time=float(tr.times[-1]),
        blowup_time_estimate=tr.blowup_time,
        delta_hat=report.delta_hat,
        coercive=report.coercive,
        riccati_bound=(growth or {}).get("riccati_bound"),
        growth=growth,
        mass_drift=tr.mass_drift,
        energy_drift=tr.scaled_energy_drift,
        max_residual_V=series.max_residual_V if series is not None else None,
        max_residual_J=series.max_residual_J if series is not None else None,
        detector=det,
    )


def run_scenario(cfg: ScenarioConfig) -> OutcomeSummary:
    """Run one scenario end to end and write its artifacts under ``cfg.outputs``."""
    from quadnls.io import save_ground_state, write_json

    out_dir = Path(cfg.outputs)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = cfg.make_grid()
    p = build_cutoff(cfg.cutoff_R)
    cut_report = validate_cutoff(p)
    if not cut_report:
        raise ScenarioFailure("cutoff", ValueError("; ".join(cut_report.violations)))

    needs_gs = cfg.d == 5 or cfg.initial_data["kind"] == "ground-state-rescale"
    g = _stage("ground-state", obtain_ground_state, cfg, grid) if needs_gs else None
    if g is not None:
        save_ground_state(g, out_dir / "ground_state.csv")
    thresholds = thresholds_for(cfg, g)
    s0 = _stage("initial-data", build_initial_data, cfg, grid, g)
    cond = _stage("conditions", check_conditions, s0, cfg.d, thresholds)

    violations: list[str] = []
    forward = _direction("forward", s0, cfg, p, thresholds, out_dir, violations)
    backward = _direction("backward", s0.conj(), cfg, p, thresholds, out_dir, violations) if cfg.backward else None
    drift = max(forward.mass_drift, backward.mass_drift if backward else 0.0)
    summary = OutcomeSummary(
        name=cfg.name,
        condition=cond["condition"],
        condition_holds=cond["holds"],
        forward=forward,
        backward=backward,
        conservation_drift=drift,
        invariant_violations=violations,
        d=cfg.d,
        kappa=cfg.kappa,
    )
    write_json(out_dir / "summary.json", summary.as_dict())
    write_json(
        out_dir / "manifest.json",
        {
            "config": cfg.as_dict(),
            "grid": {"d": grid.d, "r_max": grid.r_max, "n": grid.n, "dr": grid.dr},
            "cutoff": {"R": p.R, "plateau": p.plateau_value, "validation": asdict(cut_report)},
            "thresholds": thresholds,
            "conditions_t0": cond,
            "ground_state": None if g is None else {"residual": g.residual, "pohozaev_relative": g.pohozaev_relative, "sign_pattern": g.sign_pattern, "label": g.label},
            "constants": {
                "analytic": analytic_constants(p, grid.d, cfg.kappa),
                "empirical": calibrate_constants(grid, cfg.kappa, p.R, seed=cfg.seed),
            },
            "delta_hat": {"forward": forward.delta_hat, "backward": backward.delta_hat if backward else None},
            "tolerances": {
                "conservation_tol": cfg.evolve.conservation_tol,
                "K_negative_rel_tol": 1e-6,
                "blowup_factor": cfg.evolve.blowup_factor,
                "blowup_norm_cap": cfg.evolve.blowup_norm_cap,
                "ground_state_tol": cfg.ground_state.get("tol", 1e-9),
            },
        },
    )
    log.info("scenario %s: %s / %s", cfg.name, forward.classification, backward.classification if backward else "-")
    return summary


def _run_one(data: dict) -> dict:
    try:
        return run_scenario(ScenarioConfig.from_dict(data)).row()
    except Exception as exc:  # one bad scenario must not stop the sweep
        if not isinstance(data, dict):
            data = {}
        return {"name": data.get("name", "?"), "d": data.get("d"), "kappa": data.get("kappa"),
                "error": f"{type(exc).__name__}: {exc}"}


SWEEP_COLUMNS = (
    "name", "d", "kappa", "condition", "condition_holds", "classification", "classification_backward",
    "blowup_time", "blowup_time_backward", "riccati_bound", "delta_hat", "conservation_drift", "error",
)


def sweep(cfgs: list[dict], out=None, workers: int | None = None) -> list[dict]:
    """Run scenarios concurrently; failures become error rows, in input order."""
    if not cfgs:
        raise ConfigError("sweep needs at least one scenario")
    if workers == 1:
        rows = [_run_one(c) for c in cfgs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, cfgs))
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, restval="", lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return rows
