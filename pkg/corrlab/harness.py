"""
harness.py
----------
Experiment configuration, sweeps, persistence and convergence studies.

Configs are JSON documents (sections: potential, orbital, grid, physics,
output, workers) validated with pydantic; presets live in presets.json.
A run expands the config into independent parameter points, evaluates them
(in a process pool when workers > 1), and aggregates rows in point order
into one CSV plus a JSON manifest that is rewritten atomically after every
completed point, so an interrupted sweep resumes where it stopped.
"""
import copy
import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from datetime import datetime, timezone
from functools import lru_cache
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic import ValidationError as PydanticValidationError

from corrlab import __version__, settings
from corrlab.dispersive import DecaySeries, fit_exponent, omega_times_profile, supnorm_series
from corrlab.errors import ConfigError, OutOfRegimeError, ResourceError, ValidationError
from corrlab.functionals import (
    coupling_constants,
    fn_initial,
    hamiltonian_moments,
    make_orbital,
    micro_to_macro,
    window_data,
    window_series,
)
from corrlab.gp import coupling_comparison
from corrlab.grid import RadialGrid, radial_lp_norm
from corrlab.potential import make_potential, scale_potential
from corrlab.propagator import ABSORB_FRACTION, RELATIVE, RadialField, evolve_radial, save_checkpoint
from corrlab.scattering import scattering_length, solve_zero_energy, verify_omega_bounds
from corrlab.schema import CSV_COLUMNS, MANIFEST_TEMPLATE

logger = logging.getLogger(__name__)

PRESETS_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "presets.json")
SHIFT_TOL = 0.02
# window grids reach at least this many orbital scales Lambda
WINDOW_EXTENT = 5.0


# -------------------------------------------------------------------
# Config models
# -------------------------------------------------------------------
class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PotentialConfig(_Section):
    kind: Literal["bump", "square-well", "tabulated"] = "square-well"
    V0: float = Field(2.0, ge=0)
    R: float = Field(1.0, gt=0)
    table: Optional[List[List[float]]] = None


class OrbitalConfig(_Section):
    kind: Literal["gaussian", "bump", "exponential"] = "gaussian"
    scale: float = Field(1.0, gt=0)


class GridConfig(_Section):
    dr: float = Field(0.01, gt=0)
    r_max: float = Field(20.0, gt=0)
    dt: float = Field(0.01, gt=0)
    min_points_per_range: int = Field(200, ge=1)
    scatter_dr: Optional[float] = Field(None, gt=0)


class PhysicsConfig(_Section):
    Lambda: List[float] = [1.0]
    L: List[float] = [4.0]
    T: List[float] = [0.0]
    N: List[int] = [1]
    ell: List[float] = [1.0]
    t: List[float] = [0.0]
    s: List[float] = [4.0]

    @field_validator("*")
    @classmethod
    def _nonempty(cls, value):
        if not value:
            raise ValueError("list must not be empty")
        return value


class OutputConfig(_Section):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    dir: str = Field(default_factory=lambda: settings.OUT_DIR)
    name: Optional[str] = None
    csv: bool = True
    manifest: bool = Field(True, alias="json")

    @field_validator("name")
    @classmethod
    def _bare_name(cls, value):
        if value is None:
            return value
        if not value or value in (".", "..") or any(sep in value for sep in ("/", "\\", os.sep)):
            raise ValueError(f"output name must be a bare file stem, got {value!r}")
        return value


class ExperimentConfig(_Section):
    kind: Literal["scatter", "window", "window-sweep", "dispersive", "energy", "gp", "micro-macro"]
    potential: PotentialConfig = Field(default_factory=PotentialConfig)
    orbital: OrbitalConfig = Field(default_factory=OrbitalConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    physics: PhysicsConfig = Field(default_factory=PhysicsConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    workers: int = Field(default_factory=settings.default_workers, ge=1)


class RunRecord(BaseModel):
    config_hash: str
    code_version: str
    kind: str
    started: str
    finished: Optional[str] = None
    status: Literal["OK", "PARTIAL"] = "OK"
    points_done: int = 0
    rows: List[Dict[str, Any]] = []
    diagnostics: Dict[str, Any] = {}
    verdicts: Dict[str, Any] = {}
    failures: List[Dict[str, Any]] = []
    csv_path: Optional[str] = None
    manifest_path: Optional[str] = None


# -------------------------------------------------------------------
# Loading
# -------------------------------------------------------------------
def load_presets() -> Dict[str, Dict]:
    with open(PRESETS_PATH, "r", encoding="utf-8") as f:
        return json.load(f)


def list_presets() -> List[str]:
    return sorted(load_presets())


def _deep_merge(base: Dict, extra: Dict) -> Dict:
    out = copy.deepcopy(base)
    for key, value in (extra or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate_config(data: Dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except PydanticValidationError as exc:
        errors = exc.errors()
        first = errors[0]
        raise ConfigError(
            first["msg"], loc=first["loc"],
            diagnostics={"errors": [{"loc": ".".join(str(p) for p in e["loc"]), "msg": e["msg"]} for e in errors]},
        ) from None


def load_config(path: Optional[str] = None, preset: Optional[str] = None,
                overrides: Optional[Dict] = None) -> ExperimentConfig:
    """Preset, then config file, then overrides, merged key by key."""
    data: Dict = {}
    if preset:
        presets = load_presets()
        if preset not in presets:
            raise ConfigError(f"unknown preset {preset!r}; available: {sorted(presets)}", loc=("preset",))
        data = copy.deepcopy(presets[preset])
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = _deep_merge(data, json.load(f))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}", loc=("config",)) from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}", loc=("config",)) from None
    return validate_config(_deep_merge(data, overrides or {}))


def config_hash(config: ExperimentConfig) -> str:
    payload = config.model_dump(mode="json", exclude={"output", "workers"})
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


# -------------------------------------------------------------------
# Gates
# -------------------------------------------------------------------
def _micro_triples(config: ExperimentConfig):
    p = config.physics
    for N in p.N:
        for ell in p.ell:
            yield N, ell


def check_regime(config: ExperimentConfig) -> None:
    """Reject ell < 1/N and windows reaching the absorbing layer before any compute."""
    if config.kind in ("energy", "micro-macro", "window-sweep"):
        for N, ell in _micro_triples(config):
            if N * ell < 1.0 - 1e-12:
                raise OutOfRegimeError(f"ell = {ell} below 1/N for N = {N}", diagnostics={"N": N, "ell": ell})
    if config.kind in ("window", "window-sweep"):
        for pt in _window_points(config):
            layer = (1.0 - ABSORB_FRACTION) * window_r_max(config, pt["Lambda"])
            if 2 * pt["L"] >= layer:
                raise OutOfRegimeError(f"window 2L = {2 * pt['L']} reaches the absorbing layer at r = {layer}",
                                       diagnostics={"L": pt["L"], "Lambda": pt["Lambda"], "absorber_start": layer})


def estimated_cost(config: ExperimentConfig) -> float:
    """Grid nodes x time steps of the heaviest single evolution."""
    g = config.grid
    nodes = g.r_max / g.dr
    if config.kind in ("window", "window-sweep"):
        return max(2 * window_r_max(config, pt["Lambda"]) / g.dr * math.ceil(max(pt["T"]) / g.dt)
                   for pt in _window_points(config))
    if config.kind == "gp":
        return 2 * nodes * math.ceil(max(config.physics.T) / g.dt)
    return nodes


def check_budget(config: ExperimentConfig) -> None:
    cost = estimated_cost(config)
    if cost > settings.MAX_NODE_STEPS:
        raise ResourceError(f"estimated {cost:.3g} node-steps exceed CORRLAB_MAX_NODES={settings.MAX_NODE_STEPS:.3g}",
                            diagnostics={"cost": cost, "limit": settings.MAX_NODE_STEPS})


# -------------------------------------------------------------------
# Points
# -------------------------------------------------------------------
def _window_points(config: ExperimentConfig) -> List[Dict]:
    p = config.physics
    if config.kind == "window":
        return [{"Lambda": lam, "L": max(p.L), "Ls": sorted(p.L), "T": sorted(p.T)} for lam in p.Lambda]
    points = []
    for N, ell in _micro_triples(config):
        macro = [micro_to_macro(N, ell, t) for t in sorted(p.t)] if N * ell >= 1.0 - 1e-12 else []
        if macro:
            points.append({"Lambda": macro[0]["Lambda"], "L": macro[0]["L"], "Ls": [macro[0]["L"]],
                           "T": [m["T"] for m in macro], "N": N, "ell": ell})
    return points


def window_r_max(config: ExperimentConfig, Lambda: float) -> float:
    """Evolution grid extent for one window point, growing with Lambda."""
    return max(config.grid.r_max, WINDOW_EXTENT * Lambda)


def expand_points(config: ExperimentConfig) -> List[Tuple[str, Dict]]:
    p = config.physics
    kind = config.kind
    if kind == "scatter":
        points = [{"N": N} for N in p.N]
    elif kind in ("window", "window-sweep"):
        points = _window_points(config)
    elif kind == "dispersive":
        points = [{"Lambda": lam} for lam in p.Lambda]
    elif kind == "energy":
        points = [{"N": N, "ell": ell} for N, ell in _micro_triples(config)]
    elif kind == "gp":
        points = [{"T": sorted(p.T)}]
    else:
        points = [{"N": N, "ell": ell, "t": t} for N, ell in _micro_triples(config) for t in p.t]
    out = []
    for params in points:
        key = json.dumps({k: v for k, v in params.items() if k != "Ls"}, sort_keys=True)
        out.append((hashlib.sha256(key.encode("utf-8")).hexdigest()[:12], params))
    return out


@lru_cache(maxsize=8)
def _solve(potential_json: str, N: int, dr: float, r_max: float, scheme: str, min_points: int):
    pc = json.loads(potential_json)
    spec = make_potential(pc["kind"], pc["V0"], pc["R"], pc.get("table"))
    if N > 1:
        spec = scale_potential(spec, N)
    return spec, solve_zero_energy(spec, RadialGrid(dr, r_max), scheme=scheme, min_points_per_range=min_points)


def _scatter_setup(config: ExperimentConfig, N: int = 1, scheme: str = "numerov"):
    pc = config.potential
    g = config.grid
    dr = g.scatter_dr or (g.dr if config.kind == "scatter" else pc.R / g.min_points_per_range)
    r_max = g.r_max if config.kind == "scatter" else max(10.0 * pc.R, 4.0)
    return _solve(pc.model_dump_json(), N, dr / N, r_max / N, scheme, g.min_points_per_range)


def _point_scatter(config: ExperimentConfig, params: Dict) -> Dict:
    N = params["N"]
    spec, sol = _scatter_setup(config, N)
    bounds = verify_omega_bounds(sol)
    consts = coupling_constants(spec, sol)
    row = {
        "N": N,
        "a_asymptotic": scattering_length(sol, "asymptotic", spec),
        "a_integral": scattering_length(sol, "integral", spec),
        "omega0": float(sol.omega_samples[0]),
        "sup_omega": bounds.sup_omega,
        "margin": bounds.margin,
        "b": consts["b"],
        "eight_pi_a": consts["eight_pi_a"],
        "excess": consts["excess"],
    }
    return {"rows": [row], "diagnostics": {"bounds_passed": bounds.passed, "failures": bounds.failures,
                                           "residual": sol.residual}}


def _point_window(config: ExperimentConfig, params: Dict) -> Dict:
    g = config.grid
    pc = config.potential
    r_max = window_r_max(config, params["Lambda"])
    spec, sol = _solve(pc.model_dump_json(), 1, g.dr, r_max, "central", g.min_points_per_range)
    if not spec.smooth:
        logger.warning("window experiment with a square well: results are oracle-only")
    orbital = make_orbital(config.orbital.kind, config.orbital.scale)
    psi = window_data(sol.grid, orbital, params["Lambda"])
    rows = []
    boundary = 0.0
    for item in window_series(psi, sol, spec, params["Lambda"], params["Ls"], params["T"], g.dt):
        boundary = max(boundary, item["diagnostics"].get("boundary_mass", 0.0))
        rows.append({
            "Lambda": item["Lambda"], "L": item["L"], "T": item["T"],
            "F": item["F"], "F1": item["F1"], "F2": item["F2"],
            "grid_dr": g.dr, "dt": g.dt, "potential_hash": spec.content_hash,
        })
    return {"rows": rows, "diagnostics": {"boundary_mass": boundary, "out_of_regime": params["Ls"][-1] >= params["Lambda"]}}


def _point_dispersive(config: ExperimentConfig, params: Dict) -> Dict:
    g = config.grid
    _, sol = _scatter_setup(config)
    orbital = make_orbital(config.orbital.kind, config.orbital.scale)
    f = omega_times_profile(sol, orbital, params["Lambda"], RadialGrid(g.dr, g.r_max))
    series = supnorm_series(f, 1.0, sorted(config.physics.T), with_gradient=True,
                            Lambda=params["Lambda"], family_tag=f"omega-{orbital.kind}")
    diagnostics = dict(series.diagnostics, l1_norm=radial_lp_norm(np.abs(f.samples), g.dr, 1))
    return {"rows": series.rows(), "diagnostics": diagnostics}


def _point_energy(config: ExperimentConfig, params: Dict) -> Dict:
    N, ell = params["N"], params["ell"]
    spec, sol = _scatter_setup(config)
    orbital = make_orbital(config.orbital.kind, config.orbital.scale)
    moments = hamiltonian_moments(orbital, spec, N)
    fn0 = fn_initial(orbital, sol, N, ell)
    row = {
        "N": N, "ell": ell, "N_ell": fn0["N_ell"],
        "e1_per_N": moments["e1_per_N"], "e1_limit": moments["e1_limit"],
        "h2_leading_per_N3": moments["h2_leading_per_N3"], "h2_limit": moments["h2_limit"],
        "fn0_value": fn0["value"], "fn0_scaled": fn0["scaled"], "fn0_asymptotic": fn0["asymptotic_constant"],
    }
    return {"rows": [row], "diagnostics": {"fn0_relative_gap": fn0["relative_gap"]}}


def _point_gp(config: ExperimentConfig, params: Dict) -> Dict:
    g = config.grid
    spec, sol = _scatter_setup(config)
    orbital = make_orbital(config.orbital.kind, config.orbital.scale)
    result = coupling_comparison(orbital, spec, sol, max(params["T"]), g.dt,
                                 grid=RadialGrid(g.dr, g.r_max), times=params["T"])
    return {"rows": result["rows"], "diagnostics": {"g_scattering": result["g_scattering"],
                                                    "g_born": result["g_born"]}}


def _point_micro_macro(config: ExperimentConfig, params: Dict) -> Dict:
    macro = micro_to_macro(params["N"], params["ell"], params["t"])
    return {"rows": [dict(params, **macro)], "diagnostics": {}}


_POINT_RUNNERS = {
    "scatter": _point_scatter,
    "window": _point_window,
    "window-sweep": _point_window,
    "dispersive": _point_dispersive,
    "energy": _point_energy,
    "gp": _point_gp,
    "micro-macro": _point_micro_macro,
}


def _run_point(config_data: Dict, params: Dict) -> Dict:
    # top-level so the process pool can pickle it
    config = validate_config(config_data)
    return _POINT_RUNNERS[config.kind](config, params)


# -------------------------------------------------------------------
# Persistence
# -------------------------------------------------------------------
def _cell(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def write_csv(path: str, columns: Sequence[str], rows: Sequence[Dict]) -> str:
    path = os.path.abspath(path)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])
    return path


def write_manifest(path: str, manifest: Dict) -> str:
    path = os.path.abspath(path)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    os.replace(tmp, path)
    return path


def read_manifest(path: str) -> Dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ValidationError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {path} is not valid JSON: {exc}") from None


def _paths(config: ExperimentConfig, chash: str) -> Tuple[str, str]:
    name = config.output.name or f"{config.kind}_{chash}"
    base = os.path.abspath(os.path.join(config.output.dir, name))
    return base + ".csv", base + ".manifest.json"


def confine_output(config: ExperimentConfig, root: str) -> None:
    """Reject an output dir that resolves outside root."""
    base = os.path.realpath(root)
    target = os.path.realpath(config.output.dir)
    if os.path.commonpath([base, target]) != base:
        raise ConfigError(f"output dir {config.output.dir!r} is outside {root!r}", loc=("output", "dir"))


# -------------------------------------------------------------------
# Verdicts
# -------------------------------------------------------------------
def _first_rows(points: Dict[str, Dict]):
    for pid, result in points.items():
        if result["rows"]:
            yield pid, result["rows"][0]


def _verdicts(config: ExperimentConfig, rows: List[Dict], points: Dict[str, Dict]) -> Dict:
    kind = config.kind
    out: Dict[str, Any] = {}
    if not rows:
        return out
    if kind == "scatter":
        out["omega_bounds_passed"] = all(p["diagnostics"].get("bounds_passed", False) for p in points.values())
        out["a_cross_formula_gap"] = max(abs(r["a_asymptotic"] - r["a_integral"]) for r in rows)
    elif kind in ("window", "window-sweep"):
        nonincreasing = True
        formation = []
        for key in sorted({(r["Lambda"], r["L"]) for r in rows}):
            series = sorted((r["T"], r["F"]) for r in rows if (r["Lambda"], r["L"]) == key)
            late = [F for T, F in series if T >= 20]
            nonincreasing &= all(b <= a * (1 + 1e-9) for a, b in zip(late, late[1:]))
            start = [F for T, F in series if T == 0]
            if start and start[0] > 0:
                formation.append(max((F for T, F in series if 20 <= T <= 100), default=0.0) / start[0])
        out["F_nonincreasing_after_20"] = nonincreasing
        if formation:
            out["formation_ratio"] = max(formation)
    elif kind == "dispersive":
        at10 = [r["sup_norm"] for r in rows if r["t"] == 10.0]
        if len(at10) > 1 and min(at10) > 0:
            out["uniform_ratio_t10"] = max(at10) / min(at10)
        exponents = {}
        for lam in sorted({r["Lambda"] for r in rows}):
            sub = [r for r in rows if r["Lambda"] == lam and 1.0 <= r["t"] <= 100.0]
            if len(sub) >= 5:
                series = DecaySeries(times=[r["t"] for r in sub], sup_norms=[r["sup_norm"] for r in sub])
                exponents[str(lam)] = fit_exponent(series, (1.0, 100.0))["alpha"]
        if exponents:
            out["decay_exponents"] = exponents
        l1 = sorted((r["Lambda"], points[pid]["diagnostics"]["l1_norm"]) for pid, r in _first_rows(points))
        if len(l1) > 1:
            out["l1_growth_slope"] = float(np.polyfit(np.log([x for x, _ in l1]), np.log([y for _, y in l1]), 1)[0])
    elif kind == "energy":
        out["e1_relative_gap"] = max(abs(r["e1_per_N"] - r["e1_limit"]) / abs(r["e1_limit"]) for r in rows)
        out["fn0_relative_gap"] = [abs(r["fn0_scaled"] - r["fn0_asymptotic"]) / r["fn0_asymptotic"]
                                   if r["fn0_asymptotic"] else 0.0 for r in rows]
    elif kind == "gp":
        masses = [r["mass"] for r in rows]
        energies = [r["energy"] for r in rows]
        out["mass_drift"] = max(abs(m - masses[0]) for m in masses)
        out["energy_drift"] = max(abs(e - energies[0]) for e in energies) / max(abs(energies[0]), 1e-300)
        out["terminal_divergence"] = rows[-1]["divergence"]
    return out


# -------------------------------------------------------------------
# Runs
# -------------------------------------------------------------------
def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def run_experiment(config: ExperimentConfig, write: bool = True) -> RunRecord:
    """Evaluate every parameter point of the config; resumable through the manifest."""
    check_regime(config)
    check_budget(config)
    chash = config_hash(config)
    csv_path, manifest_path = _paths(config, chash)
    points = expand_points(config)
    config_data = config.model_dump(mode="json")

    manifest = copy.deepcopy(MANIFEST_TEMPLATE)
    if write and config.output.manifest and os.path.exists(manifest_path):
        previous = read_manifest(manifest_path)
        if previous.get("config_hash") == chash:
            manifest = previous
            logger.info("resuming %s: %d of %d points already done", manifest_path,
                        len(manifest["points"]), len(points))
    manifest.update({"config_hash": chash, "code_version": __version__, "kind": config.kind,
                     "config": config_data, "status": "RUNNING", "failures": []})
    manifest["started"] = manifest.get("started") or _now()

    def record(pid: str, result: Dict) -> None:
        manifest["points"][pid] = result
        if write and config.output.manifest:
            write_manifest(manifest_path, manifest)

    failures: List[Dict] = []

    def fail(pid: str, params: Dict, exc: BaseException) -> None:
        logger.exception("point %s %s failed", pid, params)
        failures.append({"point": pid, "params": params, "error": type(exc).__name__, "message": str(exc),
                         "exit_code": getattr(exc, "exit_code", 1)})

    todo = [(pid, params) for pid, params in points if pid not in manifest["points"]]
    if config.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {pool.submit(_run_point, config_data, params): (pid, params) for pid, params in todo}
            for future in as_completed(futures):
                pid, params = futures[future]
                try:
                    record(pid, future.result())
                except Exception as exc:
                    fail(pid, params, exc)
    else:
        for pid, params in todo:
            try:
                record(pid, _POINT_RUNNERS[config.kind](config, params))
            except Exception as exc:
                fail(pid, params, exc)

    done = {pid: manifest["points"][pid] for pid, _ in points if pid in manifest["points"]}
    rows = [dict(row, config_hash=chash) for result in done.values() for row in result["rows"]]
    columns = CSV_COLUMNS[config.kind]
    if write and config.output.csv and rows:
        write_csv(csv_path, columns, rows)
        manifest["csv_path"] = csv_path
    manifest["verdicts"] = _verdicts(config, rows, done)
    manifest["diagnostics"] = {pid: result["diagnostics"] for pid, result in done.items()}
    manifest["failures"] = failures
    manifest["status"] = "PARTIAL" if failures else "OK"
    manifest["finished"] = _now()
    if write and config.output.manifest:
        write_manifest(manifest_path, manifest)
    if failures:
        logger.warning("run %s finished with %d failed points", chash, len(failures))

    return RunRecord(
        config_hash=chash, code_version=__version__, kind=config.kind,
        started=manifest["started"], finished=manifest["finished"], status=manifest["status"],
        points_done=len(done), rows=rows, diagnostics=manifest["diagnostics"],
        verdicts=manifest["verdicts"], failures=failures,
        csv_path=manifest.get("csv_path"), manifest_path=manifest_path if write and config.output.manifest else None,
    )


def evolve_checkpoint(config: ExperimentConfig) -> str:
    """Evolve the configured orbital under -2 Lap + V to max(T) and write a checkpoint."""
    g = config.grid
    pc = config.potential
    spec = make_potential(pc.kind, pc.V0, pc.R, pc.table)
    orbital = make_orbital(config.orbital.kind, config.orbital.scale)
    grid = RadialGrid(g.dr, g.r_max)
    T = max(config.physics.T)
    evolved = evolve_radial(RadialField.from_function(grid, orbital, mu=RELATIVE.mu), spec, T, g.dt, RELATIVE)
    name = config.output.name or f"evolve_{config_hash(config)}"
    os.makedirs(config.output.dir, exist_ok=True)
    return save_checkpoint(evolved, os.path.join(config.output.dir, f"{name}_T{T:g}.csv"), spec.content_hash)


# -------------------------------------------------------------------
# Convergence
# -------------------------------------------------------------------
FUNCTIONALS = {
    "scatter": ("a_asymptotic", "a_integral"),
    "window": ("F", "F1", "F2"),
    "window-sweep": ("F", "F1", "F2"),
    "dispersive": ("sup_norm",),
    "energy": ("e1_per_N", "fn0_value"),
    "gp": ("mass", "energy", "divergence"),
    "micro-macro": (),
}


def _refine(config: ExperimentConfig, level: int) -> ExperimentConfig:
    factor = 2.0 ** level
    grid = config.grid.model_copy(update={
        "dr": config.grid.dr / factor,
        "dt": config.grid.dt / factor,
        "scatter_dr": config.grid.scatter_dr / factor if config.grid.scatter_dr else None,
        "min_points_per_range": int(config.grid.min_points_per_range * factor),
    })
    return config.model_copy(update={"grid": grid, "workers": 1})


def convergence_study(config: ExperimentConfig, refinement_levels: Sequence[int] = (0, 1, 2)) -> Dict:
    """Rerun at dr, dt halvings; observed order log2(delta_k / delta_{k+1}) per functional."""
    levels = list(refinement_levels)
    if len(levels) < 3:
        raise ValidationError(f"need at least 3 refinement levels, got {len(levels)}")
    configs = [_refine(config, k) for k in levels]
    for cfg in configs:
        check_regime(cfg)
        check_budget(cfg)

    values: List[List[Dict]] = []
    for cfg in configs:
        record = run_experiment(cfg, write=False)
        if record.failures:
            raise ValidationError("convergence study aborted: a refinement level failed",
                                  diagnostics={"failures": record.failures})
        values.append(record.rows)

    report: Dict[str, Any] = {"levels": levels, "functionals": {}, "flagged": []}
    for key in FUNCTIONALS[config.kind]:
        entries = []
        for i in range(len(values[0])):
            series = [float(rows[i][key]) for rows in values]
            deltas = [abs(b - a) for a, b in zip(series, series[1:])]
            orders = [math.log2(d0 / d1) if d0 > 0 and d1 > 0 else float("nan")
                      for d0, d1 in zip(deltas, deltas[1:])]
            shift = deltas[-1] / abs(series[-1]) if series[-1] else (0.0 if deltas[-1] == 0 else float("inf"))
            flagged = shift > SHIFT_TOL
            entries.append({"row": i, "values": series, "deltas": deltas, "orders": orders,
                            "shift": shift, "flagged": flagged})
            if flagged:
                logger.warning("%s row %d shifts by %.3g between the two finest levels", key, i, shift)
                report["flagged"].append({"functional": key, "row": i, "shift": shift})
        report["functionals"][key] = entries
    return report


def report(manifest: Dict) -> str:
    lines = [
        f"kind: {manifest.get('kind')}",
        f"config hash: {manifest.get('config_hash')}  code version: {manifest.get('code_version')}",
        f"status: {manifest.get('status')}  points: {len(manifest.get('points', {}))}",
        f"started: {manifest.get('started')}  finished: {manifest.get('finished')}",
    ]
    for key, value in sorted(manifest.get("verdicts", {}).items()):
        lines.append(f"  {key}: {value}")
    for failure in manifest.get("failures", []):
        lines.append(f"  FAILED {failure['point']}: {failure['error']}: {failure['message']}")
    return "\n".join(lines)
