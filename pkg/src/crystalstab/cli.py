"""Command-line front end: ``csl <subcommand> --config cfg.json --out dir``.

Every run writes its data files plus ``run.json`` (config, config hash, seed,
worker count, library versions, wall time, outputs).  CSV files have a header
row and 17 significant digits, so identical configs and seeds reproduce them
byte for byte.

Exit codes: 0 success, 2 invalid invocation or config, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np
import scipy

from . import __version__
from ._parallel import default_workers

log = logging.getLogger("csl")

EXIT_OK, EXIT_INVALID, EXIT_ABORT = 0, 2, 3


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry if known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None, col: int | None = None):
        super().__init__(message)
        self.key, self.line, self.col = key, line, col


# ---- config schemas ---------------------------------------------------------------------------
# compact table key -> (JSON types, default); expanded into JSON Schemas by json_schema()
REQUIRED = object()
NUM = ("number",)
INT = ("integer",)
MODEL = ("model", ("object",), REQUIRED)
GRID = [("N", INT, 2), ("P", INT, 8)]
PHYS = [("e", NUM, 1.0), ("M", NUM, 1.0)]
POINT = [("alpha", NUM, 0.0), ("r", ("array",), [0.0, 0.0, 0.0])]

SCHEMAS: dict[str, list[tuple]] = {
    "jellium-check": [MODEL, ("tol", NUM, 1e-12), ("window", INT, 5), ("N", INT, 4), ("P", INT, 12), ("density_tol", NUM, 1e-8)],
    "wiener-scan": [MODEL, ("n", INT, 9), ("thetas", ("array", "null"), None), ("M_max", INT, 8), ("tol", NUM, 1e-10)],
    "ground-state": [MODEL, *GRID, ("Z", NUM, 1.0), ("M", NUM, 1.0), *POINT, ("arrangement", ("object", "null"), None)],
    "minimize-cell": [MODEL, ("P", INT, 8), ("Z", NUM, 1.0), ("e", ("number", "null"), None), ("init", ("string",), "random"),
                      ("iters", INT, 10000), ("energy_tol", NUM, 1e-12), ("residual_tol", NUM, 1e-6)],
    "evolve": [MODEL, *GRID, *PHYS, *POINT, ("dt", NUM, 1e-3), ("T_end", NUM, 1.0), ("scheme", ("string",), "strang"),
               ("monitor_every", INT, 10), ("snapshot_every", INT, 0), ("perturbation", ("object", "null"), None)],
    "orbital-stability": [MODEL, ("deltas", ("array",), [1e-3, 5e-4, 2.5e-4]), ("T_end", NUM, 10.0), ("direction", ("string",), "random"),
                          *GRID, *PHYS, ("dt", NUM, 1e-2), ("monitor_every", INT, 10)],
    "hessian": [MODEL, ("N", INT, 4), ("P", INT, 4), *PHYS, *POINT, ("fixed_r", ("boolean",), False), ("M_max", INT, 8)],
    "bloch-spectrum": [MODEL, ("theta", ("array",), REQUIRED), ("K_cut", INT, 4), *PHYS, ("growth_K_cut", ("integer", "null"), None)],
    "dispersion": [MODEL, ("thetas", ("array", "null"), None), ("path", ("object", "null"), None), ("n_eigs", INT, 12),
                   ("K_cut", INT, 2), *PHYS, ("flat_tol", NUM, 1e-6)],
    "decay": [MODEL, ("L", INT, 24), ("alpha", NUM, -2.0), ("K_cut", INT, 1), ("P", INT, 4), *PHYS,
              ("center", ("array",), [np.pi] * 3), ("rho", NUM, 1.0), ("n_times", INT, 6), ("times", ("array", "null"), None)],
    "fermion-density": [("state", ("object",), REQUIRED), ("points_per_unit", INT, 16), ("oracle", ("boolean",), False),
                        ("quad_res", INT, 8), ("oracle_points", INT, 16)],
}


def json_schema(subcommand: str) -> dict:
    """JSON Schema (draft 2020-12) of the config accepted by ``subcommand``."""
    props: dict[str, Any] = {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1, "default": 0},
        "workers": {"type": "integer", "minimum": 1},
    }
    required = []
    for key, types, default in SCHEMAS[subcommand]:
        props[key] = {"type": list(types) if len(types) > 1 else types[0]}
        if default is REQUIRED:
            required.append(key)
        else:
            props[key]["default"] = default
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": f"csl {subcommand} config",
        "type": "object",
        "properties": props,
        "required": required,
        "additionalProperties": False,
    }


def _key_line(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def _schema_error(err: jsonschema.ValidationError, text: str) -> ConfigError:
    if err.validator == "required":
        key = err.message.split("'")[1]
        return ConfigError(f"missing required key {key!r}", key, 1)
    if err.validator == "additionalProperties":
        key = err.message.split("'")[1]
        return ConfigError(f"unknown key {key!r}", key, _key_line(text, key))
    key = str(err.path[0]) if err.path else None
    line = _key_line(text, key) if key else 1
    return ConfigError(f"key {key!r}: {err.message}" if key else err.message, key, line)


def load_config(path: str | Path, subcommand: str) -> dict[str, Any]:
    """Read a JSON config, validate it against :func:`json_schema` and fill defaults.

    Raises
    ------
    ConfigError
        With line/column information where the source can be located.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror or exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno, col=exc.colno) from exc
    schema = json_schema(subcommand)
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(schema).iter_errors(raw))
    if err is not None:
        raise _schema_error(err, text)
    cfg = {k: raw.get(k, spec.get("default")) for k, spec in schema["properties"].items() if k in raw or "default" in spec}
    cfg["_text"] = text
    return cfg


# ---- output helpers -----------------------------------------------------------------------------
def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path: Path, rows: list[dict], columns: list[str] | None = None) -> Path:
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


# ---- subcommands --------------------------------------------------------------------------------
def _model(cfg):
    from .ion_models import model_from_config

    try:
        return model_from_config(cfg["model"])
    except ValueError as exc:
        raise ConfigError(str(exc), "model") from exc


def _vec3(cfg, key):
    v = cfg[key]
    if len(v) != 3 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ConfigError(f"key {key!r} must be a list of three numbers", key)
    return np.asarray(v, dtype=float)


def _grid(cfg, N_key="N", P_key="P"):
    from .spectral_core import TorusGrid

    try:
        return TorusGrid(cfg[N_key], cfg[P_key])
    except ValueError as exc:
        raise ConfigError(str(exc), N_key) from exc


def cmd_jellium_check(cfg, out: Path, ctx) -> dict:
    from .ion_models import check_jellium, periodized_values

    model = _model(cfg)
    rep = check_jellium(model, cfg["tol"], cfg["window"])
    w = cfg["window"]
    rng = np.arange(-w, w + 1)
    m = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), -1).reshape(-1, 3)
    m = m[np.any(m != 0, axis=1) & (np.linalg.norm(m, axis=1) <= w)]
    vals = np.abs(model.fourier(2 * np.pi * m))
    rows = [{"m1": a[0], "m2": a[1], "m3": a[2], "abs_sigma_hat": v} for a, v in zip(m, vals)]
    files = [write_csv(out / "jellium.csv", rows)]
    summary = {"passed": rep.passed, "max_abs": rep.max_abs, "worst_m": rep.worst_m, "tol": rep.tol, "window": w}
    try:
        grid = _grid(cfg)
        dev = float(np.max(np.abs(periodized_values(model, grid) - model.eZ)))
        summary["periodized_density"] = {"N": grid.N, "P": grid.P, "max_deviation": dev, "passed": dev < cfg["density_tol"]}
    except (ValueError, ConfigError) as exc:
        summary["periodized_density"] = {"skipped": str(exc)}
    files.append(write_json(out / "jellium.json", summary))
    return {"files": files, "summary": summary}


def cmd_wiener_scan(cfg, out: Path, ctx) -> dict:
    from .ion_models import interior_theta_grid, wiener_scan

    model = _model(cfg)
    thetas = np.asarray(cfg["thetas"], float) if cfg["thetas"] is not None else interior_theta_grid(cfg["n"])
    if thetas.ndim != 2 or thetas.shape[1] != 3:
        raise ConfigError("'thetas' must be a list of 3-vectors", "thetas")
    try:
        rows = wiener_scan(model, thetas, cfg["M_max"], cfg["tol"], workers=ctx["workers"])
    except ValueError as exc:
        raise ConfigError(str(exc), "thetas") from exc
    summary = {
        "points": len(rows),
        "degenerate": sum(r["degenerate"] for r in rows),
        "min_sigma0": min(r["sigma0"] for r in rows),
        "wiener_on_grid": not any(r["degenerate"] for r in rows),
    }
    files = [write_csv(out / "wiener_scan.csv", rows), write_json(out / "wiener_scan.json", summary)]
    return {"files": files, "summary": summary}


def cmd_ground_state(cfg, out: Path, ctx) -> dict:
    from .crystal_state import charge, energy, energy_terms, force
    from .ground_states import nonperiodic_arrangement, periodic_ground_state, verify_flat_density

    model, grid = _model(cfg), _grid(cfg)
    X = periodic_ground_state(cfg["alpha"], _vec3(cfg, "r"), cfg["Z"], grid, model, cfg["M"])
    summary = {
        "energy": energy(X),
        "energy_terms": energy_terms(X),
        "charge": charge(X),
        "max_force": float(np.abs(force(X)).max()),
    }
    arr_cfg = cfg["arrangement"]
    if arr_cfg is not None:
        opts = dict(arr_cfg)
        mode = opts.pop("mode", None)
        if mode is None:
            raise ConfigError("arrangement needs 'mode'", "arrangement")
        try:
            arr = nonperiodic_arrangement(mode, grid.N, _vec3(cfg, "r"), model=model, seed=ctx["seed"], **opts)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"arrangement: {exc}", "arrangement") from exc
        rep = verify_flat_density(arr.q, model, grid)
        summary["arrangement"] = {
            "mode": arr.mode,
            "provenance": arr.provenance,
            "real_space_max": rep.real_space_max,
            "fourier_max": rep.fourier_max,
            "flat": rep.passed,
        }
        write_json(out / "arrangement.json", {"q": arr.q, "mode": arr.mode})
    (out / "state.json").write_text(X.to_json())
    files = [out / "state.json", write_json(out / "ground_state.json", summary)]
    if arr_cfg is not None:
        files.append(out / "arrangement.json")
    return {"files": files, "summary": summary}


def cmd_minimize_cell(cfg, out: Path, ctx) -> dict:
    from .ground_states import minimize_energy_per_cell
    from .spectral_core import TorusGrid

    model = _model(cfg)
    res = minimize_energy_per_cell(
        model, cfg["Z"], TorusGrid(1, cfg["P"]), cfg["init"], cfg["iters"], e=cfg["e"],
        energy_tol=cfg["energy_tol"], residual_tol=cfg["residual_tol"], seed=ctx["seed"],
    )
    rows = [{"iter": i, "E": E, "residual": r} for i, E, r in res.history]
    summary = {
        "energy": res.energy,
        "omega0": res.omega0,
        "omega0_imag": res.omega0_imag,
        "residual": res.residual,
        "iterations": res.iterations,
        "converged": res.converged,
    }
    psi = np.asarray(res.psi)
    snap = {**summary, "shape": psi.shape, "psi": np.stack([psi.real.ravel(), psi.imag.ravel()], 1).ravel()}
    files = [write_csv(out / "convergence.csv", rows), write_json(out / "minimizer.json", snap)]
    return {"files": files, "summary": summary}


def _initial_state(cfg, ctx):
    from .crystal_state import Crystal, SolitaryPoint, solitary_state
    from .dynamics import kernel_kick, perturbed_state, random_perturbation

    crystal = Crystal(_grid(cfg), _model(cfg), cfg["e"], cfg["M"])
    S = SolitaryPoint(cfg["alpha"], _vec3(cfg, "r"))
    pert = cfg["perturbation"]
    if pert is None:
        return solitary_state(crystal, S)
    direction = pert.get("direction", "random")
    delta = pert.get("delta")
    if not isinstance(delta, (int, float)) or delta < 0:
        raise ConfigError("perturbation needs a nonnegative 'delta'", "perturbation")
    if direction == "random":
        Y = random_perturbation(crystal, np.random.default_rng(ctx["seed"]))
    elif direction == "kernel":
        Y = kernel_kick(crystal)
    else:
        raise ConfigError(f"unknown perturbation direction {direction!r}", "perturbation")
    return perturbed_state(crystal, Y, float(delta), S)


def cmd_evolve(cfg, out: Path, ctx) -> dict:
    from .dynamics import IntegratorConfig, evolve

    try:
        icfg = IntegratorConfig(cfg["dt"], cfg["T_end"], cfg["scheme"], cfg["monitor_every"])
    except ValueError as exc:
        raise ConfigError(str(exc), "dt") from exc
    X0 = _initial_state(cfg, ctx)
    traj = evolve(X0, icfg, snapshot_every=cfg["snapshot_every"])
    files = [write_csv(out / "evolve.csv", traj.rows, ["t", "E", "Q", "dV"])]
    if traj.snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for k, (t, X) in enumerate(traj.snapshots):
            p = snap_dir / f"state_{k:05d}.json"
            p.write_text(json.dumps({"t": t, "state": X.to_dict()}))
            files.append(p)
    summary = traj.drifts()
    files.append(write_json(out / "drifts.json", summary))
    return {"files": files, "summary": summary}


def cmd_orbital_stability(cfg, out: Path, ctx) -> dict:
    from .dynamics import orbital_stability_experiment

    rows = orbital_stability_experiment(
        _model(cfg), cfg["deltas"], cfg["T_end"], direction=cfg["direction"], N=cfg["N"], P=cfg["P"], e=cfg["e"],
        M=cfg["M"], dt=cfg["dt"], monitor_every=cfg["monitor_every"], seed=ctx["seed"], workers=ctx["workers"],
    )
    ratios = [a["sup_d"] / b["sup_d"] for a, b in zip(rows, rows[1:]) if b["sup_d"] > 0]
    summary = {"successive_ratios": ratios, "sup_over_delta": [r["sup_d"] / r["delta"] for r in rows if r["delta"] > 0]}
    files = [write_csv(out / "orbital_stability.csv", rows, ["delta", "d0", "sup_d", "E0", "E_drift"]),
             write_json(out / "orbital_stability.json", summary)]
    return {"files": files, "summary": summary}


def cmd_hessian(cfg, out: Path, ctx) -> dict:
    from .crystal_state import SolitaryPoint
    from .hessian_stability import assemble_hessian, constrained_spectrum, kernel_defect_dimension, null_space

    model, grid = _model(cfg), _grid(cfg)
    H = assemble_hessian(SolitaryPoint(cfg["alpha"], _vec3(cfg, "r")), grid, model, cfg["e"], cfg["M"], workers=ctx["workers"])
    ev = H.eigenvalues()
    ns = null_space(H)
    cs = constrained_spectrum(H, fixed_r=cfg["fixed_r"])
    d = kernel_defect_dimension(model, grid.N, cfg["M_max"])
    summary = {
        "kernel_dimension": ns.dimension,
        "kernel_defect": d,
        "expected_kernel_dimension": 5 + d,
        "span_residual": ns.span_residual,
        "constrained_min_eigenvalue": cs.min_eig,
        "constrained_min_eigenvalue_h1": cs.min_eig_h1,
        "constrained_kernel_dimension": cs.kernel_dimension,
        "largest_eigenvalue": H.largest(),
    }
    files = [
        write_csv(out / "spectrum.csv", [{"index": i, "eigenvalue": v} for i, v in enumerate(ev)]),
        write_json(out / "kernel.json", ns.to_json()),
        write_json(out / "hessian.json", summary),
    ]
    return {"files": files, "summary": summary}


def cmd_bloch_spectrum(cfg, out: Path, ctx) -> dict:
    from .bloch_analysis import (
        bloch_energy_matrix,
        growth_exponent_fit,
        k_matrix,
        positivity_sandwich,
        similarity_residual,
    )

    model, theta = _model(cfg), _vec3(cfg, "theta")
    try:
        mats = bloch_energy_matrix(model, theta, cfg["K_cut"], cfg["e"], cfg["M"])
    except ValueError as exc:
        raise ConfigError(str(exc), "theta") from exc
    sw = positivity_sandwich(mats, model, "frozen")
    summary = {
        "theta": theta,
        "K_cut": cfg["K_cut"],
        "b0": sw.b0,
        "sigma0": sw.sigma0,
        "lower": sw.lower,
        "upper": sw.upper,
        "epsilon": sw.epsilon,
        "sandwich_passed": sw.passed,
    }
    try:
        K = k_matrix(mats)
    except ValueError as exc:  # B not positive definite: no frequencies at this theta
        summary["k_matrix_error"] = str(exc)
        w = np.zeros(0)
    else:
        w = np.sort(mats.omega)
        summary.update(
            hermiticity_K=float(np.abs(K - K.conj().T).max()),
            similarity_residual=similarity_residual(mats),
            symmetry_defect=float(np.max(np.abs(w + w[::-1]))),
            clip_count=mats.clip_count,
        )
    if cfg["growth_K_cut"] is not None:
        fit = growth_exponent_fit(model, theta, cfg["growth_K_cut"], cfg["e"], cfg["M"])
        summary["growth_slope"] = fit.slope
        summary["growth_points"] = len(fit.k)
    files = [
        write_csv(out / "spectrum.csv", [{"index": i, "omega": v} for i, v in enumerate(w)]),
        write_json(out / "bloch.json", summary),
    ]
    return {"files": files, "summary": summary}


def cmd_dispersion(cfg, out: Path, ctx) -> dict:
    from .bloch_analysis import dispersion_relations

    model = _model(cfg)
    if cfg["thetas"] is not None:
        thetas = np.asarray(cfg["thetas"], float)
    elif cfg["path"] is not None:
        p = cfg["path"]
        try:
            a, b, n = np.asarray(p["start"], float), np.asarray(p["end"], float), int(p.get("n", 16))
        except (KeyError, TypeError) as exc:
            raise ConfigError("path needs 'start', 'end' and optional 'n'", "path") from exc
        thetas = a + np.linspace(0, 1, n)[:, None] * (b - a)
    else:
        raise ConfigError("dispersion needs 'thetas' or 'path'", "thetas", 1)
    if thetas.ndim != 2 or thetas.shape[1] != 3:
        raise ConfigError("thetas must be 3-vectors", "thetas")
    tab = dispersion_relations(model, thetas, cfg["n_eigs"], cfg["K_cut"], cfg["e"], cfg["M"], cfg["flat_tol"], workers=ctx["workers"])
    summary = {
        "flat_branches": tab.flat_branches,
        "flat_values": tab.flat_values,
        "skipped": tab.skipped,
        "symmetry_defect": tab.symmetry_defect,
    }
    files = [
        write_csv(out / "dispersion.csv", tab.rows(), ["theta1", "theta2", "theta3", "branch", "omega"]),
        write_json(out / "dispersion.json", summary),
    ]
    return {"files": files, "summary": summary}


def cmd_decay(cfg, out: Path, ctx) -> dict:
    from .bloch_analysis import dispersive_decay_experiment

    try:
        curve = dispersive_decay_experiment(
            _model(cfg), cfg["L"], cfg["times"], cfg["alpha"], K_cut=cfg["K_cut"], P=cfg["P"], e=cfg["e"], M=cfg["M"],
            center=_vec3(cfg, "center"), rho=cfg["rho"], n_times=cfg["n_times"], workers=ctx["workers"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "times") from exc
    summary = {"ratio": curve.ratio, "t_limit": curve.t_limit, "max_group_velocity": curve.max_group_velocity, "alpha": curve.alpha}
    files = [write_csv(out / "decay.csv", curve.rows(), ["t", "weighted_norm"]), write_json(out / "decay.json", summary)]
    return {"files": files, "summary": summary}


def cmd_fermion_density(cfg, out: Path, ctx) -> dict:
    from .fermionic_density import SlaterState, brute_force_density_oracle, check_pair_distance, slater_density

    try:
        state = SlaterState.from_dict(cfg["state"])
    except ValueError as exc:
        raise ConfigError(str(exc), "state") from exc
    rho = slater_density(state)
    ppu = cfg["points_per_unit"]
    g = np.arange(state.N * ppu) / ppu
    x = np.stack(np.meshgrid(*([g] * state.d), indexing="ij"), -1).reshape(-1, state.d)
    vals = rho(x)
    cols = [f"x{i + 1}" for i in range(state.d)]
    rows = [{**dict(zip(cols, p)), "density": v.real} for p, v in zip(x, vals)]
    summary = {
        "n": state.n,
        "Z": state.Z,
        "pair_distance_ok": check_pair_distance(state),
        "constant": rho.constant.real,
        "max_deviation": float(np.max(np.abs(vals - rho.constant))),
        "terms": [{"frequency": f, "amplitude": a} for f, a in zip(rho.frequencies, rho.amplitudes)],
    }
    files = [write_csv(out / "density.csv", rows, cols + ["density"])]
    if cfg["oracle"]:
        sub = x[:: max(1, len(x) // cfg["oracle_points"])]
        try:
            ref = brute_force_density_oracle(state, sub, cfg["quad_res"], workers=ctx["workers"])
        except ValueError as exc:
            raise ConfigError(str(exc), "quad_res") from exc
        summary["oracle_max_mismatch"] = float(np.max(np.abs(rho(sub).real - ref)))
        orows = [{**dict(zip(cols, p)), "density": a.real, "oracle": b} for p, a, b in zip(sub, rho(sub), ref)]
        files.append(write_csv(out / "oracle.csv", orows, cols + ["density", "oracle"]))
    files.append(write_json(out / "fermion.json", summary))
    return {"files": files, "summary": summary}


COMMANDS: dict[str, Callable] = {
    "jellium-check": cmd_jellium_check,
    "wiener-scan": cmd_wiener_scan,
    "ground-state": cmd_ground_state,
    "minimize-cell": cmd_minimize_cell,
    "evolve": cmd_evolve,
    "orbital-stability": cmd_orbital_stability,
    "hessian": cmd_hessian,
    "bloch-spectrum": cmd_bloch_spectrum,
    "dispersion": cmd_dispersion,
    "decay": cmd_decay,
    "fermion-density": cmd_fermion_density,
}


# ---- driver -----------------------------------------------------------------------------------
class _PrintSchema(argparse.Action):
    def __init__(self, option_strings, dest, command, **kw):
        super().__init__(option_strings, dest, nargs=0, default=argparse.SUPPRESS, **kw)
        self.command = command

    def __call__(self, parser, namespace, values, option_string=None):
        print(json.dumps(_jsonable(json_schema(self.command)), indent=2))
        parser.exit()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csl", description="Crystal stability laboratory.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name in COMMANDS:
        p = sub.add_parser(name, help=(COMMANDS[name].__doc__ or name.replace("-", " ")).splitlines()[0])
        p.add_argument("--print-schema", action=_PrintSchema, command=name, help="print the config JSON Schema and exit")
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, default=None, help="parallel workers (default: CSL_WORKERS or all cores)")
        p.add_argument("--seed", type=int, default=None, help="random seed (overrides config; default 0)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config_hash(cfg: dict) -> str:
    clean = {k: v for k, v in cfg.items() if not k.startswith("_")}
    return hashlib.sha256(json.dumps(_jsonable(clean), sort_keys=True).encode()).hexdigest()


def _error(path, exc: ConfigError) -> None:
    line = exc.line if exc.line is not None else 1
    col = f":{exc.col}" if exc.col is not None else ""
    sys.stderr.write(f"{path}:{line}{col}: error: {exc}\n")


def run(command: str, config_path: str, out_dir: str, workers: int | None = None, seed: int | None = None) -> int:
    """Execute one subcommand; returns the exit code."""
    from .dynamics import NumericalAbort

    if command not in COMMANDS:
        sys.stderr.write(f"csl: error: unknown subcommand {command!r}\n")
        return EXIT_INVALID
    t0 = time.perf_counter()
    try:
        cfg = load_config(config_path, command)
    except ConfigError as exc:
        _error(config_path, exc)
        return EXIT_INVALID
    text = cfg.pop("_text")
    if seed is not None and not 0 <= seed < 2**64:
        sys.stderr.write("csl: error: --seed must be an unsigned 64-bit integer\n")
        return EXIT_INVALID
    seed = seed if seed is not None else cfg.get("seed", 0)
    workers = workers if workers is not None else cfg.get("workers", default_workers())
    if workers < 1:
        sys.stderr.write("csl: error: --workers must be positive\n")
        return EXIT_INVALID
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = {"seed": seed, "workers": workers}
    status, code, result = "ok", EXIT_OK, {"files": [], "summary": {}}
    try:
        result = COMMANDS[command](cfg, out, ctx)
    except ConfigError as exc:
        if exc.line is None and exc.key is not None:
            exc.line = _key_line(text, exc.key)
        _error(config_path, exc)
        status, code = f"invalid: {exc}", EXIT_INVALID
    except (NumericalAbort, np.linalg.LinAlgError, FloatingPointError) as exc:
        sys.stderr.write(f"csl: numerical abort: {exc}\n")
        status, code = f"numerical abort: {exc}", EXIT_ABORT
    manifest = {
        "command": command,
        "config_path": str(Path(config_path).resolve()),
        "config": cfg,
        "config_sha256": _config_hash(cfg),
        "seed": seed,
        "workers": workers,
        "rerun": f"csl {command} --config {config_path} --out {out_dir} --workers {workers} --seed {seed}",
        "versions": {
            "crystalstab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": time.perf_counter() - t0,
        "status": status,
        "exit_code": code,
        "outputs": [str(Path(f).relative_to(out)) for f in result["files"]],
        "summary": result["summary"],
    }
    write_json(out / "run.json", manifest)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return run(args.command, args.config, args.out, args.workers, args.seed)


if __name__ == "__main__":
    sys.exit(main())
