"""Command-line front door.

    degenbeam <command> --config <path> [--out <dir>] [--seed <u64>]

Commands are classify, simulate, identities, observe, control and sweep.  The
config is JSON, validated against ``CONFIG_SCHEMA`` (unknown keys rejected)
before anything is computed.  Every run writes ``run_report.json`` to the
output directory; time series and per-sample data go to CSV files with 17
significant digits.  Exit codes: 0 success, 2 invalid config, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import jsonschema
import numpy as np
from scipy.interpolate import PchipInterpolator

from . import errors
from .discretization import (
    assemble_beam_operator,
    build_grid,
    build_quadrature,
    clamped_modes,
)
from .dynamics import BeamState, fit_time_step, solve_homogeneous
from .hum import ControlProblem, synthesize_control
from .observability import estimate_CT, identity_residual_first, identity_residual_second
from .profiles import (
    DegeneracyProfile,
    classify,
    make_custom_profile,
    make_power_profile,
    observability_bounds,
    observability_time,
)

log = logging.getLogger("degenbeam")

COMMANDS = ("classify", "simulate", "identities", "observe", "control", "sweep")
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

_SHAPE = {"type": "string", "pattern": r"^(bump|zero|mode:[1-9][0-9]*|random:[0-9]+)$"}
_T_VALUE = {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "auto2T0"}]}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["profile", "grid"],
    "properties": {
        "profile": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "alpha"],
                    "properties": {
                        "type": {"const": "power"},
                        "alpha": {"type": "number"},
                        "scale": {"type": "number"},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "x", "a"],
                    "properties": {
                        "type": {"const": "custom"},
                        "x": {"type": "array", "items": {"type": "number"}, "minItems": 3},
                        "a": {"type": "array", "items": {"type": "number"}, "minItems": 3},
                        "scale": {"type": "number"},
                    },
                },
            ]
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n"],
            "properties": {"n": {"type": "integer"}},
        },
        "time": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"T": _T_VALUE, "dt": {"type": "number", "exclusiveMinimum": 0}},
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"y": _SHAPE, "v": _SHAPE},
        },
        "observability": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "samples": {"type": "integer", "minimum": 0},
                "mode_count": {"type": "integer", "minimum": 1, "maximum": 30},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
            },
        },
        "control": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "filter_modes": {"type": "integer", "minimum": 1},
                "cg_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "tikhonov": {"type": "number", "minimum": 0},
                "allow_short_time": {"type": "boolean"},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["K", "T"],
            "properties": {
                "K": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "T": {"type": "array", "items": _T_VALUE, "minItems": 1},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
        "out": {"type": "string"},
    },
}

DEFAULTS = {
    "time": {"T": "auto2T0"},
    "initial": {"y": "bump", "v": "zero"},
    "observability": {"samples": 100, "mode_count": 10, "seed": 0},
    "control": {"filter_modes": 10, "cg_tol": 1e-10, "max_iter": 500, "tikhonov": 0.0, "allow_short_time": False},
    "out": "runs",
}

# number of modes mixed by the "random:<seed>" initial shape
RANDOM_SHAPE_MODES = 8


class ConfigError(Exception):
    """Invalid configuration; reported with exit code 2."""


# ---------------------------------------------------------------- config


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    validate_config(raw)
    return raw


def validate_config(raw) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errs = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errs:
        e = errs[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {e.message}")


def with_defaults(raw: dict, out: str | None = None, seed: int | None = None) -> dict:
    cfg = copy.deepcopy(raw)
    for key, value in DEFAULTS.items():
        if isinstance(value, dict):
            merged = dict(value)
            merged.update(cfg.get(key, {}))
            cfg[key] = merged
        else:
            cfg.setdefault(key, value)
    cfg["profile"].setdefault("scale", 1.0)
    if out is not None:
        cfg["out"] = out
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg["observability"]["seed"] = seed
    return cfg


def build_profile(entry: dict) -> DegeneracyProfile:
    scale = float(entry.get("scale", 1.0))
    if entry["type"] == "power":
        return make_power_profile(entry["alpha"], scale)
    x = np.asarray(entry["x"], dtype=float)
    a = np.asarray(entry["a"], dtype=float)
    if x.shape != a.shape:
        raise ConfigError("config field profile: x and a must have the same length")
    if x[0] != 0.0 or x[-1] != 1.0 or np.any(np.diff(x) <= 0):
        raise ConfigError("config field profile/x: must increase strictly from 0 to 1")
    interp = PchipInterpolator(x, a)
    return make_custom_profile(interp, interp.derivative(), scale)


@dataclass(frozen=True)
class Setup:
    """Everything resolved from a validated config."""

    config: dict
    profile: DegeneracyProfile
    K: float
    regime: str
    a_at_1: float
    T0: float
    T: float | None
    dt: float | None
    n_steps: int | None

    @property
    def cls(self):
        return classify(self.profile)


def resolve_T(value, T0: float) -> float:
    return 2.0 * T0 if value == "auto2T0" else float(value)


def resolve(cfg: dict) -> Setup:
    profile = build_profile(cfg["profile"])
    cls = classify(profile)
    T0 = observability_time(cls)
    build_grid(cfg["grid"]["n"])
    T = resolve_T(cfg["time"]["T"], T0)
    dt = fit_time_step(T, cfg["time"].get("dt"))
    return Setup(cfg, profile, cls.K, cls.regime.value, cls.a_at_1, T0, T, dt, int(round(T / dt)))


# ---------------------------------------------------------------- output


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    return "%.17g" % x


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating, int, np.integer)) else v for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


# ---------------------------------------------------------------- initial data


def initial_shape(name: str, op, grid) -> np.ndarray:
    """Node values of a deterministic named shape ("zero", "bump" or "mode:k")."""
    x = grid.nodes
    if name == "zero":
        return np.zeros_like(x)
    if name == "bump":
        return x**2 * (1.0 - x) ** 2
    kind, arg = name.split(":")
    if kind == "mode":
        k = int(arg)
        if k > grid.n_unknowns:
            raise ConfigError(f"config field initial: mode {k} exceeds {grid.n_unknowns} unknowns")
        return grid.to_nodes(clamped_modes(op, k).modes[k - 1])
    raise AssertionError(name)


def random_shape(seed: int, op, grid, part: str) -> np.ndarray:
    """Smooth random data on the lowest modes: y ~ sum c_j phi_j / omega_j, v ~ sum c_j phi_j."""
    m = min(RANDOM_SHAPE_MODES, grid.n_unknowns)
    modes = clamped_modes(op, m)
    c = np.random.default_rng([seed, 0 if part == "y" else 1]).standard_normal(m)
    if part == "y":
        c = c / modes.frequencies
    return grid.to_nodes(c @ modes.modes)


def build_initial(cfg: dict, op, grid) -> BeamState:
    parts = {}
    for part in ("y", "v"):
        name = cfg["initial"][part]
        if name.startswith("random:"):
            parts[part] = random_shape(int(name.split(":")[1]), op, grid, part)
        else:
            parts[part] = initial_shape(name, op, grid)
    return BeamState(parts["y"], parts["v"])


# ---------------------------------------------------------------- commands


def _discretize(setup: Setup):
    grid = build_grid(setup.config["grid"]["n"])
    return grid, assemble_beam_operator(setup.profile, grid), build_quadrature(setup.profile, grid)


def cmd_classify(setup: Setup, out: str) -> dict:
    return {}


def cmd_simulate(setup: Setup, out: str) -> dict:
    grid, op, quad = _discretize(setup)
    traj = solve_homogeneous(build_initial(setup.config, op, grid), setup.T, setup.dt, op, quad, grid)
    path = os.path.join(out, "trajectory.csv")
    write_csv(path, ["t", "energy", "trace_yxx_1"], zip(traj.times, traj.energies, traj.trace.samples))
    e0 = traj.energies[0]
    drift = float(np.max(np.abs(traj.energies - e0)) / e0) if e0 > 0 else 0.0
    return {"files": {"trajectory": path}, "initial_energy": e0, "max_relative_energy_drift": drift}


def cmd_identities(setup: Setup, out: str) -> dict:
    grid, op, quad = _discretize(setup)
    traj = solve_homogeneous(build_initial(setup.config, op, grid), setup.T, setup.dt, op, quad, grid)
    path = os.path.join(out, "trajectory.csv")
    write_csv(path, ["t", "energy", "trace_yxx_1"], zip(traj.times, traj.energies, traj.trace.samples))
    result = {"files": {"trajectory": path}}
    for fn in (identity_residual_first, identity_residual_second):
        rep = fn(traj, setup.profile, quad, grid)
        result[f"identity_{rep.which.value}"] = {
            "lhs": rep.lhs,
            "rhs": rep.rhs,
            "relative_residual": rep.relative_residual,
            "terms": {"boundary": rep.terms[0], "kinetic": rep.terms[1], "bending": rep.terms[2]},
        }
    return result


def cmd_observe(setup: Setup, out: str) -> dict:
    grid, op, _ = _discretize(setup)
    obs = setup.config["observability"]
    rep = estimate_CT(setup.profile, setup.cls, setup.T, op, setup.dt, obs["mode_count"], obs["samples"], obs["seed"])
    qpath = os.path.join(out, "quotients.csv")
    write_csv(qpath, ["sample", "quotient"], ((str(i), q) for i, q in enumerate(rep.sample_quotients)))
    opath = os.path.join(out, "observability.json")
    payload = rep.as_dict()
    payload["seed"] = obs["seed"]
    write_json(opath, payload)
    return {"files": {"quotients": qpath, "observability": opath}, "observability": payload}


def cmd_control(setup: Setup, out: str) -> dict:
    grid, op, _ = _discretize(setup)
    ctl = setup.config["control"]
    state = build_initial(setup.config, op, grid)
    problem = ControlProblem(
        state.y,
        state.v,
        setup.T,
        setup.profile,
        grid,
        setup.dt,
        filter_modes=ctl["filter_modes"],
        cg_tol=ctl["cg_tol"],
        max_iter=ctl["max_iter"],
        tikhonov=ctl["tikhonov"],
        allow_short_time=ctl["allow_short_time"],
    )
    try:
        sol = synthesize_control(problem)
        failure = None
    except errors.ControlSynthesisFailed as exc:
        if exc.best is None:
            raise
        sol, failure = exc.best, exc
    cpath = os.path.join(out, "control.csv")
    write_csv(cpath, ["t", "f"], zip(sol.control.times, sol.control.samples))
    spath = os.path.join(out, "control_summary.json")
    summary = sol.summary()
    summary["converged"] = failure is None
    write_json(spath, summary)
    result = {"files": {"control": cpath, "control_summary": spath}, "control": summary}
    if failure is not None:
        raise _PartialFailure(failure, result)
    return result


class _PartialFailure(Exception):
    def __init__(self, cause, result):
        super().__init__(str(cause))
        self.cause = cause
        self.result = result


def sweep_cell(args) -> dict:
    """One (K, T) cell of the sweep; failures are reported in the row."""
    index, K, T_value, cfg, cell_dir = args
    row = {"K": float(K), "T": float("nan"), "T0": float("nan"), "lower_bound": float("nan"),
           "upper_bound": float("nan"), "C_T_estimate": float("nan"), "c_T": float("nan"), "note": ""}
    try:
        profile = make_power_profile(K, cfg["profile"].get("scale", 1.0))
        cls = classify(profile)
        T0 = observability_time(cls)
        T = resolve_T(T_value, T0)
        row.update(T=T, T0=T0)
        row["lower_bound"], row["upper_bound"] = observability_bounds(cls, T)
        dt = fit_time_step(T, cfg["time"].get("dt"))
        grid = build_grid(cfg["grid"]["n"])
        op = assemble_beam_operator(profile, grid)
        obs = cfg["observability"]
        rep = estimate_CT(profile, cls, T, op, dt, obs["mode_count"], obs["samples"], obs["seed"])
        row["C_T_estimate"] = rep.C_T_estimate
        if T > T0 and rep.C_T_estimate > 0:
            row["c_T"] = rep.c_T
        else:
            row["note"] = "T <= T0: lower bound vacuous"
        os.makedirs(cell_dir, exist_ok=True)
        payload = rep.as_dict()
        payload.update(K=float(K), T0=T0, dt=dt)
        write_json(os.path.join(cell_dir, "observability.json"), payload)
    except (errors.DegenBeamError, ValueError) as exc:
        row["note"] = f"{type(exc).__name__}: {exc}"
        row["failed"] = True
    return row


def cmd_sweep(setup: Setup, out: str) -> dict:
    cfg = setup.config
    if "sweep" not in cfg:
        raise ConfigError("config field sweep: required by the sweep command")
    if cfg["profile"]["type"] != "power":
        raise ConfigError("config field profile: sweep varies K through power profiles")
    sw = cfg["sweep"]
    jobs = []
    for K in sw["K"]:
        for T in sw["T"]:
            cell = os.path.join(out, "cells", f"cell_{len(jobs):03d}")
            jobs.append((len(jobs), K, T, cfg, cell))
    workers = sw.get("workers", 1)
    if workers == 1:
        rows = [sweep_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(sweep_cell, jobs))
    cols = ["K", "T", "T0", "lower_bound", "upper_bound", "C_T_estimate", "c_T", "note"]
    path = os.path.join(out, "sweep.csv")
    write_csv(path, cols, ([r[c] for c in cols] for r in rows))
    return {"files": {"sweep": path}, "cells": len(rows), "failed_cells": sum(1 for r in rows if r.get("failed"))}


HANDLERS = {
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "identities": cmd_identities,
    "observe": cmd_observe,
    "control": cmd_control,
    "sweep": cmd_sweep,
}

# errors that mean the config asks for something impossible
_INVALID = (
    ConfigError,
    errors.DegeneracyOutOfRange,
    errors.InvalidProfile,
    errors.GridTooCoarse,
    errors.TimeGridMismatch,
    errors.TooManyModes,
)


def run(command: str, config_path: str, out: str | None = None, seed: int | None = None) -> tuple[int, dict]:
    """Execute one command; returns the exit code and the run report."""
    if command not in HANDLERS:
        raise ValueError(f"unknown command {command!r}")
    report = {"command": command, "config_path": config_path, "status": "ok"}
    started = time.perf_counter()
    timings = {}
    out_dir = out
    try:
        raw = load_config(config_path)
        cfg = with_defaults(raw, out, seed)
        out_dir = cfg["out"]
        report["config"] = cfg
        t = time.perf_counter()
        setup = resolve(cfg)
        timings["setup"] = time.perf_counter() - t
        report["classification"] = {"K": setup.K, "regime": setup.regime, "a_at_1": setup.a_at_1, "T0": setup.T0}
        if command != "sweep":
            report["resolved_time"] = {"T": setup.T, "dt": setup.dt, "n_steps": setup.n_steps}
        os.makedirs(out_dir, exist_ok=True)
        t = time.perf_counter()
        report["result"] = HANDLERS[command](setup, out_dir)
        timings[command] = time.perf_counter() - t
        code = EXIT_OK
    except _INVALID as exc:
        code = EXIT_INVALID
        report.update(status="invalid", error={"type": type(exc).__name__, "message": str(exc)})
    except ValueError as exc:
        # ControlProblem and friends validate their arguments with ValueError
        code = EXIT_INVALID
        report.update(status="invalid", error={"type": type(exc).__name__, "message": str(exc)})
    except _PartialFailure as exc:
        code = EXIT_NUMERICAL
        report["result"] = exc.result
        report.update(status="numerical_failure", error={"type": type(exc.cause).__name__, "message": str(exc.cause)})
    except (errors.DegenBeamError, np.linalg.LinAlgError) as exc:
        code = EXIT_NUMERICAL
        report.update(status="numerical_failure", error={"type": type(exc).__name__, "message": str(exc)})
    timings["total"] = time.perf_counter() - started
    report["timings_seconds"] = timings
    if out_dir is None:
        out_dir = DEFAULTS["out"]
    try:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "run_report.json")
        write_json(path, report)
        report["report_path"] = path
    except OSError as exc:
        log.error("could not write run report: %s", exc)
    return code, report


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="degenbeam", description="Degenerate clamped beam: simulation, observability and boundary null control.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", help="output directory (overrides the config's 'out')")
    p.add_argument("--seed", type=_u64, help="seed for the random observability samples")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    code, report = run(args.command, args.config, args.out, args.seed)
    if code == EXIT_OK:
        print(f"{args.command}: ok -> {report.get('report_path', '')}")
    else:
        err = report.get("error", {})
        print(f"{args.command}: {report['status']}: {err.get('type')}: {err.get('message')}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
