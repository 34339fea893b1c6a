"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 usage/config error,
3 numerical divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import analysis, sweep
from .dynamics import DivergenceError, EnsembleState, ModelConfig, SimOptions, read_trace_csv, simulate, write_trace_csv

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3

log = logging.getLogger("winfree")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "initial"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n", "kappa"],
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "kappa": {"type": "number", "minimum": 0},
                "frequencies": {"type": "array", "items": _num, "minItems": 1},
                "identical_nu": _num,
                "N": {"type": "integer", "minimum": 1},
            },
            "oneOf": [
                {"required": ["frequencies"], "not": {"anyOf": [{"required": ["identical_nu"]}, {"required": ["N"]}]}},
                {"required": ["identical_nu", "N"], "not": {"required": ["frequencies"]}},
            ],
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "phases": {"type": "array", "items": _num, "minItems": 1},
                "uniform_box": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["alpha", "seed"],
                    "properties": {"alpha": _pos, "seed": {"type": "integer", "minimum": 0}},
                },
            },
            "oneOf": [{"required": ["phases"]}, {"required": ["uniform_box"]}],
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": _pos,
                "t_end": _pos,
                "record_stride": {"type": "integer", "minimum": 1},
                "integrator": {"enum": ["euler", "rk4"]},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"trace_path": {"type": "string"}, "report_path": {"type": "string"}},
        },
    },
}


class ConfigError(Exception):
    pass


def load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def load_run_config(path):
    raw = load_json(path)
    errors = sorted(jsonschema.Draft202012Validator(RUN_CONFIG_SCHEMA).iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        lines = [f"{path}: {'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("\n".join(lines))
    m = raw["model"]
    freqs = m["frequencies"] if "frequencies" in m else [m["identical_nu"]] * m["N"]
    try:
        config = ModelConfig(n=m["n"], kappa=float(m["kappa"]), frequencies=freqs)
        opts = SimOptions(**raw.get("sim", {}))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    init = raw["initial"]
    if "phases" in init:
        phases = np.array(init["phases"], dtype=float)
        if phases.size != config.N:
            raise ConfigError(f"{path}: initial/phases has {phases.size} entries, model has {config.N} oscillators")
    else:
        box = init["uniform_box"]
        rng = np.random.Generator(np.random.Philox(key=box["seed"]))
        phases = rng.uniform(-box["alpha"], box["alpha"], config.N)
    return config, EnsembleState(0.0, phases), opts, raw.get("outputs", {})


def _out_path(args, given, default_name) -> Path:
    if given:
        p = Path(given)
        if not p.is_absolute() and args.out_dir:
            p = Path(args.out_dir) / p
    else:
        p = Path(args.out_dir or ".") / default_name
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit(args, text):
    if not args.quiet:
        print(text)


def cmd_simulate(args) -> int:
    config, initial, opts, outputs = load_run_config(args.config)
    stem = Path(args.config).stem
    trace_path = _out_path(args, outputs.get("trace_path"), f"{stem}_trace.csv")
    report_path = _out_path(args, outputs.get("report_path"), f"{stem}_summary.json")
    try:
        trace = simulate(config, initial, opts)
    except DivergenceError as exc:
        if exc.trace is not None and len(exc.trace):
            write_trace_csv(exc.trace, trace_path)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    write_trace_csv(trace, trace_path)
    est = analysis.rotation_numbers(trace)
    result = analysis.classify(est, config.frequencies)
    summary = {
        "schema_version": analysis.SCHEMA_VERSION,
        "n": config.n,
        "kappa": config.kappa,
        "N": config.N,
        "t_end": float(trace.times[-1]),
        "final_D": float(trace.D[-1]),
        "final_R": float(trace.R[-1]),
        "classification": result.label,
        "rho": [float(x) for x in est.rho],
        "rho_window": list(est.window),
        "rho_max_residual": est.max_residual,
        "trace_path": str(trace_path),
    }
    report_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit(args, f"{result.label}  final D={trace.D[-1]:.6g}  trace -> {trace_path}")
    return EXIT_OK


def single_drift(nu: float, n: int, kappa: float, t_end: float, dt: float = 1e-2, integrator: str = "euler") -> float:
    config = ModelConfig(n=n, kappa=kappa, frequencies=[nu])
    trace = simulate(config, EnsembleState(0.0, [0.0]), SimOptions(dt=dt, t_end=t_end, record_stride=100, integrator=integrator))
    return float(analysis.rotation_numbers(trace).rho[0])


def cmd_single(args) -> int:
    rho_e = single_drift(args.nu, args.n, args.kappa, args.t_end, args.dt, "euler")
    rho_r = single_drift(args.nu, args.n, args.kappa, args.t_end, args.dt, "rk4")
    print(f"rho         {rho_e:.6f}")
    print(f"rho - nu    {rho_e - args.nu:+.6f}")
    print(f"rk4 rho-nu  {rho_r - args.nu:+.6f}   (|euler - rk4| = {abs(rho_e - rho_r):.2e})")
    return EXIT_OK


def cmd_classify(args) -> int:
    if args.config:
        config, _, _, _ = load_run_config(args.config)
        freqs, n = config.frequencies, config.n
    else:
        if not args.frequencies or args.n is None:
            raise ConfigError("classify needs --config, or --n with --frequencies")
        freqs, n = np.array(args.frequencies, dtype=float), args.n
    trace = read_trace_csv(args.trace, n=n)
    if trace.N != len(freqs):
        raise ConfigError(f"trace has {trace.N} oscillators, {len(freqs)} frequencies given")
    est = analysis.rotation_numbers(trace, args.discard)
    res = analysis.classify(est, freqs, args.eps_zero, args.eps_equal)
    print(json.dumps({
        "label": res.label,
        "rho": [float(x) for x in est.rho],
        "window": list(est.window),
        "max_residual": est.max_residual,
        "eps_zero": args.eps_zero,
        "eps_equal": args.eps_equal,
    }, indent=2))
    return EXIT_OK


def cmd_thresholds(args) -> int:
    try:
        config = ModelConfig(n=args.n, kappa=args.kappa, frequencies=args.frequencies)
        report = analysis.thresholds(config, args.alpha, args.p)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    text = report.to_json()
    if args.out_dir:
        _out_path(args, None, "thresholds.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    raw = load_json(args.spec)
    try:
        spec = sweep.SweepSpec.from_dict(raw)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"{args.spec}: {exc}") from exc
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    workers = args.workers or sweep.default_workers()
    cells = sweep.run_sweep(spec, workers)
    sweep.write_cells_csv(cells, out / "cells.csv", timings=args.timings)
    curve = sweep.critical_curves(cells)
    sweep.write_curves(curve, out / "curves.csv", out / "curves.json")
    _emit(args, f"{len(cells)} cells -> {out / 'cells.csv'}")
    for n, a, b, c in zip(curve.n_values, curve.kappa_i, curve.kappa_p, curve.kappa_d):
        _emit(args, f"n={n:<4d} kappa_i={a}  kappa_p={b}  kappa_d={c}")
    _emit(args, f"log-log slope kappa_i: {curve.loglog_slope}   kappa_d: {curve.loglog_slope_d}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_all

    checks = run_all(args.n_max, args.grid_points)
    failed = [c for c in checks if not c.passed]
    if not args.quiet:
        width = max(len(c.name) for c in checks)
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  n={c.n:<3d} {c.name:<{width}}  slack={c.slack:.3e}")
    if failed:
        c = failed[0]
        print(f"FAILED: {c.name} at n={c.n}, slack {c.slack:.6g}", file=sys.stderr)
        return EXIT_VERIFY
    _emit(args, f"all {len(checks)} checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=argparse.SUPPRESS)
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="winfree", description="Order-n Winfree model toolkit")
    p.add_argument("--out-dir", default=None, help="directory for output files")
    p.add_argument("--workers", type=int, default=None, help="sweep worker processes (env WINFREE_WORKERS)")
    p.add_argument("--quiet", action="store_true", default=False)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="integrate a JSON run config")
    s.add_argument("config")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("single", parents=[common], help="self-coupled single oscillator drift")
    s.add_argument("--nu", type=float, default=5.0)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--kappa", type=float, default=1.0)
    s.add_argument("--t-end", type=float, default=1000.0)
    s.add_argument("--dt", type=float, default=1e-2)
    s.set_defaults(func=cmd_single)

    s = sub.add_parser("classify", parents=[common], help="classify a trace CSV")
    s.add_argument("trace")
    s.add_argument("--config")
    s.add_argument("--n", type=int)
    s.add_argument("--frequencies", type=float, nargs="+")
    s.add_argument("--discard", type=float, default=0.5)
    s.add_argument("--eps-zero", type=float, default=1e-3)
    s.add_argument("--eps-equal", type=float, default=1e-3)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("thresholds", parents=[common], help="closed-form critical couplings")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--frequencies", type=float, nargs="+", required=True)
    s.add_argument("--kappa", type=float, default=0.0)
    s.add_argument("--alpha", type=float)
    s.add_argument("--p", type=int)
    s.set_defaults(func=cmd_thresholds)

    s = sub.add_parser("sweep", parents=[common], help="(n, kappa) phase-diagram sweep")
    s.add_argument("spec")
    s.add_argument("--timings", action="store_true", help="write per-cell wall time (breaks byte-stability)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", parents=[common], help="kernel and quadrature certification")
    s.add_argument("--n-max", type=int, default=30)
    s.add_argument("--grid-points", type=int, default=1_000_000)
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    if args.workers is None and os.environ.get("WINFREE_WORKERS"):
        args.workers = sweep.default_workers()
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
