"""Batch entry point: ``sidelab {simulate,ledger,compare,counterexample,validate}``.

Experiments are described by a JSON config (see :data:`CONFIG_SCHEMA`).
Every run writes its artifacts plus ``manifest.json`` (config echo, seed,
versions, wall time, artifact hashes) into the output directory.

Exit codes: 0 success, 1 coefficient checks failed, 2 usage or input error.
"""
import argparse
import copy
import hashlib
import json
import os
import platform
import sys
import time

import jsonschema
import numpy as np
import scipy

from . import __version__, coefficients, harness, ledger
from .assumptions import validate
from .field import Field, Grid
from .noise import TimeGrid, dump_csv, sample_noise
from .solver import SolverConfig, SolverError, solve

SCHEMA_VERSION = 1

_number = {"type": "number"}
_extents = {"type": "array", "minItems": 1, "maxItems": 2,
            "items": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "seed"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "grid": {
            "type": "object", "additionalProperties": False, "required": ["extents", "n"],
            "properties": {"extents": _extents,
                           "n": {"oneOf": [{"type": "integer", "minimum": 2},
                                           {"type": "array", "items": {"type": "integer", "minimum": 2}}]},
                           "periodic": {"type": "boolean"}},
        },
        "time": {
            "type": "object", "additionalProperties": False, "required": ["T", "steps"],
            "properties": {"T": {"type": "number", "exclusiveMinimum": 0},
                           "steps": {"type": "integer", "minimum": 1}},
        },
        "equation": {"enum": ["eq1", "eq2"]},
        "coefficients": {
            "type": "object", "additionalProperties": False, "required": ["preset"],
            "properties": {"preset": {"type": "string"}, "params": {"type": "object"}},
        },
        "initial": {
            "type": "object", "additionalProperties": False, "required": ["kind"],
            "properties": {"kind": {"enum": ["constant", "sine"]}, "value": _number,
                           "amplitude": _number, "offset": _number},
        },
        "paths": {"type": "integer", "minimum": 1},
        "theta": {"type": "number", "minimum": 0, "maximum": 1},
        "snapshots": {"type": "boolean"},
        "override": {"type": "boolean"},
        "ledger": {
            "type": "object", "additionalProperties": False, "required": ["driver"],
            "properties": {"driver": {"type": "string"}, "params": {"type": "object"},
                           "quadrature": {"enum": ["left", "exact"]},
                           "delta": {"type": ["number", "null"], "exclusiveMinimum": 0},
                           "steps_list": {"type": "array", "items": {"type": "integer", "minimum": 1},
                                          "minItems": 2},
                           "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
        },
        "compare": {
            "type": "object", "additionalProperties": False, "required": ["preset"],
            "properties": {"preset": {"type": "string"}, "paths": {"type": "integer", "minimum": 2},
                           "levels": {"type": "integer", "minimum": 1}, "violation_demo": {"type": "boolean"}},
        },
        "validate": {
            "type": "object", "additionalProperties": False,
            "properties": {"budget": {"type": "integer", "minimum": 1}, "r_max": _number},
        },
    },
}


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    pass


# -- config handling ---------------------------------------------------------------

def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc.msg} at line {exc.lineno}") from None
    check_config(cfg)
    return cfg


def check_config(cfg):
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise UsageError(f"config error at {where}: {exc.message}") from None


def _require(cfg, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise UsageError(f"config lacks required section(s) for this command: {', '.join(missing)}")


def build_coefficients(cfg):
    spec = cfg["coefficients"]
    try:
        return coefficients.preset(spec["preset"], **spec.get("params", {}))
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    except TypeError as exc:
        raise UsageError(f"bad parameters for preset {spec['preset']!r}: {exc}") from None


def build_grid(cfg):
    g = cfg["grid"]
    try:
        return Grid.box(g["extents"], g["n"], g.get("periodic", False))
    except ValueError as exc:
        raise UsageError(f"grid: {exc}") from None


def build_initial(cfg, grid):
    init = cfg.get("initial", {"kind": "constant", "value": 0.0})
    if init["kind"] == "constant":
        return Field.constant(grid, init.get("value", 0.0))
    amp, off = init.get("amplitude", 1.0), init.get("offset", 0.0)
    lo = np.array([e[0] for e in grid.extents])
    width = np.array([e[1] - e[0] for e in grid.extents])

    def fn(pts):
        return amp * np.prod(np.sin(np.pi * (pts - lo) / width), axis=1) + off
    return Field.from_function(grid, fn)


# -- output -------------------------------------------------------------------------

def _prepare_out(path):
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write-test")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise UsageError(f"output directory {path} is not writable: {exc.strerror}") from None
    return path


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_plain)
        fh.write("\n")


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _manifest(out, command, argv, cfg, seed, artifacts, wall):
    _write_json({
        "command": command,
        "argv": list(argv),
        "config": cfg,
        "seed": seed,
        "versions": {"sidelab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "wall_time_s": wall,
        "artifacts": {os.path.basename(a): _sha256(a) for a in artifacts},
    }, os.path.join(out, "manifest.json"))


# -- subcommands ----------------------------------------------------------------------

def cmd_simulate(args, cfg):
    _require(cfg, "grid", "time", "coefficients")
    coeffs = build_coefficients(cfg)
    grid = build_grid(cfg)
    if grid.dim != coeffs.dim:
        raise UsageError(f"grid has dimension {grid.dim}, coefficients expect {coeffs.dim}")
    if not cfg.get("override", False):
        rep = validate(coeffs, grid.extents, budget=2000, seed=cfg["seed"], T=cfg["time"]["T"])
        if not rep.passed:
            raise CheckFailed("coefficient checks failed: " + ", ".join(rep.failed())
                              + " (set \"override\": true to run anyway)")
    tg = TimeGrid(cfg["time"]["T"], cfg["time"]["steps"])
    scfg = SolverConfig(cfg.get("equation", "eq1"), tg, grid, theta=cfg.get("theta", 1.0), seed=cfg["seed"])
    psi = build_initial(cfg, grid)
    nu = coeffs.nu if len(coeffs.nu) else None
    pi2 = coeffs.pi2 if len(coeffs.pi2) else None

    def one(p):
        noise = sample_noise(tg, coeffs.modes, cfg["seed"], p, nu=nu, pi2=pi2)
        return noise, solve(scfg, coeffs, psi, noise)

    results = harness._map_paths(one, cfg.get("paths", 1), args.workers)
    files = []
    for p, (noise, rec) in enumerate(results):
        f = os.path.join(args.out, f"path_{p:04d}.csv")
        rec.to_csv(f, snapshots=cfg.get("snapshots", False))
        g = os.path.join(args.out, f"noise_{p:04d}.csv")
        dump_csv(noise, g)
        files += [f, g]
    return files


def cmd_ledger(args, cfg):
    _require(cfg, "grid", "time", "ledger")
    grid = build_grid(cfg)
    lcfg = cfg["ledger"]
    name = lcfg["driver"]
    if name not in ledger.DRIVERS:
        raise UsageError(f"unknown ledger driver {name!r}; known: {', '.join(sorted(ledger.DRIVERS))}")
    params = dict(lcfg.get("params", {}))
    factory = ledger.DRIVERS[name]
    T = cfg["time"]["T"]
    quad, delta = lcfg.get("quadrature", "left"), lcfg.get("delta")

    def make(tg, seed):
        if name == "piecewise-constant":
            return factory(grid, tg, seed, **params)
        return factory(grid, tg, **params)

    files = []
    if "steps_list" in lcfg:
        probe = make(TimeGrid(T, 1), cfg["seed"])
        sweep = ledger.refinement_sweep(make, lcfg.get("seeds", [cfg["seed"]]), lcfg["steps_list"], T=T,
                                        modes=probe.modes, marks=probe.marks if len(probe.marks) else None,
                                        quadrature=quad, delta=delta)
        f = os.path.join(args.out, "sweep.csv")
        with open(f, "w") as fh:
            fh.write("seed,steps,dt,max_residual\n")
            for r in sweep.rows:
                fh.write(f"{r['seed']},{r['steps']},{r['dt']!r},{r['max_residual']!r}\n")
        g = os.path.join(args.out, "sweep.json")
        _write_json({"slope": sweep.slope, "seed_slopes": {str(k): v for k, v in sweep.seed_slopes.items()},
                     "mean_by_dt": sweep.mean_by_dt()}, g)
        return [f, g]
    tg = TimeGrid(T, cfg["time"]["steps"])
    drv = make(tg, cfg["seed"])
    noise = sample_noise(tg, drv.modes, cfg["seed"], 0, nu=drv.marks if len(drv.marks) else None)
    rep = ledger.ito_residual(ledger.build_path(drv, noise), drv, noise, quadrature=quad, delta=delta)
    f = os.path.join(args.out, "ledger.csv")
    rep.to_csv(f)
    g = os.path.join(args.out, "ledger.json")
    psi = drv.psi.values
    _write_json({"driver": name, "max_abs_residual": rep.max_abs_residual, "records": len(rep.times),
                 "quadrature": quad, "delta": delta,
                 "psi_l2_sq": float(np.sum(psi * psi)) * grid.cell_volume}, g)
    files += [f, g]
    return files


def cmd_compare(args, cfg):
    _require(cfg, "compare")
    c = cfg["compare"]
    if c["preset"] not in harness.COMPARISONS:
        raise UsageError(f"unknown comparison preset {c['preset']!r}; known: {', '.join(sorted(harness.COMPARISONS))}")
    kw = {"seed": cfg["seed"]}
    for key in ("paths", "levels"):
        if key in c:
            kw[key] = c[key]
    spec = harness.COMPARISONS[c["preset"]](**kw)
    if c.get("violation_demo", False):
        rep = harness.run_violation_demo(spec, workers=args.workers)
    else:
        try:
            rep = harness.run_comparison(spec, workers=args.workers, override=cfg.get("override", False))
        except harness.AssumptionViolation as exc:
            raise CheckFailed(str(exc)) from None
    f, g = os.path.join(args.out, "compare.csv"), os.path.join(args.out, "compare.json")
    rep.to_csv(f)
    rep.to_json(g)
    return [f, g]


def cmd_counterexample(args, cfg):
    if not args.intensity > 0:
        raise UsageError("--intensity must be positive")
    if not args.T > 0 or args.paths < 2:
        raise UsageError("--T must be positive and --paths at least 2")
    rep = harness.run_counterexample(args.T, args.intensity, args.paths, args.seed, coef=args.coef,
                                     workers=args.workers)
    f, g = os.path.join(args.out, "counterexample.csv"), os.path.join(args.out, "counterexample.json")
    rep.to_csv(f)
    rep.to_json(g)
    s = rep.summary()
    print(f"negative fraction {s['negative_fraction']:.4f} "
          f"(95% CI [{s['ci_lo']:.4f}, {s['ci_hi']:.4f}], closed form {s['expected_fraction']:.4f})")
    return [f, g]


def cmd_validate(args, cfg):
    _require(cfg, "coefficients")
    coeffs = build_coefficients(cfg)
    if "grid" in cfg:
        extents = build_grid(cfg).extents
    else:
        extents = [(0.0, 1.0)] * coeffs.dim
    v = cfg.get("validate", {})
    T = cfg["time"]["T"] if "time" in cfg else 1.0
    rep = validate(coeffs, extents, budget=v.get("budget", 10_000), seed=cfg["seed"], T=T,
                   r_max=v.get("r_max", 2.0))
    f = os.path.join(args.out, "validate.json")
    _write_json(rep.to_dict(), f)
    for name, verdict in rep.verdicts.items():
        print(f"{'PASS' if verdict.passed else 'FAIL'} {name} margin={verdict.margin:.6g}")
    print(f"kappa = {rep.kappa!r}")
    if not rep.passed:
        raise CheckFailed("coefficient checks failed: " + ", ".join(rep.failed()), [f])
    return [f]


COMMANDS = {
    "simulate": cmd_simulate,
    "ledger": cmd_ledger,
    "compare": cmd_compare,
    "counterexample": cmd_counterexample,
    "validate": cmd_validate,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="sidelab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sidelab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--out", default=os.path.join("sidelab-out", name), help="output directory")
        p.add_argument("--workers", type=int, default=1, help="threads for path-parallel sections")
        if name == "counterexample":
            p.add_argument("--T", type=float, default=1.0)
            p.add_argument("--intensity", type=float, default=1.0)
            p.add_argument("--paths", type=int, default=10_000)
            p.add_argument("--seed", type=int, required=True)
            p.add_argument("--coef", type=float, default=-2.0, help="jump coefficient g(r) = coef * r")
        else:
            p.add_argument("--config", required=True, help="JSON experiment config")
    return parser


def run(argv=None):
    """Run one subcommand; returns the exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    start = time.perf_counter()
    try:
        if args.workers < 1:
            raise UsageError("--workers must be at least 1")
        if args.command == "counterexample":
            cfg = {"schema_version": SCHEMA_VERSION, "seed": args.seed, "T": args.T,
                   "intensity": args.intensity, "paths": args.paths, "coef": args.coef}
            seed = args.seed
        else:
            cfg = load_config(args.config)
            seed = cfg["seed"]
        echo = copy.deepcopy(cfg)
        _prepare_out(args.out)
        try:
            files = COMMANDS[args.command](args, cfg)
            code = 0
        except CheckFailed as exc:
            print(f"sidelab {args.command}: {exc.args[0]}", file=sys.stderr)
            files = exc.args[1] if len(exc.args) > 1 else []
            code = 1
    except UsageError as exc:
        print(f"sidelab {args.command}: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"sidelab {args.command}: solver failed: {exc}", file=sys.stderr)
        return 1
    _manifest(args.out, args.command, argv, echo, seed, files, time.perf_counter() - start)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
