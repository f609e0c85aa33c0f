"""Command-line interface: ``brm <command> [config.json] [flags]``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure (error JSON on stderr).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import jsonschema
import numpy as np

from . import asymptotics, bounds, qp, simulator
from .bounds import RiskSpec
from .errors import BrmNumericalError, BrmValueError, PreconditionViolation
from .gauss import CovModel
from .presets import example_spec

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_MAT = {"type": "array", "items": _VEC, "minItems": 1}

SPEC_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "sigma": _MAT,
        "gamma": _MAT,
        "equicorrelated": {
            "type": "object",
            "additionalProperties": False,
            "required": ["d", "rho"],
            "properties": {"d": {"type": "integer", "minimum": 1}, "rho": _NUM},
        },
        "a": _VEC,
        "c": _VEC,
        "u": {"type": "number", "exclusiveMinimum": 0},
        "k": {"type": "integer", "minimum": 1},
        "s_start": {"type": "number", "minimum": 0},
        "t_end": {"type": ["number", "null"]},
    },
    "required": ["a"],
    "oneOf": [{"required": ["sigma"]}, {"required": ["gamma"]}, {"required": ["equicorrelated"]}],
}

OPTIONS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n_rep": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0},
        "grid": {"type": "integer", "minimum": 1},
        "lambda0": {"type": "number", "exclusiveMinimum": 0},
        "u_sweep": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "horizon": {"enum": ["finite", "infinite"]},
        "t_cap": {"type": "number", "exclusiveMinimum": 0},
        "refine_depth": {"type": "integer", "minimum": 0},
        "tilt": {"type": "boolean"},
        "formula": {"enum": ["point", "orthant"]},
        "bonferroni": {"type": "boolean"},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["spec"],
    "properties": {
        "spec": SPEC_SCHEMA,
        "options": OPTIONS_SCHEMA,
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"path": {"type": "string"}, "format": {"enum": ["json", "csv"]}},
        },
    },
}


# ------------------------------------------------------------------ output


def _fmt(x) -> str:
    """JSON text with every float written to 17 significant digits."""
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    if isinstance(x, np.ndarray):
        return _fmt(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "null"
        if math.isinf(x):
            return json.dumps("inf" if x > 0 else "-inf")
        return format(x, ".17g")
    if x is None:
        return "null"
    return json.dumps(str(x))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# ------------------------------------------------------------------ config


def load_config(path: str) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    jsonschema.validate(cfg, CONFIG_SCHEMA)
    return cfg


def spec_from_dict(d: dict) -> RiskSpec:
    jsonschema.validate(d, SPEC_SCHEMA)
    if "sigma" in d:
        model = CovModel(np.array(d["sigma"], dtype=float))
    elif "gamma" in d:
        model = CovModel.from_gamma(np.array(d["gamma"], dtype=float))
    else:
        model = CovModel.equicorrelated(d["equicorrelated"]["d"], d["equicorrelated"]["rho"])
    dim = model.dim
    t_end = d.get("t_end", 1.0)
    return RiskSpec(
        model,
        np.array(d["a"], dtype=float),
        np.array(d.get("c", [0.0] * dim), dtype=float),
        float(d.get("u", 1.0)),
        int(d.get("k", dim)),
        float(d.get("s_start", 0.0)),
        math.inf if t_end is None else float(t_end),
    )


def _options(cfg: dict, args) -> dict:
    opts = dict(cfg.get("options", {}))
    for name, key in (("nrep", "n_rep"), ("seed", "seed"), ("steps", "grid"), ("grid", "grid"),
                      ("lambda0", "lambda0"), ("horizon", "horizon"), ("tcap", "t_cap")):
        val = getattr(args, name, None)
        if val is not None:
            opts[key] = val
    return opts


# ---------------------------------------------------------------- commands


def cmd_qp_solve(spec, opts, args):
    sol = qp.solve_pi_sigma(spec.model, spec.a)
    return {"spec": spec.to_dict(), "solution": sol.to_dict()}


def cmd_bound(spec, opts, args):
    n_rep, seed = opts.get("n_rep", 10**6), opts.get("seed", 0)
    res = bounds.sandwich(spec, n_rep, seed)
    out = {"spec": spec.to_dict(), "bounds": res.to_dict()}
    if opts.get("bonferroni"):
        per, pairs = simulator.simulate_subset_events(spec, opts.get("grid"), n_rep, seed)
        lo, hi = bounds.bonferroni(spec, per, pairs)
        out["bonferroni"] = {"lower": lo, "upper": hi}
    return out


def _with_horizon(spec, opts):
    horizon = opts.get("horizon")
    if horizon == "infinite" and spec.finite:
        return RiskSpec(spec.model, spec.a, spec.c, spec.u, spec.k, spec.s_start, math.inf)
    if horizon == "finite" and not spec.finite:
        raise PreconditionViolation("finite horizon requested but t_end is null")
    return spec


def cmd_approx(spec, opts, args):
    spec = _with_horizon(spec, opts)
    if not spec.finite:
        est = asymptotics.infinite_horizon_lograte(spec)
    else:
        est = asymptotics.psi_k_asymptotic(
            spec, formula=opts.get("formula", "point"), lambda0=opts.get("lambda0", asymptotics.LAMBDA0),
            n_rep=opts.get("n_rep", 10**5), seed=opts.get("seed", 0), grid_steps=opts.get("grid"),
        )
    return {"spec": spec.to_dict(), "asymptotic": est.to_dict()}


def cmd_simulate(spec, opts, args):
    spec = _with_horizon(spec, opts)
    n_rep, seed = opts.get("n_rep", 10**5), opts.get("seed", 0)
    if spec.finite:
        res = simulator.simulate_psi(spec, opts.get("grid"), n_rep, seed,
                                     refine_depth=opts.get("refine_depth", simulator.DEFAULT_DEPTH),
                                     tilt=opts.get("tilt", False), hitting_times=bool(args.emit_times))
    else:
        res = simulator.simulate_psi_infinite(spec, opts.get("t_cap"), opts.get("grid", 128), n_rep, seed,
                                              refine_depth=opts.get("refine_depth", 14))
    if args.emit_times:
        if res.hitting_times is None:
            raise PreconditionViolation("--emit-times needs a finite horizon")
        _emit(_csv_text(["tau"], [[float(t)] for t in res.hitting_times]), args.emit_times)
    return {"spec": spec.to_dict(), "result": res.to_dict()}


def cmd_failure_time(spec, opts, args):
    ft = simulator.sample_failure_time(spec, opts.get("grid"), opts.get("n_rep", 10**5), opts.get("seed", 0),
                                       refine_depth=opts.get("refine_depth", 16), tilt=opts.get("tilt", True))
    ks = simulator.ks_against_exponential(ft.samples, ft.rate, ft.weights)
    if args.emit_times:
        rows = [[float(x), float(w)] for x, w in zip(ft.samples, ft.weights)]
        _emit(_csv_text(["scaled_time", "weight"], rows), args.emit_times)
    return {
        "spec": spec.to_dict(),
        "rate": ft.rate,
        "n_samples": int(len(ft.samples)),
        "n_eff": ft.n_eff,
        "ks": {"statistic": ks.statistic, "critical": ks.critical, "n_eff": ks.n_eff, "passed": ks.passed},
    }


SWEEP_HEADER = ["u", "psi_sim", "stderr", "lower", "upper", "asym", "ratio"]


def sweep_rows(spec, opts) -> list[list]:
    n_rep, seed = opts.get("n_rep", 10**5), opts.get("seed", 0)
    rows = []
    for u in opts.get("u_sweep", [spec.u]):
        s = spec.with_u(u)
        sim = simulator.simulate_psi(s, opts.get("grid"), n_rep, seed, tilt=opts.get("tilt", False),
                                     refinement_check=False)
        b = bounds.sandwich(s, n_rep, seed)
        try:
            asym = asymptotics.psi_k_asymptotic(s, lambda0=opts.get("lambda0", asymptotics.LAMBDA0),
                                                n_rep=n_rep, seed=seed).value
        except BrmValueError:
            asym = math.nan
        ratio = sim.psi_hat.value / asym if asym and asym > 0 else math.nan
        rows.append([float(u), sim.psi_hat.value, sim.psi_hat.stderr, b.lower.value, b.upper.value,
                     float(asym), float(ratio)])
    return rows


def cmd_sweep(spec, opts, args):
    rows = sweep_rows(spec, opts)
    if args.format == "csv":
        return _csv_text(SWEEP_HEADER, rows)
    return {"spec": spec.to_dict(), "table": [dict(zip(SWEEP_HEADER, r)) for r in rows]}


def cmd_example(args):
    n_rep, seed = args.nrep or 10**5, args.seed or 0
    cfg = example_spec(args.id, rho=args.rho, d=args.d, u=args.u)
    if args.id == 3:
        res = asymptotics.equicorrelated_closed_forms(cfg["d"], cfg["rho"], cfg["a"], cfg["c"], k=args.k, u=cfg["u"],
                                                      with_constant=not args.no_constant, n_rep=n_rep, seed=seed)
        return {"example": 3, "result": res.to_dict()}
    spec = cfg["spec"]
    out = {"example": args.id, "spec": spec.to_dict()}
    if args.id == 2:
        out["dominant_pairs"] = [[i + 1, j + 1] for i, j in asymptotics.dominant_pairs(spec.model, spec.c)]
    if not args.no_constant:
        out["asymptotic"] = asymptotics.psi_k_asymptotic(spec, n_rep=n_rep, seed=seed).to_dict()
    return out


COMMANDS = {
    "qp-solve": cmd_qp_solve,
    "bound": cmd_bound,
    "approx": cmd_approx,
    "simulate": cmd_simulate,
    "failure-time": cmd_failure_time,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brm", description="Simultaneous failure in correlated Brownian risk models")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("config", help="JSON problem file")
        p.add_argument("--nrep", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="worker threads (default: $BRM_THREADS or 1)")
        p.add_argument("--output", "-o", help="write the result here instead of stdout")
        p.add_argument("--format", choices=["json", "csv"])
        return p

    common(sub.add_parser("qp-solve", help="solve the quadratic program for a"))
    common(sub.add_parser("bound", help="sandwich bounds p_T <= psi <= K p_T"))
    p = common(sub.add_parser("approx", help="exact asymptotics"))
    p.add_argument("--horizon", choices=["finite", "infinite"])
    p.add_argument("--lambda0", type=float)
    p.add_argument("--grid", type=int)
    p = common(sub.add_parser("simulate", help="Monte Carlo estimate of psi"))
    p.add_argument("--steps", type=int)
    p.add_argument("--tcap", type=float)
    p.add_argument("--horizon", choices=["finite", "infinite"])
    p.add_argument("--emit-times", metavar="CSV", help="write first failure times in [S, T] to this file")
    p = common(sub.add_parser("failure-time", help="rescaled failure-time sample and KS test"))
    p.add_argument("--steps", type=int)
    p.add_argument("--emit-times", metavar="CSV")
    p = common(sub.add_parser("sweep", help="simulation, bounds and asymptotics over a u grid"))
    p.add_argument("--steps", type=int)
    p.add_argument("--lambda0", type=float)
    p = common(sub.add_parser("example", help="worked equicorrelated examples"), config=False)
    p.add_argument("--id", type=int, choices=[1, 2, 3], required=True)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--k", type=int)
    p.add_argument("--u", type=float, default=3.0)
    p.add_argument("--no-constant", action="store_true", help="skip the Monte Carlo constant")
    return parser


def _error(kind: str, exc: Exception, code: int) -> int:
    message = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
    payload = {"error": kind, "type": type(exc).__name__, "message": message}
    diag = getattr(exc, "diagnostics", None)
    if diag:
        payload["diagnostics"] = diag
    sys.stderr.write(_fmt(payload) + "\n")
    return code


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        os.environ["BRM_THREADS"] = str(args.threads)
    try:
        if args.command == "example":
            result = cmd_example(args)
            fmt, path = args.format or "json", args.output
        else:
            cfg = load_config(args.config)
            spec = spec_from_dict(cfg["spec"])
            opts = _options(cfg, args)
            jsonschema.validate(opts, OPTIONS_SCHEMA)
            out_cfg = cfg.get("output", {})
            fmt = args.format or out_cfg.get("format", "json")
            args.format = fmt
            path = args.output or out_cfg.get("path")
            result = COMMANDS[args.command](spec, opts, args)
        _emit(result if isinstance(result, str) else _fmt(result), path)
        return 0
    except (BrmValueError, jsonschema.ValidationError, json.JSONDecodeError, OSError) as exc:
        return _error("validation", exc, 2)
    except BrmNumericalError as exc:
        return _error("numerical", exc, 3)


def main() -> None:
    sys.exit(run())
