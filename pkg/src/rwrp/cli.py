"""Command-line surface.

Every subcommand reads an optional JSON config file, lets flags override
it, and writes CSV or JSON with the resolved configuration and code
version embedded, so an output file is enough to reproduce the run.

Exit codes: 0 success, 1 validation error, 2 numerical failure,
3 self-verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

from . import __version__
from . import acceptance
from . import annealed as an
from . import bounds as bd
from . import lyapunov as ly
from . import solver as sv
from .driver import default_workers
from .environment import mask_weights, sample_environment
from .errors import EstimatorError, NonConcaveError, SolverError, ValidationError
from .lattice import build_box, linf_norm

_ESTIMATORS = {"exact": an.EXACT_ENUM, "env-mc": an.ENV_MC, "path-mc": an.PATH_MC}


def _ints(text):
    return tuple(int(c) for c in str(text).split(","))


def _floats(text):
    return tuple(float(c) for c in str(text).split(","))


def _build_parser():
    top = argparse.ArgumentParser(
        prog="rwrp",
        description="Travel costs, Lyapunov exponents, and Lipschitz-in-density "
        "bounds for the simple random walk in a Bernoulli potential.",
    )
    top.add_argument("--version", action="version", version=f"rwrp {__version__}")
    sub = top.add_subparsers(dest="command", required=True)

    def cmd(name, help_text, **options):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file; explicit flags win")
        p.add_argument("--out", help="output file path (default: stdout)")
        p.add_argument(
            "--format", choices=("csv", "json"), default=None, help="output format (default json)"
        )
        for flag, (kind, help_str) in options.items():
            p.add_argument(flag, type=kind, default=None, help=help_str)
        return p

    common = {
        "--d": (int, "lattice dimension (default 1)"),
        "--N": (int, "box radius, sites in [-N, N]^d"),
        "--r": (float, "probability of a zero potential, in (0, 1)"),
        "--lambda": (float, "nonnegative potential shift (default 0)"),
        "--y": (_ints, "target site, comma separated (e.g. 2 or 1,0)"),
        "--seed": (int, "master seed (default 0)"),
        "--tol": (float, "relative solver tolerance (default 1e-12)"),
    }
    cmd("solve", "solve one quenched travel field and dump it", **common)
    cmd(
        "cost",
        "annealed travel cost with the chosen estimator",
        **common,
        **{
            "--estimator": (str, "exact | env-mc | path-mc (default exact)"),
            "--replicates": (int, "Monte Carlo replicates (default 1000)"),
            "--workers": (int, "worker threads (default $RWRP_DEFAULT_WORKERS or cpu count)"),
        },
    )
    cmd(
        "derivative",
        "-d(annealed cost)/dr by path formula, site flips, and finite difference",
        **common,
        **{"--replicates": (int, "walk replicates for the path formula (default 10^4)")},
    )
    cmd("russo", "check the flip-sum form of -d/dr E_r[cost] against the analytic value", **common)
    cmd(
        "lyapunov",
        "normalized-cost schedule along a direction",
        **common,
        **{
            "--direction": (_ints, "primitive direction, comma separated"),
            "--n-list": (_ints, "distances n to evaluate (default 2,4,8)"),
            "--box-rule": (_ints, "a,b meaning N(n) = a*n + b (default 2*linf, 5)"),
            "--kind": (str, "quenched | annealed (default quenched)"),
            "--estimator": (str, "annealed estimator: exact | env-mc | path-mc"),
            "--replicates": (int, "replicates per distance (default 100)"),
            "--workers": (int, "worker threads"),
        },
    )
    cmd(
        "bounds",
        "difference-of-exponents bound grid between densities p and q",
        **common,
        **{
            "--p": (float, "smaller zero-probability"),
            "--q": (float, "larger zero-probability"),
        },
    )
    cmd(
        "rate",
        "large-deviation rate function at a real velocity",
        **common,
        **{
            "--x": (_floats, "velocity, comma separated reals inside the open l1 ball"),
            "--kind": (str, "quenched | annealed (default quenched)"),
        },
    )
    cmd("oracle", "exact enumeration dump: per-environment e-values and the annealed cost", **common)
    verify = cmd("verify", "run the full self-verification suite")
    verify.add_argument("--profile", default="desk", help="suite profile (only 'desk')")
    return top


def _resolve(args):
    """Overlay precedence: builtin defaults < config file < explicit flags."""
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ValidationError("config file must hold a JSON object")

    def get(name, default=None, convert=None):
        flag = getattr(args, name, None)
        if flag is not None:
            return flag
        if name in cfg:
            return convert(cfg[name]) if convert else cfg[name]
        return default

    return get


def _emit(args, resolved_config, result, csv_columns=None, csv_rows=None):
    fmt = args.format or "json"
    header = {"version": __version__, "command": args.command, "config": resolved_config}
    if fmt == "json":
        text = json.dumps({**header, "result": result}, indent=2, default=_jsonable) + "\n"
    else:
        if csv_columns is None:
            raise ValidationError(f"command {args.command!r} has no CSV form; use --format json")
        lines = [f"# version: {__version__}", f"# config: {json.dumps(resolved_config)}"]
        lines.append(",".join(csv_columns))
        for row in csv_rows:
            lines.append(",".join("" if v is None else str(v) for v in row))
        text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _box_and_env(get):
    d = get("d", 1)
    y = get("y", convert=_ints)
    if y is None:
        raise ValidationError("missing required option: y (target site)")
    if len(y) != d:
        raise ValidationError(f"y has {len(y)} coordinates but d={d}")
    N = get("N", linf_norm(y) + 1)
    if N < linf_norm(y):
        raise ValidationError(f"N={N} does not contain y={y}")
    return build_box(d, N), y


def _cmd_solve(args, get):
    box, y = _box_and_env(get)
    r = get("r")
    if r is None:
        raise ValidationError("missing required option: r")
    seed = get("seed", 0)
    lam = get("lambda", 0.0)
    tol = get("tol", sv.DEFAULT_TOL)
    env = sample_environment(box, r, seed)
    field = sv.solve_travel_field(box, env, y, lam=lam, tol=tol)
    config = {"d": box.dimension, "N": box.radius, "r": r, "seed": seed, "lambda": lam,
              "y": list(y), "tol": tol}
    result = {
        "cost_at_origin": field.cost_at((0,) * box.dimension),
        "residual": field.residual,
        "iterations": field.iterations,
        "log_scale": field.log_scale,
    }
    if args.out:
        sv.save_field(field, args.out)
        sys.stdout.write(json.dumps({"version": __version__, "command": "solve",
                                     "config": config, "result": result}, indent=2) + "\n")
    else:
        _emit(args, config, result)
    return 0


def _cmd_cost(args, get):
    box, y = _box_and_env(get)
    r = get("r")
    if r is None:
        raise ValidationError("missing required option: r")
    name = get("estimator", "exact")
    if name not in _ESTIMATORS:
        raise ValidationError(f"estimator must be one of {sorted(_ESTIMATORS)}, got {name!r}")
    lam = get("lambda", 0.0)
    replicates = get("replicates", 1000)
    seed = get("seed", 0)
    workers = get("workers", default_workers())
    est = an.annealed_cost(
        box, r, y, lam=lam, estimator=_ESTIMATORS[name],
        replicates=replicates, seed=seed, workers=workers,
    )
    config = {"d": box.dimension, "N": box.radius, "r": r, "lambda": lam, "y": list(y),
              "estimator": name, "replicates": replicates, "seed": seed, "workers": workers}
    _emit(
        args, config, est,
        csv_columns=("r", "lambda", "value", "std_error", "replicates", "estimator"),
        csv_rows=[(est.r, est.lam, est.value, est.std_error, est.replicates, name)],
    )
    return 0


def _cmd_derivative(args, get):
    box, y = _box_and_env(get)
    r = get("r")
    if r is None:
        raise ValidationError("missing required option: r")
    replicates = get("replicates", 10**4)
    seed = get("seed", 0)
    rep = an.derivative_report(box, r, y, replicates=replicates, seed=seed)
    config = {"d": box.dimension, "N": box.radius, "r": r, "y": list(y),
              "replicates": replicates, "seed": seed}
    disc = rep.discrepancies
    _emit(
        args, config,
        {**dataclasses.asdict(rep), "discrepancies": disc},
        csv_columns=("r", "formula", "formula_se", "flip", "fd", "abs_disc"),
        csv_rows=[(rep.r, rep.formula_value, rep.formula_se, rep.flip_value, rep.fd_value,
                   max(disc.values()) if disc else None)],
    )
    return 0


def _cmd_russo(args, get):
    box, y = _box_and_env(get)
    r = get("r")
    if r is None:
        raise ValidationError("missing required option: r")
    _, deriv = sv.expected_quenched_cost(box, y, r)
    flip_sum = sv.russo_rhs(box, r, y, estimator="exact")
    analytic = -deriv
    rel_gap = abs(flip_sum - analytic) / max(abs(analytic), 1e-300)
    config = {"d": box.dimension, "N": box.radius, "r": r, "y": list(y)}
    _emit(
        args, config,
        {"analytic": analytic, "flip_sum": flip_sum, "rel_gap": rel_gap},
        csv_columns=("r", "analytic", "flip_sum", "rel_gap"),
        csv_rows=[(r, analytic, flip_sum, rel_gap)],
    )
    return 0


def _cmd_lyapunov(args, get):
    d = get("d", 1)
    r = get("r")
    if r is None:
        raise ValidationError("missing required option: r")
    direction = get("direction", convert=_ints)
    if direction is None:
        raise ValidationError("missing required option: direction")
    lam = get("lambda", 0.0)
    n_list = get("n_list", (2, 4, 8), convert=_ints)
    rule_spec = get("box_rule", convert=_ints)
    box_rule = (lambda n: rule_spec[0] * n + rule_spec[1]) if rule_spec else None
    kind = get("kind", "quenched")
    replicates = get("replicates", 100)
    seed = get("seed", 0)
    workers = get("workers", default_workers())
    if kind == "quenched":
        pt = ly.estimate_quenched_lyapunov(
            d, r, lam, direction, n_list, box_rule=box_rule,
            replicates=replicates, seed=seed, workers=workers,
        )
    elif kind == "annealed":
        name = get("estimator", "env-mc")
        if name not in _ESTIMATORS:
            raise ValidationError(f"estimator must be one of {sorted(_ESTIMATORS)}, got {name!r}")
        pt = ly.estimate_annealed_lyapunov(
            d, r, lam, direction, n_list, box_rule=box_rule,
            estimator=_ESTIMATORS[name], budget=replicates, seed=seed, workers=workers,
        )
    else:
        raise ValidationError(f"kind must be 'quenched' or 'annealed', got {kind!r}")
    config = {"d": d, "r": r, "lambda": lam, "direction": list(direction),
              "n_list": list(n_list), "kind": kind, "replicates": replicates, "seed": seed}
    _emit(
        args, config, pt,
        csv_columns=("kind", "d", "r", "lambda", "x", "n", "N", "value", "std_error"),
        csv_rows=[
            (pt.kind, d, r, lam, " ".join(map(str, direction)), e.n, e.N, e.value, e.std_error)
            for e in pt.entries
        ],
    )
    return 0


def _cmd_bounds(args, get):
    d = get("d", 1)
    p = get("p")
    q = get("q")
    if p is None or q is None:
        raise ValidationError("missing required options: p and q")
    y = get("y", convert=_ints) or ((2,) if d == 1 else (1,) + (0,) * (d - 1))
    lam = get("lambda", 0.0)
    backend = bd.ExactBackend(d, n=1, pad=1 if d == 1 else 0)
    reports = list(bd.check_quenched_bounds(d, p, q, ys=[y], lam=lam, backend=backend))
    reports += list(bd.check_annealed_bounds(d, p, q, ys=[y], lam=lam, backend=backend))
    cells = [c for rep in reports for c in rep.cells]
    config = {"d": d, "p": p, "q": q, "y": list(y), "lambda": lam, "backend": "exact"}
    _emit(
        args, config, reports,
        csv_columns=("bound_id", "p", "q", "x", "measured", "bound", "margin", "stderr", "verdict"),
        csv_rows=[
            (c.bound_id, c.p, c.q, " ".join(map(str, c.x)), c.measured, c.bound, c.margin,
             c.stderr, c.verdict)
            for c in cells
        ],
    )
    return 0


def _cmd_rate(args, get):
    d = get("d", 1)
    r = get("r")
    if r is None:
        raise ValidationError("missing required option: r")
    x = get("x", convert=_floats)
    if x is None:
        raise ValidationError("missing required option: x")
    kind = {"quenched": bd.QUENCHED, "annealed": bd.ANNEALED}.get(get("kind", "quenched"))
    if kind is None:
        raise ValidationError("kind must be 'quenched' or 'annealed'")
    backend = bd.ExactBackend(d, n=2 if d == 1 else 1, pad=1 if d == 1 else 0)
    rv = bd.rate_function(d, r, x, kind=kind, backend=backend)
    config = {"d": d, "r": r, "x": list(x), "kind": kind, "backend": "exact"}
    _emit(args, config, rv)
    return 0


def _cmd_oracle(args, get):
    box, y = _box_and_env(get)
    r = get("r")
    if r is None:
        raise ValidationError("missing required option: r")
    lam = get("lambda", 0.0)
    e0, relevant = sv.e0_table(box, y, lam)
    k = len(relevant)
    import numpy as np

    masks = np.arange(1 << k, dtype=np.uint64)
    weights = mask_weights(k, masks, r)
    mean_e = float(np.dot(weights, e0))
    config = {"d": box.dimension, "N": box.radius, "r": r, "lambda": lam, "y": list(y)}
    result = {
        "b": -math.log(mean_e),
        "mean_e": mean_e,
        "relevant_sites": [list(box.site_of(i)) for i in relevant],
        "environments": [
            {"mask": int(m), "weight": float(w), "e": float(e)}
            for m, w, e in zip(masks, weights, e0)
        ],
    }
    _emit(args, config, result)
    return 0


def _cmd_verify(args, get):
    results = acceptance.run_all(profile=args.profile)
    for res in results:
        print(res.line)
    failed = [res for res in results if not res.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 3 if failed else 0


_COMMANDS = {
    "solve": _cmd_solve,
    "cost": _cmd_cost,
    "derivative": _cmd_derivative,
    "russo": _cmd_russo,
    "lyapunov": _cmd_lyapunov,
    "bounds": _cmd_bounds,
    "rate": _cmd_rate,
    "oracle": _cmd_oracle,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 1
    try:
        get = _resolve(args)
        return _COMMANDS[args.command](args, get)
    except (ValidationError, OSError, json.JSONDecodeError) as exc:
        _error_json(exc)
        return 1
    except (SolverError, EstimatorError, NonConcaveError) as exc:
        _error_json(exc)
        return 2


def _error_json(exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
