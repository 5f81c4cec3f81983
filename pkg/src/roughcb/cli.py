"""Command-line interface.

Every subcommand resolves its parameters as CLI flag > config file key >
default (``RCB_SEED`` is the seed default of last resort), runs, and writes
either CSV or a single JSON object.  The resolved parameters are embedded
in the output, so ``roughcb replay FILE`` regenerates the file byte for
byte.  The thread count is not part of the metadata because results do not
depend on it.

Exit codes: 0 ok, 1 validation or usage error, 2 numerical failure,
3 verification verdict FAIL.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import NumericalError, ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_FAIL = 0, 1, 2, 3
META_PREFIX = "# roughcb-metadata: "
FOOTER_PREFIX = "# result: "


class UsageError(Exception):
    def __init__(self, message, usage=""):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_help())


# parameter schema --------------------------------------------------------

def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    if isinstance(s, (list, tuple)):
        return [float(x) for x in s]
    return [float(x) for x in str(s).split(",") if x.strip()]


def _ints(s):
    if isinstance(s, (list, tuple)):
        return [int(x) for x in s]
    return [int(x) for x in str(s).split(",") if x.strip()]


def _opt_float(s):
    return None if s is None or str(s).strip().lower() in ("", "none") else float(s)


@dataclass(frozen=True)
class P:
    name: str
    type: Callable
    default: Any
    help: str = ""


MODEL = [P("alpha", float, 0.5, "stability index in (0, 1)"),
         P("b", float, 0.0, "drift coefficient b >= 0"),
         P("c", float, 1.0, "scale coefficient c > 0")]
INIT = [P("zeta", _opt_float, None, "fixed initial mass"),
        P("exp_mean", _opt_float, None, "mean of an exponential initial mass")]
SEED = [P("seed", int, None, "master seed (falls back to RCB_SEED, then 0)")]
PATHS = [P("paths", int, 1000, "number of paths")]
FORMAT = [P("format", str, "csv", "csv (one row per grid point) or json (aggregate summary)")]

SCHEMAS = {
    "scale-fn": MODEL + [P("t_max", float, 1.0), P("n_steps", int, 100)],
    "solve-volterra": MODEL + INIT + [P("lambda_im", float, 1.0, "imaginary part of lambda"),
                                      P("g_im", float, 0.0, "imaginary part of the constant g"),
                                      P("t_max", float, 1.0), P("n_steps", int, 512)],
    "fractional-check": MODEL + [P("lambda_im", float, 1.0), P("g_im", float, 0.0), P("t_max", float, 1.0),
                                 P("n_steps", int, 1024),
                                 P("gap_tol", float, 1e-3, "largest accepted initial gap")],
    "simulate-sve": MODEL + INIT + [P("t_max", float, 1.0), P("n_steps", int, 512),
                                    P("eps", _opt_float, None, "jump truncation level (default: step)"),
                                    P("small_jumps", str, "gaussian", "gaussian or drop")]
    + PATHS + SEED + FORMAT + [P("emit_jumps", _bool, False, "also write the jump records")],
    "simulate-cmj": [P("n", int, 100, "scaling parameter"), P("zeta", float, 1.0), P("beta", float, 0.0),
                     P("alpha", float, 0.5), P("t_max", float, 1.0), P("n_steps", int, 100)]
    + PATHS + SEED + FORMAT,
    "simulate-cp": [P("gamma", float, 0.5, "jump rate"), P("alpha", float, 0.5), P("level_max", float, 1.0),
                    P("n_levels", int, 100)] + PATHS + SEED + FORMAT,
    "verify-cf": MODEL + [P("zeta", float, 1.0), P("t_max", float, 1.0),
                          P("lambda_im", _floats, [0.5, 1.0], "comma separated imaginary parts"),
                          P("g_im", float, 0.0), P("paths", int, 100_000), P("n_steps", int, 512),
                          P("eps", _opt_float, None), P("solver_steps", int, 2048),
                          P("tolerance", float, 0.01, "additive allowance per component"),
                          P("sigmas", float, 3.0, "standard errors allowed per component")] + SEED,
    "resolvent-convergence": [P("n_list", _ints, [10, 50, 200]), P("beta", float, 0.0), P("alpha", float, 0.5),
                              P("t_max", float, 1.0), P("steps", int, 4000)],
    "lemma31-check": [P("alpha", float, 0.5), P("gamma", _opt_float, None, "birth rate (default alpha)"),
                      P("level", float, 1.0), P("paths", int, 10_000), P("threshold", float, 0.03)] + SEED,
}
ALL_KEYS = {p.name for ps in SCHEMAS.values() for p in ps}


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{i}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            k = k.replace("-", "_")
            if k not in ALL_KEYS:
                raise ValidationError(f"{path}:{i}: unknown key {k!r}")
            out[k] = v
    return out


def resolve(command: str, flags: dict, config: dict, env=None) -> dict:
    """Effective parameters: flag > config > (RCB_SEED for the seed) > default."""
    env = os.environ if env is None else env
    cfg = {}
    for p in SCHEMAS[command]:
        if flags.get(p.name) is not None:
            raw = flags[p.name]
        elif p.name in config:
            raw = config[p.name]
        elif p.name == "seed" and env.get("RCB_SEED"):
            raw = env["RCB_SEED"]
        else:
            cfg[p.name] = 0 if p.name == "seed" else p.default
            continue
        try:
            cfg[p.name] = p.type(raw)
        except (TypeError, ValueError) as e:
            raise ValidationError(f"bad value for {p.name}: {raw!r} ({e})") from None
    return cfg


# formatting ------------------------------------------------------------

def fnum(x) -> str:
    """Shortest round-trip decimal; independent of locale."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_jsonable(v) for v in o.tolist()]
    if isinstance(o, (complex, np.complexfloating)):
        return [_jsonable(o.real), _jsonable(o.imag)]
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (int, np.integer)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        x = float(o)
        return x if math.isfinite(x) else fnum(x)
    return o


def dumps(o) -> str:
    return json.dumps(_jsonable(o), separators=(", ", ": "), allow_nan=False)


def metadata(command, cfg) -> dict:
    return {"artifact": "roughcb", "version": __version__, "command": command, "seed": cfg.get("seed"),
            "config": cfg}


def csv_text(meta, header, columns, footer=None) -> str:
    lines = [META_PREFIX + dumps(meta), ",".join(header)]
    cols = [np.asarray(c) for c in columns]
    for i in range(len(cols[0]) if cols else 0):
        lines.append(",".join(fnum(c[i]) for c in cols))
    if footer is not None:
        lines.append(FOOTER_PREFIX + dumps(footer))
    return "\n".join(lines) + "\n"


def json_text(meta, result) -> str:
    return dumps({"metadata": meta, "result": result}) + "\n"


# commands --------------------------------------------------------------

def _params(cfg):
    from .model import validate
    return validate(cfg["alpha"], cfg["b"], cfg["c"])


def _init(cfg):
    from .model import InitialState
    if cfg.get("zeta") is not None and cfg.get("exp_mean") is not None:
        raise ValidationError("give either zeta or exp_mean, not both")
    if cfg.get("exp_mean") is not None:
        return InitialState.exponential(cfg["exp_mean"])
    return InitialState.fixed(1.0 if cfg.get("zeta") is None else cfg["zeta"])


def _grid(t_max, n):
    from .model import TimeGrid
    return TimeGrid(float(t_max), int(n))


def cmd_scale_fn(cfg, threads):
    from .special import kernel_K, kernel_LK, scale_W, scale_Wp
    params = _params(cfg)
    t = _grid(cfg["t_max"], cfg["n_steps"]).nodes
    inner = t[1:]
    pad = lambda v, first: np.concatenate([[first], np.atleast_1d(v)])  # noqa: E731
    cols = [t, pad(scale_W(inner, params), 0.0), pad(scale_Wp(inner, params), math.inf),
            pad(kernel_K(inner, params), math.inf), pad(kernel_LK(inner, params), math.inf)]
    return "csv", (["t", "W", "Wp", "K", "LK"], cols, None), None


def _solve(cfg, lam, n_steps):
    from .volterra import solve_v
    return solve_v(lam, complex(0.0, cfg["g_im"]) if cfg["g_im"] else None, _grid(cfg["t_max"], n_steps),
                   _params(cfg))


def cmd_solve_volterra(cfg, threads):
    from .volterra import characteristic_functional
    lam = complex(0.0, cfg["lambda_im"])
    sol = _solve(cfg, lam, cfg["n_steps"])
    init = _init(cfg)
    T = cfg["t_max"]
    cf = characteristic_functional(sol, T, init)
    v = sol.v.copy()
    footer = {"t_max": T, "Kv_T": sol.Kv_at(T), "cf": cf, "max_iterations": int(np.max(sol.iterations))
              if sol.iterations is not None else None}
    cols = [sol.grid.nodes, v.real, v.imag, sol.Kv.real, sol.Kv.imag]
    return "csv", (["t", "re_v", "im_v", "re_Kv", "im_Kv"], cols, footer), None


def cmd_fractional_check(cfg, threads):
    from .fractional import riccati_residual
    lam = complex(0.0, cfg["lambda_im"])
    n = cfg["n_steps"]
    coarse = riccati_residual(_solve(cfg, lam, n // 2))
    fine = riccati_residual(_solve(cfg, lam, n))
    r0, r1 = coarse[0], fine[0]
    order = math.log2(r0 / r1) if r0 > 0 and r1 > 0 else None
    ok = fine[1] <= cfg["gap_tol"] and (r1 <= r0)
    res = {"residual_norm": r1, "initial_gap": fine[1], "refinement_order": order,
           "residual_norm_half_grid": r0, "gap_tol": cfg["gap_tol"], "verdict": "PASS" if ok else "FAIL"}
    return "json", res, ok


def _summary(t, X, extra=None):
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    mean = X.mean(axis=0)
    var = X.var(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    out = {"n_paths": n, "t": t, "mean": mean, "var": var, "se": np.sqrt(var / n)}
    out.update(extra or {})
    return out


def _path_columns(t, X, name="t"):
    X = np.asarray(X, dtype=float)
    return [name] + [f"x{i}" for i in range(X.shape[0])], [t] + list(X)


def cmd_simulate_sve(cfg, threads):
    from .rng import RngContract
    from .simulate.sve import SveConfig, simulate_sve, simulate_sve_batch
    params = _params(cfg)
    init = _init(cfg)
    zeta = init if not init.is_fixed else init.fixed_zeta
    grid = _grid(cfg["t_max"], cfg["n_steps"])
    sc = SveConfig(small_jumps=cfg["small_jumps"])
    jumps = None
    if cfg["emit_jumps"]:
        X, clamps, jumps = [], [], []
        for p in range(cfg["paths"]):
            s = simulate_sve(params, zeta, grid, cfg["eps"], RngContract(cfg["seed"], p), sc, emit_jumps=True)
            X.append(s.values)
            clamps.append(s.clamp_events)
            jumps += [(p, j.time, j.mark) for j in s.jumps]
        X = np.array(X)
        clamps = np.array(clamps)
    else:
        b = simulate_sve_batch(params, zeta, grid, cfg["paths"], cfg["seed"], cfg["eps"], sc, threads,
                               keep_paths=True)
        X, clamps = b.paths, b.clamp_events
    if jumps is not None:
        jumps = (["path", "time", "mark"], [np.array([j[k] for j in jumps]) for k in range(3)])
    if cfg["format"] == "json":
        return "json", _summary(grid.nodes, X, {"clamp_events_total": int(np.sum(clamps))}), None, jumps
    return "csv", (*_path_columns(grid.nodes, X), None), None, jumps


def cmd_simulate_cmj(cfg, threads):
    from .simulate.cmj import simulate_cmj_batch
    grid = _grid(cfg["t_max"], cfg["n_steps"])
    X = simulate_cmj_batch(cfg["n"], cfg["zeta"], cfg["beta"], grid, cfg["paths"], cfg["seed"], cfg["alpha"],
                           threads=threads)
    if cfg["format"] == "json":
        return "json", _summary(grid.nodes, X), None
    return "csv", (*_path_columns(grid.nodes, X), None), None


def cmd_simulate_cp(cfg, threads):
    from .simulate.cp import cp_localtime_counts
    levels = _grid(cfg["level_max"], cfg["n_levels"])
    L = cp_localtime_counts(cfg["gamma"], cfg["alpha"], levels, cfg["paths"], cfg["seed"], threads=threads)
    if cfg["format"] == "json":
        return "json", _summary(levels.nodes, L), None
    return "csv", (*_path_columns(levels.nodes, L, "level"), None), None


def cmd_verify_cf(cfg, threads):
    from .analysis import verify_cf
    g = complex(0.0, cfg["g_im"]) if cfg["g_im"] else None
    res = verify_cf(_params(cfg), cfg["zeta"], cfg["t_max"], [complex(0.0, x) for x in cfg["lambda_im"]], g,
                    cfg["paths"], cfg["n_steps"], cfg["seed"], cfg["eps"], cfg["tolerance"],
                    cfg["solver_steps"], threads, cfg["sigmas"])
    return "json", res, res["verdict"] == "PASS"


def cmd_resolvent_convergence(cfg, threads):
    from .analysis import resolvent_convergence_study, strictly_decreasing
    rows = resolvent_convergence_study(cfg["n_list"], cfg["beta"], cfg["alpha"], cfg["t_max"], cfg["steps"])
    ok = strictly_decreasing(r["sup_error"] for r in rows)
    return "json", {"rows": rows, "verdict": "PASS" if ok else "FAIL"}, ok


def cmd_lemma31_check(cfg, threads):
    from .analysis import lemma31_check
    res = lemma31_check(cfg["alpha"], cfg["gamma"], cfg["level"], cfg["paths"], cfg["seed"], cfg["threshold"],
                        threads)
    return "json", res, res["verdict"] == "PASS"


COMMANDS = {
    "scale-fn": (cmd_scale_fn, "scale function W, its derivative and the kernels K, L_K on a grid"),
    "solve-volterra": (cmd_solve_volterra, "solve the nonlinear Volterra equation for v"),
    "fractional-check": (cmd_fractional_check, "residual of the fractional Riccati form of v"),
    "simulate-sve": (cmd_simulate_sve, "paths of the stochastic Volterra equation"),
    "simulate-cmj": (cmd_simulate_cmj, "rescaled Crump-Mode-Jagers population paths"),
    "simulate-cp": (cmd_simulate_cp, "local times in level of the compound Poisson process"),
    "verify-cf": (cmd_verify_cf, "Monte Carlo characteristic functional against the Volterra formula"),
    "resolvent-convergence": (cmd_resolvent_convergence, "convergence of the scaled resolvent integral"),
    "lemma31-check": (cmd_lemma31_check, "KS distance between CP local time and the CMJ population"),
}


def execute(command: str, cfg: dict, threads=None):
    """Run a resolved command; returns ``(main_text, jumps_text or None, ok)``."""
    fn = COMMANDS[command][0]
    out = fn(cfg, threads)
    kind, payload, ok = out[:3]
    jumps = out[3] if len(out) > 3 else None
    meta = metadata(command, cfg)
    if kind == "csv":
        header, cols, footer = payload
        text = csv_text(meta, header, cols, footer)
    else:
        text = json_text(meta, payload)
    jtext = csv_text(meta, *jumps) if jumps is not None else None
    return text, jtext, ok


def read_metadata(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith(META_PREFIX):
            return json.loads(first[len(META_PREFIX):])
        fh.seek(0)
        try:
            return json.load(fh)["metadata"]
        except (ValueError, KeyError, TypeError):
            raise ValidationError(f"{path}: no roughcb metadata block") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roughcb", description="Rough continuous-state branching processes")
    parser.add_argument("--version", action="version", version=f"roughcb {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_, description=help_)
        for p in SCHEMAS[name]:
            flag = "--" + p.name.replace("_", "-")
            if p.type is _bool:
                sp.add_argument(flag, dest=p.name, action="store_const", const=True, default=None, help=p.help)
            else:
                d = "" if p.default is None else f" (default {p.default})"
                sp.add_argument(flag, dest=p.name, default=None, help=p.help + d)
        sp.add_argument("--config", default=None, help="flat key=value config file")
        sp.add_argument("--out", default=None, help="output file (default stdout)")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    parser.subparsers = sub.choices
    rp = sub.add_parser("replay", help="regenerate an output from its embedded metadata")
    rp.add_argument("file")
    rp.add_argument("--out", default=None)
    rp.add_argument("--threads", type=int, default=None)
    return parser


def _write(text, path):
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("a command is required", parser.format_help())
        if ns.command == "replay":
            meta = read_metadata(ns.file)
            command = meta.get("command")
            if command not in COMMANDS:
                raise ValidationError(f"unknown command in metadata: {command!r}")
            cfg = resolve(command, meta["config"], {}, env={})
        else:
            command = ns.command
            config = read_config(ns.config) if ns.config else {}
            flags = {p.name: getattr(ns, p.name) for p in SCHEMAS[command]}
            cfg = resolve(command, flags, config)
        if ns.threads is not None and ns.threads < 1:
            raise ValidationError("--threads must be >= 1")
        if cfg.get("format", "csv") not in ("csv", "json"):
            raise ValidationError("--format must be csv or json")
        if cfg.get("emit_jumps") and ns.out is None:
            raise ValidationError("--emit-jumps needs --out (jumps go to OUT.jumps.csv)")
        text, jtext, ok = execute(command, cfg, ns.threads)
        _write(text, ns.out)
        if jtext is not None:
            _write(jtext, ns.out + ".jumps.csv")
        return EXIT_OK if ok is None or ok else EXIT_FAIL
    except UsageError as e:
        args = list(sys.argv[1:] if argv is None else argv)
        usage = e.usage
        if args and args[0] in parser.subparsers:
            usage = parser.subparsers[args[0]].format_help()
        sys.stderr.write(f"error: {e}\n\n{usage}")
        return EXIT_VALIDATION
    except (ValidationError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_VALIDATION
    except (NumericalError, ArithmeticError) as e:
        sys.stderr.write(f"numerical failure: {e}\n")
        return EXIT_NUMERICAL


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
