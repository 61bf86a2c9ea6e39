"""Command-line front end.

Every subcommand accepts ``--config FILE`` (a JSON object whose keys mirror
the long flags, e.g. ``{"p": [0.4, 0.3, 0.3], "b": 2, "x": 2, "n": 10}``);
flags given on the command line override the file.  Output goes to stdout
unless ``--out`` is given; relative paths are resolved against
``$GWTREE_OUTPUT_DIR`` when that variable is set.

Exit status: 0 success, 1 invalid input, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, mcmc, oracle, phase, recursion
from ._jit import BACKEND
from .model import OffspringDist, ParameterError, two_class_params

OUTPUT_DIR_ENV = "GWTREE_OUTPUT_DIR"
EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    """Invalid command line or configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# --- configuration ---------------------------------------------------------------

_ALIASES = {"nmax": "n_max", "n-max": "n_max", "burn-in": "burn_in", "p0-grid": "p0_grid",
            "p2-grid": "p2_grid", "b-grid": "b_grid"}

DEFAULTS = {
    "p": None, "b": None, "beta": None, "x": 1, "n": None, "n_max": None, "seed": 0,
    "out": None, "format": "csv", "threads": None,
    # recurse
    "blocks": "leaves,energy,variance", "every": 1, "log": False,
    # oracle
    "suite": None, "trials": 500, "lam": None,
    # mcmc
    "kind": "local", "steps": 100_000, "thin": 1, "burn_in": 0, "accelerated": False,
    "observables": "L,Q,N,N22",
    # critline / scan
    "p0": None, "p2": None, "p0_grid": "0.05:0.95:19", "p2_grid": "0.05:0.95:19",
    # rho
    "p1": None, "b_grid": None, "tol": 1e-9, "crossover": False, "window": None,
    # fit
    "input": None, "xcol": None, "ycol": None, "model": "powerlaw",
}


def load_config(path):
    """Read a JSON config file into a flat dict of option values."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed config {path}: {exc.msg} at line {exc.lineno}, column {exc.colno}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    out = {}
    for key, value in data.items():
        key = _ALIASES.get(key, key).replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r}")
        out[key] = value
    if out.get("b") is not None and out.get("beta") is not None:
        raise UsageError("config gives both 'b' and 'beta'; they are mutually exclusive")
    return out


def resolve(args):
    """Merge built-in defaults, the config file and explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(load_config(args.config))
    explicit = {k: v for k, v in vars(args).items() if v is not None and k in DEFAULTS}
    if "b" in explicit or "beta" in explicit:
        # a flag for either coupling overrides both file values
        cfg["b"] = cfg["beta"] = None
    cfg.update(explicit)
    if cfg["b"] is not None and cfg["beta"] is not None:
        raise UsageError("b and beta are mutually exclusive")
    cfg["command"] = args.command
    cfg["_scope"] = tuple(k for k in vars(args) if k in DEFAULTS)
    return cfg


def _floats(value, name):
    if value is None:
        raise UsageError(f"missing required option --{name}")
    if isinstance(value, str):
        try:
            return [float(t) for t in value.split(",") if t.strip()]
        except ValueError as exc:
            raise UsageError(f"--{name}: expected comma-separated numbers, got {value!r}") from exc
    if isinstance(value, (int, float)):
        return [float(value)]
    return [float(t) for t in value]


def _grid(value, name):
    """``lo:hi:num`` or a comma list."""
    if isinstance(value, str) and ":" in value:
        try:
            lo, hi, num = value.split(":")
            return np.linspace(float(lo), float(hi), int(num))
        except ValueError as exc:
            raise UsageError(f"--{name}: expected lo:hi:num, got {value!r}") from exc
    return np.array(_floats(value, name))


def _coupling(cfg):
    if cfg["beta"] is not None:
        return math.exp(float(cfg["beta"]))
    return 1.0 if cfg["b"] is None else float(cfg["b"])


def _dist(cfg):
    return OffspringDist(_floats(cfg["p"], "p"))


def _params(cfg, n_key="n"):
    n = cfg[n_key]
    if n is None:
        raise UsageError(f"missing required option --{n_key.replace('_', '-')}")
    return two_class_params(_floats(cfg["p"], "p"), _coupling(cfg), int(cfg["x"]), int(n))


# --- output ----------------------------------------------------------------------

def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def provenance(cfg, seeded=False):
    scope = cfg.get("_scope", tuple(DEFAULTS))
    eff = {"command": cfg.get("command")}
    eff.update({k: cfg[k] for k in scope if cfg.get(k) is not None and k not in ("out", "config")})
    return {
        "tool": f"gwtree {__version__}",
        "backend": BACKEND,
        "config": _jsonable(eff),
        "seed": cfg["seed"] if seeded else None,
        "generator": mcmc.GENERATOR if seeded else None,
    }


def _target(cfg):
    out = cfg["out"]
    if out is None:
        return None
    path = Path(out)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def emit(cfg, header, columns, rows, summary=None, seeded=False):
    """Write a table as CSV (with ``#`` provenance lines) or as JSON."""
    prov = provenance(cfg, seeded)
    if summary:
        prov["summary"] = _jsonable(summary)
    if cfg["format"] == "json":
        doc = dict(prov)
        doc["columns"] = list(columns)
        doc["rows"] = [[_jsonable(x) for x in r] for r in rows]
        text = json.dumps(doc, indent=1) + "\n"
    elif cfg["format"] == "csv":
        buf = io.StringIO()
        for key in ("tool", "backend", "seed", "generator"):
            buf.write(f"# {key}: {json.dumps(prov[key])}\n")
        buf.write(f"# config: {json.dumps(prov['config'], sort_keys=True)}\n")
        for line in header:
            buf.write(f"# {line}\n")
        if summary:
            buf.write(f"# summary: {json.dumps(prov['summary'], sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(x) for x in r])
        text = buf.getvalue()
    else:
        raise UsageError(f"unknown format {cfg['format']!r}")
    path = _target(cfg)
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def read_csv(path):
    """Columns of a CSV written by :func:`emit` (``#`` lines skipped)."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    reader = csv.reader(lines)
    cols = next(reader)
    data = [[float(x) for x in row] for row in reader]
    arr = np.array(data, dtype=float).reshape(-1, len(cols))
    return {c: arr[:, i] for i, c in enumerate(cols)}


# --- subcommands -----------------------------------------------------------------

def cmd_recurse(cfg):
    n_max = cfg["n"]
    if n_max is None:
        raise UsageError("missing required option --n")
    dist = _dist(cfg)
    b = _coupling(cfg)
    x = int(cfg["x"])
    if not 1 <= x <= dist.K:
        raise ParameterError(f"boundary x must be in 1..{dist.K}")
    blocks = tuple(t for t in str(cfg["blocks"]).split(",") if t) if isinstance(cfg["blocks"], str) \
        else tuple(cfg["blocks"])
    traj = recursion.run(dist, b, int(n_max) + 1, blocks, every=int(cfg["every"]),
                         logspace=bool(cfg["log"]))
    obs = traj.observables(min(x, 2))
    sel = traj.steps >= 1
    names = ["Lu", "Lv"] if traj.logspace else ["u", "v"]
    names += [recursion.STATE_NAMES[j] for j in range(2, 10)]
    keep = [0, 1] + [j for j in range(2, 10) if _slot_tracked(traj.blocks, j)]
    cols = ["n"] + [names[j] for j in keep] + ["meanL", "meanQ", "meanN", "meanN22", "varN22", "psi"]
    rows = []
    for i, row in enumerate(traj.data[sel]):
        rows.append([obs["n"][i]] + [row[j] for j in keep]
                    + [obs[k][i] for k in ("meanL", "meanQ", "meanN", "meanN22", "varN22", "psi")])
    emit(cfg, ["row n: trees of depth n; u, v are the iterates after n+1 steps"], cols, rows)
    return EXIT_OK


def _slot_tracked(blocks, j):
    return any(j in recursion._BLOCK_SLOTS[blk] for blk in blocks)


def cmd_oracle(cfg):
    params = _params(cfg)
    if cfg["lam"] is not None and cfg["suite"] is None:
        lam = _floats(cfg["lam"], "lam")
        rows = [[lv, oracle.mu_lambda_tv(params.n, params.K, params.x, params.dist, lv)] for lv in lam]
        emit(cfg, [], ["lambda", "tv"], rows)
        return EXIT_OK
    if cfg["suite"] is not None:
        report = oracle.inequality_suite(params, int(cfg["trials"]), int(cfg["seed"]), kind=cfg["suite"])
        doc = provenance(cfg, seeded=True)
        doc.update({k: _jsonable(v) for k, v in report.items()})
        _write_json(cfg, doc)
        return EXIT_OK if report["pass"] else EXIT_NUMERIC
    obs = oracle.exact_observables(params)
    emit(cfg, [f"trees enumerated: {oracle.tree_count(params.n, params.K)}"],
         list(obs), [list(obs.values())])
    return EXIT_OK


def _write_json(cfg, doc):
    text = json.dumps(_jsonable(doc), indent=1) + "\n"
    path = _target(cfg)
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def cmd_mcmc(cfg):
    params = _params(cfg)
    lam = None if cfg["lam"] is None else _floats(cfg["lam"], "lam")
    conf = mcmc.ChainConfig(params, kind=cfg["kind"], lam=lam, steps=int(cfg["steps"]),
                            seed=int(cfg["seed"]), thin=int(cfg["thin"]),
                            burn_in=int(cfg["burn_in"]), accelerated=bool(cfg["accelerated"]))
    names = [t for t in str(cfg["observables"]).split(",") if t] \
        if isinstance(cfg["observables"], str) else list(cfg["observables"])
    table = mcmc.builtin_observables(params)
    unknown = [nm for nm in names if nm not in table]
    if unknown:
        raise UsageError(f"unknown observables {unknown}; choose from {sorted(table)}")
    sample = mcmc.sample_chain(conf)
    stats = mcmc.ChainStats(conf.describe(), conf.steps, sample.acceptance)
    rows = []
    step = conf.burn_in + conf.thin * (np.arange(len(sample.states)) + 1)
    for nm in names:
        vals = table[nm](sample.states) if len(sample.states) else np.empty(0)
        stats.observables[nm] = mcmc.summarize(vals)
        rows.extend([s, nm, v] for s, v in zip(step, vals))
    summary = stats.to_dict()
    if cfg["format"] == "json":
        doc = provenance(cfg, seeded=True)
        doc.update({k: summary[k] for k in ("estimates", "stderr", "ess", "acceptance", "seed")})
        _write_json(cfg, doc)
    else:
        rows.sort(key=lambda r: r[0])
        emit(cfg, [], ["step", "observable", "value"], rows,
             summary={k: summary[k] for k in ("estimates", "stderr", "ess", "acceptance", "seed")},
             seeded=True)
    return EXIT_OK


def cmd_critline(cfg):
    if cfg["p0"] is None or cfg["p2"] is None:
        raise UsageError("critline needs --p0 and --p2")
    cp = phase.beta_c(float(cfg["p0"]), float(cfg["p2"]))
    emit(cfg, [], ["p0", "p2", "beta_c", "b_c"], [[cp.p0, cp.p2, cp.beta_c, cp.b_c]])
    return EXIT_OK


def cmd_scan(cfg):
    rows, skipped = phase.scan_surface(_grid(cfg["p0_grid"], "p0-grid"), _grid(cfg["p2_grid"], "p2-grid"))
    header = [f"skipped {len(skipped)} grid points outside the admissible region"]
    emit(cfg, header, ["p0", "p2", "beta_c", "b_c"], [[r.p0, r.p2, r.beta_c, r.b_c] for r in rows])
    return EXIT_OK


def cmd_scaling(cfg):
    n_max = cfg["n_max"] if cfg["n_max"] is not None else cfg["n"]
    if n_max is None:
        raise UsageError("missing required option --nmax")
    dist = _dist(cfg)
    b = None if cfg["b"] is None and cfg["beta"] is None else _coupling(cfg)
    res = phase.critical_scaling(dist, int(cfg["x"]), int(n_max), b=b, every=int(cfg["every"]))
    rows = [[n, m, float(n) ** 2 * m] for n, m in zip(res.n, res.meanN)]
    summary = {"b": res.b, "exponent": res.exponent, "prefactor": res.fit.coefficients["prefactor"],
               "fit_window": [int(n_max) // 10, int(n_max)], "rms": res.fit.rms}
    emit(cfg, [], ["n", "meanN", "n2_times_meanN"], rows, summary=summary)
    return EXIT_OK


def _window(cfg, default):
    if cfg["window"] is None:
        return default
    w = _floats(cfg["window"], "window")
    if len(w) != 2:
        raise UsageError("--window takes lo,hi")
    return int(w[0]), int(w[1])


def cmd_rho(cfg):
    if cfg["p1"] is None:
        raise UsageError("rho needs --p1")
    p1 = float(cfg["p1"])
    if cfg["crossover"]:
        b = _coupling(cfg)
        lo, hi = _window(cfg, (10, 50))
        n, y = phase.crossover_series(p1, b, max(hi, 1000))
        f = phase.crossover_fit(p1, b, (lo, hi))
        summary = {"window": [lo, hi], **f.coefficients, "rms": f.rms}
        emit(cfg, ["y = log(log u_n) / n"], ["n", "y"], list(zip(n, y)), summary=summary)
        return EXIT_OK
    if cfg["b_grid"] is not None:
        bs = _grid(cfg["b_grid"], "b-grid")
    else:
        bs = [_coupling(cfg)]
    results = phase.rho_sweep(p1, bs, float(cfg["tol"]))
    rows = [[r.b, r.log_rho, r.loglog_rho, r.lower, r.upper, r.psi] for r in results]
    summary = {"converged": [r.converged for r in results], "n_used": [r.n_used for r in results]}
    if len(results) >= 3:
        f = phase.sweep_fit(results)
        summary.update({"fit": "loglog_rho = intercept + slope log(b - 1)", **f.coefficients,
                        "rms": f.rms})
    emit(cfg, [], ["b", "log_rho", "loglog_rho", "lower_bound", "upper_bound", "psi"], rows,
         summary=summary)
    return EXIT_OK if all(r.converged for r in results) else EXIT_NUMERIC


def cmd_fit(cfg):
    if cfg["input"] is None or cfg["xcol"] is None or cfg["ycol"] is None:
        raise UsageError("fit needs --input, --xcol and --ycol")
    data = read_csv(cfg["input"])
    for c in (cfg["xcol"], cfg["ycol"]):
        if c not in data:
            raise UsageError(f"column {c!r} not in {sorted(data)}")
    x, y = data[cfg["xcol"]], data[cfg["ycol"]]
    if cfg["window"] is not None:
        lo, hi = _floats(cfg["window"], "window")
        sel = (x >= lo) & (x <= hi)
        x, y = x[sel], y[sel]
    elif cfg["model"] == "powerlaw":
        sel = x >= x.max() / 10
        x, y = x[sel], y[sel]
    f = phase.fit(x, y, cfg["model"])
    cols = list(f.coefficients) + ["rms", "n_points"]
    emit(cfg, [f"model: {f.model}"], cols, [list(f.coefficients.values()) + [f.rms, f.n_points]])
    return EXIT_OK


def consistency_checks(seed=0):
    """Cross-module battery: ``[(name, passed, detail)]``."""
    out = []
    p = (0.4, 0.3, 0.3)
    worst = 0.0
    for b in (1.0, 1.5, 2.0):
        for x in (1, 2):
            for n in range(3):
                prm = two_class_params(p, b, x, n)
                ex = oracle.exact_observables(prm)
                ob = recursion.observables(prm)
                pairs = [(ex["Xi"], recursion.partition(prm)), (ex["meanL"], ob.meanL),
                         (ex["meanQ"], ob.meanQ), (ex["meanN"], ob.meanN),
                         (ex["meanN22"], ob.meanN22), (ex["varN22"], ob.varN22)]
                for a, c in pairs:
                    worst = max(worst, abs(a - c) / max(abs(a), 1e-300))
    out.append(("oracle vs recursion", worst < 1e-10, f"max rel err {worst:.3g}"))
    res = 0.0
    for b in (1.0, 2.0):
        for x in (1, 2):
            prm = two_class_params(p, b, x, 1)
            P = mcmc.transition_matrix(prm).P
            pi = oracle.exact_measure(prm).probs
            flow = pi[:, None] * P
            res = max(res, np.abs(pi @ P - pi).max(), np.abs(flow - flow.T).max())
    out.append(("local chain stationarity", res < 1e-12, f"max residual {res:.3g}"))
    prm = two_class_params(p, 2.0, 2, 2)
    stats = mcmc.run_chain(mcmc.ChainConfig(prm, steps=200_000, seed=seed), ("N22",))
    est = stats.observables["N22"]
    exact = recursion.observables(prm).meanN22
    z = abs(est.mean - exact) / est.stderr
    out.append(("mcmc vs recursion meanN22", z < 3, f"{est.mean:.5f} vs {exact:.5f} ({z:.2f} se)"))
    cp = phase.beta_c(0.4, 0.3)
    br = phase.empirical_criticality(p, 1, 1.0, 1.5)
    out.append(("bisection vs closed-form b_c", abs(br.estimate - cp.b_c) < 1e-3,
                f"{br.estimate:.7f} vs {cp.b_c:.7f}"))
    return out


def cmd_check(cfg):
    results = consistency_checks(int(cfg["seed"]))
    for name, ok, detail in results:
        sys.stdout.write(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}\n")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERIC


COMMANDS = {
    "recurse": cmd_recurse, "oracle": cmd_oracle, "mcmc": cmd_mcmc, "critline": cmd_critline,
    "scan": cmd_scan, "scaling": cmd_scaling, "rho": cmd_rho, "fit": cmd_fit, "check": cmd_check,
}


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with option values")
    common.add_argument("--p", help="offspring probabilities p0,p1,...,pK")
    cpl = common.add_mutually_exclusive_group()
    cpl.add_argument("--b", type=float, help="coupling b = exp(beta)")
    cpl.add_argument("--beta", type=float, help="inverse temperature")
    common.add_argument("--x", type=int, help="boundary offspring of the root's parent")
    common.add_argument("--n", type=int, help="tree depth")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help=f"output file (relative to ${OUTPUT_DIR_ENV} if set)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--threads", type=int, help="worker threads for the kernels")

    parser = _Parser(prog="gwtree", description="Interacting branching trees: exact sums, "
                     "recursions, Markov chains and phase analysis.")
    parser.add_argument("--version", action="version", version=f"gwtree {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("recurse", parents=[common], help="iterate the map with derivative blocks")
    sp.add_argument("--blocks", help="comma list of leaves,energy,variance")
    sp.add_argument("--every", type=int)
    sp.add_argument("--log", action="store_const", const=True, help="iterate in log space")

    sp = sub.add_parser("oracle", parents=[common], help="exact enumeration and inequality suites")
    sp.add_argument("--suite", choices=("griffiths", "fkg"))
    sp.add_argument("--trials", type=int)
    sp.add_argument("--lam", help="comma list of lambda values for the spin-measure distance")

    sp = sub.add_parser("mcmc", parents=[common], help="run a Markov chain")
    sp.add_argument("--kind", choices=("local", "global"))
    sp.add_argument("--steps", type=int)
    sp.add_argument("--thin", type=int)
    sp.add_argument("--burn-in", dest="burn_in", type=int)
    sp.add_argument("--lam", help="generation weights lam_0,...,lam_n")
    sp.add_argument("--accelerated", action="store_const", const=True)
    sp.add_argument("--observables", help="comma list from L,Q,N,N22,H,X0")

    sp = sub.add_parser("critline", parents=[common], help="closed-form critical coupling")
    sp.add_argument("--p0", type=float)
    sp.add_argument("--p2", type=float)

    sp = sub.add_parser("scan", parents=[common], help="critical surface over a grid")
    sp.add_argument("--p0-grid", dest="p0_grid", help="lo:hi:num or comma list")
    sp.add_argument("--p2-grid", dest="p2_grid", help="lo:hi:num or comma list")

    sp = sub.add_parser("scaling", parents=[common], help="mean external nodes on the critical line")
    sp.add_argument("--nmax", dest="n_max", type=int)
    sp.add_argument("--every", type=int)

    sp = sub.add_parser("rho", parents=[common], help="supercritical growth constant")
    sp.add_argument("--p1", type=float)
    sp.add_argument("--b-grid", dest="b_grid", help="lo:hi:num or comma list of couplings")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--crossover", action="store_const", const=True,
                    help="emit (1/n) log log u_n and its gamma - delta/n fit")
    sp.add_argument("--window", help="lo,hi fit window")

    sp = sub.add_parser("fit", parents=[common], help="least-squares fit of two CSV columns")
    sp.add_argument("--input")
    sp.add_argument("--xcol")
    sp.add_argument("--ycol")
    sp.add_argument("--model", choices=phase.FIT_MODELS)
    sp.add_argument("--window", help="lo,hi range of x")

    sub.add_parser("check", parents=[common], help="cross-module consistency battery")
    return parser


def _set_threads(n):
    if n is None:
        return
    if n < 1:
        raise UsageError("--threads must be >= 1")
    try:
        import numba
    except ImportError:
        return
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve(args)
        _set_threads(cfg["threads"])
        return COMMANDS[args.command](cfg)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except (ParameterError, ValueError, TypeError, KeyError) as exc:
        sys.stderr.write(f"invalid input: {exc}\n")
        return EXIT_INVALID
    except ArithmeticError as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC


__all__ = ["build_parser", "consistency_checks", "load_config", "main", "resolve"]
