"""Command line entry point: ``phasechain {validate,exact,simulate,compare}``.

A config file holds the same flags as the command line, one per line
(``--n 5``, ``n 5`` and ``n = 5`` are all accepted; ``#`` starts a comment).
Flags given on the command line override the file.
"""

from __future__ import annotations

import argparse
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .engine import FAILURE_POLICIES, RunSchedule, initial_state, run_ensemble
from .errors import OracleScaleError, PhaseChainError
from .exact import exact_series, x_polarized
from .model import MAX_ORACLE_SITES, PAPER_PARAMS, ModelParams
from .observables import AXES, collective_estimates
from .projection import EPS, Z_MAX
from .validation import SUITES, run_all

MODES = ("validate", "exact", "simulate", "compare")

# (flag, type, default, help); bools are switches
OPTIONS = [
    ("n", int, 5, "number of sites"),
    ("alpha", float, PAPER_PARAMS["alpha"], "interaction exponent"),
    ("h", float, PAPER_PARAMS["h"], "transverse field"),
    ("gamma1", float, PAPER_PARAMS["gamma1"], "sigma+ rate on the first site"),
    ("gamma2", float, PAPER_PARAMS["gamma2"], "sigma- rate on the first site"),
    ("gamma3", float, PAPER_PARAMS["gamma3"], "sigma+ rate on the last site"),
    ("gamma4", float, PAPER_PARAMS["gamma4"], "fourth boundary rate on the last site"),
    ("gammaD", float, PAPER_PARAMS["gammaD"], "bulk dephasing rate"),
    ("tmax", float, 20.0, "final time"),
    ("points", int, 200, "number of output intervals (output times k*tmax/points)"),
    ("dt", float, 1e-3, "integration step"),
    ("trajectories", int, 1000, "ensemble size"),
    ("seed", int, 1, "master seed"),
    ("zmax", float, Z_MAX, "projection threshold on |psi|, |phi|"),
    ("eps", float, EPS, "pole margin on |1 + psi phi|"),
    ("init", str, "coherent-x", "initial state (coherent-x)"),
    ("on-failure", str, "abort", f"policy when no discrete expansion exists {FAILURE_POLICIES}"),
    ("threads", int, None, "worker threads (default: PHASECHAIN_THREADS or 1)"),
    ("out", str, "phasechain", "output path prefix"),
    ("l4-minus", bool, False, "use sigma- for the fourth boundary channel"),
    ("sigma-y-printed", bool, False, "use the opposite-sign sigma^y phase-space function"),
    ("semiclassical", bool, False, "drop the interaction noise (keep its drift)"),
]

_DEST = {flag: flag.replace("-", "_") for flag, *_ in OPTIONS}
_TYPES = {flag: typ for flag, typ, *_ in OPTIONS}


class ConfigError(ValueError):
    pass


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on", ""):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def read_config(path):
    """Parse a flat key-value config file into ``{dest: value}``."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
        else:
            key, _, value = line.partition(" ")
        key, value = key.strip().lstrip("-"), value.strip()
        if key not in _TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown field {key!r}")
        typ = _TYPES[key]
        try:
            out[_DEST[key]] = _parse_bool(value) if typ is bool else typ(value)
        except ValueError as err:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {err}") from None
    return out


def write_config(values, path):
    """Inverse of :func:`read_config` (floats written with ``repr`` so they round-trip)."""
    lines = []
    for flag, typ, *_ in OPTIONS:
        v = values.get(_DEST[flag])
        if v is None:
            continue
        if typ is bool:
            v = "true" if v else "false"
        lines.append(f"--{flag} {float(v)!r}" if typ is float else f"--{flag} {v}")
    Path(path).write_text("\n".join(lines) + "\n")


def build_parser():
    parser = argparse.ArgumentParser(prog="phasechain", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", help="flat key-value config file")
        for flag, typ, _default, help_ in OPTIONS:
            if typ is bool:
                p.add_argument(f"--{flag}", dest=_DEST[flag], action="store_const", const=True,
                               default=None, help=help_)
            else:
                p.add_argument(f"--{flag}", dest=_DEST[flag], type=typ, default=None, help=help_)
        if mode == "validate":
            p.add_argument("--suite", action="append", choices=sorted(SUITES),
                           help="run only this suite (repeatable)")
    return parser


def resolve(args):
    """Defaults < config file < command line."""
    values = {_DEST[flag]: default for flag, _t, default, _h in OPTIONS}
    if args.config:
        values.update(read_config(args.config))
    for dest in _DEST.values():
        v = getattr(args, dest)
        if v is not None:
            values[dest] = v
    return values


def model_from(values):
    try:
        return ModelParams(n=values["n"], alpha=values["alpha"], h=values["h"],
                           gamma1=values["gamma1"], gamma2=values["gamma2"],
                           gamma3=values["gamma3"], gamma4=values["gamma4"],
                           gammaD=values["gammaD"], l4_minus=values["l4_minus"],
                           interaction_noise=not values["semiclassical"])
    except ValueError as err:
        raise ConfigError(str(err)) from None


def output_times(values):
    if values["points"] < 1:
        raise ConfigError("points must be >= 1")
    if not values["tmax"] > 0:
        raise ConfigError("tmax must be positive")
    return np.linspace(0.0, values["tmax"], values["points"] + 1)


def schedule_from(values):
    try:
        return RunSchedule(dt=values["dt"], t_out=output_times(values), t_max=values["tmax"],
                           z_max=values["zmax"], eps=values["eps"],
                           trajectories=values["trajectories"], master_seed=values["seed"],
                           on_failure=values["on_failure"])
    except ValueError as err:
        raise ConfigError(str(err)) from None


def _fmt(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def write_csv(path, columns, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _version_string():
    try:
        rev = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_sidecar(path, values, extra):
    meta = {"version": _version_string(), "config": values, **extra}
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True, default=float) + "\n")


def _exact_table(p, values):
    if p.n > MAX_ORACLE_SITES:
        raise OracleScaleError(f"the exact oracle handles n <= {MAX_ORACLE_SITES}, got n={p.n}")
    t = output_times(values)
    series = exact_series(p, x_polarized(p.n), t, dt=values["dt"])
    return t, series


def _simulate(p, values):
    sched = schedule_from(values)
    if values["init"] != "coherent-x":
        raise ConfigError(f"init: only 'coherent-x' is available from the command line, got {values['init']!r}")
    init = initial_state("coherent-x", p)
    res = run_ensemble(p, sched, init, threads=values["threads"])
    psi, phi, jumps = res.samples()
    if psi.shape[0] == 0:
        series = None
    else:
        series = collective_estimates(psi, phi, res.times, jumps, int(res.aborted.sum()),
                                      printed_sigma_y=values["sigma_y_printed"])
    return res, series


def cmd_validate(values, args):
    t0 = time.perf_counter()
    results = run_all(args.suite)
    lines = [r.line() for r in results]
    Path(f"{values['out']}_validate.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    write_sidecar(f"{values['out']}_validate.json", values,
                  {"suites": [dict(name=r.name, passed=r.passed, value=r.value, tolerance=r.tolerance,
                                   detail=r.detail) for r in results],
                   "wall_time": time.perf_counter() - t0})
    return 0 if all(r.passed for r in results) else 1


def cmd_exact(values, args):
    t0 = time.perf_counter()
    p = model_from(values)
    t, s = _exact_table(p, values)
    cols = ["t"] + [f"S{a}" for a in AXES] + [f"dS{a}" for a in AXES]
    rows = np.column_stack([t] + [s[c] for c in cols[1:]])
    write_csv(f"{values['out']}_exact.csv", cols, rows)
    write_sidecar(f"{values['out']}_exact.json", values, {"wall_time": time.perf_counter() - t0})
    return 0


def _stochastic_outputs(values, res, series, t0):
    aborted = int(res.aborted.sum())
    extra = {"trajectories": int(res.aborted.size), "aborted": aborted,
             "abort_reasons": {str(k): v for k, v in sorted(res.abort_reasons.items())[:20]},
             "wall_time": time.perf_counter() - t0}
    if series is not None:
        write_csv(f"{values['out']}_simulate.csv", series.columns(), series.table())
    write_sidecar(f"{values['out']}_simulate.json", values, extra)
    return extra


def cmd_simulate(values, args):
    t0 = time.perf_counter()
    p = model_from(values)
    res, series = _simulate(p, values)
    extra = _stochastic_outputs(values, res, series, t0)
    if series is None:
        print(f"all {extra['trajectories']} trajectories aborted", file=sys.stderr)
        return 2
    print(f"{extra['trajectories'] - extra['aborted']} trajectories kept, {extra['aborted']} aborted")
    return 0


def cmd_compare(values, args):
    t0 = time.perf_counter()
    p = model_from(values)
    t, exact = _exact_table(p, values)
    res, series = _simulate(p, values)
    extra = _stochastic_outputs(values, res, series, t0)
    if series is None:
        print(f"all {extra['trajectories']} trajectories aborted", file=sys.stderr)
        return 2
    names = [f"S{a}" for a in AXES] + [f"dS{a}" for a in AXES]
    cols = ["t"]
    data = [t]
    worst = 0.0
    for name in names:
        se = series.se[name]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, (series.mean[name] - exact[name]) / se,
                         np.where(np.isclose(series.mean[name], exact[name], rtol=0, atol=1e-12), 0.0, np.inf))
        cols += [f"{name}_exact", f"{name}_mean", f"{name}_se", f"{name}_z"]
        data += [exact[name], series.mean[name], se, z]
        worst = max(worst, float(np.nanmax(np.abs(z))))
    write_csv(f"{values['out']}_compare.csv", cols, np.column_stack(data))
    print(f"max |z-score| = {worst:.3f} ({'<= 3' if worst <= 3 else '> 3'})")
    meta = json.loads(Path(f"{values['out']}_simulate.json").read_text())
    meta["max_abs_z"] = worst
    Path(f"{values['out']}_simulate.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return 0 if worst <= 3 else 1


COMMANDS = {"validate": cmd_validate, "exact": cmd_exact, "simulate": cmd_simulate, "compare": cmd_compare}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        values = resolve(args)
        return COMMANDS[args.mode](values, args)
    except ConfigError as err:
        parser.error(str(err))
    except OracleScaleError as err:
        print(f"refusing: {err}", file=sys.stderr)
        return 3
    except PhaseChainError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
