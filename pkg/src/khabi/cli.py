"""Command line: constants, psi-roots, maximize and dahlberg tables.

Exit codes: 0 ok, 1 usage, 2 oracle or invariant failure, 3 numerical
non-convergence. Output is deterministic: fixed column order, 17
significant digits, rows sorted by (n, rho[, k]).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .constants import ORACLE_RTOL, constants_report, k2_closed
from .dahlberg import compare
from .deriv_core import ProblemParams, build_stack
from .errors import DomainError, KhabiError, NonConvergenceError, OracleFailure
from .functional import maximize
from .sign_analysis import analyse, sign_census

EXIT_OK, EXIT_USAGE, EXIT_ORACLE, EXIT_NONCONV = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    n: int
    rhos: list[float]
    tol: float
    fmt: str
    out: str | None
    precision: str
    iters: int
    jobs: int


# ----------------------------- formatting -----------------------------


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (list, tuple)):
        return ";".join(_cell(x) for x in v)
    return str(v)


def _human(v) -> str:
    if isinstance(v, (float, np.floating)) and not isinstance(v, bool):
        return format(float(v), ".8g")
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_human(x) for x in v) + "]"
    return _cell(v)


def _json_safe(v):
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, (np.floating, float)) and not isinstance(v, bool):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(v, np.integer):
        return int(v)
    return v


def render(columns: list[str], rows: list[dict], fmt: str, config: dict, residuals: dict) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])
        return buf.getvalue()
    if fmt == "json":
        body = {"config": config, "rows": [{c: r.get(c) for c in columns} for r in rows],
                "residuals": residuals}
        return json.dumps(_json_safe(body), indent=2) + "\n"
    cells = [[_human(r.get(c)) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(wd) for c, wd in zip(columns, widths))]
    lines += ["  ".join(x.rjust(wd) for x, wd in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


# ----------------------------- commands -----------------------------

CONSTANTS_COLUMNS = [
    "n", "rho", "P_n", "deficiency", "J", "K_n", "e_pow_P", "K_estimate_printed",
    "zeros", "index_set", "res_full_integral", "res_dminus_integral", "res_antiderivative",
    "res_k2_closed", "passed",
]


def _constants_row(args):
    n, rho, tol, precision = args
    rep = constants_report(ProblemParams(n, rho), tol=tol, precision=precision)
    r = rep.oracle_residuals
    return {
        "n": n, "rho": rho, "P_n": rep.p_n, "deficiency": rep.deficiency, "J": rep.j_sup,
        "K_n": rep.k_n, "e_pow_P": rep.upper_bound, "K_estimate_printed": rep.k_estimate_printed,
        "zeros": rep.zeros, "index_set": rep.index_set,
        "res_full_integral": r["full_integral"], "res_dminus_integral": r["dminus_integral"],
        "res_antiderivative": r["antiderivative"], "res_k2_closed": r.get("k2_closed"),
        "passed": rep.passed, "_failures": rep.failures,
    }


def _map(func, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(func, items))
    return [func(x) for x in items]


def cmd_constants(cfg: RunConfig):
    rows = _map(_constants_row, [(cfg.n, r, cfg.tol, cfg.precision) for r in cfg.rhos], cfg.jobs)
    failures = {f"n={r['n']},rho={_cell(r['rho'])}": r.pop("_failures") for r in rows}
    failures = {k: v for k, v in failures.items() if v}
    residuals = {"max_" + c[4:]: max((r[c] for r in rows if r[c] is not None), default=None)
                 for c in CONSTANTS_COLUMNS if c.startswith("res_")}
    if cfg.n == 2:
        residuals["max_k2_closed_vs_J"] = max(abs(r["J"] - k2_closed(r["rho"])) / r["J"] for r in rows)
    code = EXIT_ORACLE if failures else EXIT_OK
    msg = f"oracle failures: {failures}" if failures else None
    return CONSTANTS_COLUMNS, rows, residuals, code, msg


PSI_COLUMNS = ["n", "rho", "zeros", "tangential", "index_set", "d_minus", "census_sign_changes"]


def _psi_row(args):
    n, rho = args
    stack = build_stack(ProblemParams(n, rho).require_main())
    pat = analyse(stack)
    lo = min(1e-6, pat.zeros[0] / 10) if pat.zeros else 1e-6
    census = sign_census(stack, lo=lo, hi=1e6)
    return {
        "n": n, "rho": rho, "zeros": list(pat.zeros), "tangential": list(pat.tangential),
        "index_set": list(pat.index_set),
        "d_minus": ";".join(f"({_cell(a)},{_cell(b)})" for a, b in pat.d_minus),
        "census_sign_changes": census,
        "_expected": sum(0 if t else 1 for t in pat.tangential),
    }


def cmd_psi_roots(cfg: RunConfig):
    rows = _map(_psi_row, [(cfg.n, r) for r in cfg.rhos], cfg.jobs)
    bad = [r for r in rows if r.pop("_expected") != r["census_sign_changes"]]
    msg = f"sign census disagrees with certified roots for {len(bad)} row(s)" if bad else None
    return PSI_COLUMNS, rows, {"census_mismatches": len(bad)}, EXIT_ORACLE if bad else EXIT_OK, msg


MAXIMIZE_COLUMNS = ["n", "rho", "k", "epsilon", "J", "gap", "rel_gap", "margin", "admissible"]


def cmd_maximize(cfg: RunConfig):
    rows = []
    residuals = {}
    ok = True
    for rho in cfg.rhos:
        res = maximize(ProblemParams(cfg.n, rho), cfg.iters)
        for r in res.rows:
            rows.append({"n": cfg.n, "rho": rho, "k": r.k, "epsilon": r.epsilon, "J": r.j_value,
                         "gap": r.gap, "rel_gap": r.gap / res.j_sup, "margin": r.margin,
                         "admissible": r.admissible})
        key = _cell(rho)
        residuals[f"rho={key}"] = {
            "j_sup": res.j_sup, "final_rel_gap": res.rows[-1].gap / res.j_sup,
            "nondecreasing": res.nondecreasing, "bounded": res.bounded,
            "all_admissible": res.all_admissible, "alpha": res.schedule.alpha,
            "restarts": res.schedule.restarts, "check_grid": list(res.check_grid),
        }
        ok &= res.nondecreasing and res.bounded and res.all_admissible
    msg = None if ok else "J sequence not nondecreasing, exceeds J(rho), or inadmissible member"
    return MAXIMIZE_COLUMNS, rows, residuals, EXIT_OK if ok else EXIT_ORACLE, msg


DAHLBERG_COLUMNS = [
    "n", "rho", "theta_star", "vartheta", "vartheta_solution_mode", "normalization_residual",
    "vartheta_closed", "closed_residual", "vartheta_closed_printed", "best_fit_coefficient",
    "best_fit_rational", "theta_star_approx", "e_pow_P", "K_n", "exceeds_e_pow_P", "exceeds_K_n",
]


def _dahlberg_row(args):
    n, rho = args
    d = compare(n, rho).as_dict()
    d["vartheta"] = d.pop("vartheta_numeric")
    d["K_n"] = d.pop("k_n")
    d["exceeds_K_n"] = d.pop("exceeds_k_n")
    return d


def cmd_dahlberg(cfg: RunConfig):
    rows = _map(_dahlberg_row, [(cfg.n, r) for r in cfg.rhos], cfg.jobs)
    norm = max(r["normalization_residual"] for r in rows)
    closed = max((r["closed_residual"] for r in rows if r["closed_residual"] is not None), default=None)
    residuals = {"max_normalization_residual": norm, "max_closed_residual": closed}
    bad = norm > 1e-12 or (closed is not None and closed > cfg.tol)
    msg = "internal consistency failure (normalization or closed form)" if bad else None
    return DAHLBERG_COLUMNS, rows, residuals, EXIT_ORACLE if bad else EXIT_OK, msg


COMMANDS = {
    "constants": cmd_constants,
    "psi-roots": cmd_psi_roots,
    "maximize": cmd_maximize,
    "dahlberg": cmd_dahlberg,
}


# ----------------------------- parsing -----------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="khabi", description="Sharp growth constants for psh functions of lower order rho.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--n", type=int, default=2)
        sp.add_argument("--rho", type=float)
        sp.add_argument("--rho-min", type=float)
        sp.add_argument("--rho-max", type=float)
        sp.add_argument("--steps", type=int, default=1)
        sp.add_argument("--iters", type=int, default=200)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--precision", choices=["double", "extended"], default="double")
        sp.add_argument("--format", dest="fmt", choices=["csv", "json", "human"], default="human")
        sp.add_argument("--out")
        sp.add_argument("--jobs", type=int, default=1)
    return p


def _default_tol() -> float:
    env = os.environ.get("KHABI_TOL")
    if env is None:
        return ORACLE_RTOL
    try:
        tol = float(env)
    except ValueError:
        raise UsageError(f"KHABI_TOL={env!r} is not a number")
    return tol


def parse_config(argv) -> RunConfig:
    ns = build_parser().parse_args(argv)
    if ns.command is None:
        raise UsageError("a command is required: " + ", ".join(COMMANDS))
    tol = ns.tol if ns.tol is not None else _default_tol()
    if not (0 < tol < 1):
        raise UsageError("tolerance must lie in (0, 1)")
    if ns.n < 2:
        raise UsageError("--n must be >= 2")
    if ns.rho is not None:
        if ns.rho_min is not None or ns.rho_max is not None:
            raise UsageError("--rho cannot be combined with --rho-min/--rho-max")
        rhos = [ns.rho]
    elif ns.rho_min is not None and ns.rho_max is not None:
        if ns.steps < 1:
            raise UsageError("--steps must be >= 1")
        if ns.rho_max < ns.rho_min:
            raise UsageError("--rho-max must be >= --rho-min")
        rhos = [float(x) for x in np.linspace(ns.rho_min, ns.rho_max, ns.steps)] if ns.steps > 1 \
            else [ns.rho_min]
    else:
        raise UsageError("give --rho or both --rho-min and --rho-max")
    if min(rhos) <= 1:
        raise UsageError("rho must exceed 1")
    if ns.iters < 0:
        raise UsageError("--iters must be >= 0")
    if ns.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return RunConfig(ns.command, ns.n, sorted(rhos), tol, ns.fmt, ns.out, ns.precision, ns.iters, ns.jobs)


def main(argv=None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"khabi: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        columns, rows, residuals, code, msg = COMMANDS[cfg.command](cfg)
    except DomainError as exc:
        print(f"khabi: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonConvergenceError as exc:
        print(f"khabi: non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (OracleFailure, KhabiError) as exc:
        print(f"khabi: invariant failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    config = {k: v for k, v in asdict(cfg).items() if k not in ("out", "jobs")}
    text = render(columns, rows, cfg.fmt, config, residuals)
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if msg:
        print(f"khabi: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
