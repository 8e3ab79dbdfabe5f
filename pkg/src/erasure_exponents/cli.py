"""Command-line front end: ``erasure-exponents {exponent,xi-table,simulate,verify}``.

Rates and thresholds are in nats unless ``--units bits`` is given, in which
case inputs are converted on the way in and exponents on the way out.  Every
artifact carries the tool version and the full run configuration.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 budget refusal.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .channel_core import ChannelError, ChannelFamily, Dmc, load_channel, load_family
from .exponents import (DEFAULT_GRID, ExponentError, GridSpec, e1_argmax, e2, f_exponent,
                        gallager_e, pair_exponent, xi_star, xi_table_csv)
from .sim import (DEFAULT_OUTPUT_BUDGET, BudgetExceeded, ensemble_average,
                  ensemble_mc, exponent_fit, series_csv)
from . import verification

TOOL = "erasure-exponents"
THREADS_ENV = "ERASURE_EXPONENTS_THREADS"
LN2 = math.log(2.0)

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- parsing helpers --------------------------------------------------------

def parse_channel(spec: str) -> Dmc | ChannelFamily:
    """``bsc:<theta>``, ``bsc-grid:<lo>:<step>:<hi>``, or a JSON file path."""
    if spec.startswith("bsc:"):
        return Dmc.bsc(float(spec[4:]))
    if spec.startswith("bsc-grid:"):
        parts = spec.split(":")[1:]
        if len(parts) != 3:
            raise UsageError("bsc-grid needs <lo>:<step>:<hi>")
        lo, step, hi = map(float, parts)
        return ChannelFamily.bsc(frange(lo, hi, step))
    path = Path(spec)
    if not path.is_file():
        raise UsageError(f"no such channel spec or file: {spec}")
    data = json.loads(path.read_text())
    return load_family(path) if "kind" in data else load_channel(path)


def as_family(obj: Dmc | ChannelFamily) -> ChannelFamily:
    if isinstance(obj, ChannelFamily):
        return obj
    return ChannelFamily.general([obj])


def frange(lo: float, hi: float, step: float) -> list[float]:
    if step <= 0:
        raise UsageError("range step must be positive")
    k = int(math.floor((hi - lo) / step + 1e-9))
    if k < 0:
        raise UsageError("empty range")
    return [round(lo + i * step, 12) for i in range(k + 1)]


def parse_values(tokens: Sequence[str]) -> list[float]:
    """Values given as a list, or as a single ``lo:step:hi`` range."""
    if len(tokens) == 1 and tokens[0].count(":") == 2:
        lo, step, hi = map(float, tokens[0].split(":"))
        vals = frange(lo, hi, step)
    else:
        vals = [float(t) for t in tokens]
    if not vals:
        raise UsageError("empty range")
    return vals


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


# --- output -----------------------------------------------------------------

def envelope(command: str, config: dict, result) -> dict:
    return {"tool": TOOL, "version": __version__, "command": command, "config": config,
            "result": result}


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def csv_preamble(command: str, config: dict) -> str:
    return (f"# tool={TOOL} version={__version__} command={command}\n"
            f"# config={json.dumps(config, sort_keys=True, separators=(',', ':'))}\n")


def emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


class Units:
    def __init__(self, name: str):
        self.name = name
        self.k = LN2 if name == "bits" else 1.0

    def rate_in(self, v: float) -> float:
        return v * self.k

    def out(self, v: float) -> float:
        return v / self.k


# --- exponent ---------------------------------------------------------------

def _need(args, *names: str) -> None:
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"{args.kind} needs " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _single(obj, what: str) -> Dmc:
    if isinstance(obj, ChannelFamily):
        if len(obj) != 1:
            raise UsageError(f"{what} needs a single channel")
        return obj.resolve(0)
    return obj


def _bsc_theta(ch: Dmc) -> float:
    p = ch.probs
    if p.shape != (2, 2) or abs(p[0, 1] - p[1, 0]) > 1e-12:
        raise UsageError("gallager needs a BSC channel (bsc:<theta>)")
    return float(p[0, 1])


def cmd_exponent(args) -> int:
    u = Units(args.units)
    g = GridSpec(step_s=args.grid_step, step_rho=args.grid_step)
    config = {"kind": args.kind, "units": args.units, "channel": args.channel,
              "channel_b": args.channel_b, "rate": args.rate, "threshold": args.threshold,
              "e1": args.e1, "py": args.py, "lam": args.lam, "rho": args.rho, "s": args.s,
              "grid_step": args.grid_step}
    rows: list[dict]
    if args.kind == "e2" and args.e1 is not None:
        _need(args, "threshold")
        v = e2(u.rate_in(args.e1), u.rate_in(args.threshold))
        rows = [{"e2": u.out(v)}]
    elif args.kind in ("e1", "e2"):
        _need(args, "channel", "rate", "threshold")
        r, t = u.rate_in(args.rate), u.rate_in(args.threshold)
        obj = parse_channel(args.channel)
        fam = as_family(obj)
        rows = []
        for theta, ch in zip(fam.grid, fam.channels):
            pt = e1_argmax(r, t, ch, g=g)
            row = {"e1": u.out(pt.value), "e2": u.out(e2(pt.value, t)),
                   "argmax": {"s": pt.s, "rho": pt.rho}}
            if isinstance(obj, ChannelFamily):
                row = {"theta": theta, **row}
            rows.append(row)
    elif args.kind == "f":
        _need(args, "channel", "py", "lam")
        ch = _single(parse_channel(args.channel), "f")
        rows = [{"f": u.out(f_exponent(np.array(args.py), args.lam, ch))}]
    elif args.kind == "pair":
        _need(args, "channel", "rho", "s")
        a = _single(parse_channel(args.channel), "pair")
        b = _single(parse_channel(args.channel_b), "pair") if args.channel_b else a
        rows = [{"pair_exponent": u.out(pair_exponent(a, b, args.rho, args.s))}]
    else:  # gallager
        _need(args, "channel")
        theta = _bsc_theta(_single(parse_channel(args.channel), "gallager"))
        r = u.rate_in(args.rate or 0.0)
        if args.rho is not None:
            rows = [{"gallager_e": u.out(gallager_e(theta, args.rho, r)), "rho": args.rho}]
        else:
            rhos = np.linspace(0.0, 1.0, 10001)
            vals = [gallager_e(theta, float(p), r) for p in rhos]
            k = int(np.argmax(vals))
            rows = [{"gallager_e": u.out(vals[k]), "rho": float(rhos[k])}]

    if args.format == "csv":
        emit(csv_preamble("exponent", config) + _rows_csv(rows), args.out)
    else:
        result = rows[0] if len(rows) == 1 and "theta" not in rows[0] else {"rows": rows}
        emit(dump_json(envelope("exponent", config, result)), args.out)
    return EXIT_OK


def _rows_csv(rows: list[dict]) -> str:
    flat = []
    for r in rows:
        d = {}
        for k, v in r.items():
            if isinstance(v, dict):
                d.update({f"{k}_{kk}": vv for kk, vv in v.items()})
            else:
                d[k] = v
        flat.append(d)
    head = list(flat[0])
    lines = [",".join(head)] + [",".join(repr(float(d[h])) for h in head) for d in flat]
    return "\n".join(lines) + "\n"


# --- xi-table ---------------------------------------------------------------

def cmd_xi_table(args) -> int:
    u = Units(args.units)
    rates = parse_values(args.rates)
    thresholds = parse_values(args.thresholds)
    fam = as_family(parse_channel(args.family))
    g = GridSpec(step_s=args.grid_step, step_rho=args.grid_step, refine=not args.no_refine)
    config = {"family": args.family, "rates": rates, "thresholds": thresholds,
              "units": args.units, "grid_step": args.grid_step, "refine": g.refine}
    cells = [(r, t) for r in rates for t in thresholds]

    def one(rt):
        return xi_star(u.rate_in(rt[0]), u.rate_in(rt[1]), fam, g)

    if args.threads > 1:
        with ThreadPoolExecutor(args.threads) as ex:
            results = list(ex.map(one, cells))
    else:
        results = [one(c) for c in cells]
    rows = [(r, t, res) for (r, t), res in zip(cells, results)]
    if args.format == "json":
        result = [{"R": r, "T": t, "xi": res.xi, "theta": res.theta,
                   "theta_tilde": res.theta_tilde, "degenerate": res.degenerate,
                   "s": None if math.isnan(res.s) else res.s,
                   "rho": None if math.isnan(res.rho) else res.rho} for r, t, res in rows]
        emit(dump_json(envelope("xi-table", config, result)), args.out)
    else:
        emit(csv_preamble("xi-table", config) + xi_table_csv(rows), args.out)
    return EXIT_OK


# --- simulate ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    u = Units(args.units)
    r, t = u.rate_in(args.rate), u.rate_in(args.threshold)
    fam = as_family(parse_channel(args.family))
    true_ch = parse_channel(args.channel)
    if isinstance(true_ch, ChannelFamily):
        raise UsageError("--channel must name a single channel")
    try:
        theta = _bsc_theta(true_ch) if fam.kind == "bsc" else None
        if theta is not None:
            fam.index_of(theta)
    except (UsageError, KeyError):
        raise UsageError("--channel must be a grid point of --family")
    if theta is None:
        match = [i for i, c in enumerate(fam.channels) if np.allclose(c.probs, true_ch.probs)]
        if not match:
            raise UsageError("--channel must be a member of --family")
        theta = fam.grid[match[0]]

    if args.xi == "auto":
        xi = xi_star(r, t, fam).xi if args.decoder == "universal" else 1.0
    else:
        xi = float(args.xi)
    config = {"n": args.n, "rate": args.rate, "threshold": args.threshold, "units": args.units,
              "decoder": args.decoder, "xi": args.xi, "xi_value": xi, "family": args.family,
              "channel": args.channel, "codebooks": args.codebooks, "seed": args.seed,
              "exact": args.exact, "monte_carlo": args.mc, "trials": args.trials,
              "budget": args.budget, "variant": args.variant}
    if args.decoder == "universal" and xi <= 0:
        raise UsageError("xi* is 0 here; the universal decoder needs xi > 0")

    reports = []
    for n in args.n:
        exact = args.exact or (not args.mc and fam.output_size ** n <= args.budget)
        common = dict(decoder=args.decoder, xi=xi, codebooks=args.codebooks, seed=args.seed,
                      variant=args.variant, threads=args.threads)
        if exact:
            rep = ensemble_average(n, r, t, fam, channel_theta=theta, budget=args.budget, **common)
        else:
            rep = ensemble_mc(n, r, t, fam, theta, args.trials, **common)
        reports.append(rep)

    series = [(rep.n, rep.at(theta).stats) for rep in reports]
    fits = {}
    if len(series) >= 2:
        for key in ("pr_e1", "pr_e2"):
            try:
                f = exponent_fit([(n, getattr(st, key)) for n, st in series])
                fits[key] = {"slope": u.out(f.slope), "intercept": f.intercept,
                             "residual": f.residual, "censored": list(f.censored)}
            except ValueError:
                fits[key] = None
    result = {"channel_theta": theta, "reports": [rep.to_dict() for rep in reports],
              "fit": fits,
              "log_kn_per_n": [math.log(rep.kn_ratio) / rep.n if rep.kn_ratio > 0 else None
                               for rep in reports]}
    text = dump_json(envelope("simulate", config, result))
    if args.out:
        base = Path(args.out)
        base.with_suffix(".json").write_text(text)
        base.with_suffix(".csv").write_text(csv_preamble("simulate", config) + series_csv(series))
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --- verify -----------------------------------------------------------------

def cmd_verify(args) -> int:
    kw: dict = {}
    if args.suite == "table1":
        if args.rates:
            kw["rates"] = parse_values(args.rates)
        if args.thresholds:
            kw["thresholds"] = parse_values(args.thresholds)
    elif args.seed is not None:
        kw["seed"] = args.seed
    config = {"suite": args.suite, "seed": args.seed, "rates": kw.get("rates"),
              "thresholds": kw.get("thresholds")}
    try:
        with ThreadPoolExecutor(args.threads) as ex:
            if args.suite == "table1" and args.threads > 1:
                kw["mapper"] = ex.map
            rep = verification.run_suite(args.suite, **kw)
    except KeyError as exc:
        raise UsageError(f"no reference value for {exc}")
    emit(dump_json(envelope("verify", config, rep.to_dict())), args.out)
    if args.out is not None or args.summary:
        for c in rep.checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  delta={c.delta:.3g}", file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_VERIFY


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog=TOOL, description="Erasure-decoding exponents for unknown DMCs.")
    p.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, fmt=("json", "csv"), default_fmt="json"):
        sp.add_argument("--units", choices=("nats", "bits"), default="nats")
        sp.add_argument("--format", choices=fmt, default=default_fmt)
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--threads", type=int, default=default_threads(),
                        help=f"worker threads (default from ${THREADS_ENV}, else 1)")

    ex = sub.add_parser("exponent", help="evaluate a single exponent")
    ex.add_argument("kind", choices=("e1", "e2", "f", "pair", "gallager"))
    ex.add_argument("--channel")
    ex.add_argument("--channel-b", dest="channel_b", help="second channel for pair")
    ex.add_argument("--rate", type=float)
    ex.add_argument("--threshold", type=float)
    ex.add_argument("--e1", type=float, help="E1 value for e2")
    ex.add_argument("--py", type=float, nargs="+", help="output distribution for f")
    ex.add_argument("--lam", type=float)
    ex.add_argument("--rho", type=float)
    ex.add_argument("--s", type=float)
    ex.add_argument("--grid-step", type=float, default=DEFAULT_GRID.step_rho)
    common(ex)
    ex.set_defaults(func=cmd_exponent)

    xt = sub.add_parser("xi-table", help="xi*(R, T) over a grid of rates and thresholds")
    xt.add_argument("--rates", nargs="+", default=["0:0.05:0.30"])
    xt.add_argument("--thresholds", nargs="+", default=["0:0.025:0.15"])
    xt.add_argument("--family", default="bsc-grid:0.01:0.01:0.5")
    xt.add_argument("--grid-step", type=float, default=DEFAULT_GRID.step_rho)
    xt.add_argument("--no-refine", action="store_true")
    common(xt, default_fmt="csv")
    xt.set_defaults(func=cmd_xi_table)

    sm = sub.add_parser("simulate", help="ensemble error probabilities of a decoder")
    sm.add_argument("--n", type=int, nargs="+", required=True)
    sm.add_argument("--decoder", choices=("forney", "universal"), default="universal")
    sm.add_argument("--channel", required=True, help="true channel, a member of --family")
    sm.add_argument("--family", default="bsc-grid:0.01:0.01:0.5")
    sm.add_argument("--rate", type=float, required=True)
    sm.add_argument("--threshold", type=float, required=True)
    sm.add_argument("--xi", default="auto")
    sm.add_argument("--variant", choices=("sum", "max-alpha"), default="sum")
    mode = sm.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="enumerate outputs; refuse over budget")
    mode.add_argument("--mc", action="store_true", help="Monte Carlo for the true channel only")
    sm.add_argument("--trials", type=int, default=10000, help="Monte Carlo trials per codebook")
    sm.add_argument("--codebooks", type=int, default=50)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--budget", type=int, default=DEFAULT_OUTPUT_BUDGET,
                    help="largest |Y|^n enumerated exactly")
    common(sm, fmt=("json",))
    sm.set_defaults(func=cmd_simulate)

    vf = sub.add_parser("verify", help="run an oracle verification suite")
    vf.add_argument("--suite", choices=verification.SUITES, required=True)
    vf.add_argument("--seed", type=int)
    vf.add_argument("--rates", nargs="+", help="table1 subset")
    vf.add_argument("--thresholds", nargs="+", help="table1 subset")
    vf.add_argument("--summary", action="store_true", help="also print one line per check")
    common(vf, fmt=("json",))
    vf.set_defaults(func=cmd_verify)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print(f"{TOOL}: error: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except BudgetExceeded as exc:
        print(f"{TOOL}: refused: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (UsageError, ChannelError, ExponentError, ValueError, OSError) as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
