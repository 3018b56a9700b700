"""Command-line front end.

Subcommands: whitney, hardy-sweep, witness, norms, decompose, probe-divergence. Every
command writes a CSV whose first line is a ``#`` comment carrying the tool version, a
hash of the effective configuration and the resolution schedule; the body is
deterministic. Exit codes: 0 all verdicts consistent, 1 an inconsistency, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import CORPUS, corpus_entry, default_grid
from .decomposition import (boundary_hardy_sweep, fJ_table, membership_report, partition_route,
                            reinforced_divergence_probe, subcritical_table)
from .discretize import triebel_norm
from .geometry import ParameterError, PlaneSplit, SmoothnessParams, classify_criticality
from .hardy import WeightSpec, hardy_quotient_1d, power_function_1d
from .spaces import reinforced_norm, rloc_equiv_norm, trace_jet
from .whitney import verify_whitney, whitney_decompose

COMMANDS = ("whitney", "hardy-sweep", "witness", "norms", "decompose", "probe-divergence")
SCHEMA = 1


class UsageError(ValueError):
    pass


# --- parsing helpers -----------------------------------------------------------------------


def parse_number(text: str):
    """Exact Fraction for decimal or a/b input, float('inf') for 'inf'."""
    text = str(text).strip()
    if text in ("inf", "infinity"):
        return math.inf
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"not a number: {text!r}") from exc


def parse_range(text: str) -> list[int]:
    """'2..5' or '2,3,5'."""
    text = str(text).strip()
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(v) for v in text.split(",") if v.strip()]


def parse_list(text: str) -> list:
    return [parse_number(v) for v in str(text).split(",") if v.strip()]


def parse_params(text: str, n: int = 2, l: int = 1) -> list[SmoothnessParams]:
    """'default-grid' or 's=3/2,p=2,q=2[,n=2,l=1][;...]'. Every point is validated."""
    text = str(text).strip()
    if text == "default-grid":
        return default_grid(PlaneSplit(n, l))
    out = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        kv = {}
        for item in chunk.split(","):
            key, sep, val = item.partition("=")
            if not sep:
                raise UsageError(f"expected key=value in --params, got {item!r}")
            kv[key.strip()] = val.strip()
        unknown = set(kv) - {"s", "p", "q", "n", "l", "eps"}
        if unknown:
            raise UsageError(f"unknown parameter keys {sorted(unknown)}")
        if "s" not in kv:
            raise UsageError("every parameter set needs s")
        split = PlaneSplit(int(kv.get("n", n)), int(kv.get("l", l)))
        out.append(SmoothnessParams(parse_number(kv["s"]), parse_number(kv.get("p", "2")),
                                    parse_number(kv.get("q", "2")), split, float(kv.get("eps", 0.5))))
    if not out:
        raise UsageError("empty parameter grid")
    return out


# --- output -------------------------------------------------------------------------------


@dataclass
class Output:
    command: str
    config_hash: str
    resolution: str
    rows: list = field(default_factory=list)

    def header(self) -> str:
        return (f"# whitneyhardy {__version__} schema={SCHEMA} command={self.command} "
                f"config={self.config_hash} resolution={self.resolution}")

    def csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(self.header() + "\n")
        if self.rows:
            cols = list(self.rows[0])
            for r in self.rows[1:]:
                cols += [c for c in r if c not in cols]
            w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", restval="")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: _cell(v) for k, v in r.items()})
        return buf.getvalue()

    def table_text(self, columns: list[str]) -> str:
        """Whitespace-separated table for gnuplot."""
        lines = [self.header(), "# " + " ".join(columns)]
        for r in self.rows:
            lines.append(" ".join(str(_cell(r.get(c, "nan"))) for c in columns))
        return "\n".join(lines) + "\n"


def _cell(v):
    if isinstance(v, bool) or v is None:
        return str(v).lower() if v is not None else ""
    if isinstance(v, float):
        return "inf" if math.isinf(v) else ("nan" if math.isnan(v) else f"{v:.6e}")
    if isinstance(v, (np.floating,)):
        return _cell(float(v))
    return v


def config_hash(args: argparse.Namespace) -> str:
    skip = {"out", "jobs", "config", "func"}
    blob = json.dumps({k: str(v) for k, v in sorted(vars(args).items()) if k not in skip}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    return path


def _map(fn, items, jobs: int):
    """Ordered map, in worker processes when jobs > 1."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# --- commands ----------------------------------------------------------------------------


def cmd_whitney(args) -> tuple[Output, bool]:
    split = PlaneSplit(args.n, args.l)
    half = int(args.half_width)
    dec = whitney_decompose(split, ((-half,) * args.n, (half,) * args.n), args.j_max)
    diag = verify_whitney(dec)
    out = Output("whitney", config_hash(args), f"j_max={args.j_max}", dec.to_rows())
    d = Path(args.out)
    _write(d, "whitney_diagnostics.json", json.dumps(diag.to_dict(), indent=1, sort_keys=True, default=str) + "\n")
    if args.n == 2:
        _write(d, "whitney.svg", dec.to_svg())
    print(f"cubes={len(dec.levels)} disjoint={diag.disjoint} max_level_gap={diag.max_adjacent_level_gap} "
          f"distance_ratio={diag.distance_ratio_range[0]:.3f}..{diag.distance_ratio_range[1]:.3f} "
          f"passed={diag.passed}")
    return out, diag.passed


def cmd_hardy_sweep(args) -> tuple[Output, bool]:
    rows, ok = [], True
    p = float(args.p)
    for beta in parse_list(args.beta):
        g = power_function_1d(float(beta), points=args.points)
        qv = hardy_quotient_1d(g, p, 0.0)
        exact = float(beta) ** -p
        good = abs(qv - exact) <= 0.05 * exact and qv < (p / (p - 1)) ** p
        ok &= good
        rows.append({"family": "power_1d", "beta": str(beta), "p": args.p, "quotient": qv,
                     "reference": exact, "consistent": good})
    sweep = boundary_hardy_sweep(dilations=parse_range(args.dilations))
    by_case = {}
    for r in sweep:
        by_case.setdefault((r.entry, r.s), []).append(r)
    for (entry, s), group in by_case.items():
        qs = [r.quotient for r in group]
        bracket = max(qs) / min(qs)
        good = all(math.isfinite(q) for q in qs) and bracket <= 4 and all(r.relative_change < 0.1 for r in group)
        ok &= good
        for r in group:
            row = {"family": "boundary", "entry": entry, "r": r.r, "s": str(s), "k": r.k, "quotient": r.quotient,
                   "relative_change": r.relative_change, "bracket": bracket, "consistent": good}
            rows.append(row)
    out = Output("hardy-sweep", config_hash(args),
                 f"power_1d:logpoints={args.points};boundary:hz=1/256*2^-k,one_halving", rows)
    return out, ok


def cmd_witness(args) -> tuple[Output, bool]:
    kappa = WeightSpec.parse(args.kappa)
    idx = parse_range(args.J)
    p = parse_number(args.p)
    p = int(p) if p == int(p) else float(p)
    if args.kind == "fJ":
        table = fJ_table(idx, kappa, p)
        res = "collar:hy=1/128,hz=1/1024;norm:h=1/128"
    elif args.kind == "subcritical":
        table = subcritical_table(idx, kappa, parse_number(args.s), p)
        res = "base:h=1/32*2^-j"
    else:
        raise UsageError(f"unknown witness kind {args.kind!r}")
    qs = [r.quotient for r in table]
    increasing = all(b > a for a, b in zip(qs, qs[1:]))
    bracket = max(qs) / min(qs)
    unbounded = kappa.kind != "one"
    ok = increasing if unbounded else bracket <= 3
    if args.kind == "fJ":
        p_conj = float(p) / (float(p) - 1) if float(p) > 1 else math.inf
        ok &= all(r.lower_bound >= r.index ** (1 / p_conj) for r in table)
    rows = [dict(r.row(), increasing=increasing, bracket=bracket) for r in table]
    out = Output("witness", config_hash(args), res, rows)
    _write(Path(args.out), f"witness_{args.kind}.dat",
           out.table_text(["index", "quotient", "lhs", "norm", "lower_bound"]))
    print(" ".join(f"{r.index}:{r.quotient:.4f}" for r in table), f"increasing={increasing} bracket={bracket:.3f}")
    return out, ok


def cmd_norms(args) -> tuple[Output, bool]:
    entry = corpus_entry(args.entry)
    params = SmoothnessParams(parse_number(args.s), parse_number(args.p), parse_number(args.q), entry.split)
    params.require_q_at_least_one()
    params.require_rloc_range()
    cls = classify_criticality(params)
    iso = entry.iso()
    rows = [{"quantity": "triebel", "value": triebel_norm(iso, params.s, params.p, params.q).value}]
    if params.s > params.split.codim / params.p:
        top = int(math.ceil(float(params.s) - params.split.codim / float(params.p))) - 1
        jet = trace_jet(entry.node(), params, top)
        for a, v in jet.norms.items():
            rows.append({"quantity": f"trace{a}", "value": v, "vanishes": jet.vanishing()[a]})
    rein = reinforced_norm(iso, params, entry.collar_box())
    rows.append({"quantity": "reinforced", "value": rein.total, "divergent": rein.divergent})
    eq = rloc_equiv_norm(iso, params, entry.collar_box())
    rows.append({"quantity": "rloc_equiv", "value": eq.value, "divergent": eq.divergent})
    rep = membership_report(entry, params, partition_route(entry, [params]))
    rows.append({"quantity": "rloc_partition", "value": rep.rloc_partition, "divergent": not rep.in_rloc_partition})
    for r in rows:
        r.update(entry=entry.id, **{"class": str(cls)})
    print(f"{entry.id} {params.label()} {cls}: consistent={rep.consistent_with_theorem}")
    out = Output("norms", config_hash(args), "iso:h=1/16;collar:hz=1/128,two_halvings;rloc:j_max=6", rows)
    return out, rep.consistent_with_theorem and rep.routes_agree


def _decompose_entry(job):
    name, params_text = job
    entry = corpus_entry(name)
    grid = parse_params(params_text, entry.n, entry.l)
    part = partition_route(entry, grid)
    return [membership_report(entry, p, part).row() for p in grid]


def cmd_decompose(args) -> tuple[Output, bool]:
    names = [e.id for e in CORPUS] if args.corpus == "all" else [v.strip() for v in args.corpus.split(",")]
    for nm in names:
        corpus_entry(nm)
    parse_params(args.params)  # fail fast before any computation
    rows = [r for chunk in _map(_decompose_entry, [(nm, args.params) for nm in names], args.jobs) for r in chunk]
    ok = all(r["consistent_with_theorem"] and r["routes_agree"] for r in rows)
    bad = sum(not r["consistent_with_theorem"] for r in rows)
    print(f"reports={len(rows)} inconsistent={bad} routes_disagree={sum(not r['routes_agree'] for r in rows)}")
    out = Output("decompose", config_hash(args), "iso:h=1/16;collar:hz=1/128,two_halvings;rloc:j_max=6", rows)
    return out, ok


PROBE_PARAMS = "s=1/2,p=2,q=2"


def cmd_probe(args) -> tuple[Output, bool]:
    # parent-parser actions are shared, so the probe's own default is applied here
    text = PROBE_PARAMS if args.params == "default-grid" else args.params
    params = parse_params(text)[0]
    hs = [float(h) for h in parse_list(args.resolution)] if args.resolution else [1 / 64, 1 / 128, 1 / 256, 1 / 512]
    probe = reinforced_divergence_probe(params, hs)
    rows = [dict(case="plateau", h=h, integral=v) for h, v in zip(hs, probe.integrals)]
    ok = probe.log_divergent
    if args.control:
        ctrl = reinforced_divergence_probe(params, hs, corpus_entry(args.control).expr)
        rows += [dict(case=args.control, h=h, integral=v) for h, v in zip(hs, ctrl.integrals)]
        ok &= ctrl.convergent
    for r in rows:
        r.update(n=params.n, l=params.l)
    print(f"slope={probe.slope:.4f} residual={probe.relative_residual:.2e} log_divergent={probe.log_divergent}")
    res = ",".join(f"{h:g}" for h in hs)
    return Output("probe-divergence", config_hash(args), f"hz={res}", rows), ok


HANDLERS = {"whitney": cmd_whitney, "hardy-sweep": cmd_hardy_sweep, "witness": cmd_witness, "norms": cmd_norms,
            "decompose": cmd_decompose, "probe-divergence": cmd_probe}


# --- argument parser ---------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--params", default="default-grid", help="'default-grid' or 's=3/2,p=2,q=2[;...]'")
    common.add_argument("--config", default=None, help="INI file; [common] and [<command>] sections")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--resolution", default=None, help="spacing or comma-separated schedule")
    common.add_argument("--seed", type=int, default=0)

    parser = _Parser(prog="whitneyhardy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("whitney", parents=[common])
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--l", type=int, default=1)
    p.add_argument("--j-max", type=int, default=6)
    p.add_argument("--half-width", type=int, default=1)

    p = sub.add_parser("hardy-sweep", parents=[common])
    p.add_argument("--beta", default="0.55,0.75,1,1.5,2")
    p.add_argument("--p", default="2")
    p.add_argument("--points", type=int, default=4096)
    p.add_argument("--dilations", default="0..3")

    p = sub.add_parser("witness", parents=[common])
    p.add_argument("--kind", choices=("fJ", "subcritical"), default="fJ")
    p.add_argument("--J", default="2..5")
    p.add_argument("--kappa", default="log^1")
    p.add_argument("--p", default="2")
    p.add_argument("--s", default="1/4")

    p = sub.add_parser("norms", parents=[common])
    p.add_argument("--entry", required=True)
    p.add_argument("--s", required=True)
    p.add_argument("--p", default="2")
    p.add_argument("--q", default="2")

    p = sub.add_parser("decompose", parents=[common])
    p.add_argument("--corpus", default="all")

    p = sub.add_parser("probe-divergence", parents=[common])
    p.add_argument("--control", default="z_gaussian")
    return parser


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise UsageError(command)


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = configparser.ConfigParser()
        if not cfg.read(args.config):
            raise UsageError(f"cannot read config file {args.config}")
        values = {}
        for section in ("common", args.command):
            if cfg.has_section(section):
                values.update({k.replace("-", "_"): v for k, v in cfg.items(section)})
        sp = _subparser(parser, args.command)
        known = {a.dest.lower(): a for a in sp._actions}  # configparser folds key case
        unknown = set(values) - set(known)
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        sp.set_defaults(**{known[k].dest: (known[k].type(v) if known[k].type else v) for k, v in values.items()})
        args = parser.parse_args(argv)  # flags given on the command line override the file
    return args


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        np.random.seed(args.seed % 2**32)
        out, ok = HANDLERS[args.command](args)
    except (UsageError, ParameterError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return 2
    path = _write(Path(args.out), f"{args.command}.csv", out.csv_text())
    print(f"wrote {path}")
    return 0 if ok else 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
