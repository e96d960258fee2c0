"""Command-line interface.

Every report is ``{"header": ..., "body": ...}`` in JSON, or a table with
the header echoed as ``#`` comment lines (csv) or a preamble (markdown).
Output is deterministic for fixed inputs and seed; a timestamp is added
only with ``--stamp``.

Exit codes: 0 success, 1 invalid input or arguments, 2 computation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from . import __version__
from .chains import MODES, decompose_incongruent, decompose_satt
from .congruence import congruent_fraction_series, count_binary, count_sets, count_trinary, is_congruent, marginal_sets
from .core import GridSpec, IngestConfig, build_support, cell_stats, fmt_vector, ingest, parse_vector, read_config
from .errors import AggTreatError, ValidationError
from .estimate import per_level, summary
from .fixtures import table1_stats
from .inference import DEFAULT_B, bootstrap, sutva_d_test
from .simulate import FIXTURES, fixture, generate, load_scenario
from .transport import incongruency_report

SEED_ENV = "AGGTREAT_SEED"


class Report:
    def __init__(self, body: dict, columns: list[str], rows: list[list]):
        self.body = body
        self.columns = columns
        self.rows = rows


def _num(x):
    if x is None:
        return None
    if isinstance(x, Fraction):
        return float(x)
    return x


def _fmt_cell(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, bool):
        return "x" if x else ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def render(report: Report, header: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps({"header": header, "body": report.body}, indent=2) + "\n"
    head = f"aggtreat {header['version']} {header['command']} " + json.dumps(header["config"], sort_keys=True)
    if "generated" in header:
        head += f" generated={header['generated']}"
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# {head}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(report.columns)
        for row in report.rows:
            w.writerow(["" if v is None else v for v in row])
        return buf.getvalue()
    lines = [f"<!-- {head} -->", "", "| " + " | ".join(report.columns) + " |",
             "|" + "|".join("---" for _ in report.columns) + "|"]
    for row in report.rows:
        lines.append("| " + " | ".join(_fmt_cell(v) for v in row) + " |")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ inputs

def _config(args) -> IngestConfig:
    if args.config:
        return read_config(args.config)
    if not args.subtreatments:
        raise ValidationError("give --config or --subtreatments")
    grid = GridSpec(args.resolution or 1.0, tuple(n.strip() for n in args.subtreatments.split(",")))
    return IngestConfig(grid, outcome=args.outcome)


def _data(args):
    if not args.input:
        raise ValidationError("an input CSV is required")
    return ingest(args.input, _config(args))


def _stats(args):
    if getattr(args, "table1_fixture", False):
        return table1_stats()
    return cell_stats(_data(args))


def _level(stats, value: float) -> int:
    d = stats.grid.quantize(value)
    if abs(float(stats.grid.to_original(d)) - value) > 1e-9:
        raise ValidationError(f"level {value} is not on the grid of step {stats.grid.resolution}")
    return d


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError as exc:
        raise ValidationError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


# ---------------------------------------------------------------- commands

def cmd_count(args) -> Report:
    if args.kind == "empirical":
        data = _data(args)
        rep = count_sets(marginal_sets(build_support(data)), data.K)
        rows = [[d, t, c, t - c] for d, t, c in rep.by_level]
        return Report(rep.as_dict(), ["d", "total", "congruent", "incongruent"], rows)
    counter = {"binary": count_binary, "trinary": count_trinary}[args.kind]
    series = congruent_fraction_series(args.k, args.kind)
    body = counter(args.k).as_dict()
    body["series"] = [{"K": K, "congruent_fraction": float(f), "incongruent_fraction": float(1 - f)}
                      for K, f in series]
    rows = [[s["K"], s["congruent_fraction"], s["incongruent_fraction"]] for s in body["series"]]
    return Report(body, ["K", "congruent_fraction", "incongruent_fraction"], rows)


def cmd_diagnose(args) -> Report:
    stats = _stats(args)
    rep = incongruency_report(stats)
    body = rep.as_dict(stats)
    diag = rep.diagnostic
    figure = [[_num(d), k, _num(m)] for d, k, m in diag.figure_rows(stats)]
    body["figure"] = [{"d": d, "subtreatment": k, "mean": m} for d, k, m in figure]
    if args.figure_data:
        with open(args.figure_data, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["d", "sub-treatment", "mean"])
            w.writerows(figure)
    rows = [[lv["d"], lv["minimal_share"], ";".join(f["subtreatment"] for f in lv["flags"])]
            for lv in body["levels"]]
    return Report(body, ["d", "minimal_share", "decreasing_means"], rows)


def cmd_weights(args) -> Report:
    stats = _stats(args)
    if args.level is None:
        levels = None
    else:
        levels = [_level(stats, args.level)]
    rep = incongruency_report(stats, levels)
    body = rep.as_dict(stats)
    if len(body["levels"]) == 1:
        body = {**body["levels"][0], "note": body["note"]}
    rows = []
    for lv in rep.levels:
        for (hi, lo), w in lv.scheme.entries.items():
            if w:
                rows.append([_num(stats.grid.to_original(lv.d)), fmt_vector(hi), fmt_vector(lo),
                             not is_congruent(hi, lo), float(w), float(lv.share)])
    return Report(body, ["d", "s_d", "s_d_minus_1", "incongruent", "weight", "minimal_share"], rows)


def cmd_decompose(args) -> Report:
    try:
        hi_text, lo_text = args.pair.split("|")
    except ValueError as exc:
        raise ValidationError("--pair must look like '1,1,0|0,0,1'") from exc
    hi, lo = parse_vector(hi_text), parse_vector(lo_text)
    support = build_support(_data(args)) if args.input else None
    if sum(hi) == sum(lo):
        dec = decompose_satt(hi, lo, support)
    else:
        dec = decompose_incongruent(hi, lo, args.mode, support)
    body = dec.as_dict()
    body["mode"] = args.mode
    rows = [[t.kind, fmt_vector(t.hi), fmt_vector(t.lo), t.sign] for t in dec.terms]
    return Report(body, ["kind", "hi", "lo", "sign"], rows)


def cmd_estimate(args) -> Report:
    data = _data(args)
    stats = cell_stats(data)
    rows_out = summary(stats)
    boot = {}
    if args.bootstrap:
        res = bootstrap(data, [(row.kind,) for row, _ in rows_out], args.bootstrap, _seed(args))
        boot = {r.kind: r for r in res}
    table, rows = [], []
    for row, e in rows_out:
        b = boot.get(row.kind)
        entry = {
            "panel": row.panel, "parameter": row.parameter, "estimate": _num(e.value),
            "se": None if b is None else b.se, "s_data": row.needs_s_data, "incongruity": row.incongruity,
            "note": e.note, "dropped_mass": float(e.dropped_mass),
        }
        if b is not None:
            entry["replicates_undefined"] = b.replicates_undefined
            entry["unreliable"] = b.unreliable
        table.append(entry)
        rows.append([row.panel, row.parameter, entry["estimate"], entry["se"], row.needs_s_data, row.incongruity])
    body = {"n": data.n, "parameters": table}
    if args.per_level:
        body["per_level"] = [
            {"d": _num(r["d"]), **{k: _num(v.value) for k, v in r.items() if k != "d"}} for r in per_level(stats)
        ]
    return Report(body, ["Panel", "Parameter", "Estimate", "SE", "S Data", "Incongruity"], rows)


def cmd_sutva(args) -> Report:
    data = _data(args)
    finer = None
    if args.finer:
        if not args.finer_config:
            raise ValidationError("--finer needs --finer-config")
        finer = ingest(args.finer, read_config(args.finer_config))
    rep = sutva_d_test(data, args.alpha, finer, "bonferroni" if args.bonferroni else "holm")
    grid = data.grid

    def group(g):
        return fmt_vector(g) if isinstance(g, tuple) else _num(grid.to_original(g))

    tests = [{"group": group(t.group), "a": fmt_vector(t.a), "b": fmt_vector(t.b), "n_a": t.n_a, "n_b": t.n_b,
              "diff": t.diff, "stat": t.stat, "p_raw": t.p_raw, "p_adj": t.p_adj} for t in rep.tests]
    body = {"alpha": rep.alpha, "method": rep.method, "reject": rep.reject, "tests": tests,
            "excluded": [fmt_vector(s) for s in rep.excluded], "note": rep.note}
    rows = [[t["group"], t["a"], t["b"], t["n_a"], t["n_b"], t["diff"], t["stat"], t["p_raw"], t["p_adj"]]
            for t in tests]
    return Report(body, ["group", "a", "b", "n_a", "n_b", "diff", "stat", "p_raw", "p_adj"], rows)


def cmd_simulate(args) -> Report:
    if bool(args.spec) == bool(args.fixture):
        raise ValidationError("give exactly one of --spec or --fixture")
    scenario = load_scenario(args.spec) if args.spec else fixture(args.fixture)
    seed = _seed(args)
    data, pop = generate(scenario, args.n, seed)
    truth = pop.truth()
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        data.to_csv(out)
        with open(out.with_suffix(".truth.json"), "w", encoding="utf-8") as fh:
            json.dump(truth, fh, indent=2)
            fh.write("\n")
    body = {"scenario": scenario.name, "n": args.n, "seed": seed, "out": args.out, "truth": truth}
    rows = [[c["s"], c["prob"], c["mean"], c["ATT"]] for c in truth["cells"]]
    return Report(body, ["s", "prob", "mean", "ATT"], rows)


COMMANDS = {
    "count": cmd_count, "diagnose": cmd_diagnose, "weights": cmd_weights, "decompose": cmd_decompose,
    "estimate": cmd_estimate, "sutva-test": cmd_sutva, "simulate": cmd_simulate,
}


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors: exit 1, leaving 2 for computation failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("json", "csv", "markdown"), default="json")
    common.add_argument("--output", "-o", help="write the report here instead of stdout")
    common.add_argument("--seed", type=int, default=None, help=f"random seed (default: ${SEED_ENV} or 0)")
    common.add_argument("--stamp", action="store_true", help="add a generation timestamp to the header")

    data = _Parser(add_help=False)
    data.add_argument("input", nargs="?", help="CSV with outcome and sub-treatment columns")
    data.add_argument("--config", help="TOML with resolution, subtreatments, outcome, aggregation")
    data.add_argument("--subtreatments", help="comma-separated sub-treatment column names")
    data.add_argument("--resolution", type=float, default=None, help="grid step (default 1)")
    data.add_argument("--outcome", default="y")

    p = _Parser(prog="aggtreat", description="Diagnostics and estimands for aggregated treatments.")
    p.add_argument("--version", action="version", version=f"aggtreat {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("count", parents=[common, data], help="count congruent and incongruent comparisons")
    c.add_argument("--kind", choices=("binary", "trinary", "empirical"), default="binary")
    c.add_argument("--k", type=int, default=8)

    for name, help_ in (("diagnose", "decreasing-mean flags and minimal incongruent shares"),
                        ("weights", "minimally incongruent weights")):
        s = sub.add_parser(name, parents=[common, data], help=help_)
        s.add_argument("--table1-fixture", action="store_true", help="use the embedded enrichment-hours marginals")
        if name == "weights":
            s.add_argument("--level", type=float, help="aggregate level in original units (default: all)")
        else:
            s.add_argument("--figure-data", help="write the stacked sub-treatment means CSV here")

    s = sub.add_parser("decompose", parents=[common, data], help="expand an incongruent contrast")
    s.add_argument("--pair", required=True, help="'hi|lo', e.g. '1,1,0|0,0,1'")
    s.add_argument("--mode", choices=MODES, default="satt_form")

    s = sub.add_parser("estimate", parents=[common, data], help="overall parameter estimates")
    s.add_argument("--all", action="store_true", help="report every overall parameter (the default)")
    s.add_argument("--per-level", action="store_true", help="also report per-level estimands")
    s.add_argument("--bootstrap", type=int, nargs="?", const=DEFAULT_B, default=0)

    s = sub.add_parser("sutva-test", parents=[common, data], help="equal-means test within aggregate levels")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--finer", help="CSV with a finer sub-treatment coding of the same units")
    s.add_argument("--finer-config", help="config for --finer")
    s.add_argument("--bonferroni", action="store_true")

    s = sub.add_parser("simulate", parents=[common], help="draw data from a latent-type scenario")
    s.add_argument("--spec", help="scenario TOML")
    s.add_argument("--fixture", choices=FIXTURES)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--out", help="data CSV; ground truth goes to <out>.truth.json")
    return p


def _echo(args) -> dict:
    skip = {"format", "output", "stamp", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.seed = _seed(args)
        report = COMMANDS[args.command](args)
        header = {"tool": "aggtreat", "version": __version__, "command": args.command, "config": _echo(args)}
        if args.stamp:
            header["generated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        text = render(report, header, args.format)
    except AggTreatError as exc:
        print(f"aggtreat {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"aggtreat {args.command}: error: {exc}", file=sys.stderr)
        return 1
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
