"""Command-line interface: ``upr-audit <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from upr_audit import __version__
from upr_audit.baseline import Finding, match_syntax, partition, run_taint
from upr_audit.cfront.anonymize import anonymize_many
from upr_audit.cfront.lower import LoweringError
from upr_audit.cfront.parse import CSyntaxError
from upr_audit.dot import to_dot
from upr_audit.keys import VariableKey
from upr_audit.pipeline import (
    DEFAULT_LAMBDA, DEFAULT_THRESHOLD, AnalysisError, ConfigError, RunConfig, analyze,
    histogram, load_units, rate_statements, read_analysis, run_pipeline, score_from_dir,
    write_analysis, write_report,
)
from upr_audit.rater import RatingFailure, TransportError, load_ratings, write_ratings
from upr_audit.scorer import DomainError, UPRReport

logger = logging.getLogger("upr_audit")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ANALYSIS = 2
EXIT_PROVIDER = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# flag name -> RunConfig field, for flags that may also come from --config
_OVERRIDES = {
    "provider": "provider", "profile": "profile", "lam": "lam", "threshold": "threshold",
    "cache": "cache_path", "max_inflight": "max_inflight", "transcript": "transcript",
    "record": "record", "extra_sink": "extra_sinks", "latency": "latency",
}


def _run_options() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("run configuration (flags override --config)")
    g.add_argument("--config", type=Path, help="JSON file with RunConfig fields")
    g.add_argument("--provider", choices=["llm", "mock", "replay"], help="statement rater (default: mock)")
    g.add_argument("--profile", choices=["full", "partial", "none"], help="prompt profile (default: full)")
    g.add_argument("--lambda", dest="lam", type=float, metavar="L",
                   help=f"weight of the best neighbour rating, in [0,1] (default: {DEFAULT_LAMBDA})")
    g.add_argument("--threshold", type=float, metavar="T",
                   help=f"candidate cut-off score, in [0,10] (default: {DEFAULT_THRESHOLD})")
    g.add_argument("--cache", help="rating cache file (JSON lines)")
    g.add_argument("--max-inflight", type=int, metavar="N", help="concurrent rating requests (default: 1)")
    g.add_argument("--transcript", help="recorded transcript for --provider replay")
    g.add_argument("--record", help="append every prompt and reply to this transcript file")
    g.add_argument("--base-url", help="chat-completions endpoint for --provider llm")
    g.add_argument("--model", help="model id for --provider llm")
    g.add_argument("--latency", type=float, help=argparse.SUPPRESS)
    g.add_argument("--extra-sink", action="append", metavar="NAME",
                   help="additional taint sink callee (repeatable)")
    return p


def build_config(args, sources=()) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
    cfg = RunConfig.from_dict(data)
    for flag, attr in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, attr, value)
    endpoint = dict(cfg.endpoint)
    if getattr(args, "base_url", None):
        endpoint["base_url"] = args.base_url
    if getattr(args, "model", None):
        endpoint["model"] = args.model
    cfg.endpoint = endpoint
    if sources:
        cfg.sources = list(sources)
    cfg.validate()
    return cfg


def _write_or_print(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dumps(data) -> str:
    return json.dumps(data, indent=2, ensure_ascii=False, sort_keys=True) + "\n"


def _report_summary(report: UPRReport) -> str:
    m = report.meta
    return (f"{m['variables']} variables, {m['candidates']} candidates at threshold "
            f"{m['threshold']} (lambda {m['lambda']}); {m['flagged_statements']} flagged, "
            f"{len(m.get('skipped', []))} functions skipped")


def _strict_check(args, errors) -> None:
    if getattr(args, "strict", False) and errors:
        raise AnalysisError(f"{len(errors)} function(s) could not be analyzed")


# -- commands ----------------------------------------------------------------

def cmd_analyze(args) -> int:
    analysis = analyze(args.files)
    _strict_check(args, analysis.errors)
    out = Path(args.out)
    write_analysis(analysis, out)
    print(f"{len(analysis.functions)} functions, {len(analysis.variables)} variables, "
          f"{len(analysis.statements)} unique statements -> {out}")
    return EXIT_OK


def cmd_rate(args) -> int:
    cfg = build_config(args)
    out = Path(args.out)
    _, _, statements, _ = read_analysis(out)
    ratings = rate_statements(cfg, statements)
    write_ratings(ratings, out / "ratings.jsonl")
    flagged = sum(r.flagged for r in ratings.values())
    print(f"{len(ratings)} statements rated ({flagged} flagged) -> {out / 'ratings.jsonl'}")
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = build_config(args)
    out = Path(args.out)
    report = score_from_dir(out, cfg.lam, cfg.threshold, args.ratings)
    ratings = load_ratings(args.ratings or out / "ratings.jsonl")
    write_report(report, out, not args.no_figures, ratings)
    print(_report_summary(report))
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = build_config(args, args.files)
    report = run_pipeline(cfg, args.out, figures=not args.no_figures)
    _strict_check(args, report.meta.get("skipped"))
    print(_report_summary(report))
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = build_config(args)
    analysis = analyze(args.files)
    findings = match_syntax([fa.fn for fa in analysis.functions])
    for fa in analysis.functions:
        findings.extend(run_taint(fa, cfg.extra_sinks))
    data = {
        "findings": [f.to_json() for f in findings],
        "variables": sorted({str(f.variable) for f in findings}),
        "skipped": analysis.errors,
    }
    _write_or_print(_dumps(data), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        report = UPRReport.from_json(json.loads(Path(args.report).read_text(encoding="utf-8")))
        raw = json.loads(Path(args.baseline).read_text(encoding="utf-8"))
        findings = [Finding.from_json(f) for f in raw["findings"]]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read inputs: {exc}") from None
    part = partition(report.candidates, findings)
    _write_or_print(_dumps(part.to_json()), args.out)
    print(part.summary(), file=sys.stdout if args.out else sys.stderr)
    return EXIT_OK


def cmd_histogram(args) -> int:
    if args.counts:
        try:
            raw = json.loads(Path(args.counts).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"{args.counts}: {exc}") from None
        counts = raw["counts"] if isinstance(raw, dict) else raw
        values = [r for r, n in enumerate(counts) for _ in range(n)]
        if len(counts) != 11:
            raise UsageError("counts file must hold 11 numbers for ratings 0..10")
        buckets = histogram(values)
    else:
        buckets = histogram(load_ratings(args.ratings))
    if args.plot:
        from upr_audit.plots import plot_rating_histogram
        plot_rating_histogram(buckets.counts, args.plot)
    sys.stdout.write(_dumps(buckets.to_json()))
    return EXIT_OK


def cmd_anonymize(args) -> int:
    units = load_units(args.files)
    renamed, mapping = anonymize_many(units, args.seed, args.rename_all)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = [Path(u.path).name for u in units]
    if len(set(names)) != len(names):
        raise UsageError("input files must have distinct base names")
    for name, unit in zip(names, renamed):
        (out / name).write_text(unit.text, encoding="utf-8")
    (out / "rename_map.json").write_text(mapping.dumps(), encoding="utf-8")
    print(f"{len(mapping.pairs)} identifiers renamed -> {out}")
    return EXIT_OK


def cmd_dot(args) -> int:
    analysis = analyze(args.files)
    pdgs = analysis.pdgs
    if args.function not in pdgs:
        raise UsageError(f"no analyzed function named {args.function!r}; "
                         f"have {', '.join(sorted(pdgs)) or 'none'}")
    pdg = pdgs[args.function]
    sg = None
    if args.variable:
        key = VariableKey.parse(args.variable) if ":" in args.variable \
            else VariableKey(args.function, args.variable)
        matches = [s for s in analysis.subgraphs if s.function == args.function and s.variable == key]
        if not matches:
            raise UsageError(f"no variable {args.variable!r} in {args.function}")
        sg = matches[0]
    scores = None
    if args.ratings:
        ratings = load_ratings(args.ratings)
        scores = {s.id: ratings[s.norm_text].value for s in pdg.nodes if s.norm_text in ratings}
    _write_or_print(to_dot(pdg, sg, scores), args.out)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    run = _run_options()
    parser = _Parser(prog="upr-audit",
                     description="Score C variables for relevance to user privileges.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="build PDGs, subgraphs and the statement set")
    p.add_argument("files", nargs="*")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--strict", action="store_true", help="fail if any function is skipped")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("rate", parents=[run], help="rate the statements of an analyzed directory")
    p.add_argument("--out", default="out", help="analysis directory (default: out)")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("score", parents=[run], help="score and rank variables from ratings")
    p.add_argument("--out", default="out", help="analysis directory (default: out)")
    p.add_argument("--ratings", help="ratings file (default: <out>/ratings.jsonl)")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", parents=[run], help="run every stage and write the report")
    p.add_argument("files", nargs="*")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--strict", action="store_true", help="fail if any function is skipped")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("baseline", parents=[run], help="keyword and taint heuristics")
    p.add_argument("files", nargs="*")
    p.add_argument("--out", help="write findings JSON here instead of stdout")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("compare", help="partition report candidates against baseline findings")
    p.add_argument("--report", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--out", help="write the partition JSON here instead of stdout")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("histogram", help="rating distribution and its low/mid/high groups")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--ratings", help="ratings file (JSON lines)")
    src.add_argument("--counts", help="JSON list (or {'counts': [...]}) of 11 counts")
    p.add_argument("--plot", help="also write a bar chart to this PNG")
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("anonymize", help="consistently rename user identifiers")
    p.add_argument("files", nargs="+")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--rename-all", action="store_true", help="rename standard library names too")
    p.add_argument("--out", default="anon", help="output directory (default: anon)")
    p.set_defaults(func=cmd_anonymize)

    p = sub.add_parser("dot", help="Graphviz view of a function PDG or variable subgraph")
    p.add_argument("files", nargs="+")
    p.add_argument("--function", required=True)
    p.add_argument("--variable", help="name, or function:name (GLOBAL:name for globals)")
    p.add_argument("--ratings", help="annotate nodes with ratings from this file")
    p.add_argument("--out", help="write DOT here instead of stdout")
    p.set_defaults(func=cmd_dot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"upr-audit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AnalysisError, DomainError, LoweringError, CSyntaxError, OSError) as exc:
        print(f"upr-audit: analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except (TransportError, RatingFailure) as exc:
        print(f"upr-audit: provider failure: {exc}", file=sys.stderr)
        return EXIT_PROVIDER


if __name__ == "__main__":
    sys.exit(main())
