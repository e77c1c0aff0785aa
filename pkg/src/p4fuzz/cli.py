"""Command-line entry point: ``p4fuzz {instrument,analyze,fuzz,report}``.

Exit codes: 0 success, 1 diagnostics or bad configuration, 2 I/O errors,
3 a campaign found at least one assertion violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import build_dependency_graph, enumerate_parser_paths
from .errors import ConfigError, FrontendError, LayoutOverflow, NoTemplates, P4FuzzError
from .frontend import parse_assertions, parse_program
from .fuzz.campaign import prepare_campaign, run_campaign
from .fuzz.config import load_config
from .instrument import emit_instrumented_source, instrument_program, load_instrumented
from .report import CampaignReport

EXIT_OK, EXIT_DIAG, EXIT_IO, EXIT_VIOLATION = 0, 1, 2, 3


def _err(msg: str):
    print(f"p4fuzz: {msg}", file=sys.stderr)


def _diagnostics(exc: FrontendError):
    for d in exc.diagnostics:
        print(d, file=sys.stderr)


def _read(path: str) -> str:
    return Path(path).read_text()


def cmd_instrument(args) -> int:
    try:
        source = _read(args.source)
    except OSError as exc:
        _err(f"cannot read {args.source}: {exc.strerror or exc}")
        return EXIT_IO
    try:
        ir = parse_program(source)
        extra = parse_assertions(ir, args.assertion or [])
        iir = instrument_program(ir, list(ir.assertions) + extra, max_width=args.max_width)
        text = emit_instrumented_source(iir)
        if load_instrumented(text) != iir:
            _err("internal error: instrumented output does not re-parse to the same program")
            return EXIT_DIAG
    except FrontendError as exc:
        _diagnostics(exc)
        return EXIT_DIAG
    except LayoutOverflow as exc:
        _err(str(exc))
        return EXIT_DIAG
    src = Path(args.source)
    out = Path(args.output) if args.output else src.with_name(src.stem + ".fp4.p4")
    layout = Path(args.layout) if args.layout else out.with_suffix(".layout.json")
    try:
        out.write_text(text)
        layout.write_text(iir.layout.descriptor_json() + "\n")
    except OSError as exc:
        _err(f"cannot write output: {exc}")
        return EXIT_IO
    print(f"wrote {out} and {layout} ({iir.layout.width}-bit fp4 header, "
          f"{len(iir.layout.visited)} actions, {len(iir.layout.assertions)} assertions)")
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        source = _read(args.source)
    except OSError as exc:
        _err(f"cannot read {args.source}: {exc.strerror or exc}")
        return EXIT_IO
    try:
        ir = parse_program(source)
    except FrontendError as exc:
        _diagnostics(exc)
        return EXIT_DIAG
    templates = enumerate_parser_paths(ir, args.max_depth)
    graph = build_dependency_graph(ir)
    print(f"# {len(templates)} seed templates")
    for i, t in enumerate(templates):
        cons = ", ".join(f"{r}={v:#x}" for r, v in t.constrained)
        print(f"template {i}: {' -> '.join(t.headers) or '(no headers)'}  [{t.length} bytes]"
              + (f"  constrained: {cons}" if cons else ""))
    print(f"# dependency graph: {len(graph.edge_list())} edges")
    sys.stdout.write(graph.to_dot())
    return EXIT_OK


def _apply_overrides(settings, args):
    seed = settings.seed
    env = os.environ.get("FP4_SEED")
    if env is not None:
        try:
            seed = int(env, 0)
        except ValueError:
            raise ConfigError(f"FP4_SEED must be an integer, got {env!r}") from None
    if args.seed is not None:
        seed = args.seed
    changes = {"seed": seed}
    if args.iterations is not None:
        changes["iterations"] = args.iterations
    if args.time_budget is not None:
        changes["time_budget"] = args.time_budget
    if args.stop_on_violation:
        changes["stop_on_violation"] = True
    if args.report:
        changes["report"] = args.report
    if args.csv:
        changes["coverage_csv"] = args.csv
    settings = replace(settings, **changes)
    if args.deterministic:
        # a wall-clock budget would make the stopping point timing dependent
        if settings.iterations is None:
            raise ConfigError("--deterministic needs an iteration budget")
        settings = replace(settings, time_budget=None)
    return settings.validate()


def cmd_fuzz(args) -> int:
    try:
        settings = _apply_overrides(load_config(args.config), args)
    except OSError as exc:
        _err(f"cannot read {args.config}: {exc.strerror or exc}")
        return EXIT_IO
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_DIAG
    try:
        campaign = prepare_campaign(settings)
    except OSError as exc:
        _err(f"cannot read {exc.filename}: {exc.strerror or exc}")
        return EXIT_IO
    except FrontendError as exc:
        _diagnostics(exc)
        return EXIT_DIAG
    except (ConfigError, LayoutOverflow, P4FuzzError) as exc:
        _err(str(exc))
        return EXIT_DIAG
    try:
        stats = run_campaign(campaign.iir, campaign.config, campaign.settings, script=campaign.cp_script)
    except NoTemplates as exc:
        _err(str(exc))
        return EXIT_DIAG
    report = CampaignReport.build(stats, program=settings.program or "", source=campaign.source,
                                  config=settings.to_dict(), layout=campaign.iir.layout.descriptor())
    cfg = Path(args.config)
    report_path = Path(settings.report) if settings.report else cfg.with_suffix(".report.json")
    csv_path = Path(settings.coverage_csv) if settings.coverage_csv else cfg.with_suffix(".coverage.csv")
    try:
        report_path.write_text(report.to_json())
        csv_path.write_text(stats.coverage_csv())
    except OSError as exc:
        _err(f"cannot write report: {exc}")
        return EXIT_IO
    if not args.quiet:
        print(report.summary())
        print(f"report: {report_path}\ncoverage log: {csv_path}")
    return EXIT_VIOLATION if stats.violations else EXIT_OK


def cmd_report(args) -> int:
    try:
        text = _read(args.report)
    except OSError as exc:
        _err(f"cannot read {args.report}: {exc.strerror or exc}")
        return EXIT_IO
    try:
        report = CampaignReport.from_json(text)
    except (ValueError, TypeError) as exc:
        _err(f"not a campaign report: {exc}")
        return EXIT_DIAG
    if args.json:
        print(json.dumps(report.comparable() if args.no_wall_clock else report.to_dict(),
                         indent=2, sort_keys=True))
    else:
        print(report.summary())
    return EXIT_VIOLATION if report.violations else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="p4fuzz", description="Coverage-guided fuzzing of P4-14 programs.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("instrument", help="add coverage and assertion bits to a program")
    s.add_argument("source")
    s.add_argument("-o", "--output", help="instrumented source (default: <source>.fp4.p4)")
    s.add_argument("--layout", help="layout descriptor JSON (default: <output>.layout.json)")
    s.add_argument("--assert", dest="assertion", action="append", metavar="EXPR",
                   help="extra assertion, e.g. 'assert ttl_ok(ipv4.ttl != 0)' (repeatable)")
    s.add_argument("--max-width", type=int, default=512, help="maximum fp4 header width in bits")
    s.set_defaults(func=cmd_instrument)

    s = sub.add_parser("analyze", help="print seed templates and the dependency graph")
    s.add_argument("source")
    s.add_argument("--max-depth", type=int, default=4, help="per-state visit bound for parser loops")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("fuzz", help="run a campaign described by a config file")
    s.add_argument("config")
    s.add_argument("--deterministic", action="store_true",
                   help="fixed seed, iteration budget only, single worker")
    s.add_argument("--seed", type=int, help="RNG seed (overrides FP4_SEED and the config)")
    s.add_argument("--iterations", type=int)
    s.add_argument("--time-budget", type=float, metavar="SECONDS")
    s.add_argument("--stop-on-violation", action="store_true")
    s.add_argument("--report", help="report JSON path")
    s.add_argument("--csv", help="coverage-over-time CSV path")
    s.add_argument("-q", "--quiet", action="store_true")
    s.set_defaults(func=cmd_fuzz)

    s = sub.add_parser("report", help="summarise a saved campaign report")
    s.add_argument("report")
    s.add_argument("--json", action="store_true", help="print the normalised JSON instead")
    s.add_argument("--no-wall-clock", action="store_true", help="with --json, drop timing fields")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
