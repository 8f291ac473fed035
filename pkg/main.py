#!/usr/bin/env python3
"""CLI entrypoint for the GDPR compliance threat modeller."""
import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from src.config import LOG_LEVEL, MAX_WORKERS
from src.diagram import Diagram, validate_diagram
from src.engine import check_packs, explain_threat, run_inference
from src.errors import (
    Diagnostic,
    ExtractionError,
    GdprtmError,
    InferenceError,
    PackNotFoundError,
    ParseError,
    has_errors,
)
from src.facts import extract_facts
from src.loader import load_diagram, resolve_packs
from src.report import FORMATS, Report, build_report, render, render_explanations, render_rule_listing, report_to_dict
from src.rules import RulePack, lint_rulepack, rule_element, validate_load_set

logger = logging.getLogger("gdprtm")

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_INVALID = 2
EXIT_FINDINGS = 3

# parse/load failures outrank validation failures, which outrank findings
_EXIT_RANK = {EXIT_OK: 0, EXIT_FINDINGS: 1, EXIT_INVALID: 2, EXIT_PARSE: 3}


def combine_exit(codes: list[int]) -> int:
    return max(codes, key=_EXIT_RANK.__getitem__, default=EXIT_OK)


@dataclass
class Outcome:
    """Result of running one diagram through the pipeline."""

    path: str
    status: int
    messages: list[str] = field(default_factory=list)
    report: Report | None = None


def _emit(messages: list[str]) -> None:
    for message in messages:
        print(message, file=sys.stderr)


def _format_all(diagnostics: list[Diagnostic], path: str) -> list[str]:
    return [d.format(path) for d in diagnostics]


def _io_error(path: str, exc: OSError) -> str:
    head = f"{path}: " if path else ""
    return f"{head}error E_IO: {exc.strerror or exc}"


def _format_pack_diagnostics(diagnostics: list[Diagnostic], packs: list[RulePack]) -> list[str]:
    """Rule diagnostics are located in the file their pack was read from."""
    sources = {rule_element(r): p.source for p in packs if p.source for r in p.rules}
    return [d.format(sources.get(d.element, d.element)) for d in diagnostics]


def _load_checked(path: str) -> tuple[Diagram | None, Outcome]:
    """Parse and validate; the diagram is None when either step failed."""
    try:
        d = load_diagram(path)
    except ParseError as exc:
        return None, Outcome(path, EXIT_PARSE, [exc.to_diagnostic().format(exc.path or path)])
    except OSError as exc:
        return None, Outcome(path, EXIT_PARSE, [_io_error(path, exc)])
    diagnostics = validate_diagram(d)
    outcome = Outcome(path, EXIT_OK, _format_all(diagnostics, path))
    if has_errors(diagnostics):
        outcome.status = EXIT_INVALID
        return None, outcome
    return d, outcome


def analyze_diagram(path: str, packs: list[RulePack], goal: str | None, fail_on_findings: bool) -> Outcome:
    d, outcome = _load_checked(path)
    if d is None:
        return outcome
    try:
        fb = extract_facts(d)
        findings = run_inference(packs, d, fb, goal)
    except ExtractionError as exc:
        outcome.messages.extend(_format_all(exc.diagnostics, path))
        outcome.status = EXIT_INVALID
        return outcome
    except InferenceError as exc:
        outcome.messages.append(f"{path}: error {exc.code}: {exc.message}")
        outcome.status = EXIT_INVALID
        return outcome
    logger.info("%s: %d finding(s)", path, len(findings))
    outcome.report = build_report(d, findings, packs, Path(path).stem)
    if fail_on_findings and findings:
        outcome.status = EXIT_FINDINGS
    return outcome


def _load_packs(args: argparse.Namespace) -> list[RulePack]:
    packs = resolve_packs(args.rules, use_defaults=not args.no_default_rules, only=args.pack)
    if not packs:
        raise PackNotFoundError("no rule packs loaded")
    return packs


def _pack_error(exc: GdprtmError | OSError) -> int:
    if isinstance(exc, OSError):
        print(_io_error(str(exc.filename or ""), exc), file=sys.stderr)
    elif isinstance(exc, ParseError):
        print(exc.to_diagnostic().format(exc.path), file=sys.stderr)
    else:
        print(f"error {exc.code}: {exc.message}", file=sys.stderr)
    return EXIT_PARSE


def _resolve_format(args: argparse.Namespace) -> str:
    if args.format:
        return args.format
    if args.output is None and sys.stdout.isatty():
        return "markdown"
    return "json"


def _write(text: str, output: str | None) -> int:
    if not output:
        sys.stdout.write(text)
        return EXIT_OK
    try:
        Path(output).write_text(text, encoding="utf-8")
    except OSError as exc:
        print(_io_error(output, exc), file=sys.stderr)
        return EXIT_PARSE
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        packs = _load_packs(args)
    except (ParseError, PackNotFoundError, OSError) as exc:
        return _pack_error(exc)
    try:
        check_packs(packs)
    except InferenceError as exc:
        _emit(_format_pack_diagnostics(exc.diagnostics, packs))
        return EXIT_INVALID

    paths = args.diagram
    workers = max(1, min(MAX_WORKERS, len(paths)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(lambda p: analyze_diagram(p, packs, args.goal, args.fail_on_findings), paths))

    for outcome in outcomes:
        _emit(outcome.messages)
    statuses = [o.status for o in outcomes]
    reports = [o.report for o in outcomes if o.report is not None]
    fmt = _resolve_format(args)
    if len(paths) == 1 and reports:
        statuses.append(_write(render(reports[0], fmt), args.output))
    elif reports:
        if fmt == "json":
            text = json.dumps([report_to_dict(r) for r in reports], indent=2, ensure_ascii=False) + "\n"
        else:
            text = "\n".join(render(r, fmt) for r in reports)
        statuses.append(_write(text, args.output))
    return combine_exit(statuses)


def cmd_validate(args: argparse.Namespace) -> int:
    statuses = []
    for path in args.diagram:
        _, outcome = _load_checked(path)
        _emit(outcome.messages)
        statuses.append(outcome.status)
    return combine_exit(statuses)


def cmd_rules(args: argparse.Namespace) -> int:
    try:
        packs = _load_packs(args)
    except (ParseError, PackNotFoundError, OSError) as exc:
        return _pack_error(exc)
    sys.stdout.write(render_rule_listing(packs))
    status = EXIT_OK
    if args.lint:
        diagnostics = validate_load_set(packs)
        for pack in packs:
            diagnostics.extend(lint_rulepack(pack))
        _emit(_format_pack_diagnostics(diagnostics, packs))
        if has_errors(diagnostics):
            status = EXIT_INVALID
    return status


def cmd_explain(args: argparse.Namespace) -> int:
    try:
        packs = _load_packs(args)
    except (ParseError, PackNotFoundError, OSError) as exc:
        return _pack_error(exc)
    path = args.diagram
    d, outcome = _load_checked(path)
    _emit(outcome.messages)
    if d is None:
        return outcome.status
    try:
        explanations = explain_threat(packs, d, extract_facts(d), args.threat)
    except ExtractionError as exc:
        _emit(_format_all(exc.diagnostics, path))
        return EXIT_INVALID
    except InferenceError as exc:
        _emit(_format_pack_diagnostics(exc.diagnostics, packs) or [f"{path}: error {exc.code}: {exc.message}"])
        return EXIT_INVALID
    return _write(render_explanations(explanations, args.threat), args.output)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--log-level",
        default=None,
        help=f"Logging level for standard error (default: GDPRTM_LOG_LEVEL or {LOG_LEVEL}).",
    )
    packs = argparse.ArgumentParser(add_help=False)
    packs.add_argument(
        "--rules",
        action="append",
        default=[],
        help="Extra .rules file or directory of .rules files (repeatable).",
    )
    packs.add_argument(
        "--no-default-rules",
        action="store_true",
        help="Do not load the bundled packs or GDPRTM_RULES_PATH; use only --rules.",
    )
    packs.add_argument(
        "--pack",
        action="append",
        default=None,
        help="Keep only the named pack(s) from the load set (repeatable).",
    )
    output = argparse.ArgumentParser(add_help=False)
    output.add_argument("-o", "--output", default=None, help="Write to this file instead of standard output.")

    parser = argparse.ArgumentParser(
        description="GDPR compliance threat modeller: infer non-compliance threats from a GDPR-annotated data-flow diagram."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", parents=[common, packs, output], help="Run the rules and produce a threat report.")
    analyze.add_argument("-d", "--diagram", action="append", required=True, help="Path to a .dfd file (repeatable).")
    analyze.add_argument("--goal", default=None, help="Only evaluate rules concluding this threat type.")
    analyze.add_argument(
        "-f",
        "--format",
        choices=FORMATS,
        default=None,
        help="Report format (default: markdown on a terminal, json otherwise).",
    )
    analyze.add_argument("--fail-on-findings", action="store_true", help="Exit with status 3 when any threat is found.")
    analyze.set_defaults(handler=cmd_analyze)

    validate = sub.add_parser("validate", parents=[common], help="Parse and validate diagrams only.")
    validate.add_argument("-d", "--diagram", action="append", required=True, help="Path to a .dfd file (repeatable).")
    validate.set_defaults(handler=cmd_validate)

    rules = sub.add_parser("rules", parents=[common, packs], help="List the loaded rules.")
    rules.add_argument("--lint", action="store_true", help="Also print validation diagnostics and lint notes.")
    rules.set_defaults(handler=cmd_rules)

    explain = sub.add_parser("explain", parents=[common, packs, output], help="Trace why a threat did or did not fire.")
    explain.add_argument("-d", "--diagram", required=True, help="Path to a .dfd file.")
    explain.add_argument("-t", "--threat", required=True, help="Threat type to explain, e.g. non-accountability.")
    explain.set_defaults(handler=cmd_explain)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (args.log_level or LOG_LEVEL).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
