"""Threat report: threat-by-entity source matrix, JSON and Markdown rendering."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

from . import __version__
from .diagram import BoundaryKind, Diagram
from .engine import Explanation, ThreatFinding, TraceEntry
from .rules import RulePack

MARK = "×"
FORMATS = ("json", "markdown")


@dataclass(frozen=True)
class Report:
    diagram_name: str
    pack_names: tuple[str, ...]
    findings: tuple[ThreatFinding, ...]
    matrix: dict[str, dict[str, bool]]
    summary: dict[str, int]
    boundaries: tuple[tuple[str, str, tuple[str, ...]], ...] = ()
    tool_version: str = __version__

    @property
    def entity_ids(self) -> list[str]:
        first = next(iter(self.matrix.values()), {})
        return list(first)

    def mark_count(self) -> int:
        return sum(marked for row in self.matrix.values() for marked in row.values())


def build_report(
    d: Diagram,
    findings: list[ThreatFinding],
    packs: list[RulePack],
    diagram_name: str = "diagram",
) -> Report:
    """Matrix rows: every threat type the packs conclude; columns: every entity in id order."""
    threat_types = sorted({t for p in packs for t in p.threat_types()} | {f.threat_type for f in findings})
    entity_ids = d.sorted_entity_ids()
    matrix = {t: {e: False for e in entity_ids} for t in threat_types}
    summary = {t: 0 for t in threat_types}
    for finding in findings:
        summary[finding.threat_type] += 1
        for source in finding.sources:
            matrix[finding.threat_type][source] = True
    boundaries = tuple(
        (b.id, b.kind.value, tuple(sorted(b.members)))
        for b in sorted(d.boundaries, key=lambda b: b.id)
    )
    return Report(
        diagram_name=diagram_name,
        pack_names=tuple(p.name for p in packs),
        findings=tuple(findings),
        matrix=matrix,
        summary=summary,
        boundaries=boundaries,
    )


def _trace_dict(entry: TraceEntry) -> dict[str, Any]:
    return {
        "part": entry.part,
        "atom": str(entry.atom),
        "value": entry.value,
        "fact": str(entry.fact) if entry.fact else None,
    }


def report_to_dict(r: Report) -> dict[str, Any]:
    """Serializable projection; key order is part of the JSON contract."""
    return {
        "diagram": r.diagram_name,
        "packs": list(r.pack_names),
        "tool_version": r.tool_version,
        "summary": dict(r.summary),
        "matrix": {t: dict(row) for t, row in r.matrix.items()},
        "boundaries": [
            {"id": bid, "kind": kind, "members": list(members)} for bid, kind, members in r.boundaries
        ],
        "findings": [
            {
                "type": f.threat_type,
                "rule_id": f.rule_id,
                "severity": f.severity,
                "binding": f.binding.as_dict(),
                "sources": list(f.sources),
                "trace": [_trace_dict(entry) for entry in f.trace],
            }
            for f in r.findings
        ],
    }


def _md_cell(text: str) -> str:
    return text.replace("|", "\\|")


def _render_markdown(r: Report) -> str:
    md = [f"# GDPR Compliance Threat Report: {r.diagram_name}", ""]
    md.append(f"- Rule packs: {', '.join(r.pack_names) or 'none'}")
    md.append(f"- Tool version: {r.tool_version}")
    md.append(f"- Findings: {len(r.findings)}")
    md.append("")

    md.append("## Summary")
    md.append("")
    md.append("| Threat type | Findings |")
    md.append("|---|---|")
    for threat, count in r.summary.items():
        md.append(f"| {_md_cell(threat)} | {count} |")
    md.append("")

    md.append("## Threats and Sources of Threats")
    md.append("")
    entities = r.entity_ids
    md.append("| Threat type | " + " | ".join(entities) + " |" if entities else "| Threat type |")
    md.append("|---|" + "---|" * len(entities))
    for threat, row in r.matrix.items():
        cells = [MARK if row[e] else " " for e in entities]
        md.append(f"| {_md_cell(threat)} | " + " | ".join(cells) + " |" if cells else f"| {_md_cell(threat)} |")
    md.append("")

    compliance = [b for b in r.boundaries if b[1] == BoundaryKind.COMPLIANCE.value]
    if compliance:
        md.append("## Compliance Boundaries")
        md.append("")
        for bid, _, members in compliance:
            md.append(f"- {bid}: {', '.join(members)}")
        md.append("")

    md.append("## Findings")
    md.append("")
    if not r.findings:
        md.append("No threats found.")
        md.append("")
    for i, f in enumerate(r.findings, 1):
        md.append(f"### {i}. {f.threat_type} (rule `{f.rule_id}`)")
        md.append("")
        md.append(f"- Binding: {f.binding}")
        md.append(f"- Sources: {', '.join(f.sources) or 'none'}")
        md.append(f"- Severity: {f.severity}")
        md.append("")
        md.append("| Part | Atom | Value | Fact |")
        md.append("|---|---|---|---|")
        for entry in f.trace:
            fact = f"`{entry.fact}`" if entry.fact else "absent"
            md.append(f"| {entry.part} | `{entry.atom}` | {str(entry.value).lower()} | {fact} |")
        md.append("")
    return "\n".join(md)


def render(r: Report, format: str) -> str:
    if format == "json":
        return json.dumps(report_to_dict(r), indent=2, ensure_ascii=False) + "\n"
    if format == "markdown":
        return _render_markdown(r)
    raise ValueError(f"unknown report format {format!r}; choose one of {', '.join(FORMATS)}")


def _trace_line(entry: TraceEntry) -> str:
    fact = str(entry.fact) if entry.fact else "absent"
    return f"  {entry.part:<7} {entry.atom} = {str(entry.value).lower()}  [{fact}]"


def render_explanations(explanations: list[Explanation], threat_type: str) -> str:
    lines = [f"Threat {threat_type}"]
    for ex in explanations:
        head = f"rule {ex.rule.id} ({ex.rule.pack})"
        if ex.binding is None:
            missing = ", ".join(ex.rule.role_tokens)
            lines.append(f"{head}: no candidate bindings for roles {missing}")
            continue
        if ex.fired:
            lines.append(f"{head} [{ex.binding}]: fired, sources {', '.join(ex.sources) or 'none'}")
            lines.extend(_trace_line(entry) for entry in ex.trace)
        else:
            lines.append(f"{head} [{ex.binding}]: not fired")
            if ex.failed is not None:
                lines.append("  failed at:")
                lines.append(_trace_line(ex.failed))
    return "\n".join(lines) + "\n"


def render_rule_listing(packs: list[RulePack]) -> str:
    """One tab-separated line per rule: id, stratum, conclusion, pack."""
    lines = [
        f"{rule.id}\t{rule.stratum.value}\t{rule.conclusion}\t{pack.name}"
        for pack in packs
        for rule in pack.rules
    ]
    return "".join(line + "\n" for line in lines)
