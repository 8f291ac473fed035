"""Textual `.dfd` format: parse and canonical serialization.

One statement per line:

    entity <id> kind=<external|process|datastore> [roles=<R>[,<R>]*] [label="..."] [: ann[, ann]*]
    store <id> [label="..."] [: ann[, ann]*]
    boundary <id> kind=<generic|compliance> { <id> <id> ... }
    flow <src> -> <dst> [id=<id>] [: ann[, ann]*]

`#` starts a comment. Annotation aliases (CP, CRFP) are expanded while parsing.
"""
from __future__ import annotations

import logging

from .diagram import BoundaryKind, Diagram, Entity, EntityKind, Flow, TrustBoundary
from .errors import ParseError, SourceSpan
from .syntax import ARROW, EOF, IDENT, NEWLINE, STRING, Cursor, Token, decode, quote, tokenize
from .vocabulary import ANNOTATIONS, GdprRole, expand_alias

logger = logging.getLogger(__name__)

_KINDS = {
    "external": EntityKind.EXTERNAL,
    "externalentity": EntityKind.EXTERNAL,
    "process": EntityKind.PROCESS,
    "datastore": EntityKind.DATASTORE,
}
_BOUNDARY_KINDS = {"generic": BoundaryKind.GENERIC, "compliance": BoundaryKind.COMPLIANCE}


def _line_span(start: Token, end: Token) -> SourceSpan:
    if end.span.line != start.span.line:
        return SourceSpan(start.span.line, start.span.column, 0)
    return SourceSpan(start.span.line, start.span.column, end.span.column + end.span.length - start.span.column)


class _DfdParser:
    def __init__(self, tokens: list[Token]) -> None:
        self.cur = Cursor(tokens)
        self.entities: list[Entity] = []
        self.boundaries: list[TrustBoundary] = []
        # (explicit id or None, source, target, annotations, span)
        self.flows: list[tuple[str | None, str, str, tuple[str, ...], SourceSpan]] = []

    def parse(self) -> Diagram:
        cur = self.cur
        while True:
            cur.skip_newlines()
            if cur.at_end():
                break
            keyword = cur.current
            if keyword.is_word("entity"):
                self._entity(datastore=False)
            elif keyword.is_word("store"):
                self._entity(datastore=True)
            elif keyword.is_word("boundary"):
                self._boundary()
            elif keyword.is_word("flow"):
                self._flow()
            else:
                raise cur.error(
                    "unknown statement",
                    ("entity", "store", "boundary", "flow"),
                    code="E_UNKNOWN_KEYWORD" if keyword.kind == IDENT else None,
                )
        return Diagram(tuple(self.entities), self._assign_flow_ids(), tuple(self.boundaries))

    def _attributes(self, allowed: tuple[str, ...]) -> dict[str, tuple[Token, object]]:
        cur = self.cur
        attrs: dict[str, tuple[Token, object]] = {}
        while cur.current.kind == IDENT and cur.peek().is_punct("="):
            key_tok = cur.advance()
            key = key_tok.text.casefold()
            if key not in allowed:
                raise cur.error("unknown attribute", tuple(f"{a}=" for a in allowed), "E_UNKNOWN_KEYWORD", key_tok)
            if key in attrs:
                raise cur.error("repeated attribute", (), None, key_tok)
            cur.advance()
            attrs[key] = (key_tok, self._attribute_value(key))
        return attrs

    def _attribute_value(self, key: str) -> object:
        cur = self.cur
        if key == "kind":
            tok = cur.expect_ident("kind")
            return tok
        if key == "label":
            if cur.current.kind != STRING:
                raise cur.error("expected quoted label", ('"label"',))
            return cur.advance().text
        if key == "id":
            return cur.expect_ident("flow id").text
        # roles
        roles: set[GdprRole] = set()
        while True:
            tok = cur.expect_ident("GDPR role")
            try:
                roles.add(GdprRole.parse(tok.text))
            except ValueError:
                raise cur.error("unknown GDPR role", ("DS", "DC", "DP", "SA", "RM"), "E_UNKNOWN_ROLE", tok) from None
            if not cur.accept_punct(","):
                return frozenset(roles)

    def _annotations(self) -> tuple[str, ...]:
        cur = self.cur
        if not cur.accept_punct(":"):
            return ()
        names: list[str] = []
        while True:
            tok = cur.expect_ident("annotation")
            name = expand_alias(tok.text)
            if name not in ANNOTATIONS:
                logger.debug("%s: unknown annotation %s", tok.span, name)
            names.append(name)
            if not cur.accept_punct(","):
                return tuple(names)

    def _entity(self, datastore: bool) -> None:
        cur = self.cur
        start = cur.advance()
        ident = cur.expect_ident("entity id")
        attrs = self._attributes(("label",) if datastore else ("kind", "roles", "label"))
        if datastore:
            kind = EntityKind.DATASTORE
        else:
            if "kind" not in attrs:
                raise cur.error("expected kind=", ("kind=",))
            kind_tok = attrs["kind"][1]
            kind = _KINDS.get(kind_tok.text.casefold())
            if kind is None:
                raise cur.error("unknown entity kind", ("external", "process", "datastore"), "E_UNKNOWN_KEYWORD", kind_tok)
        annotations = self._annotations()
        end = cur.tokens[cur.pos - 1]
        cur.expect_line_end()
        self.entities.append(
            Entity(
                id=ident.text,
                kind=kind,
                roles=attrs["roles"][1] if "roles" in attrs else frozenset(),
                label=attrs["label"][1] if "label" in attrs else "",
                annotations=annotations,
                span=_line_span(start, end),
            )
        )

    def _boundary(self) -> None:
        cur = self.cur
        start = cur.advance()
        ident = cur.expect_ident("boundary id")
        attrs = self._attributes(("kind",))
        if "kind" not in attrs:
            raise cur.error("expected kind=", ("kind=",))
        kind_tok = attrs["kind"][1]
        kind = _BOUNDARY_KINDS.get(kind_tok.text.casefold())
        if kind is None:
            raise cur.error("unknown boundary kind", ("generic", "compliance"), "E_UNKNOWN_KEYWORD", kind_tok)
        cur.expect_punct("{")
        members: set[str] = set()
        while True:
            cur.skip_newlines()
            if cur.accept_punct(","):
                continue
            if cur.current.is_punct("}"):
                end = cur.advance()
                break
            if cur.current.kind == EOF:
                raise cur.error("unterminated boundary", ("}",))
            members.add(cur.expect_ident("entity id").text)
        cur.expect_line_end()
        self.boundaries.append(TrustBoundary(ident.text, kind, frozenset(members), _line_span(start, end)))

    def _flow(self) -> None:
        cur = self.cur
        start = cur.advance()
        source = cur.expect_ident("entity id")
        if cur.current.kind != ARROW:
            raise cur.error("expected '->'", ("->",))
        cur.advance()
        target = cur.expect_ident("entity id")
        attrs = self._attributes(("id",))
        annotations = self._annotations()
        end = cur.tokens[cur.pos - 1]
        cur.expect_line_end()
        explicit = attrs["id"][1] if "id" in attrs else None
        self.flows.append((explicit, source.text, target.text, annotations, _line_span(start, end)))

    def _assign_flow_ids(self) -> tuple[Flow, ...]:
        used = {explicit for explicit, *_ in self.flows if explicit}
        flows = []
        for explicit, source, target, annotations, span in self.flows:
            flow_id = explicit
            if flow_id is None:
                flow_id = base = default_flow_id(source, target)
                k = 2
                while flow_id in used:
                    flow_id = f"{base}_{k}"
                    k += 1
                used.add(flow_id)
            flows.append(Flow(flow_id, source, target, annotations, span))
        return tuple(flows)


def default_flow_id(source: str, target: str) -> str:
    return f"{source}_{target}"


def parse_diagram(text: str | bytes) -> Diagram:
    """Parse a `.dfd` document; raises ParseError with a span on malformed input."""
    tokens = tokenize(decode(text))
    return _DfdParser(tokens).parse()


def _annotation_suffix(annotations: tuple[str, ...]) -> str:
    return " : " + ", ".join(annotations) if annotations else ""


def serialize_diagram(d: Diagram) -> str:
    """Canonical text: entities by id, boundaries by id, flows by (source, target, id)."""
    canonical = d.canonical()
    lines: list[str] = []
    for e in canonical.entities:
        line = f"entity {e.id} kind={e.kind.value}"
        if e.roles:
            line += " roles=" + ",".join(e.role_tokens)
        if e.label:
            line += f" label={quote(e.label)}"
        lines.append(line + _annotation_suffix(e.annotations))
    for b in canonical.boundaries:
        members = " ".join(sorted(b.members))
        lines.append(f"boundary {b.id} kind={b.kind.value} {{ {members} }}" if members else f"boundary {b.id} kind={b.kind.value} {{ }}")
    for f in canonical.flows:
        line = f"flow {f.source} -> {f.target}"
        if f.id != default_flow_id(f.source, f.target):
            line += f" id={f.id}"
        lines.append(line + _annotation_suffix(f.annotations))
    return "".join(line + "\n" for line in lines)
