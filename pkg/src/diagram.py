"""GDPR-extended data-flow diagram: entities, flows, trust boundaries and validation."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

from .errors import Diagnostic, Severity, SourceSpan, sort_diagnostics
from .vocabulary import ANNOTATIONS, GDS, GdprRole, role_rank

ID_PATTERN = re.compile(r"[A-Za-z][A-Za-z0-9_]*")


class EntityKind(str, Enum):
    EXTERNAL = "external"
    PROCESS = "process"
    DATASTORE = "datastore"

    @property
    def title(self) -> str:
        return {"external": "ExternalEntity", "process": "Process", "datastore": "DataStore"}[self.value]


class BoundaryKind(str, Enum):
    GENERIC = "generic"
    COMPLIANCE = "compliance"


@dataclass(frozen=True)
class Entity:
    id: str
    kind: EntityKind
    roles: frozenset[GdprRole] = frozenset()
    label: str = ""
    annotations: tuple[str, ...] = ()
    span: SourceSpan | None = field(default=None, compare=False, repr=False)

    @property
    def is_datastore(self) -> bool:
        return self.kind is EntityKind.DATASTORE

    @property
    def role_tokens(self) -> tuple[str, ...]:
        """Subject tokens this entity can be bound to in rules."""
        if self.is_datastore:
            return (GDS,)
        return tuple(sorted((r.value for r in self.roles), key=role_rank))

    def display(self) -> str:
        tokens = ",".join(self.role_tokens)
        return f"{self.id}({tokens})" if tokens else self.id


@dataclass(frozen=True)
class Flow:
    id: str
    source: str
    target: str
    annotations: tuple[str, ...] = ()
    span: SourceSpan | None = field(default=None, compare=False, repr=False)

    def sort_key(self) -> tuple[str, str, str]:
        return (self.source, self.target, self.id)


@dataclass(frozen=True)
class TrustBoundary:
    id: str
    kind: BoundaryKind
    members: frozenset[str]
    span: SourceSpan | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True, eq=False)
class Diagram:
    """Immutable diagram value.

    Equality ignores declaration order and source spans: two diagrams are equal
    when they declare the same entities, flows and boundaries.
    """

    entities: tuple[Entity, ...] = ()
    flows: tuple[Flow, ...] = ()
    boundaries: tuple[TrustBoundary, ...] = ()

    def _canonical(self) -> tuple:
        return (
            tuple(sorted(self.entities, key=lambda e: e.id)),
            tuple(sorted(self.boundaries, key=lambda b: b.id)),
            tuple(sorted(self.flows, key=Flow.sort_key)),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Diagram):
            return NotImplemented
        return self._canonical() == other._canonical()

    def __hash__(self) -> int:
        return hash(self._canonical())

    def canonical(self) -> "Diagram":
        entities, boundaries, flows = self._canonical()
        return Diagram(entities, flows, boundaries)

    @cached_property
    def _by_id(self) -> dict[str, Entity]:
        index: dict[str, Entity] = {}
        for entity in self.entities:
            index.setdefault(entity.id, entity)
        return index

    def entity(self, entity_id: str) -> Entity | None:
        return self._by_id.get(entity_id)

    def entities_with(self, token: str) -> list[Entity]:
        """Entities bindable to a role token, in id order (DataStores for GDS)."""
        return sorted((e for e in self._by_id.values() if token in e.role_tokens), key=lambda e: e.id)

    def sorted_entity_ids(self) -> list[str]:
        return sorted(self._by_id)

    def boundaries_of(self, entity_id: str) -> frozenset[str]:
        return frozenset(b.id for b in self.boundaries if entity_id in b.members)


def _error(code: str, message: str, span: SourceSpan | None, element: str) -> Diagnostic:
    return Diagnostic(Severity.ERROR, code, message, span, element)


def _warning(code: str, message: str, span: SourceSpan | None, element: str) -> Diagnostic:
    return Diagnostic(Severity.WARNING, code, message, span, element)


def _check_ids(kind: str, items, diags: list[Diagnostic]) -> None:
    seen: set[str] = set()
    for item in items:
        element = f"{kind} {item.id}"
        if not ID_PATTERN.fullmatch(item.id or ""):
            diags.append(_error("E_INVALID_ID", f"invalid {kind} id {item.id!r}", item.span, element))
        if item.id in seen:
            diags.append(_error("E_DUPLICATE_ID", f"duplicate {kind} id {item.id!r}", item.span, element))
        seen.add(item.id)


def _check_annotation_list(annotations: tuple[str, ...], span, element: str, diags: list[Diagnostic]) -> list[str]:
    """Flag duplicates and unknown tokens; return the known annotations."""
    for token, count in Counter(annotations).items():
        if count > 1:
            diags.append(_error("E_DUPLICATE_ANNOTATION", f"annotation {token} repeated", span, element))
    known = []
    for token in dict.fromkeys(annotations):
        if token in ANNOTATIONS:
            known.append(token)
        else:
            diags.append(_warning("W_UNKNOWN_ANNOTATION", f"unknown annotation {token}", span, element))
    return known


def validate_diagram(d: Diagram) -> list[Diagnostic]:
    """Check every diagram invariant; returns diagnostics ordered by (location, code)."""
    diags: list[Diagnostic] = []
    _check_ids("entity", d.entities, diags)
    _check_ids("flow", d.flows, diags)
    _check_ids("boundary", d.boundaries, diags)

    for e in d.entities:
        element = f"entity {e.id}"
        if e.is_datastore and e.roles:
            diags.append(_error("E_DATASTORE_ROLE", f"data store {e.id} cannot carry GDPR roles", e.span, element))
        for token in _check_annotation_list(e.annotations, e.span, element, diags):
            if not ANNOTATIONS[token].entity_roles(e.role_tokens):
                diags.append(
                    _error(
                        "E_ANNOTATION_ROLE_MISMATCH",
                        f"{token} is not valid on {e.display()}",
                        e.span,
                        element,
                    )
                )

    for f in d.flows:
        element = f"flow {f.id}"
        src, tgt = d.entity(f.source), d.entity(f.target)
        for end, resolved in ((f.source, src), (f.target, tgt)):
            if resolved is None:
                diags.append(_error("E_UNKNOWN_REF", f"flow {f.id} references undeclared entity {end}", f.span, element))
        if f.source == f.target:
            diags.append(_error("E_SELF_FLOW", f"flow {f.id} starts and ends at {f.source}", f.span, element))
        known = _check_annotation_list(f.annotations, f.span, element, diags)
        if src is None or tgt is None:
            continue
        for token in known:
            if not ANNOTATIONS[token].flow_pairs(src.role_tokens, tgt.role_tokens):
                diags.append(
                    _error(
                        "E_ANNOTATION_ROLE_MISMATCH",
                        f"{token} requires {ANNOTATIONS[token].describe()}, got {src.display()} -> {tgt.display()}",
                        f.span,
                        element,
                    )
                )

    for b in d.boundaries:
        element = f"boundary {b.id}"
        if not b.members:
            diags.append(_error("E_EMPTY_BOUNDARY", f"boundary {b.id} has no members", b.span, element))
        for member in sorted(b.members):
            if d.entity(member) is None:
                diags.append(_error("E_UNKNOWN_REF", f"boundary {b.id} references undeclared entity {member}", b.span, element))

    for role in (GdprRole.RM, GdprRole.SA):
        holders = [e for e in d.entities if role in e.roles]
        for extra in holders[1:]:
            diags.append(
                _warning(
                    "W_DUPLICATE_SINGLETON_ROLE",
                    f"more than one entity carries role {role.value}",
                    extra.span,
                    f"entity {extra.id}",
                )
            )
    return sort_diagnostics(diags)
