"""Fact extraction: the diagram's annotations and topology as ground facts."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping

from .diagram import Diagram
from .errors import Diagnostic, ExtractionError, Severity, sort_diagnostics
from .rules import Atom
from .vocabulary import ANNOTATIONS, CROSSES_BOUNDARY, Action, canonical_property

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Fact:
    """Positive ground atom about concrete entities."""

    subject_entity: str
    subject_role: str
    action: Action
    prop: str
    object_entity: str | None = None
    object_role: str | None = None

    def sort_key(self) -> tuple:
        return (
            self.subject_entity,
            self.subject_role,
            self.action.value,
            self.object_entity or "",
            self.object_role or "",
            self.prop.casefold(),
        )

    def __str__(self) -> str:
        obj = f"{self.object_entity}({self.object_role})." if self.object_entity else ""
        return f"{self.subject_entity}({self.subject_role}).{self.action.value}{{{obj}{self.prop}}}"


@dataclass(frozen=True)
class Origin:
    """Where a fact came from: a flow or entity annotation, or a derivation rule."""

    kind: str
    ref: str
    annotation: str | None = None

    def __str__(self) -> str:
        return f"{self.kind} {self.ref}" + (f" [{self.annotation}]" if self.annotation else "")


@dataclass(frozen=True)
class FactBase:
    facts: frozenset[Fact] = frozenset()
    provenance: Mapping[Fact, Origin] = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_origins(cls, origins: Mapping[Fact, Origin]) -> "FactBase":
        return cls(frozenset(origins), dict(origins))

    def __len__(self) -> int:
        return len(self.facts)

    def __contains__(self, fact: object) -> bool:
        return fact in self.facts

    def __iter__(self) -> Iterator[Fact]:
        return iter(self.sorted())

    def sorted(self) -> list[Fact]:
        return sorted(self.facts, key=Fact.sort_key)

    @cached_property
    def _index(self) -> dict[tuple, list[Fact]]:
        index: dict[tuple, list[Fact]] = {}
        for fact in self.sorted():
            key = (fact.subject_entity, fact.subject_role, fact.action, fact.prop.casefold())
            index.setdefault(key, []).append(fact)
        return index

    def find(self, atom: Atom, subject_entity: str, object_entity: str | None) -> Fact | None:
        """First fact (in sort order) matching `atom` under the given entities.

        An atom without an owner matches regardless of the fact's object.
        """
        for fact in self._index.get((subject_entity, atom.subject, atom.action, atom.prop.casefold()), ()):
            if atom.owner is None:
                return fact
            if fact.object_entity == object_entity and fact.object_role == atom.owner:
                return fact
        return None

    def extended(self, new: Mapping[Fact, Origin]) -> "FactBase":
        merged = dict(self.provenance)
        for fact, origin in new.items():
            merged.setdefault(fact, origin)
        return FactBase.from_origins(merged)


def extract_facts(d: Diagram) -> FactBase:
    """Apply the annotation table to every flow and entity, plus boundary-crossing facts.

    Raises ExtractionError listing every annotation whose roles do not fit.
    """
    canonical = d.canonical()
    origins: dict[Fact, Origin] = {}
    mismatches: list[Diagnostic] = []

    def emit(fact: Fact, origin: Origin) -> None:
        origins.setdefault(fact, origin)

    for entity in canonical.entities:
        for token in dict.fromkeys(entity.annotations):
            spec = ANNOTATIONS.get(token)
            if spec is None:
                logger.debug("entity %s: unknown annotation %s ignored", entity.id, token)
                continue
            roles = spec.entity_roles(entity.role_tokens)
            if not roles:
                mismatches.append(
                    Diagnostic(
                        Severity.ERROR,
                        "E_ANNOTATION_ROLE_MISMATCH",
                        f"{token} is not valid on {entity.display()}",
                        entity.span,
                        f"entity {entity.id}",
                    )
                )
            for role in roles:
                emit(Fact(entity.id, role, spec.action, spec.prop), Origin("entity", entity.id, token))

    for flow in canonical.flows:
        src, tgt = canonical.entity(flow.source), canonical.entity(flow.target)
        if src is None or tgt is None:
            continue
        for token in dict.fromkeys(flow.annotations):
            spec = ANNOTATIONS.get(token)
            if spec is None:
                logger.debug("flow %s: unknown annotation %s ignored", flow.id, token)
                continue
            pairs = spec.flow_pairs(src.role_tokens, tgt.role_tokens)
            if not pairs:
                mismatches.append(
                    Diagnostic(
                        Severity.ERROR,
                        "E_ANNOTATION_ROLE_MISMATCH",
                        f"{token} requires {spec.describe()}, got {src.display()} -> {tgt.display()}",
                        flow.span,
                        f"flow {flow.id}",
                    )
                )
            for subject_role, object_role in pairs:
                fact = Fact(
                    src.id,
                    subject_role,
                    spec.action,
                    spec.prop,
                    tgt.id if object_role else None,
                    object_role,
                )
                emit(fact, Origin("flow", flow.id, token))
        if canonical.boundaries_of(src.id) != canonical.boundaries_of(tgt.id):
            for subject_role in src.role_tokens:
                for object_role in tgt.role_tokens:
                    fact = Fact(src.id, subject_role, Action.PROVIDE, CROSSES_BOUNDARY, tgt.id, object_role)
                    emit(fact, Origin("flow", flow.id, CROSSES_BOUNDARY))

    if mismatches:
        raise ExtractionError(sort_diagnostics(mismatches))
    logger.debug("extracted %d facts", len(origins))
    return FactBase.from_origins(origins)


def derived_fact(atom: Atom, subject_entity: str, object_entity: str | None) -> Fact:
    """Ground a derivation conclusion under a binding."""
    return Fact(
        subject_entity,
        atom.subject,
        atom.action,
        canonical_property(atom.prop),
        object_entity if atom.owner else None,
        atom.owner,
    )
