"""Stratified forward-chaining inference over the fact base.

Derivation rules run to a fixpoint first; threat rules are then evaluated once
per binding against the final fact base. Negated atoms are negation-as-failure
under the closed-world reading of the diagram.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

from .diagram import Diagram
from .errors import InferenceError, has_errors
from .facts import Fact, FactBase, Origin, derived_fact
from .rules import (
    DEFAULT_SEVERITY,
    AllOf,
    Atom,
    Condition,
    DerivedFact,
    Rule,
    RulePack,
    Stratum,
    evaluate_expr,
    validate_load_set,
)

logger = logging.getLogger(__name__)

INCLUDE = "include"
EXCLUDE = "exclude"


@dataclass(frozen=True)
class Binding:
    """Role token -> entity id, in canonical role order."""

    pairs: tuple[tuple[str, str], ...]

    def __getitem__(self, role: str) -> str:
        for token, entity in self.pairs:
            if token == role:
                return entity
        raise KeyError(role)

    def get(self, role: str | None) -> str | None:
        if role is None:
            return None
        return dict(self.pairs).get(role)

    def as_dict(self) -> dict[str, str]:
        return dict(self.pairs)

    def entities(self) -> set[str]:
        return {entity for _, entity in self.pairs}

    def __str__(self) -> str:
        return ", ".join(f"{role}={entity}" for role, entity in self.pairs)


@dataclass(frozen=True)
class TraceEntry:
    part: str
    atom: Atom
    value: bool
    fact: Fact | None


@dataclass(frozen=True)
class Evaluation:
    value: bool
    trace: tuple[TraceEntry, ...]


@dataclass(frozen=True)
class ThreatFinding:
    threat_type: str
    rule_id: str
    binding: Binding
    sources: tuple[str, ...]
    severity: float
    trace: tuple[TraceEntry, ...]
    pack: str = ""

    def sort_key(self) -> tuple:
        return (self.threat_type, self.rule_id, self.binding.pairs)


@dataclass(frozen=True)
class Derivation:
    fact_base: FactBase
    iterations: int
    derived: int


@dataclass(frozen=True)
class Explanation:
    """Outcome of one threat rule under one binding (binding None: no candidates)."""

    rule: Rule
    binding: Binding | None
    fired: bool
    trace: tuple[TraceEntry, ...] = ()
    failed: TraceEntry | None = None
    sources: tuple[str, ...] = ()


def enumerate_bindings(rule: Rule, d: Diagram) -> list[Binding]:
    """Cartesian product of candidate entities per role slot, entity ids in lexicographic order."""
    slots = rule.role_tokens
    candidates = [[e.id for e in d.entities_with(slot)] for slot in slots]
    return [Binding(tuple(zip(slots, combo))) for combo in itertools.product(*candidates)]


def _eval(c: Condition, b: Binding, fb: FactBase, part: str, trace: list[TraceEntry]) -> bool:
    if isinstance(c, Atom):
        fact = fb.find(c, b[c.subject], b.get(c.owner))
        value = fact is None if c.negated else fact is not None
        trace.append(TraceEntry(part, c, value, fact))
        return value
    # every child is evaluated so the trace is complete
    values = [_eval(item, b, fb, part, trace) for item in c.items]
    return all(values) if isinstance(c, AllOf) else any(values)


def eval_condition(c: Condition, b: Binding, fb: FactBase, part: str = INCLUDE) -> Evaluation:
    trace: list[TraceEntry] = []
    value = _eval(c, b, fb, part, trace)
    return Evaluation(value, tuple(trace))


def _evaluate_rule(rule: Rule, b: Binding, fb: FactBase) -> tuple[bool, bool, tuple[TraceEntry, ...]]:
    """(fired, Include value, trace); Exclude is evaluated against the same binding."""
    include = eval_condition(rule.include, b, fb, INCLUDE)
    trace = include.trace
    fired = include.value
    if rule.exclude is not None:
        exclude = eval_condition(rule.exclude, b, fb, EXCLUDE)
        trace += exclude.trace
        fired = fired and not exclude.value
    return fired, include.value, trace


def attribute_sources(rule: Rule, binding: Binding, trace: tuple[TraceEntry, ...]) -> tuple[str, ...]:
    """Entities with an unmet obligation: subjects of negated Include atoms that held.

    When the Include has no negated atoms, the subjects of its positive atoms.
    """
    include = [entry for entry in trace if entry.part == INCLUDE]
    if any(entry.atom.negated for entry in include):
        sources = {binding[e.atom.subject] for e in include if e.atom.negated and e.value}
    else:
        sources = {binding[e.atom.subject] for e in include}
    return tuple(sorted(sources))


def _severity(rule: Rule, trace: tuple[TraceEntry, ...]) -> float:
    if rule.severity is None:
        return DEFAULT_SEVERITY
    weights = {entry.atom.label: 1.0 if entry.value else 0.0 for entry in trace if entry.atom.label}
    return evaluate_expr(rule.severity, weights)


def check_packs(packs: list[RulePack]) -> None:
    diagnostics = validate_load_set(packs)
    if not has_errors(diagnostics):
        return
    errors = [d for d in diagnostics if d.is_error]
    code = "E_STRATIFICATION" if any(d.code == "E_STRATIFICATION" for d in errors) else "E_INVALID_PACK"
    raise InferenceError(f"rule packs failed validation: {errors[0].message}", code, errors)


def _threat_rules(packs: list[RulePack]) -> list[Rule]:
    return [r for p in packs for r in p.rules if r.stratum is Stratum.THREAT]


def _check_goal(packs: list[RulePack], goal: str) -> None:
    known = {r.threat_type for r in _threat_rules(packs)}
    if goal not in known:
        raise InferenceError(f"no loaded rule concludes threat {goal!r}", "E_GOAL_UNKNOWN")


def derive_fixpoint(packs: list[RulePack], d: Diagram, fb: FactBase) -> Derivation:
    """Fire derivation rules until no new fact appears."""
    rules = [r for p in packs for r in p.rules if r.stratum is Stratum.DERIVATION and isinstance(r.conclusion, DerivedFact)]
    bindings = {id(rule): enumerate_bindings(rule, d) for rule in rules}
    current = fb
    iterations = 0
    start = len(fb)
    while True:
        iterations += 1
        new: dict[Fact, Origin] = {}
        for rule in rules:
            atom = rule.conclusion.atom
            for b in bindings[id(rule)]:
                fired, _, _ = _evaluate_rule(rule, b, current)
                if not fired:
                    continue
                fact = derived_fact(atom, b[atom.subject], b.get(atom.owner))
                if fact not in current and fact not in new:
                    logger.debug("iteration %d: %s derives %s", iterations, rule.id, fact)
                    new[fact] = Origin("rule", rule.id)
        if not new:
            break
        current = current.extended(new)
    logger.debug("derivation fixpoint after %d iterations, %d new facts", iterations, len(current) - start)
    return Derivation(current, iterations, len(current) - start)


def run_inference(
    packs: list[RulePack],
    d: Diagram,
    fb: FactBase,
    goal: str | None = None,
) -> list[ThreatFinding]:
    """Findings sorted by (threat type, rule id, binding); `goal` keeps one threat type."""
    check_packs(packs)
    if goal is not None:
        _check_goal(packs, goal)
    final = derive_fixpoint(packs, d, fb).fact_base
    findings: list[ThreatFinding] = []
    for rule in _threat_rules(packs):
        if goal is not None and rule.threat_type != goal:
            continue
        for b in enumerate_bindings(rule, d):
            fired, _, trace = _evaluate_rule(rule, b, final)
            if not fired:
                continue
            logger.debug("%s fired for %s", rule.id, b)
            findings.append(
                ThreatFinding(
                    threat_type=rule.threat_type,
                    rule_id=rule.id,
                    binding=b,
                    sources=attribute_sources(rule, b, trace),
                    severity=_severity(rule, trace),
                    trace=trace,
                    pack=rule.pack,
                )
            )
    return sorted(findings, key=ThreatFinding.sort_key)


def explain_threat(packs: list[RulePack], d: Diagram, fb: FactBase, threat_type: str) -> list[Explanation]:
    """Every rule of `threat_type` under every binding, with the atom that blocked it when it did not fire."""
    check_packs(packs)
    _check_goal(packs, threat_type)
    final = derive_fixpoint(packs, d, fb).fact_base
    explanations: list[Explanation] = []
    for rule in sorted((r for r in _threat_rules(packs) if r.threat_type == threat_type), key=lambda r: r.id):
        bindings = enumerate_bindings(rule, d)
        if not bindings:
            explanations.append(Explanation(rule, None, False))
            continue
        for b in bindings:
            fired, included, trace = _evaluate_rule(rule, b, final)
            if fired:
                explanations.append(Explanation(rule, b, True, trace, None, attribute_sources(rule, b, trace)))
                continue
            if included:
                blocked = next((e for e in trace if e.part == EXCLUDE and e.value), None)
            else:
                blocked = next((e for e in trace if e.part == INCLUDE and not e.value), None)
            explanations.append(Explanation(rule, b, False, trace, blocked))
    return explanations
