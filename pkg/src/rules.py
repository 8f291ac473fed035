"""Rule language: Include/Exclude IF-THEN rules, rule packs and pack validation."""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Mapping, Union

from .errors import Diagnostic, Severity, SourceSpan, sort_diagnostics
from .vocabulary import CROSSES_BOUNDARY, Action, role_rank


@dataclass(frozen=True)
class Atom:
    """`subject.action{owner.property}`, optionally negated with `=NOT`."""

    subject: str
    action: Action
    prop: str
    owner: str | None = None
    negated: bool = False
    label: str | None = None
    span: SourceSpan | None = field(default=None, compare=False, repr=False)

    @property
    def polarity(self) -> str:
        return "negated" if self.negated else "positive"

    @property
    def roles(self) -> tuple[str, ...]:
        return (self.subject,) if self.owner is None else (self.subject, self.owner)

    def pattern(self) -> str:
        owner = f"{self.owner}." if self.owner else ""
        return f"{self.subject}.{self.action.value}{{{owner}{self.prop}}}"

    def __str__(self) -> str:
        return self.pattern() + ("=NOT" if self.negated else "")

    def could_match(self, conclusion: "Atom") -> bool:
        """True if this atom's pattern can match facts derived from `conclusion`."""
        return (
            self.subject == conclusion.subject
            and self.action is conclusion.action
            and self.prop.casefold() == conclusion.prop.casefold()
            and (self.owner is None or self.owner == conclusion.owner)
        )

    def same_pattern(self, other: "Atom") -> bool:
        return (
            self.subject == other.subject
            and self.action is other.action
            and self.owner == other.owner
            and self.prop.casefold() == other.prop.casefold()
            and self.negated == other.negated
        )


@dataclass(frozen=True)
class AllOf:
    items: tuple["Condition", ...]
    parenthesized: bool = field(default=False, compare=False)


@dataclass(frozen=True)
class AnyOf:
    items: tuple["Condition", ...]
    parenthesized: bool = field(default=False, compare=False)


Condition = Union[Atom, AllOf, AnyOf]


def atoms_of(condition: Condition) -> list[Atom]:
    """Leaves in document order."""
    if isinstance(condition, Atom):
        return [condition]
    out: list[Atom] = []
    for item in condition.items:
        out.extend(atoms_of(item))
    return out


# Severity expressions: linear arithmetic over atom weight labels.


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Weight:
    label: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Weight, Neg, BinOp]

_PRECEDENCE = {"+": 1, "-": 1, "*": 2}


def evaluate_expr(expr: Expr, weights: Mapping[str, float]) -> float:
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Weight):
        return weights.get(expr.label, 0.0)
    if isinstance(expr, Neg):
        return -evaluate_expr(expr.operand, weights)
    left = evaluate_expr(expr.left, weights)
    right = evaluate_expr(expr.right, weights)
    if expr.op == "+":
        return left + right
    if expr.op == "-":
        return left - right
    return left * right


def expr_weights(expr: Expr) -> list[str]:
    if isinstance(expr, Weight):
        return [expr.label]
    if isinstance(expr, Neg):
        return expr_weights(expr.operand)
    if isinstance(expr, BinOp):
        return expr_weights(expr.left) + expr_weights(expr.right)
    return []


def format_number(value: float) -> str:
    """Shortest repr that reads back as the same float, spelled without an exponent."""
    text = repr(float(value))
    if "e" in text:
        text = format(Decimal(text), "f")
    return text


def format_expr(expr: Expr) -> str:
    if isinstance(expr, Num):
        return format_number(expr.value)
    if isinstance(expr, Weight):
        return expr.label
    if isinstance(expr, Neg):
        inner = format_expr(expr.operand)
        return f"-({inner})" if isinstance(expr.operand, (BinOp, Neg)) else f"-{inner}"
    prec = _PRECEDENCE[expr.op]
    left = format_expr(expr.left)
    if isinstance(expr.left, BinOp) and _PRECEDENCE[expr.left.op] < prec:
        left = f"({left})"
    right = format_expr(expr.right)
    if isinstance(expr.right, BinOp) and _PRECEDENCE[expr.right.op] <= prec:
        right = f"({right})"
    return f"{left} {expr.op} {right}"


class Stratum(str, Enum):
    DERIVATION = "derivation"
    THREAT = "threat"


@dataclass(frozen=True)
class ThreatType:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class DerivedFact:
    atom: Atom

    def __str__(self) -> str:
        return str(self.atom)


Conclusion = Union[ThreatType, DerivedFact]

DEFAULT_SEVERITY = 1.0


@dataclass(frozen=True)
class Rule:
    id: str
    include: Condition
    conclusion: Conclusion
    stratum: Stratum = Stratum.THREAT
    exclude: Condition | None = None
    severity: Expr | None = None
    pack: str = ""
    title: str | None = None
    span: SourceSpan | None = field(default=None, compare=False, repr=False)

    @property
    def threat_type(self) -> str | None:
        return self.conclusion.name if isinstance(self.conclusion, ThreatType) else None

    def all_atoms(self) -> list[Atom]:
        out = atoms_of(self.include)
        if self.exclude is not None:
            out.extend(atoms_of(self.exclude))
        return out

    @property
    def role_tokens(self) -> tuple[str, ...]:
        """Binding slots in canonical role order."""
        roles = {r for a in self.all_atoms() for r in a.roles}
        if isinstance(self.conclusion, DerivedFact):
            roles.update(self.conclusion.atom.roles)
        return tuple(sorted(roles, key=role_rank))

    def weights(self) -> dict[str, Atom]:
        return {a.label: a for a in self.all_atoms() if a.label}


@dataclass(frozen=True)
class RulePack:
    name: str
    rules: tuple[Rule, ...] = ()
    # file the pack was read from, for locating diagnostics
    source: str | None = field(default=None, compare=False)

    def threat_types(self) -> list[str]:
        return list(dict.fromkeys(r.threat_type for r in self.rules if r.threat_type))


def rule_element(rule: Rule) -> str:
    return f"rule {rule.pack}/{rule.id}"


def _diag(severity: Severity, code: str, message: str, rule: Rule) -> Diagnostic:
    return Diagnostic(severity, code, message, rule.span, rule_element(rule))


def _roles(condition: Condition) -> set[str]:
    return {r for a in atoms_of(condition) for r in a.roles}


def _negative_references(rule: Rule) -> list[Atom]:
    """Atoms whose truth depends on a fact being absent."""
    refs = [a for a in atoms_of(rule.include) if a.negated]
    if rule.exclude is not None:
        refs.extend(atoms_of(rule.exclude))
    return refs


def _stratification(producers: list[Rule], consumers: list[Rule]) -> list[Diagnostic]:
    diags = []
    for consumer in consumers:
        if consumer.stratum is not Stratum.DERIVATION:
            continue
        for atom in _negative_references(consumer):
            for producer in producers:
                if producer.stratum is not Stratum.DERIVATION or not isinstance(producer.conclusion, DerivedFact):
                    continue
                if atom.could_match(producer.conclusion.atom):
                    diags.append(
                        _diag(
                            Severity.ERROR,
                            "E_STRATIFICATION",
                            f"derivation rule {consumer.id} negates {atom.pattern()}, derived by {producer.pack}/{producer.id}",
                            consumer,
                        )
                    )
    return diags


def _rule_shape(rule: Rule) -> list[Diagnostic]:
    diags = []
    if rule.stratum is Stratum.THREAT and not isinstance(rule.conclusion, ThreatType):
        diags.append(_diag(Severity.ERROR, "E_STRATUM_CONCLUSION", f"threat rule {rule.id} must conclude a threat type", rule))
    if rule.stratum is Stratum.DERIVATION:
        if not isinstance(rule.conclusion, DerivedFact):
            diags.append(_diag(Severity.ERROR, "E_STRATUM_CONCLUSION", f"derivation rule {rule.id} must conclude a fact", rule))
        else:
            if rule.conclusion.atom.negated:
                diags.append(_diag(Severity.ERROR, "E_NEGATED_CONCLUSION", f"rule {rule.id} derives a negated fact", rule))
            missing = set(rule.conclusion.atom.roles) - _roles(rule.include)
            if missing:
                diags.append(
                    _diag(
                        Severity.ERROR,
                        "E_CONCLUSION_ROLE",
                        f"conclusion of {rule.id} uses roles absent from Include: {', '.join(sorted(missing, key=role_rank))}",
                        rule,
                    )
                )
    if rule.exclude is not None:
        missing = _roles(rule.exclude) - _roles(rule.include)
        if missing:
            diags.append(
                _diag(
                    Severity.ERROR,
                    "E_EXCLUDE_ROLE",
                    f"Exclude of {rule.id} uses roles absent from Include: {', '.join(sorted(missing, key=role_rank))}",
                    rule,
                )
            )
    if rule.stratum is Stratum.THREAT and any(a.prop.casefold() == CROSSES_BOUNDARY.casefold() for a in rule.all_atoms()):
        diags.append(
            _diag(Severity.WARNING, "W_TOPOLOGY_IN_THREAT", f"threat rule {rule.id} reads {CROSSES_BOUNDARY} directly", rule)
        )
    return diags


def validate_rulepack(p: RulePack) -> list[Diagnostic]:
    """Duplicate ids, stratification violations, shadowed rules and malformed rules."""
    diags: list[Diagnostic] = []
    first_by_id: dict[str, Rule] = {}
    first_by_shape: dict[tuple, Rule] = {}
    for rule in p.rules:
        if rule.id in first_by_id:
            diags.append(_diag(Severity.ERROR, "E_DUP_RULE", f"rule id {rule.id} already defined", rule))
        else:
            first_by_id[rule.id] = rule
        shape = (rule.stratum, rule.include, rule.exclude, rule.conclusion)
        if shape in first_by_shape:
            diags.append(
                _diag(Severity.WARNING, "W_SHADOWED", f"rule {rule.id} is identical to earlier rule {first_by_shape[shape].id}", rule)
            )
        else:
            first_by_shape[shape] = rule
        diags.extend(_rule_shape(rule))
    diags.extend(_stratification(list(p.rules), list(p.rules)))
    return sort_diagnostics(diags)


def validate_load_set(packs: list[RulePack]) -> list[Diagnostic]:
    """Per-pack validation plus pack-name uniqueness and cross-pack stratification."""
    diags: list[Diagnostic] = []
    seen: set[str] = set()
    for pack in packs:
        if pack.name in seen:
            diags.append(Diagnostic(Severity.ERROR, "E_DUP_PACK", f"pack {pack.name} loaded twice", None, f"pack {pack.name}"))
        seen.add(pack.name)
        diags.extend(validate_rulepack(pack))
    for i, producer_pack in enumerate(packs):
        for j, consumer_pack in enumerate(packs):
            if i != j:
                diags.extend(_stratification(list(producer_pack.rules), list(consumer_pack.rules)))
    return sort_diagnostics(diags)


def _mixes_precedence(condition: Condition) -> bool:
    if isinstance(condition, Atom):
        return False
    if isinstance(condition, AnyOf) and any(isinstance(i, AllOf) and not i.parenthesized for i in condition.items):
        return True
    return any(_mixes_precedence(i) for i in condition.items)


def lint_rulepack(p: RulePack) -> list[Diagnostic]:
    """Informational notes that do not make a pack invalid."""
    notes = []
    for rule in p.rules:
        for part, condition in (("Include", rule.include), ("Exclude", rule.exclude)):
            if condition is not None and _mixes_precedence(condition):
                notes.append(
                    _diag(
                        Severity.INFO,
                        "I_MIXED_PRECEDENCE",
                        f"{part} of {rule.id} mixes AND/OR without parentheses; read as AND binding tighter",
                        rule,
                    )
                )
    return sort_diagnostics(notes)
