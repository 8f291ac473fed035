"""Parser and canonical serializer for `.rules` documents.

A block reads

    rule <id> [stratum <derivation|threat>]
    Threat type: <title>                 (or  Derives: <atom>)
    IF <condition>                       (or  Include: IF <condition>)
    EXCLUDE IF <condition>               (optional; also Exclude: IF)
    THEN {<threat name>} [severity = <expr>]

The `rule` line is optional; without it the id is derived from the title.
Derivation rules conclude an atom: `THEN {DC.Provide{DP.UnauthenticatedTransfer}}`.
AND binds tighter than OR. The spellings `Accom Request`, `Response.{...}` and
`=Not` are accepted.
"""
from __future__ import annotations

import math
import re
from dataclasses import replace

from .errors import ParseError, SourceSpan
from .rules import (
    AllOf,
    AnyOf,
    Atom,
    BinOp,
    Condition,
    DerivedFact,
    Expr,
    Neg,
    Num,
    Rule,
    RulePack,
    Stratum,
    ThreatType,
    Weight,
    atoms_of,
    expr_weights,
    format_expr,
)
from .syntax import EOF, IDENT, NEWLINE, NUMBER, Cursor, Token, decode, tokenize
from .vocabulary import ROLE_TOKENS, Action, parse_role_token


def slugify(text: str) -> str:
    slug = re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_").lower()
    if not slug or not slug[0].isalpha():
        slug = f"rule_{slug}" if slug else "rule"
    return slug


class _RuleParser:
    def __init__(self, text: str, pack_name: str) -> None:
        self.lines = text.split("\n")
        self.cur = Cursor(tokenize(text, strings=False))
        self.pack_name = pack_name

    def parse(self) -> RulePack:
        rules = []
        while True:
            self.cur.skip_newlines()
            if self.cur.at_end():
                break
            rules.append(self._block())
        return RulePack(self.pack_name, tuple(rules))

    # raw text helpers for free-text titles and threat names

    def _raw_line(self, line: int) -> str:
        return self.lines[line - 1] if line <= len(self.lines) else ""

    def _skip_to_line_end(self) -> None:
        while self.cur.current.kind not in (NEWLINE, EOF):
            self.cur.advance()

    def _rest_of_line(self, after: Token) -> str:
        raw = self._raw_line(after.span.line)[after.span.column - 1 + after.span.length :]
        return raw.split("#", 1)[0].strip()

    def _block(self) -> Rule:
        cur = self.cur
        start = cur.current
        rule_id: str | None = None
        stratum: Stratum | None = None
        if start.is_word("rule"):
            cur.advance()
            rule_id = cur.expect_ident("rule id").text
            if cur.current.is_word("stratum"):
                cur.advance()
                tok = cur.expect_ident("stratum")
                try:
                    stratum = Stratum(tok.text.casefold())
                except ValueError:
                    raise cur.error("unknown stratum", ("derivation", "threat"), "E_UNKNOWN_KEYWORD", tok) from None
            cur.expect_line_end()
            cur.skip_newlines()

        title: str | None = None
        derives: Atom | None = None
        while True:
            if cur.current.is_word("threat") and cur.peek().is_word("type") and cur.peek(2).is_punct(":"):
                cur.advance()
                cur.advance()
                colon = cur.advance()
                title = self._rest_of_line(colon)
                if not title:
                    raise cur.error("expected threat title", ("title",))
                self._skip_to_line_end()
            elif cur.current.is_word("derives") and cur.peek().is_punct(":"):
                cur.advance()
                cur.advance()
                derives = self._atom()
                cur.expect_line_end()
            else:
                break
            cur.skip_newlines()

        if derives is not None:
            if stratum is Stratum.THREAT:
                raise cur.error("Derives: given for a threat-stratum rule", (), None, start)
            stratum = Stratum.DERIVATION
        stratum = stratum or Stratum.THREAT

        if cur.current.is_word("include") and cur.peek().is_punct(":"):
            cur.advance()
            cur.advance()
        if not cur.current.is_word("IF"):
            raise cur.error("expected IF", ("IF",))
        cur.advance()
        include = self._condition()
        cur.skip_newlines()

        exclude: Condition | None = None
        if cur.current.is_word("exclude"):
            cur.advance()
            cur.accept_punct(":")
            if not cur.current.is_word("IF"):
                raise cur.error("expected IF", ("IF",))
            cur.advance()
            exclude = self._condition()
            cur.skip_newlines()

        if not cur.current.is_word("THEN"):
            raise cur.error("expected THEN", ("THEN",))
        cur.advance()
        brace = cur.expect_punct("{")
        if stratum is Stratum.DERIVATION:
            atom = self._atom()
            if atom.negated:
                raise ParseError("derived conclusion cannot be negated", atom.span, (), "E_NEGATED_CONCLUSION")
            if derives is not None and not derives.same_pattern(atom):
                raise ParseError("THEN does not match Derives:", atom.span, (derives.pattern(),))
            cur.expect_punct("}")
            conclusion: ThreatType | DerivedFact = DerivedFact(replace(atom, label=None))
        else:
            conclusion = ThreatType(self._threat_name(brace))

        labels = self._labels(include, exclude)
        severity = None
        if cur.current.is_word("severity"):
            cur.advance()
            cur.expect_punct("=")
            severity = self._expr()
            for name in expr_weights(severity):
                if name not in labels:
                    raise ParseError(f"severity uses unknown weight {name}", start.span, tuple(sorted(labels)), "E_UNKNOWN_WEIGHT")
        cur.expect_line_end()

        if rule_id is None:
            if title:
                rule_id = slugify(title)
            elif isinstance(conclusion, ThreatType):
                rule_id = slugify(conclusion.name)
            else:
                rule_id = slugify(conclusion.atom.pattern())
        return Rule(
            id=rule_id,
            include=include,
            conclusion=conclusion,
            stratum=stratum,
            exclude=exclude,
            severity=severity,
            pack=self.pack_name,
            title=title,
            span=start.span,
        )

    def _threat_name(self, brace: Token) -> str:
        cur = self.cur
        raw = self._raw_line(brace.span.line)[brace.span.column :]
        end = raw.find("}")
        if end < 0 or "#" in raw[:end] or "{" in raw[:end]:
            raise cur.error("expected threat name in braces", ("}",))
        name = raw[:end].strip()
        if not name:
            raise cur.error("empty threat name", ("threat name",))
        close_column = brace.span.column + 1 + end
        while not (cur.current.is_punct("}") and cur.current.span.column == close_column):
            if cur.current.kind in (NEWLINE, EOF):
                raise cur.error("expected '}'", ("}",))
            cur.advance()
        cur.advance()
        return name

    def _labels(self, include: Condition, exclude: Condition | None) -> set[str]:
        labels: set[str] = set()
        for part in (include, exclude):
            if part is None:
                continue
            for atom in atoms_of(part):
                if atom.label is None:
                    continue
                if atom.label in labels:
                    raise ParseError(f"weight label {atom.label} used twice", atom.span, (), "E_DUPLICATE_LABEL")
                labels.add(atom.label)
        return labels

    # conditions

    def _connective(self, word: str) -> bool:
        saved = self.cur.pos
        self.cur.skip_newlines()
        if self.cur.current.is_word(word):
            self.cur.advance()
            return True
        self.cur.pos = saved
        return False

    def _condition(self) -> Condition:
        items = [self._conjunction()]
        while self._connective("OR"):
            items.append(self._conjunction())
        return items[0] if len(items) == 1 else AnyOf(tuple(items))

    def _conjunction(self) -> Condition:
        items = [self._primary()]
        while self._connective("AND"):
            items.append(self._primary())
        return items[0] if len(items) == 1 else AllOf(tuple(items))

    def _primary(self) -> Condition:
        cur = self.cur
        cur.skip_newlines()
        if cur.accept_punct("("):
            inner = self._condition()
            cur.skip_newlines()
            cur.expect_punct(")")
            if isinstance(inner, (AllOf, AnyOf)):
                inner = replace(inner, parenthesized=True)
            return inner
        return self._atom()

    def _atom(self) -> Atom:
        cur = self.cur
        label = None
        if cur.current.kind == IDENT and cur.peek().is_punct(":") and parse_role_token(cur.current.text) is None:
            label = cur.advance().text
            cur.advance()
        subject_tok = cur.expect_ident("role token")
        subject = self._role(subject_tok)
        cur.expect_punct(".")
        action_tok = cur.expect_ident("action")
        action_text = action_tok.text
        if action_text.casefold() == "accom" and cur.current.is_word("request"):
            cur.advance()
            action_text = "Accom Request"
        try:
            action = Action.parse(action_text)
        except ValueError:
            raise cur.error("unknown action", tuple(a.value for a in Action), "E_UNKNOWN_ACTION", action_tok) from None
        cur.accept_punct(".")
        cur.expect_punct("{")
        first = cur.expect_ident("property")
        owner = None
        if cur.accept_punct("."):
            owner = self._role(first)
            prop = cur.expect_ident("property").text
        else:
            prop = first.text
        close = cur.expect_punct("}")
        negated = False
        if cur.current.is_punct("="):
            cur.advance()
            not_tok = cur.expect_ident("NOT")
            if not_tok.text.casefold() != "not":
                raise cur.error("expected NOT", ("NOT",), None, not_tok)
            negated = True
            close = not_tok
        start = subject_tok.span
        length = close.span.column + close.span.length - start.column if close.span.line == start.line else 0
        return Atom(subject, action, prop, owner, negated, label, SourceSpan(start.line, start.column, length))

    def _role(self, tok: Token) -> str:
        role = parse_role_token(tok.text)
        if role is None:
            raise self.cur.error("unknown role token", ROLE_TOKENS, "E_UNKNOWN_ROLE", tok)
        return role

    # severity expressions

    def _expr(self) -> Expr:
        node = self._term()
        while self.cur.current.is_punct("+") or self.cur.current.is_punct("-"):
            op = self.cur.advance().text
            node = BinOp(op, node, self._term())
        return node

    def _term(self) -> Expr:
        node = self._unary()
        while self.cur.current.is_punct("*"):
            self.cur.advance()
            node = BinOp("*", node, self._unary())
        return node

    def _unary(self) -> Expr:
        cur = self.cur
        if cur.accept_punct("-"):
            return Neg(self._unary())
        if cur.accept_punct("("):
            inner = self._expr()
            cur.expect_punct(")")
            return inner
        if cur.current.kind == NUMBER:
            tok = cur.advance()
            value = float(tok.text)
            if not math.isfinite(value):
                raise cur.error("number out of range", ("number",), None, tok)
            return Num(value)
        if cur.current.kind == IDENT:
            return Weight(cur.advance().text)
        raise cur.error("expected number or weight", ("number", "weight"))


def parse_rules(text: str | bytes, pack_name: str) -> RulePack:
    """Parse a `.rules` document into a RulePack; raises ParseError with a span."""
    return _RuleParser(decode(text), pack_name).parse()


def format_atom(atom: Atom) -> str:
    return (f"{atom.label}: " if atom.label else "") + str(atom)


def format_condition(condition: Condition) -> str:
    if isinstance(condition, Atom):
        return format_atom(condition)
    joiner = " AND " if isinstance(condition, AllOf) else " OR "
    parts = []
    for item in condition.items:
        text = format_condition(item)
        if not isinstance(item, Atom):
            keep = item.parenthesized or isinstance(condition, AllOf) or isinstance(item, AnyOf)
            if keep:
                text = f"({text})"
        parts.append(text)
    return joiner.join(parts)


def serialize_rule(rule: Rule) -> str:
    lines = [f"rule {rule.id} stratum {rule.stratum.value}"]
    if rule.title:
        lines.append(f"Threat type: {rule.title}")
    lines.append(f"IF {format_condition(rule.include)}")
    if rule.exclude is not None:
        lines.append(f"EXCLUDE IF {format_condition(rule.exclude)}")
    then = f"THEN {{{rule.conclusion}}}"
    if rule.severity is not None:
        then += f" severity = {format_expr(rule.severity)}"
    lines.append(then)
    return "\n".join(lines) + "\n"


def serialize_rules(pack: RulePack) -> str:
    """Canonical text for a pack; re-parsing it yields an equal pack."""
    return "\n".join(serialize_rule(rule) for rule in pack.rules)
