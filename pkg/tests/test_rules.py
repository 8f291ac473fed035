import itertools
import re
from dataclasses import replace

import pytest
import hypothesis.strategies as st
from hypothesis import given, settings

from src.errors import ParseError, Severity
from src.rule_parser import format_condition, parse_rules, serialize_rules, slugify
from src.rules import (
    AllOf,
    AnyOf,
    Atom,
    BinOp,
    DerivedFact,
    Neg,
    Num,
    Rule,
    RulePack,
    Stratum,
    ThreatType,
    Weight,
    atoms_of,
    evaluate_expr,
    format_expr,
    format_number,
    lint_rulepack,
    validate_load_set,
    validate_rulepack,
)
from src.vocabulary import ROLE_TOKENS, Action


def codes(diagnostics):
    return sorted(d.code for d in diagnostics)


def neg(subject, action, prop, owner=None):
    return Atom(subject, action, prop, owner, negated=True)


def pos(subject, action, prop, owner=None):
    return Atom(subject, action, prop, owner)


def test_gdpr_pack_has_three_rules(gdpr_pack):
    assert [r.id for r in gdpr_pack.rules] == [
        "non_consent",
        "non_provided_right_to_erasure",
        "non_accountability",
    ]
    assert gdpr_pack.threat_types() == ["non-Consent", "non-provided right to erasure", "non-accountability"]
    assert all(r.stratum is Stratum.THREAT and r.pack == "gdpr" for r in gdpr_pack.rules)


def test_non_consent_block(gdpr_pack):
    rule = gdpr_pack.rules[0]
    assert rule.title == "non-consent"
    assert rule.include == AllOf(
        (
            neg("DS", Action.PROVIDE, "Consent"),
            neg("DC", Action.PROVIDE, "ConsentRequestForm", "DS"),
        )
    )
    assert rule.role_tokens == ("DS", "DC")


def test_erasure_block_and_binds_tighter_than_or(gdpr_pack):
    rule = gdpr_pack.rules[1]
    assert isinstance(rule.include, AnyOf)
    first, second = rule.include.items
    assert first == AllOf(
        (
            pos("DS", Action.REQUEST, "EraseData", "DC"),
            neg("DC", Action.REQUEST, "CleanData", "GDS"),
            neg("DC", Action.REQUEST, "EraseData", "DP"),
            neg("DP", Action.REQUEST, "CleanData", "GDS"),
        )
    )
    assert second == AllOf(
        (
            neg("GDS", Action.RESPONSE, "cleanData"),
            neg("DC", Action.NOTIFY, "RecipientAboutErasingData"),
            neg("DP", Action.NOTIFY, "RecipientAboutErasingData"),
            neg("DC", Action.ACCOMPLISH, "EraseDataWithin28Days"),
            neg("DP", Action.ACCOMPLISH, "EraseDataWithin28Days"),
        )
    )
    assert rule.role_tokens == ("DS", "DC", "DP", "GDS")


def test_accountability_block(gdpr_pack):
    rule = gdpr_pack.rules[2]
    assert rule.include == AllOf(
        (
            pos("DS", Action.COMPLAIN, "DataBreach", "RM"),
            neg("DC", Action.REPORT, "DataBreach", "RM"),
            neg("DP", Action.REPORT, "DataBreach", "RM"),
        )
    )
    assert rule.threat_type == "non-accountability"


def test_blocks_without_rule_header_take_id_from_title():
    text = (
        "Threat type: non-consent\n"
        "IF DS.Provide{Consent}=NOT AND\n"
        "DC.Provide{DS.ConsentRequestForm}=NOT\n"
        "THEN {non-Consent}\n"
    )
    pack = parse_rules(text, "inline")
    assert pack.rules[0].id == "non_consent"
    assert pack.rules[0].threat_type == "non-Consent"


def test_bundled_packs_validate_clean(all_packs):
    for pack in all_packs:
        assert validate_rulepack(pack) == [], pack.name
    assert validate_load_set(all_packs) == []


def test_erasure_rule_gets_precedence_note(gdpr_pack):
    notes = lint_rulepack(gdpr_pack)
    assert [(n.code, n.severity) for n in notes] == [("I_MIXED_PRECEDENCE", Severity.INFO)]
    assert "non_provided_right_to_erasure" in notes[0].message


def test_parentheses_silence_precedence_note():
    pack = parse_rules("IF (DS.Provide{A} AND DS.Provide{B}) OR DS.Provide{C}\nTHEN {t}\n", "p")
    assert isinstance(pack.rules[0].include, AnyOf)
    assert lint_rulepack(pack) == []


def test_include_exclude_spellings():
    text = (
        "rule late_notice\n"
        "Threat type: late notice\n"
        "Include: IF DS.Provide{Consent}\n"
        "Exclude: IF DC.Notify{DS.PrivacyNotice}\n"
        "THEN {Unawareness}\n"
    )
    rule = parse_rules(text, "p").rules[0]
    assert rule.include == pos("DS", Action.PROVIDE, "Consent")
    assert rule.exclude == pos("DC", Action.NOTIFY, "PrivacyNotice", "DS")


def test_derivation_rule():
    text = (
        "rule exposed stratum derivation\n"
        "Derives: DC.Provide{DP.Exposed}\n"
        "IF DC.Provide{DP.CrossesBoundary}\n"
        "THEN {DC.Provide{DP.Exposed}}\n"
    )
    rule = parse_rules(text, "p").rules[0]
    assert rule.stratum is Stratum.DERIVATION
    assert rule.conclusion == DerivedFact(pos("DC", Action.PROVIDE, "Exposed", "DP"))
    assert rule.threat_type is None


def test_derives_header_must_match_conclusion():
    text = (
        "rule exposed stratum derivation\n"
        "Derives: DC.Provide{DP.Exposed}\n"
        "IF DC.Provide{DP.CrossesBoundary}\n"
        "THEN {DC.Provide{DP.Leaked}}\n"
    )
    with pytest.raises(ParseError):
        parse_rules(text, "p")


def test_severity_expression():
    text = "IF a: DS.Provide{A} AND b: DS.Provide{B}=NOT\nTHEN {t} severity = 2 * (a + b) - -0.5\n"
    rule = parse_rules(text, "p").rules[0]
    assert rule.weights().keys() == {"a", "b"}
    assert evaluate_expr(rule.severity, {"a": 1.0, "b": 0.0}) == 2.5
    assert format_expr(rule.severity) == "2.0 * (a + b) - -0.5"


def test_format_expr_keeps_needed_parentheses():
    expr = BinOp("-", Num(1.0), BinOp("-", Weight("a"), Weight("b")))
    assert format_expr(expr) == "1.0 - (a - b)"
    assert format_expr(Neg(BinOp("+", Num(1.0), Weight("a")))) == "-(1.0 + a)"


@pytest.mark.parametrize(
    "value, text",
    [(2.0, "2.0"), (0.5, "0.5"), (1e-07, "0.0000001"), (1e16, "10000000000000000"), (1.5e-10, "0.00000000015")],
)
def test_format_number_is_exact(value, text):
    assert format_number(value) == text
    assert float(text) == value


def test_tiny_severity_constant_survives_serialization():
    pack = parse_rules("rule tiny\nIF w: DS.Provide{Consent}\nTHEN {t} severity = 0.0000001 + w\n", "p")
    assert pack.rules[0].severity == BinOp("+", Num(1e-07), Weight("w"))
    text = serialize_rules(pack)
    assert parse_rules(text, "p") == pack
    assert serialize_rules(parse_rules(text, "p")) == text


def test_number_out_of_range():
    with pytest.raises(ParseError) as info:
        parse_rules("IF w: DS.Provide{A}\nTHEN {t} severity = " + "9" * 400 + "\n", "p")
    assert info.value.code == "E_SYNTAX"


@pytest.mark.parametrize(
    "text, code, position",
    [
        ("IF DS.Fly{Consent}\nTHEN {t}\n", "E_UNKNOWN_ACTION", (1, 7)),
        ("IF XX.Provide{Consent}\nTHEN {t}\n", "E_UNKNOWN_ROLE", (1, 4)),
        ("IF DS.Provide{Consent}\n", "E_SYNTAX", (2, 1)),
        ("IF DS.Provide{Consent}=MAYBE\nTHEN {t}\n", "E_SYNTAX", (1, 24)),
        ("rule d stratum derivation\nIF DS.Provide{A}\nTHEN {DS.Provide{B}=NOT}\n", "E_NEGATED_CONCLUSION", (3, 7)),
        ("rule d stratum sideways\nIF DS.Provide{A}\nTHEN {t}\n", "E_UNKNOWN_KEYWORD", (1, 16)),
        ("IF a: DS.Provide{A}\nTHEN {t} severity = a + z\n", "E_UNKNOWN_WEIGHT", (1, 1)),
        ("IF a: DS.Provide{A} AND a: DS.Provide{B}\nTHEN {t}\n", "E_DUPLICATE_LABEL", (1, 28)),
    ],
)
def test_rule_parse_errors(text, code, position):
    with pytest.raises(ParseError) as info:
        parse_rules(text, "p")
    assert info.value.code == code
    assert (info.value.span.line, info.value.span.column) == position


def test_duplicate_and_shadowed_rules():
    text = (
        "rule a\nIF DS.Provide{A}\nTHEN {t}\n\n"
        "rule a\nIF DS.Provide{B}\nTHEN {t}\n\n"
        "rule c\nIF DS.Provide{A}\nTHEN {t}\n"
    )
    assert codes(validate_rulepack(parse_rules(text, "p"))) == ["E_DUP_RULE", "W_SHADOWED"]


def test_derivation_negating_its_own_conclusion_is_unstratified():
    text = (
        "rule loop stratum derivation\n"
        "IF DC.Provide{DP.Foo} AND DC.Provide{DP.Bar}=NOT\n"
        "THEN {DC.Provide{DP.Bar}}\n"
    )
    assert codes(validate_rulepack(parse_rules(text, "p"))) == ["E_STRATIFICATION"]


def test_exclude_in_derivation_counts_as_negation():
    text = (
        "rule bar stratum derivation\nIF DC.Provide{DP.Foo}\nTHEN {DC.Provide{DP.Bar}}\n\n"
        "rule baz stratum derivation\nIF DC.Provide{DP.Foo} EXCLUDE IF DC.Provide{DP.Bar}\nTHEN {DC.Provide{DP.Baz}}\n"
    )
    assert codes(validate_rulepack(parse_rules(text, "p"))) == ["E_STRATIFICATION"]


def test_threat_rules_may_negate_derived_facts():
    text = (
        "rule bar stratum derivation\nIF DC.Provide{DP.Foo}\nTHEN {DC.Provide{DP.Bar}}\n\n"
        "rule t\nIF DC.Provide{DP.Foo} AND DC.Provide{DP.Bar}=NOT\nTHEN {t}\n"
    )
    assert validate_rulepack(parse_rules(text, "p")) == []


def test_cross_pack_stratification():
    producer = parse_rules("rule bar stratum derivation\nIF DC.Provide{DP.Foo}\nTHEN {DC.Provide{DP.Bar}}\n", "one")
    consumer = parse_rules(
        "rule baz stratum derivation\nIF DC.Provide{DP.Foo} AND DC.Provide{DP.Bar}=NOT\nTHEN {DC.Provide{DP.Baz}}\n",
        "two",
    )
    assert validate_rulepack(producer) == []
    assert validate_rulepack(consumer) == []
    diags = validate_load_set([producer, consumer])
    assert codes(diags) == ["E_STRATIFICATION"]
    assert "one/bar" in diags[0].message


def test_duplicate_pack_names(gdpr_pack):
    assert codes(validate_load_set([gdpr_pack, gdpr_pack])) == ["E_DUP_PACK"]


def test_role_checks_and_topology_warning():
    text = (
        "rule ex\nIF DS.Provide{Consent} EXCLUDE IF DC.Provide{DS.ConsentRequestForm}\nTHEN {t}\n\n"
        "rule con stratum derivation\nIF DC.Provide{Foo}\nTHEN {DC.Provide{DP.Bar}}\n\n"
        "rule topo\nIF DC.Provide{DP.CrossesBoundary}\nTHEN {leak}\n"
    )
    assert codes(validate_rulepack(parse_rules(text, "p"))) == [
        "E_CONCLUSION_ROLE",
        "E_EXCLUDE_ROLE",
        "W_TOPOLOGY_IN_THREAT",
    ]


def test_stratum_must_match_conclusion():
    rule = Rule("odd", pos("DS", Action.PROVIDE, "A"), ThreatType("t"), stratum=Stratum.DERIVATION)
    assert codes(validate_rulepack(RulePack("p", (rule,)))) == ["E_STRATUM_CONCLUSION"]


def test_slugify():
    assert slugify("non-provided right to erasure") == "non_provided_right_to_erasure"
    assert slugify("28 days") == "rule_28_days"


def test_format_condition_parenthesizes_or_under_and():
    cond = AllOf((pos("DS", Action.PROVIDE, "A"), AnyOf((pos("DS", Action.PROVIDE, "B"), pos("DS", Action.PROVIDE, "C")))))
    assert format_condition(cond) == "DS.Provide{A} AND (DS.Provide{B} OR DS.Provide{C})"


def test_bundled_packs_survive_serialization(all_packs):
    for pack in all_packs:
        assert parse_rules(serialize_rules(pack), pack.name) == pack


props = st.from_regex(r"[A-Z][A-Za-z0-9]{0,8}", fullmatch=True)
names = st.from_regex(r"[A-Za-z][A-Za-z0-9 '-]{0,20}", fullmatch=True).map(str.strip).filter(bool)


@st.composite
def atoms(draw, negatable=True, labelled=True):
    subject = draw(st.sampled_from(ROLE_TOKENS))
    owner = draw(st.one_of(st.none(), st.sampled_from(ROLE_TOKENS)))
    negated = draw(st.booleans()) if negatable else False
    # placeholder; numbered per rule by `numbered`
    label = draw(st.sampled_from([None, "w"])) if labelled else None
    return Atom(subject, draw(st.sampled_from(list(Action))), draw(props), owner, negated, label)


conditions = st.recursive(
    atoms(),
    lambda children: st.one_of(
        st.lists(children, min_size=2, max_size=3).map(lambda xs: AllOf(tuple(xs))),
        st.lists(children, min_size=2, max_size=3).map(lambda xs: AnyOf(tuple(xs))),
    ),
    max_leaves=6,
)


def numbered(condition, counter):
    """Give every labelled atom a distinct weight name in document order."""
    if isinstance(condition, Atom):
        return condition if condition.label is None else replace(condition, label=f"w{next(counter)}")
    return type(condition)(tuple(numbered(item, counter) for item in condition.items))


constants = st.floats(min_value=0.0, allow_nan=False, allow_infinity=False).map(abs).map(Num)


def severities(labels):
    leaves = constants if not labels else st.one_of(constants, st.sampled_from(labels).map(Weight))
    return st.recursive(
        leaves,
        lambda children: st.one_of(
            children.map(Neg),
            st.builds(BinOp, st.sampled_from("+-*"), children, children),
        ),
        max_leaves=5,
    )


@st.composite
def rules(draw, index):
    counter = itertools.count()
    include = numbered(draw(conditions), counter)
    exclude = draw(st.one_of(st.none(), conditions))
    if exclude is not None:
        exclude = numbered(exclude, counter)
    labels = [a.label for a in atoms_of(include) + (atoms_of(exclude) if exclude else []) if a.label]
    severity = draw(st.one_of(st.none(), severities(labels)))
    rule_id = f"r{index}"
    if draw(st.booleans()):
        conclusion = DerivedFact(draw(atoms(negatable=False, labelled=False)))
        return Rule(rule_id, include, conclusion, Stratum.DERIVATION, exclude, severity, pack="gen")
    title = draw(st.one_of(st.none(), names))
    return Rule(rule_id, include, ThreatType(draw(names)), Stratum.THREAT, exclude, severity, pack="gen", title=title)


@st.composite
def packs(draw):
    count = draw(st.integers(1, 4))
    return RulePack("gen", tuple(draw(rules(i)) for i in range(count)))


@settings(max_examples=150)
@given(packs())
def test_serialize_then_parse_rules_is_identity(pack):
    text = serialize_rules(pack)
    assert parse_rules(text, "gen") == pack
    assert not re.search(r"\n\n\n", text)
