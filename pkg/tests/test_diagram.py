from src.diagram import BoundaryKind, Diagram, Entity, EntityKind, Flow, TrustBoundary, validate_diagram
from src.errors import Severity, SourceSpan
from src.vocabulary import GDS, GdprRole


def entity(id, kind=EntityKind.PROCESS, *roles, annotations=()):
    return Entity(id, kind, frozenset(GdprRole(r) for r in roles), annotations=annotations)


def codes(diagnostics):
    return [d.code for d in diagnostics]


def test_telehealth_is_valid(telehealth):
    assert validate_diagram(telehealth) == []


def test_datastore_binds_as_gds():
    store = entity("Records", EntityKind.DATASTORE)
    assert store.role_tokens == (GDS,)
    d = Diagram((store, entity("TSS", EntityKind.PROCESS, "DC")))
    assert [e.id for e in d.entities_with(GDS)] == ["Records"]
    assert d.entities_with("DS") == []


def test_role_tokens_follow_canonical_order():
    assert entity("X", EntityKind.PROCESS, "DP", "DC").role_tokens == ("DC", "DP")


def test_equality_ignores_declaration_order():
    a = entity("A", EntityKind.EXTERNAL, "DS")
    b = entity("B", EntityKind.PROCESS, "DC")
    flows = (Flow("A_B", "A", "B", ("ConsentProvided",)), Flow("B_A", "B", "A"))
    boundary = TrustBoundary("zone", BoundaryKind.GENERIC, frozenset({"B"}))
    one = Diagram((a, b), flows, (boundary,))
    two = Diagram((b, a), tuple(reversed(flows)), (boundary,))
    assert one == two
    assert hash(one) == hash(two)


def test_dangling_flow_reference():
    d = Diagram((entity("A", EntityKind.EXTERNAL, "DS"),), (Flow("A_Ghost", "A", "Ghost"),))
    assert codes(validate_diagram(d)) == ["E_UNKNOWN_REF"]


def test_datastore_with_role_is_rejected():
    d = Diagram((entity("Records", EntityKind.DATASTORE, "DC"),))
    assert "E_DATASTORE_ROLE" in codes(validate_diagram(d))


def test_duplicate_ids_and_self_flow():
    d = Diagram(
        (entity("A"), entity("A")),
        (Flow("loop", "A", "A"),),
    )
    assert codes(validate_diagram(d)) == ["E_DUPLICATE_ID", "E_SELF_FLOW"]


def test_annotation_role_mismatch_on_flow():
    # consent must travel from a data subject to a controller
    d = Diagram(
        (entity("TSS", EntityKind.PROCESS, "DC"), entity("P", EntityKind.EXTERNAL, "DS")),
        (Flow("TSS_P", "TSS", "P", ("ConsentProvided",)),),
    )
    diags = validate_diagram(d)
    assert codes(diags) == ["E_ANNOTATION_ROLE_MISMATCH"]
    assert "TSS(DC) -> P(DS)" in diags[0].message


def test_entity_annotation_requires_eligible_role():
    d = Diagram((entity("P", EntityKind.EXTERNAL, "DS", annotations=("EraseDataWithin28Days",)),))
    assert codes(validate_diagram(d)) == ["E_ANNOTATION_ROLE_MISMATCH"]


def test_unknown_and_duplicate_annotations():
    d = Diagram(
        (entity("P", EntityKind.EXTERNAL, "DS"), entity("TSS", EntityKind.PROCESS, "DC")),
        (Flow("P_TSS", "P", "TSS", ("Teleported", "ConsentProvided", "ConsentProvided")),),
    )
    diags = validate_diagram(d)
    assert sorted(codes(diags)) == ["E_DUPLICATE_ANNOTATION", "W_UNKNOWN_ANNOTATION"]
    unknown = next(d for d in diags if d.code == "W_UNKNOWN_ANNOTATION")
    assert unknown.severity is Severity.WARNING


def test_empty_boundary_and_unknown_member():
    d = Diagram(
        (entity("A"),),
        (),
        (
            TrustBoundary("empty", BoundaryKind.COMPLIANCE, frozenset()),
            TrustBoundary("zone", BoundaryKind.GENERIC, frozenset({"A", "Nowhere"})),
        ),
    )
    assert sorted(codes(validate_diagram(d))) == ["E_EMPTY_BOUNDARY", "E_UNKNOWN_REF"]


def test_second_reporting_mechanism_warns():
    d = Diagram((entity("RM1", EntityKind.PROCESS, "RM"), entity("RM2", EntityKind.PROCESS, "RM")))
    diags = validate_diagram(d)
    assert codes(diags) == ["W_DUPLICATE_SINGLETON_ROLE"]
    assert diags[0].element == "entity RM2"


def test_invalid_id():
    d = Diagram((entity("9lives"),))
    assert codes(validate_diagram(d)) == ["E_INVALID_ID"]


def test_diagnostics_are_ordered_by_location():
    d = Diagram(
        (
            Entity("B", EntityKind.DATASTORE, frozenset({GdprRole.DC}), span=SourceSpan(2, 1)),
            Entity("A", EntityKind.DATASTORE, frozenset({GdprRole.DS}), span=SourceSpan(1, 1)),
        )
    )
    diags = validate_diagram(d)
    assert [x.element for x in diags] == ["entity A", "entity B"]
    assert diags[0].format("x.dfd").startswith("x.dfd:1:1: error E_DATASTORE_ROLE")


def test_boundaries_of(telehealth):
    assert telehealth.boundaries_of("TSS") == frozenset({"hospital"})
    assert telehealth.boundaries_of("OTS") == frozenset({"cloud"})
    assert telehealth.boundaries_of("P") == frozenset()
