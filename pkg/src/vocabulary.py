"""Shared vocabulary: GDPR roles, rule actions and the DFD annotation table."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class GdprRole(str, Enum):
    DS = "DS"
    DC = "DC"
    DP = "DP"
    SA = "SA"
    RM = "RM"

    @classmethod
    def parse(cls, token: str) -> "GdprRole":
        try:
            return cls(token.upper())
        except ValueError:
            raise ValueError(f"unknown GDPR role {token!r}") from None


# Reserved subject token binding over every DataStore entity.
GDS = "GDS"

# Canonical order of binding slots and role columns.
ROLE_TOKENS: tuple[str, ...] = tuple(r.value for r in GdprRole) + (GDS,)


def role_rank(token: str) -> int:
    return ROLE_TOKENS.index(token)


def parse_role_token(token: str) -> str | None:
    upper = token.upper()
    return upper if upper in ROLE_TOKENS else None


class Action(str, Enum):
    PROVIDE = "Provide"
    REQUEST = "Request"
    NOTIFY = "Notify"
    RESPONSE = "Response"
    ACCOMPLISH = "Accomplish"
    COMPLAIN = "Complain"
    REPORT = "Report"

    @classmethod
    def parse(cls, token: str) -> "Action":
        folded = token.replace(" ", "").casefold()
        if folded == "accomrequest":
            return cls.ACCOMPLISH
        for action in cls:
            if action.value.casefold() == folded:
                return action
        raise ValueError(f"unknown action {token!r}")


CROSSES_BOUNDARY = "CrossesBoundary"

ANNOTATION_ALIASES: dict[str, str] = {
    "CP": "ConsentProvided",
    "CRFP": "ConsentRequestFormProvided",
}


@dataclass(frozen=True)
class AnnotationSpec:
    """One row of the annotation -> fact table.

    `targets=None` accepts any flow target and never records an object.
    """

    name: str
    sources: frozenset[str]
    targets: frozenset[str] | None
    action: Action
    prop: str
    object_from_target: bool = False
    on_flow: bool = True
    on_entity: bool = False

    def flow_pairs(self, src_tokens: tuple[str, ...], tgt_tokens: tuple[str, ...]) -> list[tuple[str, str | None]]:
        """(subject role, object role) pairs this annotation yields on a flow."""
        if not self.on_flow:
            return []
        subjects = [s for s in src_tokens if s in self.sources]
        if self.targets is None:
            return [(s, None) for s in subjects]
        objects = [t for t in tgt_tokens if t in self.targets]
        if not objects:
            return []
        if not self.object_from_target:
            return [(s, None) for s in subjects]
        return [(s, t) for s in subjects for t in objects]

    def entity_roles(self, tokens: tuple[str, ...]) -> list[str]:
        if not self.on_entity:
            return []
        return [t for t in tokens if t in self.sources]

    def describe(self) -> str:
        subjects = "/".join(sorted(self.sources, key=role_rank))
        if self.targets is None:
            objects = "any"
        else:
            objects = "/".join(sorted(self.targets, key=role_rank))
        return f"{self.name} ({subjects} -> {objects})"


_CONTROLLERS = frozenset({"DC", "DP"})
_ANY_ROLE = frozenset(ROLE_TOKENS)


def _spec(name, sources, targets, action, prop, **kw) -> AnnotationSpec:
    return AnnotationSpec(
        name,
        frozenset(sources),
        None if targets is None else frozenset(targets),
        action,
        prop,
        **kw,
    )


ANNOTATIONS: dict[str, AnnotationSpec] = {
    spec.name: spec
    for spec in (
        _spec("ConsentProvided", {"DS"}, {"DC"}, Action.PROVIDE, "Consent"),
        _spec("ConsentRequestFormProvided", {"DC"}, {"DS"}, Action.PROVIDE, "ConsentRequestForm", object_from_target=True),
        _spec("RequestForErasingData", {"DS"}, {"DC"}, Action.REQUEST, "EraseData", object_from_target=True),
        _spec("RequestCleanData", _CONTROLLERS, {GDS}, Action.REQUEST, "CleanData", object_from_target=True),
        _spec("RequestEraseData", {"DC"}, {"DP"}, Action.REQUEST, "EraseData", object_from_target=True),
        _spec("CleanDataResponse", {GDS}, _CONTROLLERS, Action.RESPONSE, "CleanData"),
        _spec("NotifyRecipientAboutErasingData", _CONTROLLERS, None, Action.NOTIFY, "RecipientAboutErasingData"),
        _spec("EraseDataWithin28Days", _CONTROLLERS, {"DS"}, Action.ACCOMPLISH, "EraseDataWithin28Days", on_entity=True),
        _spec("ComplainDataBreach", {"DS"}, {"RM"}, Action.COMPLAIN, "DataBreach", object_from_target=True),
        _spec("ReportDataBreach", _CONTROLLERS, {"RM"}, Action.REPORT, "DataBreach", object_from_target=True),
        # security and privacy vocabulary consumed by the stride/linddun packs
        _spec("Authenticated", _ANY_ROLE, _ANY_ROLE, Action.PROVIDE, "Authentication", object_from_target=True),
        _spec("Encrypted", _ANY_ROLE, _ANY_ROLE, Action.PROVIDE, "Encryption", object_from_target=True),
        _spec("Pseudonymised", _ANY_ROLE, _ANY_ROLE, Action.PROVIDE, "PseudonymisedData", object_from_target=True),
        _spec("PrivacyNoticeProvided", {"DC"}, {"DS"}, Action.NOTIFY, "PrivacyNotice", object_from_target=True),
        _spec("AuditLogged", _CONTROLLERS, None, Action.ACCOMPLISH, "AuditLog", on_flow=False, on_entity=True),
    )
}


def expand_alias(token: str) -> str:
    return ANNOTATION_ALIASES.get(token, token)


def canonical_property(prop: str) -> str:
    """Vocabulary spelling of a property, matched case-insensitively."""
    return _PROPERTY_SPELLING.get(prop.casefold(), prop)


_PROPERTY_SPELLING: dict[str, str] = {
    spec.prop.casefold(): spec.prop for spec in ANNOTATIONS.values()
}
_PROPERTY_SPELLING[CROSSES_BOUNDARY.casefold()] = CROSSES_BOUNDARY
