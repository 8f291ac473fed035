"""GDPR compliance threat modeller."""
__version__ = "0.1.0"

from .dfd import parse_diagram, serialize_diagram
from .diagram import Diagram, validate_diagram
from .engine import explain_threat, run_inference
from .facts import FactBase, extract_facts
from .report import build_report, render
from .rule_parser import parse_rules, serialize_rules
from .rules import RulePack, lint_rulepack, validate_load_set, validate_rulepack

__all__ = [
    "__version__",
    "Diagram",
    "FactBase",
    "RulePack",
    "build_report",
    "explain_threat",
    "extract_facts",
    "lint_rulepack",
    "parse_diagram",
    "parse_rules",
    "render",
    "run_inference",
    "serialize_diagram",
    "serialize_rules",
    "validate_diagram",
    "validate_load_set",
    "validate_rulepack",
]
