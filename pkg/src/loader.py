"""Loading diagrams and rule packs from files, the bundled set and the search path."""
import logging
from dataclasses import replace
from pathlib import Path

from .config import DEFAULT_PACKS, get_rules_search_path
from .dfd import parse_diagram
from .diagram import Diagram
from .errors import PackNotFoundError, ParseError
from .packs import bundled_pack_text
from .rule_parser import parse_rules
from .rules import RulePack

logger = logging.getLogger(__name__)

RULES_SUFFIX = ".rules"


def load_diagram(path: str | Path) -> Diagram:
    """Parse a `.dfd` file; ParseError carries the path."""
    p = Path(path)
    try:
        return parse_diagram(p.read_bytes())
    except ParseError as exc:
        exc.path = str(p)
        raise


def load_rule_pack(path: str | Path, name: str | None = None) -> RulePack:
    """Parse a `.rules` file; the pack is named after the file stem unless `name` is given."""
    p = Path(path)
    try:
        pack = parse_rules(p.read_bytes(), name or p.stem)
    except ParseError as exc:
        exc.path = str(p)
        raise
    return replace(pack, source=str(p))


def load_bundled(name: str) -> RulePack:
    try:
        text = bundled_pack_text(name)
    except FileNotFoundError:
        raise PackNotFoundError(f"no bundled rule pack named {name!r}") from None
    source = f"<bundled {name}{RULES_SUFFIX}>"
    try:
        pack = parse_rules(text, name)
    except ParseError as exc:
        exc.path = source
        raise
    return replace(pack, source=source)


def discover_packs(directory: str | Path) -> list[Path]:
    """All `.rules` files in a directory (non-recursive), sorted by name."""
    d = Path(directory)
    if not d.is_dir():
        logger.warning("rule pack directory %s does not exist", d)
        return []
    return sorted(p for p in d.iterdir() if p.suffix == RULES_SUFFIX and p.is_file())


def resolve_packs(
    rule_paths: list[str] | None = None,
    use_defaults: bool = True,
    only: list[str] | None = None,
) -> list[RulePack]:
    """Bundled packs and GDPRTM_RULES_PATH (unless disabled), then `rule_paths` in order.

    `only` keeps the named packs; naming a pack that is not loaded is an error.
    """
    packs: list[RulePack] = []
    if use_defaults:
        packs.extend(load_bundled(name) for name in DEFAULT_PACKS)
        for directory in get_rules_search_path():
            packs.extend(load_rule_pack(p) for p in discover_packs(directory))
    for raw in rule_paths or []:
        p = Path(raw)
        if p.is_dir():
            packs.extend(load_rule_pack(found) for found in discover_packs(p))
        elif p.exists():
            packs.append(load_rule_pack(p))
        else:
            raise PackNotFoundError(f"rule pack {raw} not found")
    if only:
        loaded = {p.name for p in packs}
        missing = [name for name in only if name not in loaded]
        if missing:
            raise PackNotFoundError(f"rule pack(s) not loaded: {', '.join(missing)}")
        packs = [p for p in packs if p.name in only]
    logger.debug("resolved packs: %s", ", ".join(p.name for p in packs) or "none")
    return packs
