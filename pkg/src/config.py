"""Configuration from environment."""
import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

# CLI
LOG_LEVEL = os.getenv("GDPRTM_LOG_LEVEL", "WARNING")
MAX_WORKERS = int(os.getenv("GDPRTM_MAX_WORKERS", "4"))

# Packs shipped with the tool, in load order
DEFAULT_PACKS = ("gdpr", "stride", "linddun")


# Extra rule pack directories, os.pathsep-separated; read at call time so a
# changed environment (tests, wrappers) is honoured
def get_rules_search_path() -> list[Path]:
    raw = os.getenv("GDPRTM_RULES_PATH", "")
    return [Path(p) for p in raw.split(os.pathsep) if p.strip()]
