import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.config import DEFAULT_PACKS  # noqa: E402
from src.dfd import parse_diagram  # noqa: E402
from src.loader import load_bundled  # noqa: E402

DATA = ROOT / "tests" / "data"


@pytest.fixture(autouse=True)
def _isolated_rules_path(monkeypatch):
    # a developer's .env must not add packs to the test load set
    monkeypatch.delenv("GDPRTM_RULES_PATH", raising=False)


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def telehealth():
    return parse_diagram((DATA / "telehealth_authored.dfd").read_bytes())


@pytest.fixture
def gdpr_pack():
    return load_bundled("gdpr")


@pytest.fixture
def all_packs():
    return [load_bundled(name) for name in DEFAULT_PACKS]
