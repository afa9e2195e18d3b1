import json
import shutil
from pathlib import Path

import pytest

from form57.schema import parse_schema, GroupingAssignment

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def schema_text() -> str:
    return (FIXTURES / "schema" / "form_schema.json").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def schema(schema_text):
    return parse_schema(json.loads(schema_text))


@pytest.fixture(scope="session")
def grouping():
    payload = json.loads((FIXTURES / "schema" / "grouping.json").read_text(encoding="utf-8"))
    return GroupingAssignment.from_payload(payload)


@pytest.fixture
def service_state(tmp_path) -> Path:
    """Writable copy of the canned service state directory."""
    dest = tmp_path / "state"
    shutil.copytree(FIXTURES / "service_state", dest)
    return dest
