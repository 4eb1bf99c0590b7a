from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from proswitch.gateway import Gateway, MockProvider  # noqa: E402
from proswitch.lexicon import TermLexicon  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"
FIXTURES = Path(__file__).parent / "fixtures"


def read_golden(name: str) -> str:
    return (GOLDEN / name).read_text(encoding="utf-8").removesuffix("\n")


@pytest.fixture
def golden():
    return read_golden


@pytest.fixture
def mock_gateway():
    def make(script: dict[str, str], **kw) -> Gateway:
        kw.setdefault("sleep", lambda s: None)
        return Gateway(MockProvider(script), **kw)

    return make


@pytest.fixture
def med_lexicon() -> TermLexicon:
    return TermLexicon.from_terms(
        ["enzyme", "gene expression", "heart", "heart attack", "protein", "ubiquitin", "apoptosis"],
        domain_id="med",
    )


@pytest.fixture
def write_json(tmp_path):
    def write(name: str, obj) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(obj), encoding="utf-8")
        return path

    return write
