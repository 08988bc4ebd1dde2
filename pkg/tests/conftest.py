import json
from pathlib import Path

import pytest

from upr_audit.cfront.lower import lower_to_statements
from upr_audit.cfront.parse import parse_unit
from upr_audit.cfront.source import SourceUnit
from upr_audit.pdg import analyze_function

TESTS = Path(__file__).parent
CORPUS_DIR = TESTS / "corpus"
FIXTURES = TESTS / "fixtures"
CORPUS = sorted(CORPUS_DIR.glob("*.c"))


def load_fixture(name: str):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


def parse_text(text: str, path: str = "t.c"):
    return parse_unit(SourceUnit.from_text(text, path))


def lower_text(text: str, function: str | None = None):
    parsed = parse_text(text)
    assert not parsed.errors, [str(e) for e in parsed.errors]
    fns = {fn.name: fn for fn in parsed.functions}
    fn = fns[function] if function else parsed.functions[0]
    return lower_to_statements(fn)


def analyze_text(text: str, function: str | None = None):
    parsed = parse_text(text)
    assert not parsed.errors, [str(e) for e in parsed.errors]
    fns = {fn.name: fn for fn in parsed.functions}
    return analyze_function(fns[function] if function else parsed.functions[0])


def names(keys) -> set[str]:
    return {k.name for k in keys}


@pytest.fixture
def corpus_paths() -> list[str]:
    return [str(p) for p in CORPUS]
