from collections import Counter

import pytest

from conftest import CORPUS
from upr_audit.cfront import CSyntaxError, SourceUnit, anonymize, lower_to_statements, parse_unit
from upr_audit.cfront.anonymize import STD_NAMES, anonymize_many, build_rename_map, fresh_name

SRC = """#include <stdio.h>
#define BUF_LEN 16
int vsf_sysutil_read(int fd, char *p) { return read(fd, p, BUF_LEN); }
int serve(int fd) {
    char buf[BUF_LEN];
    int n = vsf_sysutil_read(fd, buf);
    if (n < 0)
        printf("%d\\n", n);
    return vsf_sysutil_read(fd, buf);
}
"""


def test_single_fresh_name_everywhere():
    out, mapping = anonymize(SourceUnit.from_text(SRC), seed=7)
    fresh = mapping.pairs["vsf_sysutil_read"]
    assert "vsf_sysutil_read" not in out.text
    assert out.text.count(fresh) == 3


def test_deterministic_for_same_seed_and_differs_across_seeds():
    unit = SourceUnit.from_text(SRC)
    a, ma = anonymize(unit, 1)
    b, mb = anonymize(unit, 1)
    c, _ = anonymize(unit, 2)
    assert a.text == b.text and ma.pairs == mb.pairs
    assert a.text != c.text


def test_std_names_and_includes_kept():
    out, mapping = anonymize(SourceUnit.from_text(SRC), 3)
    assert "printf(" in out.text and "read(" in out.text and "#include <stdio.h>" in out.text
    assert not set(mapping.pairs) & STD_NAMES


def test_macros_renamed_in_directives_and_code():
    out, mapping = anonymize(SourceUnit.from_text(SRC), 3)
    new = mapping.pairs["BUF_LEN"]
    assert new.isupper()
    assert f"#define {new} 16" in out.text and out.text.count(new) == 3


def test_rename_all_renames_library_calls():
    out, mapping = anonymize(SourceUnit.from_text(SRC), 3, rename_all=True)
    assert "printf" in mapping.pairs and "printf(" not in out.text


def test_mapping_injective_and_fresh():
    unit = SourceUnit.from_text(SRC)
    _, mapping = anonymize(unit, 5)
    values = list(mapping.pairs.values())
    assert len(values) == len(set(values))
    assert not set(values) & set(mapping.pairs)


def test_collisions_extend_the_name():
    taken = {fresh_name("x", 0)}
    mapping = build_rename_map(["x"], taken, 0)
    assert mapping.pairs["x"] not in taken and mapping.pairs["x"].startswith(fresh_name("x", 0))


def test_unparseable_input_raises():
    with pytest.raises(SyntaxError):
        anonymize(SourceUnit.from_text("int f(){ x @ 1; }"), 0)
    with pytest.raises(CSyntaxError):
        anonymize_many([SourceUnit.from_text("int f(){ x @ 1; }")], 0)


@pytest.mark.parametrize("path", CORPUS, ids=lambda p: p.name)
def test_structure_preserved_on_corpus(path):
    unit = SourceUnit.from_path(path)
    out, _ = anonymize(unit, 11)
    before = [lower_to_statements(fn) for fn in parse_unit(unit).functions]
    parsed = parse_unit(out)
    assert not parsed.errors
    after = [lower_to_statements(fn) for fn in parsed.functions]
    assert len(before) == len(after)
    for a, b in zip(before, after):
        assert len(a.statements) == len(b.statements)
        assert Counter(s.kind for s in a.statements) == Counter(s.kind for s in b.statements)
        assert a.cfg.edges == b.cfg.edges


def test_rename_map_json_sorted():
    _, mapping = anonymize(SourceUnit.from_text(SRC), 3)
    assert list(mapping.to_json()) == sorted(mapping.pairs)
