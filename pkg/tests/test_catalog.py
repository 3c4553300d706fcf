import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from skillsim.catalog import (
    ApiKind,
    CatalogError,
    build_catalog,
    load_catalog,
    load_taxonomy,
    write_catalog,
)
from conftest import write_jsonl


def test_three_line_fixture(tmp_path):
    path = write_jsonl(tmp_path / "cat.jsonl", [
        {"full_name": "pathItems.ellipse", "kind": "method", "description": "e", "parent_object": "pathItems"},
        {"full_name": "pathItems.rectangle", "kind": "method", "description": "r", "parent_object": "pathItems"},
        {"full_name": "document.selection", "kind": "attribute", "description": "s", "parent_object": "document"},
    ])
    cat = load_catalog(path)
    assert [ep.id for ep in cat] == [0, 1, 2]
    assert cat.method_count == 2
    assert cat.attribute_count == 1
    assert cat.id_of("document.selection") == 2
    assert cat[0].parent_object == "pathItems"


def test_empty_catalog_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(CatalogError, match="empty catalog"):
        load_catalog(path)


def test_duplicate_name_is_reported(tmp_path):
    path = write_jsonl(tmp_path / "dup.jsonl", [
        {"full_name": "a.b", "kind": "method"},
        {"full_name": "a.b", "kind": "attribute"},
    ])
    with pytest.raises(CatalogError, match="duplicate full_name: a.b"):
        load_catalog(path)


def test_parse_failure(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"full_name": "x", "kind": "method"}\nnot json\n', encoding="utf-8")
    with pytest.raises(CatalogError, match=":2: parse failure"):
        load_catalog(path)


def test_bad_kind():
    with pytest.raises(CatalogError, match="bad kind"):
        build_catalog([{"full_name": "x", "kind": "property"}])


def test_parent_defaults_to_prefix():
    cat = build_catalog([{"full_name": "app.documents.add", "kind": "method"}])
    assert cat[0].parent_object == "app.documents"
    assert cat[0].short_name == "add"


def test_catalog_write_roundtrip(tmp_path, tiny_catalog):
    write_catalog(tiny_catalog, tmp_path / "c.jsonl")
    again = load_catalog(tmp_path / "c.jsonl")
    assert again.endpoints == tiny_catalog.endpoints


def test_taxonomy_fixture(tmp_path):
    path = write_jsonl(tmp_path / "tax.jsonl", [
        {"category": "Drawing", "subcategories": ["Drawing basics", "Edit paths"]},
    ])
    tax = load_taxonomy(path)
    assert len(tax) == 1
    assert tax.categories[0].subcategories == ("Drawing basics", "Edit paths")
    assert tax.has("Drawing", "Drawing basics")
    assert tax.pairs() == [("Drawing", "Drawing basics"), ("Drawing", "Edit paths")]


def test_taxonomy_errors(tmp_path):
    empty = tmp_path / "e.jsonl"
    empty.write_text("\n", encoding="utf-8")
    with pytest.raises(CatalogError, match="empty taxonomy"):
        load_taxonomy(empty)
    dup = write_jsonl(tmp_path / "d.jsonl", [
        {"category": "A", "subcategories": ["x"]},
        {"category": "A", "subcategories": ["y"]},
    ])
    with pytest.raises(CatalogError, match="duplicate category"):
        load_taxonomy(dup)
    bare = write_jsonl(tmp_path / "b.jsonl", [{"category": "A", "subcategories": []}])
    with pytest.raises(CatalogError, match="without subcategories"):
        load_taxonomy(bare)


names = st.lists(
    st.from_regex(r"[a-z]{1,6}(\.[a-z]{1,6}){0,2}", fullmatch=True), min_size=1, max_size=30, unique=True
)


@given(names, st.data())
def test_name_index_is_a_bijection(full_names, data):
    kinds = data.draw(st.lists(st.sampled_from(["method", "attribute"]),
                               min_size=len(full_names), max_size=len(full_names)))
    cat = build_catalog([{"full_name": n, "kind": k} for n, k in zip(full_names, kinds)])
    assert sorted(cat.name_index.values()) == list(range(len(cat)))
    for name in full_names:
        assert cat.lookup(cat.name_index[name]).full_name == name
    methods = {ep.id for ep in cat.methods()}
    attrs = {ep.id for ep in cat.attributes()}
    assert methods.isdisjoint(attrs)
    assert methods | attrs == set(range(len(cat)))
    assert cat.method_count == sum(k == "method" for k in kinds) <= len(cat)
    assert all(ep.kind in (ApiKind.METHOD, ApiKind.ATTRIBUTE) for ep in cat)
