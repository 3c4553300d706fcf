"""API catalog and functionality taxonomy loaders.

Both inputs are line-delimited JSON: one record per line, blank lines ignored.

Catalog record::

    {"full_name": "pathItems.ellipse", "kind": "method",
     "description": "...", "parent_object": "pathItems"}

Taxonomy record::

    {"category": "Drawing", "subcategories": ["Drawing basics", "Edit paths"]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator


class CatalogError(ValueError):
    pass


class ApiKind(str, Enum):
    METHOD = "method"
    ATTRIBUTE = "attribute"


@dataclass(frozen=True)
class ApiEndpoint:
    id: int
    full_name: str
    kind: ApiKind
    description: str = ""
    parent_object: str = ""

    @property
    def short_name(self) -> str:
        return self.full_name.rsplit(".", 1)[-1]

    def to_record(self) -> dict:
        return {
            "full_name": self.full_name,
            "kind": self.kind.value,
            "description": self.description,
            "parent_object": self.parent_object,
        }


@dataclass
class Catalog:
    endpoints: list[ApiEndpoint]
    name_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.name_index:
            self.name_index = {ep.full_name: ep.id for ep in self.endpoints}

    def __len__(self) -> int:
        return len(self.endpoints)

    def __iter__(self) -> Iterator[ApiEndpoint]:
        return iter(self.endpoints)

    def __getitem__(self, api_id: int) -> ApiEndpoint:
        return self.endpoints[api_id]

    def lookup(self, api_id: int) -> ApiEndpoint:
        return self.endpoints[api_id]

    def id_of(self, full_name: str) -> int:
        return self.name_index[full_name]

    def methods(self) -> list[ApiEndpoint]:
        return [ep for ep in self.endpoints if ep.kind is ApiKind.METHOD]

    def attributes(self) -> list[ApiEndpoint]:
        return [ep for ep in self.endpoints if ep.kind is ApiKind.ATTRIBUTE]

    @property
    def method_count(self) -> int:
        return sum(1 for ep in self.endpoints if ep.kind is ApiKind.METHOD)

    @property
    def attribute_count(self) -> int:
        return len(self.endpoints) - self.method_count

    def descriptions(self) -> list[str]:
        """Text used for node features: name plus description."""
        return [f"{ep.full_name}: {ep.description}".strip() for ep in self.endpoints]


@dataclass(frozen=True)
class Category:
    name: str
    subcategories: tuple[str, ...]


@dataclass
class FunctionalityTaxonomy:
    categories: list[Category]

    def __len__(self) -> int:
        return len(self.categories)

    def pairs(self) -> list[tuple[str, str]]:
        """All (category, subcategory) pairs in file order."""
        return [(c.name, s) for c in self.categories for s in c.subcategories]

    def has(self, category: str, subcategory: str) -> bool:
        return any(c.name == category and subcategory in c.subcategories for c in self.categories)


def _read_records(path: Path | str) -> list[tuple[int, dict]]:
    path = Path(path)
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CatalogError(f"{path}:{lineno}: parse failure: {exc.msg}") from exc
            if not isinstance(rec, dict):
                raise CatalogError(f"{path}:{lineno}: parse failure: record is not an object")
            records.append((lineno, rec))
    return records


def build_catalog(records: Iterable[dict]) -> Catalog:
    endpoints: list[ApiEndpoint] = []
    seen: dict[str, int] = {}
    for rec in records:
        name = rec.get("full_name")
        if not isinstance(name, str) or not name.strip():
            raise CatalogError("parse failure: missing full_name")
        if name in seen:
            raise CatalogError(f"duplicate full_name: {name}")
        try:
            kind = ApiKind(rec.get("kind"))
        except ValueError as exc:
            raise CatalogError(f"parse failure: bad kind {rec.get('kind')!r} for {name}") from exc
        parent = rec.get("parent_object")
        if parent is None:
            parent = name.rsplit(".", 1)[0] if "." in name else ""
        ep = ApiEndpoint(
            id=len(endpoints),
            full_name=name,
            kind=kind,
            description=str(rec.get("description", "")),
            parent_object=str(parent),
        )
        seen[name] = ep.id
        endpoints.append(ep)
    if not endpoints:
        raise CatalogError("empty catalog")
    return Catalog(endpoints, seen)


def load_catalog(path: Path | str) -> Catalog:
    """Load a catalog file; ids follow file order."""
    return build_catalog(rec for _, rec in _read_records(path))


def build_taxonomy(records: Iterable[dict]) -> FunctionalityTaxonomy:
    categories: list[Category] = []
    names: set[str] = set()
    for rec in records:
        name = rec.get("category")
        subs = rec.get("subcategories")
        if not isinstance(name, str) or not name.strip():
            raise CatalogError("parse failure: missing category")
        if not isinstance(subs, list) or not all(isinstance(s, str) for s in subs):
            raise CatalogError(f"parse failure: subcategories of {name} must be a list of strings")
        if name in names:
            raise CatalogError(f"duplicate category: {name}")
        if not subs:
            raise CatalogError(f"category without subcategories: {name}")
        names.add(name)
        categories.append(Category(name, tuple(subs)))
    if not categories:
        raise CatalogError("empty taxonomy")
    return FunctionalityTaxonomy(categories)


def load_taxonomy(path: Path | str) -> FunctionalityTaxonomy:
    return build_taxonomy(rec for _, rec in _read_records(path))


def write_catalog(catalog: Catalog, path: Path | str) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ep in catalog:
            fh.write(json.dumps(ep.to_record(), ensure_ascii=False) + "\n")


def write_taxonomy(taxonomy: FunctionalityTaxonomy, path: Path | str) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for cat in taxonomy.categories:
            rec = {"category": cat.name, "subcategories": list(cat.subcategories)}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
