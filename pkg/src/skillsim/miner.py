"""Mine API co-occurrence from scripts into an undirected synergy graph.

Mentions are found by identifier matching on the final dotted segment of each
catalog name. Methods additionally need a call site: under the default
``"call"`` rule the token must be followed by ``(``; under the ``"command"``
rule (line-oriented DSLs such as the sandbox) it must be the first token on
its line. Names inside string literals match too; that is intended.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .catalog import ApiKind, Catalog

_IDENT = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*")
_CALL = re.compile(r"([A-Za-z_$][A-Za-z0-9_$]*)\s*\(")
_COMMAND = re.compile(r"^[ \t]*([A-Za-z_$][A-Za-z0-9_$]*)", re.M)


class GraphError(ValueError):
    pass


class ScriptSource(str, Enum):
    SAMPLE = "sample"
    TOPDOWN = "topdown"
    BOTTOMUP = "bottomup"
    EXTERNAL = "external"


@dataclass(frozen=True)
class ScriptDoc:
    id: str
    source: ScriptSource
    code: str


@dataclass(frozen=True)
class SynergyGraph:
    node_count: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        for u, v in self.edges:
            if not (0 <= u < v < self.node_count):
                raise GraphError(f"bad edge ({u}, {v}) for {self.node_count} nodes")

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edges

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def neighbors(self) -> list[set[int]]:
        nbrs: list[set[int]] = [set() for _ in range(self.node_count)]
        for u, v in self.edges:
            nbrs[u].add(v)
            nbrs[v].add(u)
        return nbrs

    def subgraph_edges(self, edges: Iterable[tuple[int, int]]) -> "SynergyGraph":
        return SynergyGraph(self.node_count, frozenset(edges))


@dataclass(frozen=True)
class EdgeSample:
    u: int
    v: int
    label: int


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.85
    dev_frac: float = 0.05
    test_frac: float = 0.10
    seed: int = 0
    negative_ratio: float = 1.0

    def __post_init__(self) -> None:
        fracs = (self.train_frac, self.dev_frac, self.test_frac)
        if not all(0.0 < f < 1.0 for f in fracs):
            raise GraphError("split fractions must lie in (0, 1)")
        if not math.isclose(sum(fracs), 1.0, abs_tol=1e-9):
            raise GraphError("split fractions must sum to 1")
        if self.negative_ratio <= 0:
            raise GraphError("negative_ratio must be positive")


@dataclass
class EdgeSplits:
    train: list[EdgeSample]
    dev: list[EdgeSample]
    test: list[EdgeSample]

    def positives(self, name: str) -> list[tuple[int, int]]:
        return [(s.u, s.v) for s in getattr(self, name) if s.label == 1]

    def as_dict(self) -> dict[str, list[EdgeSample]]:
        return {"train": self.train, "dev": self.dev, "test": self.test}


def extract_api_mentions(script: ScriptDoc | str, catalog: Catalog, method_rule: str = "call") -> set[int]:
    """Return ids of catalog endpoints mentioned in ``script``."""
    if method_rule not in ("call", "command"):
        raise ValueError(f"unknown method_rule {method_rule!r}")
    code = script.code if isinstance(script, ScriptDoc) else script
    if not code:
        return set()

    idents = set(_IDENT.findall(code))
    if method_rule == "call":
        called = set(_CALL.findall(code))
    else:
        called = {m.group(1) for m in _COMMAND.finditer(code)}

    found = set()
    for ep in catalog:
        name = ep.short_name
        if ep.kind is ApiKind.METHOD:
            if name in called:
                found.add(ep.id)
        elif name in idents:
            found.add(ep.id)
    return found


def build_graph(scripts: Iterable[ScriptDoc], catalog: Catalog, method_rule: str = "call") -> SynergyGraph:
    """Edge (u, v) iff some single script mentions both u and v."""
    edges: set[tuple[int, int]] = set()
    for script in scripts:
        ids = sorted(extract_api_mentions(script, catalog, method_rule))
        edges.update(itertools.combinations(ids, 2))
    return SynergyGraph(len(catalog), frozenset(edges))


def split_edges(graph: SynergyGraph, spec: SplitSpec | None = None) -> EdgeSplits:
    """Seeded split of positive edges plus disjoint uniform negatives.

    Positive sizes use floor for dev/test; the remainder goes to train.
    Each split gets ``floor(negative_ratio * positives)`` negatives.
    """
    spec = spec or SplitSpec()
    n = graph.node_count
    pos = graph.sorted_edges()
    n_pos = len(pos)
    n_dev = math.floor(spec.dev_frac * n_pos)
    n_test = math.floor(spec.test_frac * n_pos)
    n_train = n_pos - n_dev - n_test
    sizes = (n_train, n_dev, n_test)
    neg_sizes = [math.floor(spec.negative_ratio * s) for s in sizes]

    iu, iv = np.triu_indices(n, k=1)
    adj = np.zeros((n, n), dtype=bool)
    if pos:
        pu, pv = np.array(pos, dtype=np.int64).T
        adj[pu, pv] = True
    non_mask = ~adj[iu, iv]
    non_u, non_v = iu[non_mask], iv[non_mask]
    if sum(neg_sizes) > len(non_u):
        raise GraphError(
            f"not enough non-edges: need {sum(neg_sizes)}, graph has {len(non_u)}"
        )
    if n_pos < 10:
        raise GraphError(f"too few edges to split: {n_pos} < 10")

    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(n_pos)
    neg_idx = rng.choice(len(non_u), size=sum(neg_sizes), replace=False)

    out: list[list[EdgeSample]] = []
    p_off = 0
    n_off = 0
    for size, nsize in zip(sizes, neg_sizes):
        samples = [EdgeSample(*pos[i], 1) for i in order[p_off : p_off + size]]
        for j in neg_idx[n_off : n_off + nsize]:
            samples.append(EdgeSample(int(non_u[j]), int(non_v[j]), 0))
        out.append(samples)
        p_off += size
        n_off += nsize
    return EdgeSplits(*out)


def write_edge_list(graph: SynergyGraph, path: Path | str) -> None:
    """Header line ``# nodes <n>`` then one ``u v`` pair per line."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"# nodes {graph.node_count}\n")
        for u, v in graph.sorted_edges():
            fh.write(f"{u} {v}\n")


def read_edge_list(path: Path | str) -> SynergyGraph:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# nodes "):
        raise GraphError(f"{path}: missing node-count header")
    n = int(lines[0].split()[2])
    edges = set()
    for line in lines[1:]:
        if line.strip():
            u, v = map(int, line.split())
            edges.add((min(u, v), max(u, v)))
    return SynergyGraph(n, frozenset(edges))


def script_coverage(scripts: Sequence[ScriptDoc], catalog: Catalog, method_rule: str = "call") -> int:
    """Distinct endpoints mentioned across a script collection."""
    seen: set[int] = set()
    for s in scripts:
        seen |= extract_api_mentions(s, catalog, method_rule)
    return len(seen)
