"""Task creation: top-down taxonomy rounds and bottom-up API-synergy prompts."""

from __future__ import annotations

import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from . import prompts
from .catalog import Catalog, FunctionalityTaxonomy
from .embeddings import EmbeddingProvider, embed_texts
from .gateway import Gateway, GatewayError
from .linkpred import Ranking

log = logging.getLogger(__name__)

_MARKER = re.compile(r"^\s*(?:[-*•]+\s+|\(?\d+[.)]\s*)")


@dataclass(frozen=True)
class TopDown:
    category: str
    subcategory: str
    round: int

    kind = "topdown"


@dataclass(frozen=True)
class BottomUp:
    anchor: int
    partners: tuple[int, ...]

    kind = "bottomup"


Origin = Union[TopDown, BottomUp]


@dataclass(frozen=True)
class TaskRecord:
    id: str
    description: str
    origin: Origin
    created_at: float = 0.0

    def __post_init__(self) -> None:
        if not self.description.strip() or "\n" in self.description:
            raise ValueError(f"task description must be one non-empty line: {self.description!r}")

    def to_record(self) -> dict:
        return {"id": self.id, "description": self.description,
                "origin": origin_to_record(self.origin), "created_at": self.created_at}

    @classmethod
    def from_record(cls, rec: dict) -> "TaskRecord":
        return cls(rec["id"], rec["description"], origin_from_record(rec["origin"]), rec.get("created_at", 0.0))


def origin_to_record(origin: Origin) -> dict:
    if isinstance(origin, TopDown):
        return {"kind": "topdown", "category": origin.category, "subcategory": origin.subcategory,
                "round": origin.round}
    return {"kind": "bottomup", "anchor": origin.anchor, "partners": list(origin.partners)}


def origin_from_record(rec: dict) -> Origin:
    if rec["kind"] == "topdown":
        return TopDown(rec["category"], rec["subcategory"], int(rec["round"]))
    if rec["kind"] == "bottomup":
        return BottomUp(int(rec["anchor"]), tuple(int(p) for p in rec["partners"]))
    raise ValueError(f"unknown origin kind {rec['kind']!r}")


@dataclass
class RoundMemory:
    """Successful task descriptions per (category, subcategory)."""

    entries: dict[tuple[str, str], list[str]] = field(default_factory=dict)

    def add(self, category: str, subcategory: str, description: str) -> None:
        bucket = self.entries.setdefault((category, subcategory), [])
        if description not in bucket:
            bucket.append(description)

    def get(self, category: str, subcategory: str) -> list[str]:
        return list(self.entries.get((category, subcategory), []))

    def copy(self) -> "RoundMemory":
        return RoundMemory({k: list(v) for k, v in self.entries.items()})


def parse_task_lines(text: str, limit: int | None = 10) -> list[str]:
    """One task per line; list markers and blank lines removed."""
    out = []
    for line in text.splitlines():
        line = _MARKER.sub("", line).strip()
        if line:
            out.append(line)
    return out if limit is None else out[:limit]


def _fan_out(jobs: Sequence, fn: Callable, workers: int) -> list:
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_top_down_round(taxonomy: FunctionalityTaxonomy, memory: RoundMemory, gateway: Gateway, round: int,
                       *, app: str = "the application", n_tasks: int = 10, workers: int = 1,
                       clock: Callable[[], float] = time.time) -> list[TaskRecord]:
    """One gateway call per (category, subcategory); at most ``n_tasks`` kept each."""
    if round < 1:
        raise ValueError("round must be >= 1")
    frozen = memory.copy()
    system = prompts.TASKGEN_SYSTEM.format(app=app)
    pairs = list(enumerate(taxonomy.pairs()))

    def job(item):
        idx, (cat, sub) = item
        user = prompts.TOPDOWN_USER.format(n=n_tasks, subcategory=sub, category=cat, app=app,
                                           memory=prompts.format_memory(frozen.get(cat, sub)))
        try:
            resp = gateway.chat(system, user, "taskgen")
        except GatewayError as exc:
            log.warning("top-down round %d: skipping %s / %s: %s", round, cat, sub, exc)
            return []
        now = clock()
        return [TaskRecord(f"td-r{round}-{idx:03d}-{j:02d}", line, TopDown(cat, sub, round), now)
                for j, line in enumerate(parse_task_lines(resp.text, n_tasks))]

    tasks = [t for batch in _fan_out(pairs, job, workers) for t in batch]
    return sorted(tasks, key=lambda t: t.id)


Ranker = Callable[[int, int], Ranking]


def run_bottom_up(catalog: Catalog, ranker: Ranker, gateway: Gateway, k: int = 5, *,
                  app: str = "the application", n_tasks: int = 10, workers: int = 1,
                  clock: Callable[[], float] = time.time) -> list[TaskRecord]:
    """Prompt once per method anchor with its top-k predicted partners.

    ``ranker(anchor, k)`` returns a ``Ranking``; anchors it cannot rank are
    skipped, as are anchors whose gateway call fails.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    system = prompts.TASKGEN_SYSTEM.format(app=app)

    def job(ep):
        try:
            ranking = ranker(ep.id, k)
        except (ValueError, KeyError) as exc:
            log.warning("bottom-up: no partners for %s: %s", ep.full_name, exc)
            return []
        partners = [catalog[i] for i in ranking.ids]
        user = prompts.BOTTOMUP_USER.format(
            n=n_tasks, app=app, api=ep.full_name, api_description=ep.description,
            top_nodes_info=prompts.format_partners([(p.full_name, p.description) for p in partners]),
        )
        try:
            resp = gateway.chat(system, user, "taskgen")
        except GatewayError as exc:
            log.warning("bottom-up: skipping anchor %s: %s", ep.full_name, exc)
            return []
        now = clock()
        origin = BottomUp(ep.id, tuple(ranking.ids))
        return [TaskRecord(f"bu-{ep.id:05d}-{j:02d}", line, origin, now)
                for j, line in enumerate(parse_task_lines(resp.text, n_tasks))]

    tasks = [t for batch in _fan_out(catalog.methods(), job, workers) for t in batch]
    return sorted(tasks, key=lambda t: t.id)


def dedupe_tasks(tasks: Iterable[TaskRecord], provider: EmbeddingProvider, threshold: float = 0.95,
                 seen: Sequence[str] = ()) -> list[TaskRecord]:
    """Greedy scan in id order; drop a task whose cosine to any kept one is >= threshold.

    ``seen`` holds descriptions from earlier batches that count as kept.
    """
    tasks = sorted(tasks, key=lambda t: t.id)
    if not tasks:
        return []
    vecs = embed_texts(provider, [t.description for t in tasks])
    vecs = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
    kept_vecs = []
    if seen:
        sv = embed_texts(provider, list(seen))
        kept_vecs.extend(sv / np.linalg.norm(sv, axis=1, keepdims=True))
    kept = []
    for task, v in zip(tasks, vecs):
        if kept_vecs and float(np.max(np.stack(kept_vecs) @ v)) >= threshold:
            continue
        kept.append(task)
        kept_vecs.append(v)
    return kept


def write_tasks(tasks: Iterable[TaskRecord], path: Path | str) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in tasks:
            fh.write(json.dumps(t.to_record(), ensure_ascii=False) + "\n")


def read_tasks(path: Path | str) -> list[TaskRecord]:
    with Path(path).open(encoding="utf-8") as fh:
        return [TaskRecord.from_record(json.loads(line)) for line in fh if line.strip()]
