"""Append-only skill store with exact cosine retrieval.

Skills live in ``skills.jsonl`` inside the store directory, one record per
line; the in-memory index (embedding matrix) is rebuilt on open.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import prompts
from .embeddings import EmbeddingProvider, embed_texts
from .gateway import Gateway, GenerationPayload, make_request, parse_generation_payload
from .taskgen import Origin, TopDown, origin_from_record, origin_to_record

LOG_NAME = "skills.jsonl"


class StoreError(RuntimeError):
    pass


@dataclass(frozen=True)
class Verdict:
    valid: bool
    reason: str
    suggestion: str

    def to_record(self) -> dict:
        return {"valid": self.valid, "reason": self.reason, "suggestion": self.suggestion}


@dataclass(frozen=True)
class Skill:
    id: int
    description: str
    init_code: str
    code: str
    code_name: str
    embedding: np.ndarray = field(compare=False, repr=False)
    origin: Origin
    apis_used: frozenset[int]
    trials_used: int
    verdict: Verdict
    created_at: float = 0.0

    @property
    def origin_kind(self) -> str:
        return "topdown" if isinstance(self.origin, TopDown) else "bottomup"

    def to_record(self) -> dict:
        emb = np.ascontiguousarray(self.embedding, dtype="<f8")
        return {
            "id": self.id,
            "description": self.description,
            "init_code": self.init_code,
            "code": self.code,
            "code_name": self.code_name,
            "embedding": {"dim": int(emb.size), "b64": base64.b64encode(emb.tobytes()).decode("ascii")},
            "origin": origin_to_record(self.origin),
            "apis_used": sorted(self.apis_used),
            "trials_used": self.trials_used,
            "verdict": self.verdict.to_record(),
            "created_at": self.created_at,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Skill":
        emb = np.frombuffer(base64.b64decode(rec["embedding"]["b64"]), dtype="<f8").astype(np.float64)
        if emb.size != rec["embedding"]["dim"]:
            raise StoreError(f"skill {rec['id']}: embedding length disagrees with dim")
        return cls(
            id=int(rec["id"]),
            description=rec["description"],
            init_code=rec["init_code"],
            code=rec["code"],
            code_name=rec["code_name"],
            embedding=emb,
            origin=origin_from_record(rec["origin"]),
            apis_used=frozenset(rec["apis_used"]),
            trials_used=int(rec["trials_used"]),
            verdict=Verdict(**rec["verdict"]),
            created_at=float(rec.get("created_at", 0.0)),
        )


@dataclass
class QueryResult:
    skill: Skill
    similarity: float
    latency: float
    runtime_tokens: int = 0


@dataclass
class RagAnswer:
    code: str
    payload: GenerationPayload
    examples_used: list[int]
    runtime_tokens: int
    latency: float


class SkillStore:
    def __init__(self, directory: Path | str | None = None, dim: int | None = None):
        self.directory = Path(directory) if directory else None
        self.dim = dim
        self._skills: list[Skill] = []
        self._keys: dict[tuple[str, str], int] = {}
        self._matrix: np.ndarray | None = None
        self._lock = threading.Lock()
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)
            log_path = self.directory / LOG_NAME
            if log_path.exists():
                with log_path.open(encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip():
                            self._index(Skill.from_record(json.loads(line)))

    @classmethod
    def open(cls, directory: Path | str, dim: int | None = None) -> "SkillStore":
        return cls(directory, dim)

    def __len__(self) -> int:
        return len(self._skills)

    def __iter__(self) -> Iterator[Skill]:
        return iter(list(self._skills))

    def get(self, skill_id: int) -> Skill:
        return self._skills[skill_id]

    @property
    def matrix(self) -> np.ndarray:
        m = self._matrix
        if m is None:
            if not self._skills:
                raise StoreError("empty store")
            m = np.stack([s.embedding for s in self._skills])
            self._matrix = m
        return m

    def _index(self, skill: Skill) -> None:
        if self.dim is None:
            self.dim = int(skill.embedding.size)
        self._skills.append(skill)
        self._keys[(skill.description, skill.code)] = skill.id
        self._matrix = None

    def add(self, skill: Skill) -> int:
        if not skill.verdict.valid:
            raise StoreError("refusing a skill whose verdict is not valid")
        if self.dim is not None and skill.embedding.size != self.dim:
            raise StoreError(f"dim mismatch: store {self.dim}, skill {skill.embedding.size}")
        with self._lock:
            existing = self._keys.get((skill.description, skill.code))
            if existing is not None:
                return existing
            skill = replace(skill, id=len(self._skills))
            if self.directory:
                with (self.directory / LOG_NAME).open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(skill.to_record(), ensure_ascii=False) + "\n")
            self._index(skill)
            return skill.id

    def digest(self) -> str:
        """sha256 over canonical records with timestamps left out."""
        h = hashlib.sha256()
        for s in self._skills:
            rec = s.to_record()
            rec.pop("created_at")
            h.update(json.dumps(rec, sort_keys=True, ensure_ascii=False).encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


def add_skill(store: SkillStore, skill: Skill) -> int:
    return store.add(skill)


def _query_vector(provider: EmbeddingProvider, query: str) -> np.ndarray:
    return embed_texts(provider, [query])[0]


def _cosines(store: SkillStore, q: np.ndarray) -> np.ndarray:
    m = store.matrix
    if q.shape[0] != m.shape[1]:
        raise StoreError(f"query dim {q.shape[0]} != store dim {m.shape[1]}")
    norms = np.linalg.norm(m, axis=1) * np.linalg.norm(q)
    return np.clip(m @ q / norms, -1.0, 1.0)


def rank_skills(store: SkillStore, q: np.ndarray, r: int) -> list[tuple[int, float]]:
    """Top-r (id, cosine), ties broken by lower id."""
    cos = _cosines(store, q)
    ids = np.arange(len(cos))
    order = np.lexsort((ids, -cos))[:r]
    return [(int(i), float(cos[i])) for i in order]


def retrieve(store: SkillStore, query: str, provider: EmbeddingProvider) -> QueryResult:
    """Retrieval-only answer: the single highest-cosine skill. No model calls."""
    t0 = time.perf_counter()
    if len(store) == 0:
        raise StoreError("empty store")
    cos = _cosines(store, _query_vector(provider, query))
    best = int(np.argmax(cos))  # first max wins, i.e. lowest id
    return QueryResult(store.get(best), float(cos[best]), time.perf_counter() - t0, 0)


def answer_with_rag(store: SkillStore, query: str, gateway: Gateway, provider: EmbeddingProvider, r: int = 3,
                    *, app: str = "the application", language: str = "script") -> RagAnswer:
    """Generate code with the top-r skills (description + task code) in context.

    Gateway and parse failures propagate; runtime paths do not retry.
    """
    t0 = time.perf_counter()
    if len(store) == 0:
        raise StoreError("empty store")
    top = rank_skills(store, _query_vector(provider, query), r)
    examples = [(store.get(i).description, store.get(i).code) for i, _ in top]
    user = prompts.RAG_USER.format(app=app, examples=prompts.format_examples(examples), task=query)
    req = make_request(prompts.CODEGEN_SYSTEM.format(app=app, language=language), user, "rag", gateway.model_id)
    resp = gateway.complete(req, phase="runtime")
    payload = parse_generation_payload(resp.text)
    return RagAnswer(payload.code, payload, [i for i, _ in top], resp.total_tokens, time.perf_counter() - t0)


def api_coverage(store: SkillStore | Sequence[Skill], origin: str | None = None) -> int:
    """Distinct API ids used by skills, optionally filtered by origin kind."""
    seen: set[int] = set()
    for s in store:
        if origin is None or s.origin_kind == origin:
            seen |= s.apis_used
    return len(seen)

