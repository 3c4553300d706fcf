"""Generate, execute, judge, refine: the per-task trial loop."""

from __future__ import annotations

import json
import logging
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence, Union

from . import prompts
from .catalog import Catalog
from .embeddings import EmbeddingProvider, embed_texts
from .gateway import (ChatRequest, Gateway, GatewayError, GenerationPayload, Message, PayloadError,
                      make_request, parse_generation_payload, parse_json_object)
from .miner import extract_api_mentions
from .skillstore import Skill, Verdict
from .taskgen import TaskRecord

log = logging.getLogger(__name__)

INFEASIBLE = "model declared infeasible"
UNPARSABLE_JUDGMENT = "unparsable judgment"
TIMEOUT_MSG = "Error: execution timeout"


@dataclass(frozen=True)
class ExecResult:
    stdout: str = ""
    error_msg: str | None = None
    before_image: str | None = None
    after_image: str | None = None

    @property
    def ok(self) -> bool:
        return self.error_msg is None

    def to_record(self) -> dict:
        return {"stdout": self.stdout, "error_msg": self.error_msg,
                "before_image": self.before_image, "after_image": self.after_image}


class Executor(Protocol):
    def run(self, init_code: str, task_code: str) -> ExecResult: ...


class Validator(Protocol):
    def judge(self, task: str, payload: GenerationPayload, exec: ExecResult) -> Verdict: ...


@dataclass(frozen=True)
class TrialRecord:
    attempt: int
    payload: GenerationPayload | None
    exec: ExecResult
    verdict: Verdict | None = None
    raw: str = ""

    @property
    def valid(self) -> bool:
        return self.verdict is not None and self.verdict.valid

    def code_last_round(self) -> str:
        if self.payload is None:
            return self.raw
        return self.payload.combined()

    def to_record(self) -> dict:
        return {
            "attempt": self.attempt,
            "payload": None if self.payload is None else {
                "init_code": self.payload.init_code, "code": self.payload.code,
                "code_name": self.payload.code_name},
            "exec": self.exec.to_record(),
            "verdict": None if self.verdict is None else self.verdict.to_record(),
            "raw": self.raw,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "TrialRecord":
        p = rec.get("payload")
        v = rec.get("verdict")
        return cls(rec["attempt"], GenerationPayload(**p) if p else None, ExecResult(**rec["exec"]),
                   Verdict(**v) if v else None, rec.get("raw", ""))


@dataclass
class Success:
    task: TaskRecord
    skill: Skill
    trials: list[TrialRecord]

    succeeded = True


@dataclass
class Failure:
    task: TaskRecord
    trials: list[TrialRecord] = field(default_factory=list)
    reason: str = ""

    succeeded = False


Outcome = Union[Success, Failure]


def first_success_attempt(trials: Sequence[TrialRecord]) -> int | None:
    for t in trials:
        if t.valid:
            return t.attempt
    return None


def build_feedback_prompt(task: TaskRecord | str, previous: TrialRecord, *, app: str = "the application",
                          language: str = "script") -> list[Message]:
    description = task.description if isinstance(task, TaskRecord) else task
    if previous.verdict is None:
        validation = prompts.NOT_JUDGED
    else:
        validation = f"{previous.verdict.reason} {previous.verdict.suggestion}".strip()
    user = prompts.CODEGEN_FEEDBACK_USER.format(
        task=description,
        code_last_round=previous.code_last_round(),
        error_msg=previous.exec.error_msg or prompts.NO_ERROR,
        validation_last_round=validation,
    )
    return [Message("system", prompts.CODEGEN_SYSTEM.format(app=app, language=language)), Message("user", user)]


def parse_verdict(text: str) -> Verdict:
    obj = parse_json_object(text)
    if set(obj) != {"valid", "reason", "suggestion"}:
        raise PayloadError(f"verdict keys must be valid/reason/suggestion, got {sorted(obj)}")
    if not isinstance(obj["valid"], bool):
        raise PayloadError("verdict 'valid' must be a boolean")
    return Verdict(obj["valid"], str(obj["reason"]), str(obj["suggestion"]))


def lvlm_validate(gateway: Gateway, task: TaskRecord | str, payload: GenerationPayload, exec: ExecResult,
                  *, app: str = "the application") -> Verdict:
    """Ask a judge model; one re-ask on unparsable output, then give up as invalid."""
    description = task.description if isinstance(task, TaskRecord) else task
    system = prompts.VALIDATOR_SYSTEM.format(app=app)
    user = prompts.VALIDATOR_USER.format(task=description, init_code=payload.init_code, code=payload.code,
                                         stdout=exec.stdout or "(none)")
    images = tuple(a for a in (exec.before_image, exec.after_image) if a is not None)
    messages = (Message("system", system), Message("user", user, images))
    resp = gateway.complete(ChatRequest(messages, "judge", gateway.model_id))
    try:
        return parse_verdict(resp.text)
    except PayloadError:
        pass
    retry = messages + (Message("assistant", resp.text), Message("user", prompts.VALIDATOR_REASK))
    resp = gateway.complete(ChatRequest(retry, "judge", gateway.model_id))
    try:
        return parse_verdict(resp.text)
    except PayloadError:
        return Verdict(False, UNPARSABLE_JUDGMENT, "")


class LlmValidator:
    def __init__(self, gateway: Gateway, app: str = "the application"):
        self.gateway = gateway
        self.app = app

    def judge(self, task: str, payload: GenerationPayload, exec: ExecResult) -> Verdict:
        return lvlm_validate(self.gateway, task, payload, exec, app=self.app)


def make_skill(task: TaskRecord, payload: GenerationPayload, verdict: Verdict, trials_used: int,
               provider: EmbeddingProvider, catalog: Catalog | None = None, method_rule: str = "call",
               created_at: float = 0.0) -> Skill:
    emb = embed_texts(provider, [task.description])[0]
    apis = frozenset(extract_api_mentions(payload.code, catalog, method_rule)) if catalog else frozenset()
    return Skill(-1, task.description, payload.init_code, payload.code, payload.code_name, emb, task.origin,
                 apis, trials_used, verdict, created_at)


def generate_skill(task: TaskRecord, gateway: Gateway, executor: Executor, validator: Validator,
                   max_trials: int = 3, *, provider: EmbeddingProvider, catalog: Catalog | None = None,
                   method_rule: str = "call", app: str = "the application", language: str = "script",
                   clock: Callable[[], float] = time.time) -> Outcome:
    """Run up to ``max_trials`` attempts; stop at the first valid verdict.

    Bad model output, execution errors and rejections all become trial
    records fed back into the next attempt. Only a hard gateway failure ends
    the task early.
    """
    if max_trials < 1:
        raise ValueError("max_trials must be >= 1")
    trials: list[TrialRecord] = []
    system = prompts.CODEGEN_SYSTEM.format(app=app, language=language)
    for attempt in range(1, max_trials + 1):
        if trials:
            messages = tuple(build_feedback_prompt(task, trials[-1], app=app, language=language))
            req = ChatRequest(messages, "codegen", gateway.model_id)
        else:
            req = make_request(system, prompts.CODEGEN_FIRST_USER.format(task=task.description), "codegen",
                               gateway.model_id)
        try:
            resp = gateway.complete(req)
        except GatewayError as exc:
            log.warning("task %s: gateway failure on attempt %d: %s", task.id, attempt, exc)
            return Failure(task, trials, f"gateway failure: {exc}")

        try:
            payload = parse_generation_payload(resp.text)
        except PayloadError as exc:
            trials.append(TrialRecord(attempt, None, ExecResult(error_msg=f"Error: {exc}"), None, resp.text))
            continue
        if payload.infeasible:
            trials.append(TrialRecord(attempt, payload, ExecResult(), Verdict(False, INFEASIBLE, ""), resp.text))
            continue

        result = executor.run(payload.init_code, payload.code)
        if not result.ok:
            trials.append(TrialRecord(attempt, payload, result, None, resp.text))
            continue
        verdict = validator.judge(task.description, payload, result)
        trials.append(TrialRecord(attempt, payload, result, verdict, resp.text))
        if verdict.valid:
            skill = make_skill(task, payload, verdict, attempt, provider, catalog, method_rule, clock())
            return Success(task, skill, trials)
    return Failure(task, trials, "no valid verdict within trial budget")


class SubprocessExecutor:
    """Runs an external adapter on two script files.

    ``command`` is an argv list where ``{init}`` and ``{task}`` are replaced
    by the script paths. The adapter prints one JSON object
    ``{"stdout", "error", "before", "after"}`` on stdout.
    """

    allows_concurrent = False

    def __init__(self, command: Sequence[str], timeout: float = 30.0, suffix: str = ".txt"):
        self.command = list(command)
        self.timeout = timeout
        self.suffix = suffix

    def run(self, init_code: str, task_code: str) -> ExecResult:
        with tempfile.TemporaryDirectory() as tmp:
            init_path = Path(tmp) / f"init{self.suffix}"
            task_path = Path(tmp) / f"task{self.suffix}"
            init_path.write_text(init_code, encoding="utf-8")
            task_path.write_text(task_code, encoding="utf-8")
            argv = [a.replace("{init}", str(init_path)).replace("{task}", str(task_path)) for a in self.command]
            try:
                proc = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout)
            except subprocess.TimeoutExpired:
                return ExecResult(error_msg=TIMEOUT_MSG)
            except OSError as exc:
                return ExecResult(error_msg=f"Error: adapter failed to start: {exc}")
        try:
            rec = json.loads(proc.stdout)
        except json.JSONDecodeError:
            tail = (proc.stderr or proc.stdout).strip()[-500:]
            return ExecResult(stdout=proc.stdout, error_msg=f"Error: adapter returned malformed result: {tail}")
        err = rec.get("error")
        if err and not err.startswith("Error: "):
            err = f"Error: {err}"
        return ExecResult(rec.get("stdout", ""), err or None, rec.get("before"), rec.get("after"))
