"""Offline stand-in for the chat model, driven by the sandbox task book."""

from __future__ import annotations

import json
import re
import threading
from collections import defaultdict

from ..gateway import ChatRequest
from .corpus import PROSE, TASK_BOOK, TaskSpec
from .oracle import oracle_judge

PROSE_REPLY = "Sure! The object can be made gray by changing its fill; let me know if you need the script."

_TOPDOWN = re.compile(r"Give me (\d+) most useful tasks related to (.+) under the category of (.+), in ")
_BOTTOMUP = re.compile(r"Give me (\d+) most useful .+ tasks related to (\S+) whose description is")
_PREVIOUS = re.compile(r"Code from the last round:\n(.*?)\n\nExecution error for code from last round:", re.S)
_JUDGE_TASK = re.compile(r"^Task description: (.*)$", re.M)
_JUDGE_OUT = re.compile(r"Execution output: (.*)\Z", re.S)
_EXAMPLE = re.compile(r"Example 1: .*?\nCode:\n(.*?)(?:\n\nExample 2: |\n\nUsing them as reference)", re.S)


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")[:40]


def _render(spec: TaskSpec, index: int) -> str:
    init, code = spec.attempts[index]
    if code == PROSE:
        return PROSE_REPLY
    return json.dumps({"init_code": init, "code": code, "code_name": _slug(spec.description)})


def _echo(spec: TaskSpec, index: int) -> str:
    """What the trial loop will quote back as 'code from the last round'."""
    init, code = spec.attempts[index]
    if code == PROSE:
        return PROSE_REPLY
    return f"{init}\n{code}" if init else code


def _heuristic(task: str) -> str:
    """Direct generation for tasks outside the book: keyword guesses."""
    t = task.lower()
    guesses = [
        ("circle", "ARRANGE_CIRCLE 0 0 100"),
        ("left", "ALIGN left"),
        ("top", "ALIGN top"),
        ("deselect", "SELECT NONE"),
        ("select all", "SELECT ALL"),
        ("count", "COUNT_SELECTED"),
        ("red", "FILL a 255 0 0"),
        ("delete", "DELETE a"),
    ]
    for key, code in guesses:
        if key in t:
            return json.dumps({"init_code": "", "code": code, "code_name": _slug(task)})
    return json.dumps({"init_code": "", "code": "", "code_name": _slug(task)})


class MockModel:
    """Responder for ``Gateway(mode="mock")``.

    Top-down prompts are answered per (category, subcategory) with the book
    tasks of the next round; bottom-up prompts by anchor command. Codegen
    replies follow each task's authored attempt sequence, located from the
    previous code quoted in the feedback prompt, so they do not depend on
    call order.
    """

    def __init__(self, book: tuple[TaskSpec, ...] = TASK_BOOK):
        self.book = book
        self.by_description = {s.description: s for s in book}
        self._rounds: dict[tuple[str, str], int] = defaultdict(int)
        self._lock = threading.Lock()
        self.captured: list[ChatRequest] = []

    def reset(self) -> None:
        """Forget top-down round counters (for a fresh set of rounds)."""
        with self._lock:
            self._rounds.clear()

    def __call__(self, request: ChatRequest) -> str:
        with self._lock:
            self.captured.append(request)
        handler = getattr(self, f"_{request.purpose}")
        return handler(request)

    def _taskgen(self, request: ChatRequest) -> str:
        user = request.user
        m = _TOPDOWN.search(user)
        if m:
            n, sub, cat = int(m.group(1)), m.group(2), m.group(3)
            with self._lock:
                self._rounds[(cat, sub)] += 1
                rnd = self._rounds[(cat, sub)]
            lines = [s.description for s in self.book if s.subcategory == sub and s.round == rnd]
            return "\n".join(lines[:n])
        m = _BOTTOMUP.search(user)
        if m:
            n, command = int(m.group(1)), m.group(2).rsplit(".", 1)[-1]
            lines = [s.description for s in self.book if s.anchor == command]
            return "\n".join(lines[:n])
        return ""

    def _codegen(self, request: ChatRequest) -> str:
        user = request.user
        task = user.splitlines()[0].removeprefix("Task: ")
        spec = self.by_description.get(task)
        if spec is None:
            return _heuristic(task)
        m = _PREVIOUS.search(user)
        if m is None:
            return _render(spec, 0)
        previous = m.group(1)
        for i in range(len(spec.attempts)):
            if _echo(spec, i) == previous:
                return _render(spec, min(i + 1, len(spec.attempts) - 1))
        return _render(spec, len(spec.attempts) - 1)

    def _judge(self, request: ChatRequest) -> str:
        users = [m for m in request.messages if m.role == "user"]
        user_msg = next((m for m in users if m.images), users[0])
        m = _JUDGE_TASK.search(user_msg.content)
        spec = self.by_description.get(m.group(1)) if m else None
        if spec is None or len(user_msg.images) != 2:
            return json.dumps({"valid": False, "reason": "cannot judge this task", "suggestion": ""})
        out = _JUDGE_OUT.search(user_msg.content)
        stdout = out.group(1) if out and out.group(1) != "(none)" else ""
        v = oracle_judge(spec.template, user_msg.images[0], user_msg.images[1], spec.params, stdout)
        return json.dumps(v.to_record())

    def _rag(self, request: ChatRequest) -> str:
        m = _EXAMPLE.search(request.user)
        code = m.group(1) if m else ""
        return json.dumps({"init_code": "", "code": code, "code_name": "adapted_example"})

    def _validator(self, request: ChatRequest) -> str:
        return self._judge(request)
