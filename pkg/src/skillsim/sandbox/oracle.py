"""Ground-truth judges for MiniCanvas task templates."""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Callable, Mapping

from ..gateway import GenerationPayload
from ..skillgen import ExecResult
from ..skillstore import Verdict
from .canvas import Scene, dump_scene, parse_scene

TOL = 1e-6

Check = Callable[[Scene, Scene, Mapping, str], "str | None"]


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= TOL


def _sizes_kept(before: Scene, after: Scene) -> str | None:
    if set(before.objects) != set(after.objects):
        return f"object set changed: {len(before)} -> {len(after)} objects"
    for oid, o in before.objects.items():
        a = after.objects[oid]
        if a.shape != o.shape or not _close(a.w, o.w) or not _close(a.h, o.h):
            return f"object {oid} changed shape or size"
    return None


def _only_changed(before: Scene, after: Scene, target: str) -> str | None:
    for oid, o in before.objects.items():
        if oid != target and after.objects.get(oid) != o:
            return f"object {oid} changed but only {target} should"
    return None


def _arrange_circle(before: Scene, after: Scene, p: Mapping, stdout: str) -> str | None:
    bad = _sizes_kept(before, after)
    if bad:
        return bad
    cx, cy, r = float(p.get("cx", 0.0)), float(p.get("cy", 0.0)), float(p["r"])
    sel = after.selection()
    if not sel:
        return "no selected objects to arrange"
    angles = []
    for oid in sel:
        o = after.objects[oid]
        d = math.hypot(o.x - cx, o.y - cy)
        if not _close(d, r):
            return f"object {oid} is {d:.6f} from ({cx:g}, {cy:g}), expected {r:g}"
        angles.append(math.atan2(o.y - cy, o.x - cx) % (2 * math.pi))
    if len(angles) > 1 and r > 0:
        angles.sort()
        step = 2 * math.pi / len(angles)
        gaps = [b - a for a, b in zip(angles, angles[1:])] + [angles[0] + 2 * math.pi - angles[-1]]
        for g in gaps:
            if abs(g - step) * r > TOL * 10:
                return "angular spacing is not uniform"
    for oid, o in before.objects.items():
        if oid not in sel and after.objects[oid] != o:
            return f"unselected object {oid} moved"
    return None


def _align(before: Scene, after: Scene, p: Mapping, stdout: str) -> str | None:
    bad = _sizes_kept(before, after)
    if bad:
        return bad
    edge = p["edge"]
    sel = after.selection()
    if len(sel) < 1:
        return "no selected objects to align"
    objs = [before.objects[k] for k in sel]
    if edge == "left":
        ref, key = min(o.x for o in objs), lambda o: o.x
    elif edge == "right":
        ref, key = max(o.x + o.w for o in objs), lambda o: o.x + o.w
    elif edge == "top":
        ref, key = min(o.y for o in objs), lambda o: o.y
    elif edge == "bottom":
        ref, key = max(o.y + o.h for o in objs), lambda o: o.y + o.h
    elif edge == "hcenter":
        ref = (min(o.x for o in objs) + max(o.x + o.w for o in objs)) / 2
        key = lambda o: o.x + o.w / 2  # noqa: E731
    else:
        ref = (min(o.y for o in objs) + max(o.y + o.h for o in objs)) / 2
        key = lambda o: o.y + o.h / 2  # noqa: E731
    for oid in sel:
        if not _close(key(after.objects[oid]), ref):
            return f"object {oid} is not aligned to the {edge} edge"
    return None


def _count_selected(before: Scene, after: Scene, p: Mapping, stdout: str) -> str | None:
    lines = stdout.strip().splitlines()
    want = str(len(after.selection()))
    if not lines or lines[-1].strip() != want:
        return f"printed count is not {want}"
    for oid, o in before.objects.items():
        a = after.objects.get(oid)
        if a is None or replace(a, selected=o.selected) != o:
            return f"object {oid} changed while counting"
    return None


def _select(state: bool) -> Check:
    def check(before: Scene, after: Scene, p: Mapping, stdout: str) -> str | None:
        if set(before.objects) != set(after.objects):
            return "object set changed"
        for oid, o in after.objects.items():
            if o.selected != state:
                return f"object {oid} is {'not ' if state else ''}selected"
        return None
    return check


def _target(p: Mapping, after: Scene) -> tuple[str, str | None]:
    tid = p["target"]
    if tid not in after.objects:
        return tid, f"object {tid} is missing"
    return tid, None


def _rename(before: Scene, after: Scene, p: Mapping, stdout: str) -> str | None:
    tid, bad = _target(p, after)
    if bad:
        return bad
    if after.objects[tid].name != p["name"]:
        return f"object {tid} is named {after.objects[tid].name}, expected {p['name']}"
    return _only_changed(before, after, tid)


def _move(before: Scene, after: Scene, p: Mapping, stdout: str) -> str | None:
    tid, bad = _target(p, after)
    if bad:
        return bad
    b, a = before.objects[tid], after.objects[tid]
    if not (_close(a.x - b.x, float(p["dx"])) and _close(a.y - b.y, float(p["dy"]))):
        return f"object {tid} moved by ({a.x - b.x:g}, {a.y - b.y:g}), expected ({p['dx']}, {p['dy']})"
    return _only_changed(before, after, tid)


def _fill(before: Scene, after: Scene, p: Mapping, stdout: str) -> str | None:
    tid, bad = _target(p, after)
    if bad:
        return bad
    want = tuple(int(c) for c in p["rgb"])
    if after.objects[tid].fill != want:
        return f"object {tid} fill is {after.objects[tid].fill}, expected {want}"
    return _only_changed(before, after, tid)


def _duplicate(before: Scene, after: Scene, p: Mapping, stdout: str) -> str | None:
    tid, new = p["target"], p["newid"]
    if new not in after.objects:
        return f"copy {new} is missing"
    if tid not in after.objects:
        return f"original {tid} is missing"
    o, c = after.objects[tid], after.objects[new]
    if (c.shape, c.w, c.h) != (o.shape, o.w, o.h):
        return f"copy {new} differs in shape or size from {tid}"
    if len(after) != len(before) + 1:
        return "expected exactly one new object"
    return None


def _delete(before: Scene, after: Scene, p: Mapping, stdout: str) -> str | None:
    tid = p["target"]
    if tid in after.objects:
        return f"object {tid} still present"
    for oid, o in before.objects.items():
        if oid != tid and after.objects.get(oid) != o:
            return f"object {oid} changed but only {tid} should be removed"
    return None


def _add_shape(before: Scene, after: Scene, p: Mapping, stdout: str) -> str | None:
    new = [oid for oid in after.objects if oid not in before.objects]
    if len(new) != int(p.get("count", 1)):
        return f"expected {p.get('count', 1)} new object(s), found {len(new)}"
    for oid in new:
        if after.objects[oid].shape != p["shape"]:
            return f"new object {oid} is a {after.objects[oid].shape}, expected {p['shape']}"
    return None


def _print(before: Scene, after: Scene, p: Mapping, stdout: str) -> str | None:
    if p["text"] not in stdout:
        return f"output does not contain {p['text']!r}"
    return None


TEMPLATES: dict[str, Check] = {
    "arrange-circle": _arrange_circle,
    "align": _align,
    "count-selected": _count_selected,
    "rename": _rename,
    "select-all": _select(True),
    "select-none": _select(False),
    "move": _move,
    "fill": _fill,
    "duplicate": _duplicate,
    "delete": _delete,
    "add-shape": _add_shape,
    "print": _print,
}

# Templates that are satisfied without changing the scene.
_READ_ONLY = {"count-selected", "print"}


def oracle_judge(template: str, before: Scene | str | None, after: Scene | str | None, params: Mapping,
                 stdout: str = "") -> Verdict:
    if template not in TEMPLATES:
        raise KeyError(f"unknown oracle template {template!r}")
    b = before if isinstance(before, Scene) else parse_scene(before)
    a = after if isinstance(after, Scene) else parse_scene(after)
    if template not in _READ_ONLY and dump_scene(a) == dump_scene(b):
        return Verdict(False, "no change between before and after scenes", "make the task code change the scene")
    problem = TEMPLATES[template](b, a, params, stdout)
    if problem:
        return Verdict(False, problem, "fix the task code so the scene satisfies the task")
    return Verdict(True, f"{template} satisfied", "")


class OracleValidator:
    """Validator backed by a description -> (template, params) book."""

    def __init__(self, book: Mapping[str, tuple[str, Mapping]]):
        self.book = dict(book)

    def judge(self, task: str, payload: GenerationPayload, exec: ExecResult) -> Verdict:
        entry = self.book.get(task)
        if entry is None:
            return Verdict(False, "no oracle registered for this task", "")
        template, params = entry
        return oracle_judge(template, exec.before_image, exec.after_image, params, exec.stdout)
