"""MiniCanvas: a tiny deterministic scene plus a line-oriented command language.

Commands (one per line; blank lines and ``#`` comments are skipped)::

    ADD <rect|ellipse|text> <id> <x> <y> <w> <h>
    SELECT <id>|ALL|NONE
    MOVE <id> <dx> <dy>
    SET <id> <x|y|w|h|name|selected> <value>
    ARRANGE_CIRCLE <cx> <cy> <r>
    ALIGN <left|right|top|bottom|hcenter|vcenter>
    DELETE <id>
    PRINT <text...>
    FILL <id> <r> <g> <b>
    RENAME <id> <name>
    DUP <id> <newid>
    COUNT_SELECTED

A program is all-or-nothing: the first failing line aborts it and the scene
is left as it was. Selection order is scene (insertion) order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from ..skillgen import ExecResult

SHAPES = ("rect", "ellipse", "text")
EDGES = ("left", "right", "top", "bottom", "hcenter", "vcenter")
FIELDS = ("x", "y", "w", "h", "name", "selected")
COMMANDS = ("ADD", "SELECT", "MOVE", "SET", "ARRANGE_CIRCLE", "ALIGN", "DELETE", "PRINT", "FILL", "RENAME",
            "DUP", "COUNT_SELECTED")


class ScriptError(Exception):
    pass


@dataclass
class Obj:
    shape: str
    x: float
    y: float
    w: float
    h: float
    selected: bool = False
    name: str = ""
    fill: tuple[int, int, int] | None = None


@dataclass
class Scene:
    objects: dict[str, Obj] = field(default_factory=dict)

    def copy(self) -> "Scene":
        return Scene({k: replace(v) for k, v in self.objects.items()})

    def selection(self) -> list[str]:
        return [k for k, o in self.objects.items() if o.selected]

    def __len__(self) -> int:
        return len(self.objects)


def _num(tok: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ScriptError(f"bad number {tok!r}") from None
    if not math.isfinite(v):
        raise ScriptError(f"bad number {tok!r}")
    return v


def _obj(scene: Scene, oid: str) -> Obj:
    try:
        return scene.objects[oid]
    except KeyError:
        raise ScriptError(f"unknown object {oid}") from None


def _arity(cmd: str, args: list[str], n: int) -> None:
    if len(args) != n:
        raise ScriptError(f"{cmd} expects {n} argument{'s' if n != 1 else ''}, got {len(args)}")


def _selected(scene: Scene) -> list[Obj]:
    sel = [scene.objects[k] for k in scene.selection()]
    if not sel:
        raise ScriptError("no selection")
    return sel


def _exec_line(scene: Scene, cmd: str, args: list[str], out: list[str]) -> None:
    if cmd == "ADD":
        _arity(cmd, args, 6)
        shape, oid = args[0], args[1]
        if shape not in SHAPES:
            raise ScriptError(f"unknown shape {shape}")
        if oid in scene.objects:
            raise ScriptError(f"object {oid} already exists")
        x, y, w, h = (_num(t) for t in args[2:])
        if w <= 0 or h <= 0:
            raise ScriptError("size must be positive")
        scene.objects[oid] = Obj(shape, x, y, w, h, name=oid)
    elif cmd == "SELECT":
        _arity(cmd, args, 1)
        target = args[0]
        if target in ("ALL", "NONE"):
            for o in scene.objects.values():
                o.selected = target == "ALL"
        else:
            _obj(scene, target).selected = True
    elif cmd == "MOVE":
        _arity(cmd, args, 3)
        o = _obj(scene, args[0])
        o.x += _num(args[1])
        o.y += _num(args[2])
    elif cmd == "SET":
        _arity(cmd, args, 3)
        o = _obj(scene, args[0])
        fld, val = args[1], args[2]
        if fld not in FIELDS:
            raise ScriptError(f"unknown field {fld}")
        if fld == "name":
            o.name = val
        elif fld == "selected":
            if val not in ("true", "false", "1", "0"):
                raise ScriptError(f"bad boolean {val!r}")
            o.selected = val in ("true", "1")
        else:
            v = _num(val)
            if fld in ("w", "h") and v <= 0:
                raise ScriptError("size must be positive")
            setattr(o, fld, v)
    elif cmd == "ARRANGE_CIRCLE":
        _arity(cmd, args, 3)
        cx, cy, r = (_num(t) for t in args)
        sel = _selected(scene)
        step = 360.0 / len(sel)
        for i, o in enumerate(sel):
            angle = step * i * (math.pi / 180.0)
            o.x = cx + r * math.cos(angle)
            o.y = cy + r * math.sin(angle)
    elif cmd == "ALIGN":
        _arity(cmd, args, 1)
        edge = args[0]
        if edge not in EDGES:
            raise ScriptError(f"unknown edge {edge}")
        sel = _selected(scene)
        if edge == "left":
            ref = min(o.x for o in sel)
            for o in sel:
                o.x = ref
        elif edge == "right":
            ref = max(o.x + o.w for o in sel)
            for o in sel:
                o.x = ref - o.w
        elif edge == "top":
            ref = min(o.y for o in sel)
            for o in sel:
                o.y = ref
        elif edge == "bottom":
            ref = max(o.y + o.h for o in sel)
            for o in sel:
                o.y = ref - o.h
        elif edge == "hcenter":
            ref = (min(o.x for o in sel) + max(o.x + o.w for o in sel)) / 2.0
            for o in sel:
                o.x = ref - o.w / 2.0
        else:
            ref = (min(o.y for o in sel) + max(o.y + o.h for o in sel)) / 2.0
            for o in sel:
                o.y = ref - o.h / 2.0
    elif cmd == "DELETE":
        _arity(cmd, args, 1)
        _obj(scene, args[0])
        del scene.objects[args[0]]
    elif cmd == "PRINT":
        out.append(" ".join(args))
    elif cmd == "FILL":
        _arity(cmd, args, 4)
        o = _obj(scene, args[0])
        rgb = []
        for t in args[1:]:
            v = _num(t)
            if v != int(v) or not 0 <= v <= 255:
                raise ScriptError(f"color channel out of range: {t}")
            rgb.append(int(v))
        o.fill = (rgb[0], rgb[1], rgb[2])
    elif cmd == "RENAME":
        _arity(cmd, args, 2)
        _obj(scene, args[0]).name = args[1]
    elif cmd == "DUP":
        _arity(cmd, args, 2)
        src = _obj(scene, args[0])
        if args[1] in scene.objects:
            raise ScriptError(f"object {args[1]} already exists")
        scene.objects[args[1]] = replace(src, selected=False, name=args[1])
    elif cmd == "COUNT_SELECTED":
        _arity(cmd, args, 0)
        out.append(str(len(scene.selection())))
    else:
        raise ScriptError(f"unknown command {cmd}")


def apply_program(scene: Scene, program: str) -> tuple[Scene, str, str | None]:
    """Run ``program`` on a copy of ``scene``.

    Returns (new scene, stdout, error). On error the input scene is returned
    unchanged and error reads ``Error: <line>: <message>``.
    """
    work = scene.copy()
    out: list[str] = []
    for lineno, raw in enumerate(program.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cmd, *args = line.split()
        try:
            _exec_line(work, cmd, args, out)
        except ScriptError as exc:
            stdout = "".join(s + "\n" for s in out)
            return scene, stdout, f"Error: {lineno}: {exc}"
    return work, "".join(s + "\n" for s in out), None


def _fmt(v: float) -> str:
    return f"{round(v, 6) + 0.0:.6f}"


def dump_scene(scene: Scene) -> str:
    """Canonical text dump: one line per object, sorted by id."""
    lines = []
    for oid in sorted(scene.objects):
        o = scene.objects[oid]
        fill = "none" if o.fill is None else ",".join(map(str, o.fill))
        lines.append(f"{oid} shape={o.shape} x={_fmt(o.x)} y={_fmt(o.y)} w={_fmt(o.w)} h={_fmt(o.h)} "
                     f"selected={int(o.selected)} name={o.name} fill={fill}")
    return "\n".join(lines)


def parse_scene(dump: str | None) -> Scene:
    scene = Scene()
    if not dump:
        return scene
    for line in dump.splitlines():
        if not line.strip():
            continue
        oid, *pairs = line.split()
        kv = dict(p.split("=", 1) for p in pairs)
        fill = None if kv["fill"] == "none" else tuple(int(c) for c in kv["fill"].split(","))
        scene.objects[oid] = Obj(kv["shape"], float(kv["x"]), float(kv["y"]), float(kv["w"]), float(kv["h"]),
                                 kv["selected"] == "1", kv["name"], fill)
    return scene


def run_script(scene: Scene, program: str) -> ExecResult:
    after, stdout, err = apply_program(scene, program)
    return ExecResult(stdout, err, dump_scene(scene), dump_scene(after))


class SandboxExecutor:
    """Executor contract over a fresh empty scene: init code, then task code."""

    allows_concurrent = True

    def run(self, init_code: str, task_code: str) -> ExecResult:
        start, init_out, err = apply_program(Scene(), init_code)
        if err is not None:
            return ExecResult(init_out, err.replace("Error: ", "Error: init: ", 1), None, None)
        after, out, err = apply_program(start, task_code)
        return ExecResult(out, err, dump_scene(start), dump_scene(after))
