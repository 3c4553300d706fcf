"""Deterministic MiniCanvas fixture universe.

Holds the API catalog, sample scripts, taxonomy, the task book that drives
the mock model, and the oracle-backed test tasks.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from ..catalog import Catalog, FunctionalityTaxonomy, build_catalog, build_taxonomy, write_catalog, write_taxonomy
from ..evalkit import TestTask, write_test_tasks
from ..miner import ScriptDoc, ScriptSource

APP = "MiniCanvas"
LANGUAGE = "MiniCanvas script"
METHOD_RULE = "command"

_METHODS = [
    ("ADD", "Create a shape (rect, ellipse or text) with an id, position and size."),
    ("SELECT", "Add an object to the selection, or select ALL or NONE."),
    ("MOVE", "Shift an object by dx, dy."),
    ("SET", "Set one field (x, y, w, h, name, selected) of an object."),
    ("ARRANGE_CIRCLE", "Place the selected objects evenly on a circle of radius r around (cx, cy)."),
    ("ALIGN", "Align the selected objects to an edge or center line."),
    ("DELETE", "Remove an object from the scene."),
    ("PRINT", "Write text to the output."),
    ("FILL", "Set the fill color of an object from red, green and blue channels."),
    ("RENAME", "Change the display name of an object."),
    ("DUP", "Copy an object under a new id."),
    ("COUNT_SELECTED", "Print how many objects are selected."),
]

_ATTRIBUTES = [
    ("item.x", "Horizontal position of an object."),
    ("item.y", "Vertical position of an object."),
    ("item.w", "Width of an object."),
    ("item.h", "Height of an object."),
    ("item.selected", "Whether the object is part of the selection."),
    ("item.name", "Display name of an object."),
    ("item.fill", "Fill color of an object."),
    ("item.shape", "Kind of an object."),
    ("shape.rect", "Rectangle shape kind."),
    ("shape.ellipse", "Ellipse shape kind."),
    ("shape.text", "Text frame shape kind."),
    ("edge.left", "Left edge used by alignment."),
    ("edge.right", "Right edge used by alignment."),
    ("edge.top", "Top edge used by alignment."),
    ("edge.bottom", "Bottom edge used by alignment."),
    ("edge.hcenter", "Horizontal center line used by alignment."),
    ("edge.vcenter", "Vertical center line used by alignment."),
    ("selection.ALL", "Every object in the scene."),
    ("selection.NONE", "The empty selection."),
    ("scene.objects", "Ordered objects of the scene."),
    ("scene.layers", "Layer stack of the scene."),
    ("document.width", "Width of the document."),
    ("document.height", "Height of the document."),
    ("document.units", "Measurement units of the document."),
    ("item.stroke", "Stroke color of an object."),
    ("item.opacity", "Opacity of an object."),
    ("item.locked", "Whether an object is locked against edits."),
    ("item.hidden", "Whether an object is hidden."),
    ("item.rotation", "Rotation angle of an object."),
    ("item.zorder", "Stacking position of an object."),
]

_SAMPLES = [
    "ADD rect a 0 0 10 10\nADD rect b 30 20 10 10\nSELECT ALL\nALIGN left",
    "ADD rect a 0 0 10 10\nADD ellipse b 30 20 10 10\nSELECT ALL\nALIGN top",
    "ADD ellipse a 0 0 10 10\nADD ellipse b 10 10 10 10\nADD ellipse c 20 20 10 10\nSELECT ALL\nARRANGE_CIRCLE 0 0 100",
    "ADD rect a 0 0 10 10\nSELECT a\nCOUNT_SELECTED",
    "ADD text t 0 0 40 10\nRENAME t heading",
    "ADD rect a 0 0 10 10\nFILL a 255 0 0",
    "ADD rect a 0 0 10 10\nDUP a b\nMOVE b 20 0",
    "ADD rect a 0 0 10 10\nADD rect b 20 0 10 10\nDELETE a",
    "ADD rect a 0 0 10 10\nSET a w 30\nSET a h 15",
    "PRINT hello",
    "ADD rect a 0 0 10 10\nSELECT ALL\nCOUNT_SELECTED\nSELECT NONE",
    "ADD ellipse a 0 0 10 10\nADD ellipse b 0 0 10 10\nSELECT ALL\nARRANGE_CIRCLE 50 50 25\nCOUNT_SELECTED",
    "ADD rect a 0 0 10 10\nMOVE a 5 5\nPRINT moved",
    "ADD rect a 0 0 10 10\nDUP a b\nDUP a c\nSELECT ALL\nALIGN bottom",
    "ADD rect a 0 0 10 10\nFILL a 0 0 255\nRENAME a blue_box",
    "ADD text t 0 0 40 10\nSET t name caption\nPRINT renamed",
    "ADD rect a 0 0 10 10\nADD rect b 40 0 20 10\nSELECT ALL\nALIGN hcenter",
    "ADD rect a 0 0 10 10\nADD rect b 0 40 10 20\nSELECT ALL\nALIGN vcenter",
    "ADD rect a 0 0 10 10\nSET a selected true\nMOVE a 10 0",
    "ADD ellipse a 0 0 10 10\nDUP a b\nFILL b 0 255 0",
    "ADD rect a 0 0 10 10\nADD rect b 20 0 10 10\nSELECT b\nDELETE a\nCOUNT_SELECTED",
    "ADD rect a 0 0 10 10\nADD rect b 20 30 10 10\nSELECT ALL\nALIGN right\nPRINT aligned",
    "ADD text t 0 0 40 10\nFILL t 20 20 20\nMOVE t 0 10",
    "ADD rect a 0 0 10 10\nSELECT a\nSET a x 100\nSET a y 100",
    "ADD ellipse a 0 0 10 10\nADD ellipse b 5 5 10 10\nADD ellipse c 9 9 10 10\nADD ellipse d 1 1 10 10\nSELECT ALL\n"
    "ARRANGE_CIRCLE 0 0 100\nFILL a 255 255 0",
]

_TAXONOMY = [
    {"category": "Create and duplicate", "subcategories": ["Basic shapes", "Duplication"]},
    {"category": "Selection and layout", "subcategories": ["Selection", "Alignment", "Circular layouts"]},
    {"category": "Object properties", "subcategories": ["Naming", "Colors", "Reporting"]},
]

# Init snippets reused by task specs.
_ONE = "ADD rect a 0 0 10 10"
_TWO = "ADD rect a 0 0 10 10\nADD rect b 30 20 10 10"
_TWO_SEL = _TWO + "\nSELECT ALL"
_FOUR_SEL = ("ADD ellipse a 0 0 10 10\nADD ellipse b 10 0 10 10\nADD ellipse c 20 0 10 10\n"
             "ADD ellipse d 30 0 10 10\nSELECT ALL")
_THREE = "ADD rect a 0 0 10 10\nADD rect b 20 5 10 10\nADD rect c 40 10 10 10"

# Code text the mock emits for unparsable replies.
PROSE = "<<prose>>"


@dataclass(frozen=True)
class TaskSpec:
    """One authored task: its oracle, and the code the mock emits per attempt.

    ``attempts`` holds (init_code, code) pairs; code "" is an infeasible
    reply and PROSE stands for an unparsable reply.
    """

    description: str
    template: str
    params: Mapping
    attempts: tuple[tuple[str, str], ...]
    subcategory: str | None = None
    round: int = 0
    anchor: str | None = None


def _td(sub, rnd, desc, template, params, *attempts):
    return TaskSpec(desc, template, params, tuple(attempts), subcategory=sub, round=rnd)


def _bu(anchor, desc, template, params, *attempts):
    return TaskSpec(desc, template, params, tuple(attempts), anchor=anchor)


TASK_BOOK: tuple[TaskSpec, ...] = (
    # Basic shapes
    _td("Basic shapes", 1, "Add a rectangle to the canvas", "add-shape", {"shape": "rect"},
        ("", "ADD rect box 10 10 40 20")),
    _td("Basic shapes", 1, "Add an ellipse to the canvas", "add-shape", {"shape": "ellipse"},
        ("", "ADD oval e1 0 0 30 30"), ("", "ADD ellipse oval 0 0 30 30")),
    _td("Basic shapes", 2, "Add a text label to the canvas", "add-shape", {"shape": "text"},
        ("", "ADD text label 0 0 50 10")),
    _td("Basic shapes", 3, "Add a square of size 50 at the origin", "add-shape", {"shape": "rect"},
        ("", "ADD rect square 0 0 50 -50"), ("", "ADD rect square 0 0 50 50")),
    # Duplication
    _td("Duplication", 1, "Duplicate the object a as a_copy", "duplicate", {"target": "a", "newid": "a_copy"},
        (_ONE, "DUP a a_copy")),
    _td("Duplication", 2, "Duplicate object a and shift the copy to the right by 20", "duplicate",
        {"target": "a", "newid": "a_copy"},
        (_ONE, "DUP a\nMOVE a_copy 20 0"), (_ONE, "DUP a a_copy\nMOVE a_copy 20 0")),
    _td("Duplication", 3, "Create a copy of object a and select only the copy", "duplicate",
        {"target": "a", "newid": "a_copy"},
        (_ONE, "DUP a a"), (_ONE, "DUP a a_copy a"), (_ONE, "SELECT a_copy")),
    # Selection
    _td("Selection", 1, "Select all objects on the canvas", "select-all", {},
        (_TWO, "SELECT ALL")),
    _td("Selection", 1, "Deselect all objects on the canvas", "select-none", {},
        (_TWO_SEL, "SELECT ALL"), (_TWO_SEL, "SELECT NONE")),
    _td("Selection", 2, "Count the selected objects and print the number", "count-selected", {},
        (_TWO + "\nSELECT a", "COUNT_SELECTED")),
    _td("Selection", 3, "Invert the current selection", "select-all", {},
        (_TWO, ""), (_TWO + "\nSELECT a", "")),
    # Alignment
    _td("Alignment", 1, "Align the selected objects to the left edge", "align", {"edge": "left"},
        (_TWO_SEL, "ALIGN left")),
    _td("Alignment", 1, "Align the selected objects to the top edge", "align", {"edge": "top"},
        (_TWO_SEL, "ALIGN upper"), (_TWO_SEL, "ALIGN top")),
    _td("Alignment", 2, "Align the selected objects along their right edges", "align", {"edge": "right"},
        (_TWO_SEL, "ALIGN right")),
    _td("Alignment", 2, "Center the selected objects horizontally", "align", {"edge": "hcenter"},
        (_TWO_SEL, "ALIGN vcenter"), (_TWO_SEL, "ALIGN hcenter")),
    _td("Alignment", 3, "Align the selected objects to the bottom edge", "align", {"edge": "bottom"},
        (_TWO_SEL, "ALIGN bottom")),
    # Circular layouts
    _td("Circular layouts", 1, "Arrange the selected objects in a circle of radius 100 around the origin",
        "arrange-circle", {"cx": 0, "cy": 0, "r": 100},
        (_FOUR_SEL, "ARRANGE_CIRCLE 0 0"), (_FOUR_SEL, "ARRANGE_CIRCLE 0 0 100")),
    _td("Circular layouts", 2, "Arrange all objects evenly on a circle of radius 50 centered at 200 200",
        "arrange-circle", {"cx": 200, "cy": 200, "r": 50},
        (_THREE, "SELECT ALL\nARRANGE_CIRCLE 200 200 40"), (_THREE, "SELECT ALL\nARRANGE_CIRCLE 200 200 50")),
    _td("Circular layouts", 3, "Place the selected objects on a ring and print how many were placed",
        "arrange-circle", {"cx": 0, "cy": 0, "r": 100},
        (_FOUR_SEL, "ARRANGE_CIRCLE 0 0 100\nCOUNT_SELECTED")),
    # Naming
    _td("Naming", 1, "Rename the object a to title", "rename", {"target": "a", "name": "title"},
        ("ADD text a 0 0 50 10", "RENAME a title")),
    _td("Naming", 2, "Set the name field of object a to header", "rename", {"target": "a", "name": "header"},
        ("ADD text a 0 0 50 10", "SET a label header"), ("ADD text a 0 0 50 10", "SET a name header")),
    _td("Naming", 3, "Give object a the numbered name item1", "rename", {"target": "a", "name": "item1"},
        (_ONE, "RENAME a"), (_ONE, "RENAME b item1"), (_ONE, "RENAME a item_1")),
    # Colors
    _td("Colors", 1, "Fill the object a with red", "fill", {"target": "a", "rgb": [255, 0, 0]},
        (_ONE, "FILL a 255 0 0")),
    _td("Colors", 2, "Fill the object a with blue", "fill", {"target": "a", "rgb": [0, 0, 255]},
        (_ONE, "FILL a 0 0 256"), (_ONE, "FILL a 0 0 255")),
    _td("Colors", 3, "Fill object a with a mid gray", "fill", {"target": "a", "rgb": [128, 128, 128]},
        ("", PROSE), (_ONE, "FILL a 128 128 128")),
    # Reporting
    _td("Reporting", 1, "Print a greeting message", "print", {"text": "hello"},
        ("", "PRINT hello")),
    _td("Reporting", 2, "Report how many objects are currently selected", "count-selected", {},
        (_THREE + "\nSELECT b", "PRINT selected:\nCOUNT_SELECTED")),
    _td("Reporting", 3, "Print a summary of every object's fill color", "print", {"text": "fill"},
        ("", ""), ("", " "), ("", "  ")),

    # Bottom-up, keyed by anchor command.
    _bu("MOVE", "Move object a right by 15 and down by 5", "move", {"target": "a", "dx": 15, "dy": 5},
        (_ONE, "MOVE a 15 5")),
    _bu("MOVE", "Move object a up by 10", "move", {"target": "a", "dx": 0, "dy": -10},
        (_ONE, "MOVE a 0 10"), (_ONE, "MOVE a 0 -10")),
    _bu("DELETE", "Delete object a from the canvas", "delete", {"target": "a"},
        (_TWO, "DELETE a")),
    _bu("DELETE", "Duplicate object a then delete the original", "delete", {"target": "a"},
        (_TWO, "DELETE a\nDUP a a_copy"), (_TWO, "DUP a a_copy\nDELETE a")),
    _bu("SET", "Deselect object a by setting its selected field", "select-none", {},
        (_ONE + "\nSELECT a", "SET a selected false")),
    _bu("FILL", "Fill object a with green and move it right by 10", "fill", {"target": "a", "rgb": [0, 128, 0]},
        (_ONE, "FILL a 0 128 0\nMOVE a 10 0")),
    _bu("DUP", "Duplicate object a as b and align both to the left", "duplicate", {"target": "a", "newid": "b"},
        ("ADD rect a 5 0 10 10", "DUP a a"), ("ADD rect a 5 0 10 10", "DUP a\nALIGN left"),
        ("ADD rect a 5 0 10 10", "DUP a b c")),
    _bu("ALIGN", "Select all objects and align them to the left edge", "align", {"edge": "left"},
        (_TWO, "SELECT ALL\nALIGN left")),
    _bu("ARRANGE_CIRCLE", "Select all objects and arrange them in a circle of radius 80", "arrange-circle",
        {"cx": 0, "cy": 0, "r": 80},
        (_THREE, "ARRANGE_CIRCLE 0 0 80"), (_THREE, "SELECT ALL\nARRANGE_CIRCLE 0 0 80")),
    _bu("COUNT_SELECTED", "Select all objects and print how many there are", "count-selected", {},
        (_THREE, "SELECT ALL\nCOUNT_SELECTED")),
    _bu("RENAME", "Rename object a to logo and fill it black", "rename", {"target": "a", "name": "logo"},
        (_ONE, "RENAME a logo\nFILL a 0 0 0")),
    _bu("PRINT", "Print a label and then the number of selected objects", "count-selected", {},
        (_TWO_SEL, "PRINT count\nCOUNT_SELECTED")),
    _bu("ADD", "Add two ellipses next to each other", "add-shape", {"shape": "ellipse", "count": 2},
        ("", "ADD ellipse e1 0 0 20 20\nADD ellipse e2 30 0 20 20")),
)


_TESTS = [
    ("Arrange the selected shapes in a circle of radius 100 around the origin",
     _THREE + "\nSELECT ALL", "arrange-circle", {"cx": 0, "cy": 0, "r": 100}),
    ("Align the selected shapes to the left edge", _THREE + "\nSELECT ALL", "align", {"edge": "left"}),
    ("Align the selected shapes to the top edge", _THREE + "\nSELECT ALL", "align", {"edge": "top"}),
    ("Align the selected shapes along their right edges", _THREE + "\nSELECT ALL", "align", {"edge": "right"}),
    ("Select all the objects on the canvas", _THREE, "select-all", {}),
    ("Deselect all the objects on the canvas", _THREE + "\nSELECT ALL", "select-none", {}),
    ("Count the selected objects and print the count", _THREE + "\nSELECT a\nSELECT c", "count-selected", {}),
    ("Rename object a to title", "ADD text a 0 0 50 10\nADD rect b 0 20 10 10", "rename",
     {"target": "a", "name": "title"}),
    ("Fill object a with red", _TWO, "fill", {"target": "a", "rgb": [255, 0, 0]}),
    ("Fill object a with blue", _TWO, "fill", {"target": "a", "rgb": [0, 0, 255]}),
    ("Delete the object a from the canvas", _THREE, "delete", {"target": "a"}),
    ("Duplicate object a as a_copy", _TWO, "duplicate", {"target": "a", "newid": "a_copy"}),
    ("Move object a right by 15 and down by 5", _TWO, "move", {"target": "a", "dx": 15, "dy": 5}),
    ("Add a rectangle to the canvas", "ADD ellipse z 0 0 5 5", "add-shape", {"shape": "rect"}),
    ("Add an ellipse shape to the canvas", "ADD rect z 0 0 5 5", "add-shape", {"shape": "ellipse"}),
    ("Center the selected shapes horizontally", _THREE + "\nSELECT ALL", "align", {"edge": "hcenter"}),
    ("Align the selected shapes to the bottom edge", _THREE + "\nSELECT ALL", "align", {"edge": "bottom"}),
    ("Arrange the selected shapes on a circle of radius 60 centered at 10 10", _THREE + "\nSELECT ALL",
     "arrange-circle", {"cx": 10, "cy": 10, "r": 60}),
    ("Fill object a with yellow", _TWO, "fill", {"target": "a", "rgb": [255, 255, 0]}),
    ("Center the selected shapes vertically", _THREE + "\nSELECT ALL", "align", {"edge": "vcenter"}),
]


@dataclass
class Corpus:
    scripts: list[ScriptDoc]
    catalog: Catalog
    taxonomy: FunctionalityTaxonomy
    test_tasks: list[TestTask]
    book: tuple[TaskSpec, ...] = TASK_BOOK

    def oracle_book(self) -> dict[str, tuple[str, Mapping]]:
        return {s.description: (s.template, s.params) for s in self.book}


def catalog_records() -> list[dict]:
    recs = [{"full_name": f"canvas.{n}", "kind": "method", "description": d} for n, d in _METHODS]
    recs += [{"full_name": n, "kind": "attribute", "description": d} for n, d in _ATTRIBUTES]
    return recs


def seed_corpus() -> Corpus:
    scripts = [ScriptDoc(f"sample-{i:03d}", ScriptSource.SAMPLE, code) for i, code in enumerate(_SAMPLES)]
    tests = [TestTask(f"test-{i:02d}", d, init, t, p) for i, (d, init, t, p) in enumerate(_TESTS)]
    return Corpus(scripts, build_catalog(catalog_records()), build_taxonomy(_TAXONOMY), tests)


def export_corpus(directory: Path | str) -> dict[str, Path]:
    """Write catalog, taxonomy, scripts and test tasks as plain files."""
    out = Path(directory)
    (out / "scripts").mkdir(parents=True, exist_ok=True)
    corpus = seed_corpus()
    paths = {"catalog": out / "catalog.jsonl", "taxonomy": out / "taxonomy.jsonl",
             "scripts": out / "scripts", "tests": out / "test_tasks.jsonl"}
    write_catalog(corpus.catalog, paths["catalog"])
    write_taxonomy(corpus.taxonomy, paths["taxonomy"])
    for s in corpus.scripts:
        (out / "scripts" / f"{s.id}.mcs").write_text(s.code + "\n", encoding="utf-8")
    write_test_tasks(corpus.test_tasks, paths["tests"])
    return paths
