"""MiniCanvas: a deterministic scripting sandbox with ground-truth judges."""

from .canvas import Obj, Scene, SandboxExecutor, apply_program, dump_scene, parse_scene, run_script
from .corpus import APP, LANGUAGE, METHOD_RULE, Corpus, TaskSpec, TestTask, export_corpus, seed_corpus
from .mockmodel import MockModel
from .oracle import TEMPLATES, OracleValidator, oracle_judge

__all__ = [
    "APP", "LANGUAGE", "METHOD_RULE", "Corpus", "MockModel", "Obj", "OracleValidator", "SandboxExecutor",
    "Scene", "TEMPLATES", "TaskSpec", "TestTask", "apply_program", "dump_scene", "export_corpus",
    "oracle_judge", "parse_scene", "run_script", "seed_corpus",
]
