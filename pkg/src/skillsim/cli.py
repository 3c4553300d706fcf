"""Command-line entry point: ``skillsim <command>``.

Exit codes: 0 success, 1 operational failure, 2 usage error. Progress goes
to stderr as JSON lines; results go to stdout or files in the work dir.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
from pathlib import Path
from typing import Sequence

from . import evalkit
from .catalog import CatalogError
from .config import ConfigError, load_config
from .embeddings import EmbeddingError
from .gateway import GatewayError, PayloadError
from .miner import GraphError
from .pipeline import Interrupted, Pipeline, PipelineError
from .skillstore import StoreError, answer_with_rag, api_coverage, retrieve
from .taskgen import RoundMemory, TopDown, dedupe_tasks, read_tasks, run_bottom_up, run_top_down_round, write_tasks

log = logging.getLogger("skillsim")

OPERATIONAL = (PipelineError, GatewayError, PayloadError, StoreError, GraphError, CatalogError, EmbeddingError,
               OSError, KeyError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="skillsim", description="Offline skill discovery for a scriptable application.")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--seed", type=int, help="global seed (splits, init)")
    p.add_argument("--mode", choices=["live", "replay", "mock"], help="LLM gateway mode")
    p.add_argument("--workdir", help="run directory (overrides paths.workdir)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    s = sub.add_parser("ingest", help="load catalog, taxonomy, scripts and test tasks")
    s.add_argument("--force", action="store_true")

    g = sub.add_parser("graph", help="synergy graph commands")
    gs = g.add_subparsers(dest="action", metavar="action", parser_class=_Parser)
    gb = gs.add_parser("build", help="mine the synergy graph")
    gb.add_argument("--force", action="store_true")

    lp = sub.add_parser("linkpred", help="link prediction commands")
    ls = lp.add_subparsers(dest="action", metavar="action", parser_class=_Parser)
    lt = ls.add_parser("train", help="train the GCN and write a checkpoint")
    lt.add_argument("--force", action="store_true")
    ls.add_parser("eval", help="print held-out metrics")

    t = sub.add_parser("tasks", help="task creation")
    ts = t.add_subparsers(dest="action", metavar="action", parser_class=_Parser)
    td = ts.add_parser("topdown", help="one top-down round")
    td.add_argument("--round", type=int, default=1)
    td.add_argument("--out", help="task file (default <workdir>/tasks_topdown_r<N>.jsonl)")
    bu = ts.add_parser("bottomup", help="bottom-up tasks from the trained model")
    bu.add_argument("--out", help="task file (default <workdir>/tasks_bottomup.jsonl)")

    sk = sub.add_parser("skills", help="skill generation")
    ss = sk.add_subparsers(dest="action", metavar="action", parser_class=_Parser)
    sg = ss.add_parser("generate", help="run the trial loop over a task file")
    sg.add_argument("--tasks", required=True, help="task file from `tasks topdown|bottomup`")

    q = sub.add_parser("query", help="answer a query from the skill store")
    q.add_argument("text")
    q.add_argument("--mode", dest="query_mode", choices=["ro", "rag"], default="ro")
    q.add_argument("--r", type=int, default=None, help="examples for rag (default eval.rag_r)")

    e = sub.add_parser("eval", help="evaluate on the test set and write reports")
    e.add_argument("--system", action="append", choices=list(evalkit.SYSTEMS),
                   help="restrict to a system (repeatable)")

    sub.add_parser("stats", help="print store and run statistics")

    sb = sub.add_parser("sandbox", help="MiniCanvas utilities")
    sbs = sb.add_subparsers(dest="action", metavar="action", parser_class=_Parser)
    sbs.add_parser("demo", help="run a demo script and judge it")
    ex = sbs.add_parser("export", help="write the seed corpus as files")
    ex.add_argument("dir")

    pl = sub.add_parser("pipeline", help="full pipeline")
    pls = pl.add_subparsers(dest="action", metavar="action", parser_class=_Parser)
    pr = pls.add_parser("run", help="run every stage in order")
    pr.add_argument("--force", action="store_true")
    return p


def _config(args):
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.mode:
        overrides["llm"] = {"mode": args.mode}
    if args.workdir:
        overrides["paths"] = {"workdir": args.workdir}
    return load_config(args.config, overrides=overrides)


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


def _cmd_tasks_topdown(pl: Pipeline, args) -> None:
    memory = RoundMemory()
    for s in pl.store():
        if isinstance(s.origin, TopDown):
            memory.add(s.origin.category, s.origin.subcategory, s.description)
    tg = pl.cfg.taskgen
    tasks = run_top_down_round(pl.taxonomy(), memory, pl.gateway, args.round, app=pl.cfg.skillgen.app,
                               n_tasks=tg.tasks_per_prompt, workers=tg.workers)
    tasks = dedupe_tasks(tasks, pl.provider, tg.dedupe_threshold)
    out = Path(args.out) if args.out else pl.path(f"tasks_topdown_r{args.round}.jsonl")
    write_tasks(tasks, out)
    _print({"tasks": len(tasks), "file": str(out)})


def _cmd_tasks_bottomup(pl: Pipeline, args) -> None:
    tg = pl.cfg.taskgen
    tasks = run_bottom_up(pl.catalog(), pl.ranker(), pl.gateway, tg.k, app=pl.cfg.skillgen.app,
                          n_tasks=tg.tasks_per_prompt, workers=tg.workers)
    tasks = dedupe_tasks(tasks, pl.provider, tg.dedupe_threshold)
    out = Path(args.out) if args.out else pl.path("tasks_bottomup.jsonl")
    write_tasks(tasks, out)
    _print({"tasks": len(tasks), "file": str(out)})


def _cmd_skills_generate(pl: Pipeline, args) -> None:
    tasks = read_tasks(args.tasks)
    origin = "bottomup" if tasks and not isinstance(tasks[0].origin, TopDown) else "topdown"
    outcomes = pl._generate(tasks, pl.path(f"trials_{origin}.jsonl"))
    _print({"tasks": len(tasks), "skills": sum(o.succeeded for o in outcomes), "store_size": len(pl.store())})


def _cmd_query(pl: Pipeline, args) -> None:
    store = pl.store()
    if args.query_mode == "ro":
        res = retrieve(store, args.text, pl.provider)
        print(f"# skill {res.skill.id} ({res.skill.origin_kind}) similarity {res.similarity:.6f}")
        print(f"# {res.skill.description}")
        print(res.skill.code)
        return
    r = args.r if args.r is not None else pl.cfg.eval.rag_r
    ans = answer_with_rag(store, args.text, pl.gateway, pl.provider, r, app=pl.cfg.skillgen.app,
                          language=pl.cfg.skillgen.language)
    print(f"# examples {ans.examples_used} runtime tokens {ans.runtime_tokens}")
    print(ans.code)


def _cmd_eval(pl: Pipeline, args) -> None:
    if not args.system:
        pl.run_eval(force=True)
        print(pl.path("reports/report.txt").read_text(encoding="utf-8"), end="")
        return
    reports = [pl.evaluate_system(s)[0] for s in args.system]
    print(evalkit.format_table(reports))


def _cmd_stats(pl: Pipeline, args) -> None:
    store = pl.store()
    usage = {}
    for stamp in sorted((pl.wd / "stamps").glob("*.json")):
        usage[stamp.stem] = json.loads(stamp.read_text(encoding="utf-8")).get("usage", {})
    _print({
        "skills": len(store),
        "topdown_skills": sum(s.origin_kind == "topdown" for s in store),
        "bottomup_skills": sum(s.origin_kind == "bottomup" for s in store),
        "api_coverage": {"all": api_coverage(store), "topdown": api_coverage(store, "topdown"),
                         "bottomup": api_coverage(store, "bottomup")},
        "success_at_trial": pl.trial_stats(),
        "store_digest": store.digest() if len(store) else None,
        "usage_by_stage": usage,
    })


DEMO_INIT = "ADD ellipse a 0 0 10 10\nADD ellipse b 10 0 10 10\nADD ellipse c 20 0 10 10\nADD ellipse d 30 0 10 10\n" \
            "SELECT ALL"
DEMO_CODE = "ARRANGE_CIRCLE 0 0 100\nCOUNT_SELECTED"


def _cmd_sandbox(args) -> None:
    from .sandbox import SandboxExecutor, export_corpus, oracle_judge
    if args.action == "export":
        _print({k: str(v) for k, v in export_corpus(args.dir).items()})
        return
    res = SandboxExecutor().run(DEMO_INIT, DEMO_CODE)
    verdict = oracle_judge("arrange-circle", res.before_image, res.after_image, {"cx": 0, "cy": 0, "r": 100},
                           res.stdout)
    print("## init\n" + DEMO_INIT + "\n## task\n" + DEMO_CODE)
    print("## before\n" + (res.before_image or ""))
    print("## after\n" + (res.after_image or ""))
    print("## stdout\n" + res.stdout, end="")
    print(f"## verdict\nvalid={verdict.valid} reason={verdict.reason}")


def dispatch(args) -> int:
    cmd, action = args.command, getattr(args, "action", None)
    if cmd is None:
        raise UsageError("a command is required")
    if cmd in ("graph", "linkpred", "tasks", "skills", "sandbox", "pipeline") and action is None:
        raise UsageError(f"{cmd}: an action is required")
    if cmd == "sandbox":
        _cmd_sandbox(args)
        return 0
    cfg = _config(args)
    pl = Pipeline(cfg)
    previous = signal.getsignal(signal.SIGINT)

    def on_sigint(signum, frame):
        if pl.stop.is_set():
            raise KeyboardInterrupt
        pl.emit(event="stopping", detail="finishing in-flight trials; press Ctrl-C again to abort")
        pl.stop.set()

    signal.signal(signal.SIGINT, on_sigint)
    try:
        force = getattr(args, "force", False)
        if cmd == "ingest":
            pl.run_ingest(force)
        elif cmd == "graph":
            pl.run_graph(force)
        elif cmd == "linkpred" and action == "train":
            pl.run_train(force)
            _print(json.loads(pl._stamp_path("train").read_text(encoding="utf-8"))["info"])
        elif cmd == "linkpred":
            _print(json.loads(pl.path("linkpred_eval.json").read_text(encoding="utf-8")))
        elif cmd == "tasks" and action == "topdown":
            _cmd_tasks_topdown(pl, args)
        elif cmd == "tasks":
            _cmd_tasks_bottomup(pl, args)
        elif cmd == "skills":
            _cmd_skills_generate(pl, args)
        elif cmd == "query":
            _cmd_query(pl, args)
        elif cmd == "eval":
            _cmd_eval(pl, args)
        elif cmd == "stats":
            _cmd_stats(pl, args)
        elif cmd == "pipeline":
            _print(pl.run_all(force))
    finally:
        signal.signal(signal.SIGINT, previous)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"skillsim: error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"skillsim: config error: {exc}", file=sys.stderr)
        return 2
    except Interrupted as exc:
        print(f"skillsim: interrupted: {exc}", file=sys.stderr)
        return 1
    except OPERATIONAL as exc:
        print(f"skillsim: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
