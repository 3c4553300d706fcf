"""Resumable offline pipeline: ingest, top-down, graph, train, bottom-up, eval.

Each stage writes a stamp holding a hash of its inputs. Re-running a stage
whose stamp matches and whose outputs exist does nothing.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Sequence, TextIO

import numpy as np

from . import evalkit
from .catalog import Catalog, FunctionalityTaxonomy, load_catalog, load_taxonomy, write_catalog, write_taxonomy
from .config import PipelineConfig
from .embeddings import EmbeddingCache, embed_texts, make_provider
from .gateway import Gateway, TranscriptStore
from .linkpred import (Ranking, TrainConfig, evaluate, load_checkpoint, node_embeddings, save_checkpoint,
                       top_k_synergy, train, write_history_csv)
from .miner import ScriptDoc, ScriptSource, SplitSpec, build_graph, read_edge_list, split_edges, write_edge_list
from .skillgen import Failure, LlmValidator, Outcome, SubprocessExecutor, generate_skill
from .skillstore import SkillStore
from .taskgen import (RoundMemory, TaskRecord, TopDown, dedupe_tasks, read_tasks, run_bottom_up,
                      run_top_down_round, write_tasks)

log = logging.getLogger(__name__)

STAGES = ("ingest", "topdown", "graph", "train", "bottomup", "eval")


class PipelineError(RuntimeError):
    pass


class Interrupted(PipelineError):
    pass


def file_digest(path: Path) -> str | None:
    if not path.exists():
        return None
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode("utf-8")).hexdigest()


class CachedProvider:
    """Provider wrapper that routes every batch through the run's embedding cache."""

    def __init__(self, inner, cache: EmbeddingCache):
        self.inner, self.cache = inner, cache
        self.model_id, self.dim = inner.model_id, inner.dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return embed_texts(self.inner, texts, self.cache)


class Pipeline:
    def __init__(self, cfg: PipelineConfig, *, responder: Callable | None = None, progress: TextIO | None = None):
        self.cfg = cfg
        self.wd = cfg.workdir
        self.wd.mkdir(parents=True, exist_ok=True)
        self._responder = responder
        self._progress = progress if progress is not None else sys.stderr
        self._gateway: Gateway | None = None
        self._store: SkillStore | None = None
        self.stop = threading.Event()
        self._provider = make_provider(cfg.embedding.model_id, cfg.embedding.dim, cfg.embedding.endpoint)
        self._cache = EmbeddingCache(self.wd / "embeddings.jsonl")

    # paths -----------------------------------------------------------------
    def path(self, name: str) -> Path:
        return self.wd / name

    @property
    def store_dir(self) -> Path:
        return Path(self.cfg.paths.store_dir) if self.cfg.paths.store_dir else self.wd / "store"

    @property
    def transcript_path(self) -> Path:
        base = Path(self.cfg.paths.transcript_dir) if self.cfg.paths.transcript_dir else self.wd / "transcripts"
        return base / "transcript.jsonl"

    # shared resources ------------------------------------------------------
    def emit(self, **event) -> None:
        print(json.dumps(event, sort_keys=True), file=self._progress, flush=True)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return embed_texts(self._provider, texts, self._cache)

    @property
    def provider(self) -> "CachedProvider":
        return CachedProvider(self._provider, self._cache)

    @property
    def gateway(self) -> Gateway:
        if self._gateway is None:
            llm = self.cfg.llm
            responder = self._responder
            if llm.mode == "mock" and responder is None:
                if self.cfg.paths.source != "sandbox":
                    raise PipelineError("mock mode needs the sandbox source or an explicit responder")
                from .sandbox import MockModel
                responder = MockModel()
            self.transcript_path.parent.mkdir(parents=True, exist_ok=True)
            transcript = TranscriptStore(self.transcript_path)
            self._gateway = Gateway(llm.mode, responder=responder, transcript=transcript, endpoint=llm.endpoint,
                                    model_id=llm.model_id, api_key_env=llm.api_key_env,
                                    max_parallel=llm.max_parallel, retries=llm.retries, timeout=llm.timeout)
        return self._gateway

    def store(self) -> SkillStore:
        if self._store is None:
            self._store = SkillStore.open(self.store_dir, self.cfg.embedding.dim)
        return self._store

    def executor(self):
        sg = self.cfg.skillgen
        if sg.executor == "subprocess":
            if not sg.adapter_command:
                raise PipelineError("skillgen.adapter_command is required for the subprocess executor")
            return SubprocessExecutor(sg.adapter_command, sg.timeout)
        from .sandbox import SandboxExecutor
        return SandboxExecutor()

    def validator(self, book: dict | None = None):
        if self.cfg.skillgen.judge == "llm":
            return LlmValidator(self.gateway, self.cfg.skillgen.app)
        if self.cfg.paths.source != "sandbox" and not book:
            raise PipelineError("the oracle judge needs sandbox tasks; set skillgen.judge to llm")
        from .sandbox import OracleValidator, seed_corpus
        return OracleValidator(book if book is not None else seed_corpus().oracle_book())

    # corpus accessors ------------------------------------------------------
    def catalog(self) -> Catalog:
        return load_catalog(self._need("catalog.jsonl"))

    def taxonomy(self) -> FunctionalityTaxonomy:
        return load_taxonomy(self._need("taxonomy.jsonl"))

    def scripts(self) -> list[ScriptDoc]:
        with self._need("scripts.jsonl").open(encoding="utf-8") as fh:
            recs = [json.loads(line) for line in fh if line.strip()]
        return [ScriptDoc(r["id"], ScriptSource(r["source"]), r["code"]) for r in recs]

    def test_tasks(self) -> list[evalkit.TestTask]:
        return evalkit.read_test_tasks(self._need("tests.jsonl"))

    def _need(self, name: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise PipelineError(f"{p} is missing; run the earlier stages first")
        return p

    # stamps ----------------------------------------------------------------
    def _stamp_path(self, stage: str) -> Path:
        return self.wd / "stamps" / f"{stage}.json"

    def _fresh(self, stage: str, key: str, outputs: Sequence[Path]) -> bool:
        sp = self._stamp_path(stage)
        if not sp.exists() or not all(p.exists() for p in outputs):
            return False
        return json.loads(sp.read_text(encoding="utf-8")).get("key") == key

    def _stage(self, stage: str, inputs: dict, outputs: Sequence[Path], body: Callable[[], dict | None],
               force: bool = False) -> bool:
        """Run ``body`` unless the stamp says it already ran on these inputs."""
        key = _digest({"stage": stage, "inputs": inputs})
        if not force and self._fresh(stage, key, outputs):
            self.emit(stage=stage, event="skip")
            return False
        self.emit(stage=stage, event="start")
        t0 = time.perf_counter()
        gw = self._gateway
        if gw is not None:
            gw.ledger = type(gw.ledger)()
        info = body() or {}
        usage = self._gateway.ledger.snapshot() if self._gateway is not None else {}
        sp = self._stamp_path(stage)
        sp.parent.mkdir(parents=True, exist_ok=True)
        sp.write_text(json.dumps({"key": key, "info": info, "usage": usage,
                                  "seconds": round(time.perf_counter() - t0, 3)}, sort_keys=True, indent=1),
                      encoding="utf-8")
        self.emit(stage=stage, event="done", **{k: v for k, v in info.items() if isinstance(v, (int, float, str))})
        return True

    # stages ----------------------------------------------------------------
    def run_ingest(self, force: bool = False) -> bool:
        p = self.cfg.paths
        if p.source == "sandbox":
            inputs = {"source": "sandbox"}
        else:
            sdir = Path(p.scripts_dir) if p.scripts_dir else None
            inputs = {"catalog": file_digest(Path(p.catalog)), "taxonomy": file_digest(Path(p.taxonomy)),
                      "tests": file_digest(Path(p.tests)) if p.tests else None,
                      "scripts": {f.name: file_digest(f) for f in sorted(sdir.iterdir()) if f.is_file()}
                      if sdir else {}}

        def body():
            if p.source == "sandbox":
                from .sandbox import seed_corpus
                c = seed_corpus()
                catalog, taxonomy, scripts, tests = c.catalog, c.taxonomy, c.scripts, c.test_tasks
            else:
                if not (p.catalog and p.taxonomy):
                    raise PipelineError("paths.catalog and paths.taxonomy are required for source=files")
                catalog, taxonomy = load_catalog(p.catalog), load_taxonomy(p.taxonomy)
                sdir = Path(p.scripts_dir) if p.scripts_dir else None
                scripts = ([ScriptDoc(f.name, ScriptSource.SAMPLE, f.read_text(encoding="utf-8"))
                            for f in sorted(sdir.iterdir()) if f.is_file()] if sdir else [])
                tests = evalkit.read_test_tasks(p.tests) if p.tests else []
            write_catalog(catalog, self.path("catalog.jsonl"))
            write_taxonomy(taxonomy, self.path("taxonomy.jsonl"))
            with self.path("scripts.jsonl").open("w", encoding="utf-8") as fh:
                for s in scripts:
                    fh.write(json.dumps({"id": s.id, "source": s.source.value, "code": s.code}) + "\n")
            evalkit.write_test_tasks(tests, self.path("tests.jsonl"))
            return {"endpoints": len(catalog), "methods": catalog.method_count, "scripts": len(scripts),
                    "tests": len(tests)}

        outs = [self.path(n) for n in ("catalog.jsonl", "taxonomy.jsonl", "scripts.jsonl", "tests.jsonl")]
        return self._stage("ingest", inputs, outs, body, force)

    def _generate(self, tasks: Sequence[TaskRecord], trials_path: Path) -> list[Outcome]:
        """Trial loop per task; skills are added to the store in task-id order."""
        sg = self.cfg.skillgen
        executor, validator = self.executor(), self.validator()
        catalog = self.catalog()
        gw, provider = self.gateway, self.provider

        def one(task: TaskRecord) -> Outcome:
            if self.stop.is_set():
                return Failure(task, [], "interrupted")
            return generate_skill(task, gw, executor, validator, sg.max_trials, provider=provider,
                                  catalog=catalog, method_rule=sg.method_rule, app=sg.app, language=sg.language)

        ordered = sorted(tasks, key=lambda t: t.id)
        if sg.workers > 1 and getattr(executor, "allows_concurrent", False):
            with ThreadPoolExecutor(max_workers=sg.workers) as pool:
                outcomes = list(pool.map(one, ordered))
        else:
            outcomes = []
            for t in ordered:
                outcomes.append(one(t))
        if self.stop.is_set():
            raise Interrupted("stopped after in-flight trials")
        store = self.store()
        with trials_path.open("a", encoding="utf-8") as fh:
            for o in outcomes:
                skill_id = store.add(o.skill) if o.succeeded else None
                fh.write(json.dumps({"task": o.task.to_record(), "succeeded": o.succeeded, "skill_id": skill_id,
                                     "trials": [t.to_record() for t in o.trials]}, ensure_ascii=False) + "\n")
        return outcomes

    def run_topdown(self, force: bool = False) -> bool:
        tg = self.cfg.taskgen
        inputs = {"taxonomy": file_digest(self._need("taxonomy.jsonl")),
                  "catalog": file_digest(self._need("catalog.jsonl")),
                  "taskgen": asdict(tg), "skillgen": asdict(self.cfg.skillgen), "llm": self._llm_key(),
                  "embedding": asdict(self.cfg.embedding)}
        tasks_path, trials_path = self.path("tasks_topdown.jsonl"), self.path("trials_topdown.jsonl")

        def body():
            trials_path.write_text("", encoding="utf-8")
            reset = getattr(self.gateway.responder, "reset", None)
            if callable(reset):
                reset()
            taxonomy, memory = self.taxonomy(), RoundMemory()
            all_tasks: list[TaskRecord] = []
            wins = 0
            for rnd in range(1, tg.rounds + 1):
                batch = run_top_down_round(taxonomy, memory, self.gateway, rnd, app=self.cfg.skillgen.app,
                                           n_tasks=tg.tasks_per_prompt, workers=tg.workers)
                batch = dedupe_tasks(batch, self.provider, tg.dedupe_threshold,
                                     seen=[t.description for t in all_tasks])
                all_tasks.extend(batch)
                for o in self._generate(batch, trials_path):
                    if o.succeeded:
                        wins += 1
                        memory.add(o.task.origin.category, o.task.origin.subcategory, o.task.description)
                self.emit(stage="topdown", event="round", round=rnd, tasks=len(batch))
            write_tasks(all_tasks, tasks_path)
            return {"tasks": len(all_tasks), "skills": wins}

        return self._stage("topdown", inputs, [tasks_path, trials_path], body, force)

    def _topdown_scripts(self) -> list[ScriptDoc]:
        out = []
        for s in self.store():
            if isinstance(s.origin, TopDown):
                code = f"{s.init_code}\n{s.code}" if s.init_code else s.code
                out.append(ScriptDoc(f"skill-{s.id:05d}", ScriptSource.TOPDOWN, code))
        return out

    def run_graph(self, force: bool = False) -> bool:
        td = self._topdown_scripts()
        inputs = {"scripts": file_digest(self._need("scripts.jsonl")),
                  "catalog": file_digest(self._need("catalog.jsonl")),
                  "topdown_skills": _digest([s.code for s in td]), "rule": self.cfg.skillgen.method_rule}
        out = self.path("graph.edges")

        def body():
            graph = build_graph(self.scripts() + td, self.catalog(), self.cfg.skillgen.method_rule)
            write_edge_list(graph, out)
            deg = graph.degrees()
            return {"nodes": graph.node_count, "edges": len(graph.edges), "isolated": int((deg == 0).sum())}

        return self._stage("graph", inputs, [out], body, force)

    def _features(self, catalog: Catalog) -> np.ndarray:
        return self.embed(catalog.descriptions())

    def _train_config(self) -> TrainConfig:
        lp = self.cfg.linkpred
        return TrainConfig(epochs=lp.epochs, learning_rate=lp.learning_rate, hidden_dim=lp.hidden_dim,
                           out_dim=lp.out_dim, seed=self.cfg.seed)

    def _split_spec(self) -> SplitSpec:
        lp = self.cfg.linkpred
        return SplitSpec(lp.train_frac, lp.dev_frac, lp.test_frac, seed=self.cfg.seed)

    def run_train(self, force: bool = False) -> bool:
        inputs = {"graph": file_digest(self._need("graph.edges")),
                  "catalog": file_digest(self._need("catalog.jsonl")),
                  "linkpred": asdict(self.cfg.linkpred), "seed": self.cfg.seed,
                  "embedding": asdict(self.cfg.embedding)}
        ckpt, hist, metrics = self.path("checkpoint.txt"), self.path("history.csv"), self.path("linkpred_eval.json")

        def body():
            graph, catalog = read_edge_list(self.path("graph.edges")), self.catalog()
            X = self._features(catalog)
            splits = split_edges(graph, self._split_spec())
            result = train(graph, X, splits, self._train_config())
            digest = save_checkpoint(ckpt, result.params, self._train_config())
            write_history_csv(hist, result.history)
            ev = evaluate(result, X, splits, k=self.cfg.taskgen.k)
            metrics.write_text(json.dumps(ev, indent=1, sort_keys=True) + "\n", encoding="utf-8")
            return {"checkpoint_sha256": digest, **{k: v for k, v in ev.items()}}

        return self._stage("train", inputs, [ckpt, hist, metrics], body, force)

    def ranker(self) -> Callable[[int, int], Ranking]:
        params, _ = load_checkpoint(self._need("checkpoint.txt"))
        graph, catalog = read_edge_list(self._need("graph.edges")), self.catalog()
        X = self._features(catalog)
        H = node_embeddings(params, graph, X)
        return lambda anchor, k: top_k_synergy(params, graph, X, anchor, k, H=H)

    def run_bottomup(self, force: bool = False) -> bool:
        tg = self.cfg.taskgen
        inputs = {"checkpoint": file_digest(self._need("checkpoint.txt")),
                  "graph": file_digest(self._need("graph.edges")),
                  "topdown_tasks": file_digest(self._need("tasks_topdown.jsonl")),
                  "taskgen": asdict(tg), "skillgen": asdict(self.cfg.skillgen), "llm": self._llm_key()}
        tasks_path, trials_path = self.path("tasks_bottomup.jsonl"), self.path("trials_bottomup.jsonl")

        def body():
            trials_path.write_text("", encoding="utf-8")
            tasks = run_bottom_up(self.catalog(), self.ranker(), self.gateway, tg.k, app=self.cfg.skillgen.app,
                                  n_tasks=tg.tasks_per_prompt, workers=tg.workers)
            seen = [t.description for t in read_tasks(self.path("tasks_topdown.jsonl"))]
            tasks = dedupe_tasks(tasks, self.provider, tg.dedupe_threshold, seen=seen)
            write_tasks(tasks, tasks_path)
            outcomes = self._generate(tasks, trials_path)
            return {"tasks": len(tasks), "skills": sum(o.succeeded for o in outcomes)}

        return self._stage("bottomup", inputs, [tasks_path, trials_path], body, force)

    def evaluate_system(self, system: str, tasks: Sequence[evalkit.TestTask] | None = None):
        tasks = self.test_tasks() if tasks is None else tasks
        book = {t.description: (t.template, t.params) for t in tasks if t.template}
        judge = self.validator(book)
        store = self.store() if system in ("ro", "rag") else None
        gw = self.gateway if system in ("baseline", "rag") else None
        return evalkit.evaluate_testset(system, tasks, self.executor(), judge, store=store, provider=self.provider,
                                        gateway=gw, r=self.cfg.eval.rag_r, app=self.cfg.skillgen.app,
                                        language=self.cfg.skillgen.language)

    def run_eval(self, force: bool = False) -> bool:
        inputs = {"store": file_digest(self.store_dir / "skills.jsonl"),
                  "tests": file_digest(self._need("tests.jsonl")), "eval": asdict(self.cfg.eval),
                  "llm": self._llm_key(), "skillgen": asdict(self.cfg.skillgen)}
        rdir = self.path("reports")
        outs = [rdir / "summary.csv", rdir / "report.txt"]

        def body():
            rdir.mkdir(exist_ok=True)
            reports, info = [], {}
            text = []
            for system in self.cfg.eval.systems:
                rep, results = self.evaluate_system(system)
                reports.append(rep)
                evalkit.write_results_csv(results, rdir / f"results_{system}.csv")
                info[f"{system}_success_rate"] = rep.success_rate
                if system == "ro" and results and all(r.origin for r in results):
                    table = evalkit.contribution_breakdown(results)
                    (rdir / "contribution.json").write_text(json.dumps(table, indent=1) + "\n", encoding="utf-8")
                    text += ["", "Retrieved-skill origin (RO):", evalkit.format_breakdown(table)]
            evalkit.write_reports_csv(reports, rdir / "summary.csv")
            evalkit.write_reference(rdir / "reference.json")
            trials = self.trial_stats()
            text = [evalkit.format_table(reports)] + text + ["", "Success at trial:"]
            for origin, row in trials.items():
                text.append(f"{origin:<9} tasks={row['tasks']:<4} @1={row['at_1']:.1%} @3={row['at_3']:.1%}")
            (rdir / "report.txt").write_text("\n".join(text) + "\n", encoding="utf-8")
            return info

        return self._stage("eval", inputs, outs, body, force)

    # helpers -----------------------------------------------------------------
    def _llm_key(self) -> dict:
        llm = self.cfg.llm
        return {"mode": llm.mode, "model_id": llm.model_id, "endpoint": llm.endpoint}

    def trial_histories(self, origin: str) -> list[list]:
        from .skillgen import TrialRecord
        p = self.path(f"trials_{origin}.jsonl")
        if not p.exists():
            return []
        out = []
        with p.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    out.append([TrialRecord.from_record(t) for t in json.loads(line)["trials"]])
        return out

    def trial_stats(self) -> dict:
        stats = {}
        for origin in ("topdown", "bottomup"):
            hist = self.trial_histories(origin)
            stats[origin] = {"tasks": len(hist), "at_1": evalkit.success_at_trial(hist, 1) if hist else 0.0,
                             "at_3": evalkit.success_at_trial(hist, 3) if hist else 0.0}
        return stats

    def run_all(self, force: bool = False) -> dict:
        for stage in STAGES:
            getattr(self, f"run_{stage}")(force)
        store = self.store()
        return {"skills": len(store), "digest": store.digest(),
                "topdown": sum(s.origin_kind == "topdown" for s in store),
                "bottomup": sum(s.origin_kind == "bottomup" for s in store)}

