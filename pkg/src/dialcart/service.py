"""HTTP annotation service: strategies propose batches, humans label them,
the model retrains, repeat.

Persistence per project is an append-only JSONL annotation log plus
model checkpoints under DIALCART_DATA_DIR; replaying the log from empty
reconstructs identical label state, so crash recovery is a restart.
Label submissions and retrains are serialized per project; reads stay
concurrent and see the last completed model generation.
"""
from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import acquisition, cartography, experiment
from .classifier import (
    FeatureHasher,
    ModelParams,
    TrainConfig,
    epoch_snapshots,
    featurize_matrix,
    load_checkpoint,
    predict_proba_matrix,
    save_checkpoint,
    train,
)
from .corpus import (
    Corpus,
    CorpusError,
    LabelScheme,
    cohens_kappa,
    export_corpus,
    ingest_corpus,
    load_scheme,
)
from .reporting import data_map_table, render_table

DATA_DIR_ENV = "DIALCART_DATA_DIR"


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str, detail=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


@dataclass
class LogEntry:
    sentence_id: str
    tag: str
    annotator_id: str
    ts: float

    def to_dict(self) -> dict:
        return {
            "sentence_id": self.sentence_id,
            "tag": self.tag,
            "annotator_id": self.annotator_id,
            "ts": self.ts,
        }


@dataclass
class Ticket:
    ticket_id: str
    sentence_ids: list[str]
    annotator_id: str
    issued_at: float
    strategy_used: str
    model_generation: int
    final: bool

    def to_dict(self) -> dict:
        return {
            "ticket_id": self.ticket_id,
            "sentence_ids": self.sentence_ids,
            "annotator_id": self.annotator_id,
            "issued_at": self.issued_at,
            "strategy_used": self.strategy_used,
            "model_generation": self.model_generation,
            "final": self.final,
        }


@dataclass
class Project:
    project_id: str
    root: Path
    corpus: Corpus
    scheme: LabelScheme
    strategy: acquisition.StrategyConfig
    train_config: TrainConfig
    hasher: FeatureHasher
    test_corpus: Corpus | None = None
    log: list[LogEntry] = field(default_factory=list)
    tickets: dict[str, Ticket] = field(default_factory=dict)
    generation: int = 0
    state: str = "idle"
    lock: threading.RLock = field(default_factory=threading.RLock, repr=False)

    # -- derived label state -------------------------------------------
    def labeled_ids(self) -> set[str]:
        return {e.sentence_id for e in self.log}

    def by_annotator(self, annotator_id: str) -> dict[str, str]:
        return {
            e.sentence_id: e.tag for e in self.log if e.annotator_id == annotator_id
        }

    def training_labels(self) -> dict[str, str]:
        """One tag per labeled sentence: the earliest log entry wins."""
        out: dict[str, str] = {}
        for e in self.log:
            out.setdefault(e.sentence_id, e.tag)
        return out

    def per_tag_counts(self) -> dict[str, int]:
        counts = {t: 0 for t in self.scheme.names()}
        for e in self.log:
            counts[e.tag] += 1
        return counts

    def overlap_kappa(self) -> float | None:
        """Agreement over sentences labeled by the two annotators with the
        largest overlap; None without any double annotation."""
        per_sentence: dict[str, dict[str, str]] = {}
        for e in self.log:
            per_sentence.setdefault(e.sentence_id, {})[e.annotator_id] = e.tag
        pair_items: dict[tuple[str, str], tuple[list[str], list[str]]] = {}
        for votes in per_sentence.values():
            raters = sorted(votes)
            for i in range(len(raters)):
                for j in range(i + 1, len(raters)):
                    a, b = raters[i], raters[j]
                    la, lb = pair_items.setdefault((a, b), ([], []))
                    la.append(votes[a])
                    lb.append(votes[b])
        if not pair_items:
            return None
        (la, lb) = max(pair_items.values(), key=lambda ab: len(ab[0]))
        return cohens_kappa(la, lb)

    # -- persistence -----------------------------------------------------
    def checkpoint_path(self, generation: int) -> Path:
        return self.root / "checkpoints" / f"gen_{generation:04d}.json"

    def append_log(self, entries: list[LogEntry]) -> None:
        with open(self.root / "log.jsonl", "a", encoding="utf-8") as fh:
            for e in entries:
                fh.write(json.dumps(e.to_dict()) + "\n")
        self.log.extend(entries)

    def append_ticket(self, ticket: Ticket) -> None:
        with open(self.root / "tickets.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(ticket.to_dict()) + "\n")
        self.tickets[ticket.ticket_id] = ticket


class ProjectStore:
    """Loads and owns all projects under a data directory."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        (self.data_dir / "projects").mkdir(parents=True, exist_ok=True)
        self.projects: dict[str, Project] = {}
        for root in sorted((self.data_dir / "projects").iterdir()):
            if root.is_dir() and (root / "project.json").exists():
                project = self._load(root)
                self.projects[project.project_id] = project

    def _load(self, root: Path) -> Project:
        meta = json.loads((root / "project.json").read_text(encoding="utf-8"))
        scheme = load_scheme(root / "scheme.json")
        corpus = ingest_corpus(root / "corpus.jsonl", scheme)
        test_corpus = None
        if (root / "test.jsonl").exists():
            test_corpus = ingest_corpus(root / "test.jsonl", scheme)
        project = Project(
            project_id=meta["project_id"],
            root=root,
            corpus=corpus,
            scheme=scheme,
            strategy=acquisition.StrategyConfig(**meta["strategy"]),
            train_config=TrainConfig(**meta["train"]),
            hasher=FeatureHasher.from_dict(meta["hasher"]),
            test_corpus=test_corpus,
        )
        log_path = root / "log.jsonl"
        if log_path.exists():
            with open(log_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        project.log.append(LogEntry(**json.loads(line)))
        tickets_path = root / "tickets.jsonl"
        if tickets_path.exists():
            with open(tickets_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        t = Ticket(**json.loads(line))
                        project.tickets[t.ticket_id] = t
        generations = sorted(
            int(p.stem.split("_")[1]) for p in (root / "checkpoints").glob("gen_*.json")
        )
        project.generation = generations[-1] if generations else 0
        return project

    def get(self, project_id: str) -> Project:
        project = self.projects.get(project_id)
        if project is None:
            raise ServiceError(404, "unknown_project", f"no project {project_id!r}")
        return project

    def create(
        self,
        corpus_path: str,
        scheme_path: str,
        strategy: acquisition.StrategyConfig,
        train_config: TrainConfig,
        hasher: FeatureHasher,
        test_corpus_path: str | None = None,
    ) -> Project:
        try:
            scheme = load_scheme(scheme_path)
            corpus = ingest_corpus(corpus_path, scheme)
            test_corpus = (
                ingest_corpus(test_corpus_path, scheme) if test_corpus_path else None
            )
        except (CorpusError, OSError) as exc:
            raise ServiceError(422, "ingest_error", str(exc)) from exc
        project_id = uuid.uuid4().hex[:12]
        root = self.data_dir / "projects" / project_id
        (root / "checkpoints").mkdir(parents=True)
        export_corpus(corpus, root / "corpus.jsonl")
        if test_corpus is not None:
            export_corpus(test_corpus, root / "test.jsonl")
        (root / "scheme.json").write_text(
            json.dumps(scheme.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8"
        )
        meta = {
            "project_id": project_id,
            "strategy": strategy.to_dict(),
            "train": train_config.to_dict(),
            "hasher": hasher.to_dict(),
        }
        (root / "project.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
        project = Project(
            project_id=project_id,
            root=root,
            corpus=corpus,
            scheme=scheme,
            strategy=strategy,
            train_config=train_config,
            hasher=hasher,
            test_corpus=test_corpus,
        )
        self.projects[project_id] = project
        return project


# --------------------------------------------------------------- workflows

def propose_batch(project: Project, size: int, annotator_id: str) -> Ticket:
    if size < 1:
        raise ServiceError(422, "bad_size", f"batch size must be positive, got {size}")
    with project.lock:
        if project.state != "idle":
            raise ServiceError(409, "busy", "project is training; try again later")
        labeled = project.labeled_ids()
        mine = set(project.by_annotator(annotator_id))
        eligible = sorted(
            s.id for s in project.corpus.sentences if s.id not in labeled and s.id not in mine
        )
        if not eligible:
            raise ServiceError(409, "pool_empty", "no unlabeled sentences remain")
        final = size >= len(eligible)
        batch_size = min(size, len(eligible))
        if project.generation == 0:
            ids = acquisition.random_select(eligible, batch_size, project.strategy.seed)
            used = "random"
        else:
            ids = _model_batch(project, eligible, batch_size)
            used = project.strategy.kind
        ticket = Ticket(
            ticket_id=uuid.uuid4().hex[:12],
            sentence_ids=ids,
            annotator_id=annotator_id,
            issued_at=time.time(),
            strategy_used=used,
            model_generation=project.generation,
            final=final,
        )
        project.append_ticket(ticket)
        return ticket


def _model_batch(project: Project, eligible: list[str], batch_size: int) -> list[str]:
    params, hasher, snapshots = load_checkpoint(project.checkpoint_path(project.generation))
    sentences = {s.id: s for s in project.corpus.sentences}
    x = featurize_matrix([sentences[sid].text for sid in eligible], hasher)
    probs = predict_proba_matrix(params, x)
    ensembles = None
    if project.strategy.kind == "coremse":
        members = snapshots or [params]
        ensembles = np.stack([predict_proba_matrix(p, x) for p in members], axis=1)
    candidates = [
        acquisition.Candidate(
            id=sid,
            predictive_dist=probs[i],
            features=x[i],
            ensemble_dists=None if ensembles is None else ensembles[i],
        )
        for i, sid in enumerate(eligible)
    ]
    cfg = acquisition.StrategyConfig(
        kind=project.strategy.kind,
        batch_size=batch_size,
        candidate_cap=project.strategy.candidate_cap,
        ensemble_size=project.strategy.ensemble_size,
        seed=project.strategy.seed,
    )
    return acquisition.select_batch(candidates, cfg)


def submit_labels(
    project: Project, ticket_id: str, labels: list[tuple[str, str]], annotator_id: str
) -> int:
    with project.lock:
        ticket = project.tickets.get(ticket_id)
        if ticket is None:
            raise ServiceError(404, "unknown_ticket", f"no ticket {ticket_id!r}")
        ticket_ids = set(ticket.sentence_ids)
        sentences = {s.id: s for s in project.corpus.sentences}
        mine = project.by_annotator(annotator_id)
        fresh: list[LogEntry] = []
        seen: set[str] = set()
        for sid, tag in labels:
            if sid not in ticket_ids:
                raise ServiceError(
                    422, "id_not_in_ticket", f"sentence {sid!r} is not on ticket {ticket_id}"
                )
            if sid in seen:
                raise ServiceError(422, "duplicate_id", f"sentence {sid!r} repeated in request")
            seen.add(sid)
            if tag not in project.scheme:
                raise ServiceError(422, "unknown_tag", f"tag {tag!r} not in scheme")
            if not project.scheme.allows(tag, sentences[sid].role):
                raise ServiceError(
                    422,
                    "role_mismatch",
                    f"tag {tag!r} does not apply to role {sentences[sid].role!r}",
                )
            if sid in mine:
                if mine[sid] != tag:
                    raise ServiceError(
                        409,
                        "conflicting_label",
                        f"{annotator_id} already labeled {sid} as {mine[sid]!r}",
                    )
                continue  # exact duplicate: accept idempotently, do not re-append
            fresh.append(LogEntry(sid, tag, annotator_id, time.time()))
        project.append_log(fresh)
        return len(labels)


def start_retrain(project: Project) -> int:
    with project.lock:
        if project.state != "idle":
            raise ServiceError(409, "busy", "a retrain is already running")
        labels = project.training_labels()
        if len(set(labels.values())) < 2:
            raise ServiceError(
                422,
                "insufficient_labels",
                "need labels for at least 2 distinct tags to train",
            )
        project.state = "training"
        target = project.generation + 1
    thread = threading.Thread(target=_retrain_job, args=(project, target), daemon=True)
    thread.start()
    return target


def _retrain_job(project: Project, target: int) -> None:
    try:
        labels = project.training_labels()
        sentences = {s.id: s for s in project.corpus.sentences}
        ids = sorted(labels)
        x = featurize_matrix([sentences[sid].text for sid in ids], project.hasher)
        y = [project.scheme.index(labels[sid]) for sid in ids]
        result = train(
            (x, y), project.train_config, project.scheme.num_classes, project.scheme.version
        )
        k = min(project.strategy.ensemble_size, len(result.epoch_params))
        save_checkpoint(
            project.checkpoint_path(target),
            result.params,
            project.hasher,
            snapshots=epoch_snapshots(result, k),
        )
        points = cartography.build_data_map(result.dynamics, ids)
        datamap = [
            {
                "id": p.instance_id,
                "tag": labels[p.instance_id],
                "role": sentences[p.instance_id].role,
                "confidence": p.confidence,
                "variability": p.variability,
                "correctness": p.correctness,
                "bucket": p.bucket,
            }
            for p in points
        ]
        (project.root / "checkpoints" / f"datamap_{target:04d}.json").write_text(
            json.dumps(datamap), encoding="utf-8"
        )
        metrics = None
        if project.test_corpus is not None:
            test = project.test_corpus.labeled_sentences()
            if test:
                xt = featurize_matrix([s.text for s in test], project.hasher)
                probs = predict_proba_matrix(result.params, xt)
                tags = project.scheme.names()
                preds = [tags[i] for i in probs.argmax(axis=1)]
                golds = [s.gold_label for s in test]
                metrics = {
                    "accuracy": experiment.accuracy(preds, golds),
                    "macro_f1": experiment.macro_f1(preds, golds, project.scheme),
                }
        if metrics is not None:
            (project.root / "checkpoints" / f"metrics_{target:04d}.json").write_text(
                json.dumps(metrics), encoding="utf-8"
            )
        with project.lock:
            project.generation = target
            project.state = "idle"
    except Exception:
        with project.lock:
            project.state = "idle"
        raise


def project_status(project: Project) -> dict:
    with project.lock:
        labeled = project.labeled_ids()
        total = len(project.corpus.sentences)
        status = {
            "project_id": project.project_id,
            "state": project.state,
            "total_sentences": total,
            "labeled": len(labeled),
            "pool": total - len(labeled),
            "model_generation": project.generation,
            "strategy": project.strategy.kind,
            "per_tag_counts": project.per_tag_counts(),
            "kappa": project.overlap_kappa(),
            "metrics": None,
            "data_map": None,
        }
        if project.generation > 0:
            metrics_path = (
                project.root / "checkpoints" / f"metrics_{project.generation:04d}.json"
            )
            if metrics_path.exists():
                status["metrics"] = json.loads(metrics_path.read_text(encoding="utf-8"))
            datamap_path = (
                project.root / "checkpoints" / f"datamap_{project.generation:04d}.json"
            )
            if datamap_path.exists():
                status["data_map"] = json.loads(datamap_path.read_text(encoding="utf-8"))
        return status


def project_export(project: Project) -> dict:
    with project.lock:
        labeled = sorted(project.labeled_ids())
        pool = sorted(s.id for s in project.corpus.sentences if s.id not in set(labeled))
        data_map_csv = ""
        datamap_path = (
            project.root / "checkpoints" / f"datamap_{project.generation:04d}.json"
        )
        if project.generation > 0 and datamap_path.exists():
            raw = json.loads(datamap_path.read_text(encoding="utf-8"))
            points = [
                cartography.DataMapPoint(
                    r["id"], r["confidence"], r["variability"], r["correctness"], r["bucket"]
                )
                for r in raw
            ]
            header, rows = data_map_table(
                points,
                tags={r["id"]: r["tag"] for r in raw},
                roles={r["id"]: r["role"] for r in raw},
            )
            data_map_csv = render_table(header, rows)
        return {
            "project_id": project.project_id,
            "scheme": project.scheme.to_dict(),
            "strategy": project.strategy.to_dict(),
            "train": project.train_config.to_dict(),
            "hasher": project.hasher.to_dict(),
            "model_generation": project.generation,
            "corpus_path": str(project.root / "corpus.jsonl"),
            "checkpoint_path": str(project.checkpoint_path(project.generation))
            if project.generation > 0
            else None,
            "log": [e.to_dict() for e in project.log],
            "labeled_ids": labeled,
            "pool_ids": pool,
            "data_map_csv": data_map_csv,
        }


# --------------------------------------------------------------------- app

class CreateProjectRequest(BaseModel):
    corpus_path: str
    scheme_path: str
    strategy: dict = {}
    train: dict = {}
    hasher: dict = {}
    test_corpus_path: str | None = None


class SubmitLabelsRequest(BaseModel):
    ticket_id: str
    annotator_id: str
    labels: list[dict]


def create_app(data_dir: str | Path | None = None) -> FastAPI:
    data_dir = Path(data_dir or os.environ.get(DATA_DIR_ENV, "dialcart-data"))
    app = FastAPI(title="dialcart annotation service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    store = ProjectStore(data_dir)
    app.state.store = store

    @app.exception_handler(ServiceError)
    async def _service_error(_: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    @app.post("/projects")
    def create_project(req: CreateProjectRequest):
        try:
            strategy = acquisition.StrategyConfig(**req.strategy)
            train_config = TrainConfig(**req.train)
            hasher = FeatureHasher.from_dict(req.hasher) if req.hasher else FeatureHasher()
        except (TypeError, ValueError) as exc:
            raise ServiceError(422, "bad_config", str(exc)) from exc
        project = store.create(
            req.corpus_path,
            req.scheme_path,
            strategy,
            train_config,
            hasher,
            req.test_corpus_path,
        )
        return {"project_id": project.project_id}

    @app.get("/projects/{project_id}/batch")
    def next_batch(project_id: str, size: int = 50, annotator: str = "anonymous"):
        project = store.get(project_id)
        ticket = propose_batch(project, size, annotator)
        sentences = {s.id: s for s in project.corpus.sentences}
        by_session: dict[str, list] = {}
        for u in project.corpus.utterances:
            by_session.setdefault(u.session_id, []).append(u)
        items = []
        for sid in ticket.sentence_ids:
            sent = sentences[sid]
            session_id, seq, _ = sid.rsplit(":", 2)
            session = by_session[session_id]
            pos = next(i for i, u in enumerate(session) if u.seq == int(seq))
            context = [
                {"role": u.role, "text": u.text} for u in session[max(0, pos - 2) : pos]
            ]
            items.append(
                {"id": sid, "text": sent.text, "role": sent.role, "context": context}
            )
        return {
            "ticket_id": ticket.ticket_id,
            "sentences": items,
            "strategy_used": ticket.strategy_used,
            "model_generation": ticket.model_generation,
            "final": ticket.final,
        }

    @app.post("/projects/{project_id}/labels")
    def post_labels(project_id: str, req: SubmitLabelsRequest):
        project = store.get(project_id)
        try:
            labels = [(str(l["sentence_id"]), str(l["tag"])) for l in req.labels]
        except KeyError as exc:
            raise ServiceError(422, "bad_label", f"label entry missing {exc}") from exc
        accepted = submit_labels(project, req.ticket_id, labels, req.annotator_id)
        return {"accepted": accepted}

    @app.post("/projects/{project_id}/retrain")
    def retrain(project_id: str):
        project = store.get(project_id)
        generation = start_retrain(project)
        return {"generation": generation}

    @app.get("/projects/{project_id}/status")
    def status(project_id: str):
        return project_status(store.get(project_id))

    @app.get("/projects/{project_id}/export")
    def export(project_id: str):
        return project_export(store.get(project_id))

    return app
