from __future__ import annotations

import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from dialcart import acquisition
from dialcart.classifier import featurize_matrix, load_checkpoint, predict_proba_matrix
from dialcart.corpus import export_corpus, save_scheme
from dialcart.service import create_app
from dialcart.synth import generate_corpus


@pytest.fixture
def project_files(tmp_path):
    corpus, scheme, _ = generate_corpus(
        n_sessions=8,
        sentences_per_session=(14, 18),
        profile="uniform",
        n_classes=4,
        filler_ratio=0.2,
        seed=5,
    )
    unlabeled = type(corpus).build(corpus.utterances, {})
    corpus_path = tmp_path / "pool.jsonl"
    export_corpus(unlabeled, corpus_path)
    scheme_path = tmp_path / "scheme.json"
    save_scheme(scheme, scheme_path)
    gold = corpus.labels  # what a human would answer
    return corpus_path, scheme_path, gold


def make_client(tmp_path, monkeypatch=None):
    data_dir = tmp_path / "data"
    app = create_app(data_dir)
    return TestClient(app), data_dir


def create_project(client, project_files, strategy="coremse", **overrides):
    corpus_path, scheme_path, _ = project_files
    body = {
        "corpus_path": str(corpus_path),
        "scheme_path": str(scheme_path),
        "strategy": {"kind": strategy, "batch_size": 10, "seed": 0},
        "train": {"epochs": 5, "batch_size": 20, "learning_rate": 0.1, "seed": 0},
        "hasher": {"ngram_min": 1, "ngram_max": 1, "dim": 128, "salt": 0, "max_tokens": 128},
    }
    body.update(overrides)
    resp = client.post("/projects", json=body)
    assert resp.status_code == 200, resp.text
    return resp.json()["project_id"]


def label_ticket(client, pid, ticket, gold, annotator="alice"):
    labels = [{"sentence_id": s["id"], "tag": gold[s["id"]]} for s in ticket["sentences"]]
    resp = client.post(
        f"/projects/{pid}/labels",
        json={"ticket_id": ticket["ticket_id"], "annotator_id": annotator, "labels": labels},
    )
    return resp


def wait_idle(client, pid, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/projects/{pid}/status").json()
        if status["state"] == "idle":
            return status
        time.sleep(0.02)
    raise TimeoutError("retrain did not finish")


class TestProjectLifecycle:
    def test_create_and_status(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        pid = create_project(client, project_files)
        status = client.get(f"/projects/{pid}/status").json()
        assert status["labeled"] == 0
        assert status["model_generation"] == 0
        assert status["pool"] == status["total_sentences"]
        assert status["kappa"] is None

    def test_bad_scheme_path_is_422(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        corpus_path, _, _ = project_files
        resp = client.post(
            "/projects",
            json={"corpus_path": str(corpus_path), "scheme_path": "/nowhere/scheme.json"},
        )
        assert resp.status_code == 422
        body = resp.json()
        assert set(body) == {"code", "message", "detail"}

    def test_duplicate_create_is_new_project(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        a = create_project(client, project_files)
        b = create_project(client, project_files)
        assert a != b

    def test_unknown_project_404(self, tmp_path):
        client, _ = make_client(tmp_path)
        resp = client.get("/projects/nope/status")
        assert resp.status_code == 404
        assert resp.json()["code"] == "unknown_project"


class TestBatchAndLabels:
    def test_cold_start_uses_random(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        pid = create_project(client, project_files)
        ticket = client.get(f"/projects/{pid}/batch", params={"size": 10, "annotator": "a"}).json()
        assert ticket["strategy_used"] == "random"
        assert ticket["model_generation"] == 0
        assert len(ticket["sentences"]) == 10
        assert not ticket["final"]

    def test_batch_includes_context_window(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        pid = create_project(client, project_files)
        ticket = client.get(f"/projects/{pid}/batch", params={"size": 10, "annotator": "a"}).json()
        for item in ticket["sentences"]:
            assert "context" in item
            assert len(item["context"]) <= 2
            seq = int(item["id"].rsplit(":", 2)[1])
            if seq >= 2:
                assert len(item["context"]) == 2

    def test_oversized_request_returns_all_remaining_flagged_final(
        self, tmp_path, project_files
    ):
        client, _ = make_client(tmp_path)
        pid = create_project(client, project_files)
        total = client.get(f"/projects/{pid}/status").json()["total_sentences"]
        ticket = client.get(
            f"/projects/{pid}/batch", params={"size": total + 50, "annotator": "a"}
        ).json()
        assert len(ticket["sentences"]) == total
        assert ticket["final"]

    def test_submit_and_counts(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        _, _, gold = project_files
        pid = create_project(client, project_files)
        ticket = client.get(f"/projects/{pid}/batch", params={"size": 10, "annotator": "a"}).json()
        resp = label_ticket(client, pid, ticket, gold)
        assert resp.status_code == 200
        assert resp.json()["accepted"] == 10
        status = client.get(f"/projects/{pid}/status").json()
        assert status["labeled"] == 10
        assert status["labeled"] + status["pool"] == status["total_sentences"]
        assert sum(status["per_tag_counts"].values()) == 10

    def test_duplicate_replay_is_idempotent(self, tmp_path, project_files):
        client, data_dir = make_client(tmp_path)
        _, _, gold = project_files
        pid = create_project(client, project_files)
        ticket = client.get(f"/projects/{pid}/batch", params={"size": 5, "annotator": "a"}).json()
        first = label_ticket(client, pid, ticket, gold)
        log_file = data_dir / "projects" / pid / "log.jsonl"
        before = log_file.read_text()
        again = label_ticket(client, pid, ticket, gold)
        assert again.status_code == 200
        assert again.json() == first.json()
        assert log_file.read_text() == before

    def test_one_bad_tag_rejects_atomically(self, tmp_path, project_files):
        client, data_dir = make_client(tmp_path)
        _, _, gold = project_files
        pid = create_project(client, project_files)
        ticket = client.get(f"/projects/{pid}/batch", params={"size": 5, "annotator": "a"}).json()
        labels = [
            {"sentence_id": s["id"], "tag": gold[s["id"]]} for s in ticket["sentences"]
        ]
        labels[2]["tag"] = "NotATag"
        resp = client.post(
            f"/projects/{pid}/labels",
            json={"ticket_id": ticket["ticket_id"], "annotator_id": "a", "labels": labels},
        )
        assert resp.status_code == 422
        assert client.get(f"/projects/{pid}/status").json()["labeled"] == 0
        log_file = data_dir / "projects" / pid / "log.jsonl"
        assert not log_file.exists() or log_file.read_text() == ""

    def test_id_not_in_ticket_rejected(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        _, _, gold = project_files
        pid = create_project(client, project_files)
        ticket = client.get(f"/projects/{pid}/batch", params={"size": 3, "annotator": "a"}).json()
        resp = client.post(
            f"/projects/{pid}/labels",
            json={
                "ticket_id": ticket["ticket_id"],
                "annotator_id": "a",
                "labels": [{"sentence_id": "syn999:0:0", "tag": "Class 00"}],
            },
        )
        assert resp.status_code == 422
        assert resp.json()["code"] == "id_not_in_ticket"

    def test_second_batch_disjoint_from_first(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        _, _, gold = project_files
        pid = create_project(client, project_files)
        first = client.get(f"/projects/{pid}/batch", params={"size": 10, "annotator": "a"}).json()
        label_ticket(client, pid, first, gold)
        second = client.get(f"/projects/{pid}/batch", params={"size": 10, "annotator": "a"}).json()
        ids1 = {s["id"] for s in first["sentences"]}
        ids2 = {s["id"] for s in second["sentences"]}
        assert not ids1 & ids2


class TestRetrainAndAgreement:
    def test_retrain_bumps_generation_and_builds_map(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        _, _, gold = project_files
        pid = create_project(client, project_files)
        ticket = client.get(f"/projects/{pid}/batch", params={"size": 20, "annotator": "a"}).json()
        label_ticket(client, pid, ticket, gold)
        resp = client.post(f"/projects/{pid}/retrain")
        assert resp.status_code == 200
        assert resp.json()["generation"] == 1
        status = wait_idle(client, pid)
        assert status["model_generation"] == 1
        assert status["data_map"] is not None
        assert len(status["data_map"]) == 20
        for point in status["data_map"]:
            assert point["bucket"] in ("Easy", "Medium", "Hard", "Impossible")

    def test_retrain_without_two_tags_rejected(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        pid = create_project(client, project_files)
        resp = client.post(f"/projects/{pid}/retrain")
        assert resp.status_code == 422
        assert resp.json()["code"] == "insufficient_labels"

    def test_busy_while_training(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        pid = create_project(client, project_files)
        project = client.app.state.store.get(pid)
        project.state = "training"
        assert client.post(f"/projects/{pid}/retrain").status_code == 409
        assert (
            client.get(f"/projects/{pid}/batch", params={"size": 5, "annotator": "a"}).status_code
            == 409
        )
        project.state = "idle"

    def test_generation_strictly_increases(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        _, _, gold = project_files
        pid = create_project(client, project_files)
        generations = []
        for _ in range(2):
            ticket = client.get(
                f"/projects/{pid}/batch", params={"size": 10, "annotator": "a"}
            ).json()
            label_ticket(client, pid, ticket, gold)
            client.post(f"/projects/{pid}/retrain")
            generations.append(wait_idle(client, pid)["model_generation"])
        assert generations == [1, 2]

    def test_metrics_reported_when_held_out_set_exists(self, tmp_path, project_files):
        corpus_path, scheme_path, gold = project_files
        client, _ = make_client(tmp_path)
        # held-out set: a labeled copy of the pool corpus serves as the probe
        from dialcart.corpus import export_corpus, ingest_corpus, load_scheme

        scheme = load_scheme(scheme_path)
        labeled = ingest_corpus(corpus_path, scheme)
        labeled = type(labeled).build(labeled.utterances, gold, scheme)
        test_path = tmp_path / "heldout.jsonl"
        export_corpus(labeled, test_path)
        pid = create_project(client, project_files, test_corpus_path=str(test_path))
        ticket = client.get(f"/projects/{pid}/batch", params={"size": 20, "annotator": "a"}).json()
        label_ticket(client, pid, ticket, gold)
        client.post(f"/projects/{pid}/retrain")
        status = wait_idle(client, pid)
        assert status["metrics"] is not None
        assert 0.0 <= status["metrics"]["accuracy"] <= 1.0
        assert 0.0 <= status["metrics"]["macro_f1"] <= 1.0

    def test_kappa_from_overlapping_annotators(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        _, _, gold = project_files
        pid = create_project(client, project_files)
        # concurrent tickets: both issued before any labels, so they overlap
        t_alice = client.get(f"/projects/{pid}/batch", params={"size": 8, "annotator": "alice"}).json()
        t_bob = client.get(f"/projects/{pid}/batch", params={"size": 8, "annotator": "bob"}).json()
        assert {s["id"] for s in t_alice["sentences"]} == {s["id"] for s in t_bob["sentences"]}
        label_ticket(client, pid, t_alice, gold, annotator="alice")
        label_ticket(client, pid, t_bob, gold, annotator="bob")  # perfect agreement
        status = client.get(f"/projects/{pid}/status").json()
        assert status["kappa"] == 1.0

    def test_conflicting_relabel_rejected(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        _, _, gold = project_files
        pid = create_project(client, project_files)
        ticket = client.get(f"/projects/{pid}/batch", params={"size": 3, "annotator": "a"}).json()
        label_ticket(client, pid, ticket, gold, annotator="a")
        flipped = [
            {"sentence_id": s["id"], "tag": "Class 01" if gold[s["id"]] != "Class 01" else "Class 02"}
            for s in ticket["sentences"]
        ]
        resp = client.post(
            f"/projects/{pid}/labels",
            json={"ticket_id": ticket["ticket_id"], "annotator_id": "a", "labels": flipped},
        )
        assert resp.status_code == 409


class TestCrashRecovery:
    def test_restart_reconstructs_state_from_log(self, tmp_path, project_files):
        client, data_dir = make_client(tmp_path)
        _, _, gold = project_files
        pid = create_project(client, project_files)
        ticket = client.get(f"/projects/{pid}/batch", params={"size": 10, "annotator": "a"}).json()
        label_ticket(client, pid, ticket, gold)
        client.post(f"/projects/{pid}/retrain")
        before = wait_idle(client, pid)

        fresh = TestClient(create_app(data_dir))
        after = fresh.get(f"/projects/{pid}/status").json()
        assert after == before

    def test_restart_preserves_export(self, tmp_path, project_files):
        client, data_dir = make_client(tmp_path)
        _, _, gold = project_files
        pid = create_project(client, project_files)
        ticket = client.get(f"/projects/{pid}/batch", params={"size": 6, "annotator": "a"}).json()
        label_ticket(client, pid, ticket, gold)
        export_before = client.get(f"/projects/{pid}/export").json()
        fresh = TestClient(create_app(data_dir))
        export_after = fresh.get(f"/projects/{pid}/export").json()
        assert export_after["log"] == export_before["log"]
        assert export_after["labeled_ids"] == export_before["labeled_ids"]


class TestLiveOfflineEquivalence:
    def test_coremse_batch_matches_acquisition_module(self, tmp_path, project_files):
        client, _ = make_client(tmp_path)
        _, _, gold = project_files
        pid = create_project(client, project_files)
        ticket = client.get(f"/projects/{pid}/batch", params={"size": 20, "annotator": "a"}).json()
        label_ticket(client, pid, ticket, gold)
        client.post(f"/projects/{pid}/retrain")
        wait_idle(client, pid)

        live = client.get(f"/projects/{pid}/batch", params={"size": 10, "annotator": "a"}).json()
        assert live["strategy_used"] == "coremse"

        export = client.get(f"/projects/{pid}/export").json()
        params, hasher, snapshots = load_checkpoint(export["checkpoint_path"])
        project = client.app.state.store.get(pid)
        sentences = {s.id: s for s in project.corpus.sentences}
        pool_ids = export["pool_ids"]
        x = featurize_matrix([sentences[sid].text for sid in pool_ids], hasher)
        probs = predict_proba_matrix(params, x)
        ensembles = np.stack([predict_proba_matrix(p, x) for p in snapshots], axis=1)
        candidates = [
            acquisition.Candidate(
                id=sid, predictive_dist=probs[i], features=x[i], ensemble_dists=ensembles[i]
            )
            for i, sid in enumerate(pool_ids)
        ]
        offline = acquisition.coremse_select(
            candidates, acquisition.StrategyConfig(kind="coremse", batch_size=10, seed=0)
        )
        assert [s["id"] for s in live["sentences"]] == offline
