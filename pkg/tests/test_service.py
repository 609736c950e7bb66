import threading

import pytest
import requests

from aler.hnsw import HnswParams, build_index
from aler.loop import build_pools, run
from aler.oracle import HumanOracle, LabelQueue, OracleBudget
from aler.partition import kmeans_partition, sample_records
from aler.service import LabelingService, RunStatus
from aler.synth import PerturbationSpec, generate

from test_loop import quick_config


@pytest.fixture
def corpus():
    return generate(120, PerturbationSpec(seed=55))


@pytest.fixture
def live(corpus, tmp_path):
    records_r, records_s, truth, emb_r, emb_s = corpus
    budget = OracleBudget(hard_cap=500)
    queue = LabelQueue(records_r, records_s, budget)
    status = RunStatus()
    static = tmp_path / "static"
    static.mkdir()
    (static / "index.html").write_text("<html><body>console</body></html>")
    service = LabelingService(queue, status, static_dir=static, token=None)
    port = service.start()
    yield {"queue": queue, "status": status, "budget": budget, "truth": truth,
           "base": f"http://127.0.0.1:{port}", "corpus": corpus}
    service.stop()


class TestEndpoints:
    def test_tasks_listing_and_limit(self, live):
        queue = live["queue"]
        queue.enqueue_tasks([("r000000", "s000000"), ("r000001", "s000001"),
                             ("r000002", "s000002")], provenance="loop-0-1")
        body = requests.get(f"{live['base']}/api/tasks?limit=2").json()
        assert len(body["tasks"]) == 2
        first = body["tasks"][0]
        assert first["task_id"] == 1
        assert first["pair"] == {"r_id": "r000000", "s_id": "s000000"}
        assert first["provenance"] == "loop-0-1"
        assert any(name == "title" for name, _ in first["r_attributes"])

    def test_submit_and_budget_counters(self, live):
        queue = live["queue"]
        (tid,) = queue.enqueue_tasks([("r000003", "s000003")])
        resp = requests.post(f"{live['base']}/api/labels", json={"task_id": tid, "label": 1})
        assert resp.status_code == 200
        assert resp.json() == {"consumed": 1, "remaining": 499}

    def test_error_codes(self, live):
        queue = live["queue"]
        (tid,) = queue.enqueue_tasks([("r000004", "s000004")])
        requests.post(f"{live['base']}/api/labels", json={"task_id": tid, "label": 0})
        conflict = requests.post(f"{live['base']}/api/labels", json={"task_id": tid, "label": 1})
        assert conflict.status_code == 409
        assert "already answered" in conflict.json()["error"]
        missing = requests.post(f"{live['base']}/api/labels", json={"task_id": 999, "label": 1})
        assert missing.status_code == 404
        bad = requests.post(f"{live['base']}/api/labels", json={"task_id": "x"})
        assert bad.status_code == 400
        unknown = requests.get(f"{live['base']}/api/nope")
        assert unknown.status_code == 404

    def test_status_endpoint(self, live):
        live["status"].update(chunk=2, iteration=3, f1_history=[0.5, 0.6])
        body = requests.get(f"{live['base']}/api/status").json()
        assert body["chunk"] == 2 and body["iteration"] == 3
        assert body["f1_history"] == [0.5, 0.6]
        assert body["budget"]["hard_cap"] == 500

    def test_static_serving(self, live):
        resp = requests.get(f"{live['base']}/")
        assert resp.status_code == 200
        assert "console" in resp.text
        assert requests.get(f"{live['base']}/../etc/passwd").status_code == 404


class TestTokenAuth:
    def test_token_required_when_configured(self, corpus, tmp_path):
        records_r, records_s, truth, _, _ = corpus
        queue = LabelQueue(records_r, records_s, OracleBudget())
        service = LabelingService(queue, RunStatus(), token="sekrit")
        port = service.start()
        base = f"http://127.0.0.1:{port}"
        try:
            assert requests.get(f"{base}/api/tasks").status_code == 401
            ok = requests.get(f"{base}/api/tasks", headers={"X-Auth-Token": "sekrit"})
            assert ok.status_code == 200
        finally:
            service.stop()


class TestHumanOracleRoundTrip:
    def test_loop_completes_via_http_labels(self, live):
        records_r, records_s, truth, emb_r, emb_s = live["corpus"]
        index = build_index(emb_s, HnswParams(), seed=2)
        plan = sample_records(emb_r.ids, 1.0, seed=3)
        chunks = kmeans_partition(emb_r.subset(plan.sampled_ids), 1, seed=3)
        pools = build_pools(chunks, index, emb_r, k=5)
        oracle = HumanOracle(live["queue"], timeout=60.0)
        config = quick_config(b_seed=20, b=8, i_max=1, validation_cap=30, seed=2)

        stop = threading.Event()

        def answer_forever():
            while not stop.is_set():
                tasks = requests.get(f"{live['base']}/api/tasks?limit=10").json()["tasks"]
                for task in tasks:
                    label = 1 if (task["pair"]["r_id"], task["pair"]["s_id"]) in truth else 0
                    requests.post(f"{live['base']}/api/labels",
                                  json={"task_id": task["task_id"], "label": label})
                stop.wait(0.02)

        answerer = threading.Thread(target=answer_forever, daemon=True)
        answerer.start()
        try:
            artifacts = run(config, pools, emb_r, emb_s, records_r, records_s,
                            ["title", "model"], oracle, status=live["status"])
        finally:
            stop.set()
            answerer.join(timeout=5)
        ledger = artifacts.ledger
        assert ledger.total == live["budget"].consumed
        assert ledger.seed_count == 20
        assert ledger.loop_total == 8
        # every answered task's label landed exactly once in the labeled sets
        labels = {e.pair: e.label for e in
                  artifacts.training_set.entries + artifacts.validation_set.entries}
        answered = [t for t in live["queue"]._tasks.values() if t.status == "answered"]
        assert len(answered) == ledger.total
        for task in answered:
            assert labels[task.pair] == task.answer
            assert (task.pair in truth) == bool(task.answer)
