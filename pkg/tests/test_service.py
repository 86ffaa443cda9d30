import json
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from promptner.pipeline import run_ner
from promptner.service import ModelHolder, create_app
from promptner.service.app import ModelBundle
from conftest import small_model


@pytest.fixture(scope="module")
def client(trained):
    holder = ModelHolder(ModelBundle(trained["model"], trained["registry"],
                                     eval_beam=2, test_beam=2))
    return TestClient(create_app(holder))


class TestHealth:
    def test_health(self, client):
        resp = client.get("/api/health")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok"}


class TestEntityTypes:
    def test_listing_with_metadata(self, client, trained):
        resp = client.get("/api/entity-types")
        assert resp.status_code == 200
        items = resp.json()
        assert len(items) == len(trained["registry"].entity_types)
        by_id = {item["id"]: item for item in items}
        assert by_id["name"]["group"] == "name"
        assert set(by_id["name"]["datasets"]) == {
            "synth_news", "synth_shop", "synth_work"
        }
        assert by_id["company"]["datasets"] == ["synth_news"]
        for item in items:
            assert item["granularity"] in ("coarse", "fine", "ultra_fine")


class TestNer:
    def test_basic_request(self, client, trained):
        text = trained["corpora"]["synth_news"].dev[0].text
        resp = client.post("/api/ner", json={
            "text": text,
            "entity_types": ["name", "location", "time", "company"],
            "decode_mode": "greedy",
        })
        assert resp.status_code == 200, resp.text
        body = resp.json()
        assert set(body) == {"mentions", "null_types", "raw_target", "parse_valid"}
        requested = {"name", "location", "time", "company"}
        for m in body["mentions"]:
            assert m["type"] in requested
        for t in body["null_types"]:
            assert t in requested

    def test_empty_text_400(self, client):
        resp = client.post("/api/ner", json={"text": "", "entity_types": ["name"]})
        assert resp.status_code == 400

    def test_empty_types_400(self, client):
        resp = client.post("/api/ner", json={"text": "Tom", "entity_types": []})
        assert resp.status_code == 400

    def test_unknown_type_400(self, client):
        resp = client.post("/api/ner", json={"text": "Tom", "entity_types": ["martian"]})
        assert resp.status_code == 400

    def test_unparseable_422_carries_raw_target(self, trained):
        untrained = small_model(trained["model"].vocab, seed=99, d_model=32,
                                d_ff=64, max_source_len=96, max_target_len=24)
        holder = ModelHolder(ModelBundle(untrained, trained["registry"]))
        client = TestClient(create_app(holder))
        resp = client.post("/api/ner", json={
            "text": "Tom will go to the zoo tomorrow.",
            "entity_types": ["name"],
            "decode_mode": "greedy",
        })
        assert resp.status_code == 422
        assert "raw_target" in resp.json()["detail"]

    def test_503_when_not_loaded(self):
        client = TestClient(create_app(ModelHolder()))
        resp = client.post("/api/ner", json={"text": "x", "entity_types": ["name"]})
        assert resp.status_code == 503
        assert client.get("/api/entity-types").status_code == 503

    def test_hot_reload_swaps(self, trained):
        holder = ModelHolder()
        client = TestClient(create_app(holder))
        assert client.get("/api/entity-types").status_code == 503
        holder.reload(trained["path"], "bundled:synth")
        assert client.get("/api/entity-types").status_code == 200

    def test_concurrent_identical_requests_identical(self, client, trained):
        text = trained["corpora"]["synth_shop"].dev[0].text
        payload = {"text": text, "entity_types": ["name", "product"],
                   "decode_mode": "beam", "beam_width": 3}

        def call(_):
            return client.post("/api/ner", json=payload).json()

        with ThreadPoolExecutor(max_workers=6) as pool:
            bodies = list(pool.map(call, range(12)))
        assert all(b == bodies[0] for b in bodies)

    def test_matches_pipeline_run_ner(self, client, trained):
        text = trained["corpora"]["synth_news"].dev[1].text
        resp = client.post("/api/ner", json={
            "text": text, "entity_types": ["name", "time"],
            "decode_mode": "greedy",
        })
        assert resp.status_code == 200
        outcome = run_ner(trained["model"], trained["registry"], text,
                          ["name", "time"], mode="greedy")
        assert resp.json()["raw_target"] == outcome.raw_target
        assert resp.json()["parse_valid"] == outcome.parse_valid
