from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from ctvae.model import model_fingerprint
from ctvae.sampler import ConditionSpec, generate, summarize
from ctvae.service import create_app, load_catalog, serve


@pytest.fixture(scope="module")
def client(flip_model):
    m, _, _ = flip_model
    app = create_app(m, catalog={"A2": {"g": "0"}, "B1": {"g": "1"}}, max_n=10_000)
    return TestClient(app), m


class TestHealthAndSchema:
    def test_health_ready(self, client):
        c, m = client
        doc = c.get("/health").json()
        assert doc["status"] == "ready"
        assert doc["model_id"] == model_fingerprint(m)

    def test_schema_lists_all_columns(self, client):
        c, _ = client
        doc = c.get("/schema").json()
        by_name = {col["name"]: col for col in doc["columns"]}
        assert set(by_name) == {"family_buyer", "spend", "g"}
        assert by_name["family_buyer"]["role"] == "target"
        assert by_name["g"]["role"] == "condition"

    def test_discrete_vocabulary_present(self, client):
        c, _ = client
        doc = c.get("/schema").json()
        g = next(col for col in doc["columns"] if col["name"] == "g")
        assert g["vocabulary"] == ["0", "1"]

    def test_continuous_training_range_present(self, client):
        c, m = client
        doc = c.get("/schema").json()
        spend = next(col for col in doc["columns"] if col["name"] == "spend")
        t = m.bundle.transforms["spend"]
        assert spend["min"] == t.value_min
        assert spend["max"] == t.value_max

    def test_products_endpoint(self, client):
        c, _ = client
        doc = c.get("/products").json()
        assert {p["id"] for p in doc["products"]} == {"A2", "B1"}


class TestWhatIf:
    def test_override_changes_variant(self, client):
        c, _ = client
        doc = c.post(
            "/whatif",
            json={"base_product": "A2", "overrides": {"g": "1"}, "n": 400, "seed": 5},
        ).json()
        assert doc["baseline"]["family_buyer"]["frequencies"] != doc["variant"]["family_buyer"]["frequencies"]
        for column, delta in doc["deltas"].items():
            assert abs(sum(delta["deltas"])) < 1e-9, column

    def test_empty_override_identity(self, client):
        c, _ = client
        doc = c.post("/whatif", json={"base_product": "A2", "n": 200, "seed": 5}).json()
        assert doc["baseline"] == doc["variant"]
        assert all(d == 0 for col in doc["deltas"].values() for d in col["deltas"])

    def test_concurrent_identical_requests_agree(self, client):
        c, _ = client
        payload = {"base": {"g": "0"}, "overrides": {"g": "1"}, "n": 300, "seed": 9}
        with ThreadPoolExecutor(2) as pool:
            a, b = pool.map(lambda _: c.post("/whatif", json=payload).json(), range(2))
        assert a == b

    def test_provenance_reproduces_via_library(self, client):
        c, m = client
        doc = c.post(
            "/whatif",
            json={
                "base_product": "A2",
                "overrides": {"g": "1"},
                "n": 250,
                "seed": 31,
                "summary_columns": ["family_buyer"],
            },
        ).json()
        seed = doc["provenance"]["seed"]
        assert doc["provenance"]["model_id"] == model_fingerprint(m)
        batch = generate(m, ConditionSpec(base={"g": "0"}, overrides={"g": "1"}), 250, seed)
        summary = summarize(batch, "family_buyer")
        assert [float(f) for f in summary.frequencies] == doc["variant"]["family_buyer"]["frequencies"]

    def test_provenance_reproduces_via_cli(self, client, flip_model, tmp_path):
        import csv
        import json

        from ctvae.cli import main
        from ctvae.model import save_model

        c, m = client
        doc = c.post(
            "/whatif",
            json={
                "base": {"g": "0"},
                "overrides": {"g": "1"},
                "n": 300,
                "seed": 77,
                "summary_columns": ["family_buyer"],
            },
        ).json()

        model_path = tmp_path / "model.ctvm"
        save_model(m, model_path)
        synth = tmp_path / "synth.csv"
        assert main(
            [
                "generate",
                "--model", str(model_path),
                "--base-product", json.dumps({"g": "0"}),
                "--override", "g=1",
                "--n", "300",
                "--seed", str(doc["provenance"]["seed"]),
                "--out", str(synth),
            ]
        ) == 0
        summary_path = tmp_path / "summary.json"
        assert main(
            ["summarize", "--in", str(synth), "--column", "family_buyer", "--out", str(summary_path)]
        ) == 0
        summary = json.loads(summary_path.read_text())
        service_freq = dict(
            zip(doc["variant"]["family_buyer"]["labels"], doc["variant"]["family_buyer"]["frequencies"])
        )
        cli_freq = dict(zip(summary["labels"], summary["frequencies"]))
        for label, freq in cli_freq.items():
            assert service_freq[label] == freq  # bit-identical counts / n

    def test_server_draws_seed_when_omitted(self, client):
        c, _ = client
        doc = c.post("/whatif", json={"base_product": "A2", "n": 50}).json()
        assert isinstance(doc["provenance"]["seed"], int)

    def test_unknown_product_is_404(self, client):
        c, _ = client
        response = c.post("/whatif", json={"base_product": "ZZ", "n": 10})
        assert response.status_code == 404
        assert response.json()["detail"]["field"] == "base_product"

    def test_invalid_override_column_is_400_with_field(self, client):
        c, _ = client
        response = c.post(
            "/whatif", json={"base": {"g": "0"}, "overrides": {"family_buyer": "yes"}, "n": 10}
        )
        assert response.status_code == 400
        assert response.json()["detail"]["field"] == "overrides.family_buyer"

    def test_unseen_override_value_is_400_with_field(self, client):
        c, _ = client
        response = c.post(
            "/whatif", json={"base": {"g": "0"}, "overrides": {"g": "7"}, "n": 10}
        )
        assert response.status_code == 400
        assert response.json()["detail"]["field"] == "overrides.g"

    def test_zero_n_is_400(self, client):
        c, _ = client
        assert c.post("/whatif", json={"base": {"g": "0"}, "n": 0}).status_code == 400

    def test_over_cap_is_400(self, client):
        c, _ = client
        response = c.post("/whatif", json={"base": {"g": "0"}, "n": 10_001})
        assert response.status_code == 400
        assert response.json()["detail"]["field"] == "n"

    def test_missing_base_is_400(self, client):
        c, _ = client
        assert c.post("/whatif", json={"n": 10}).status_code == 400

    def test_bad_summary_column_is_400(self, client):
        c, _ = client
        response = c.post(
            "/whatif",
            json={"base": {"g": "0"}, "n": 10, "summary_columns": ["g"]},
        )
        assert response.status_code == 400
        assert response.json()["detail"]["field"] == "summary_columns"


class TestGenerateEndpoint:
    def test_csv_attachment(self, client):
        c, _ = client
        response = c.post("/generate", json={"base": {"g": "0"}, "n": 5, "seed": 3})
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("text/csv")
        lines = response.text.strip().splitlines()
        assert lines[0] == "family_buyer,spend"
        assert len(lines) == 6

    def test_deterministic_given_seed(self, client):
        c, _ = client
        payload = {"base": {"g": "1"}, "n": 8, "seed": 12}
        a = c.post("/generate", json=payload)
        b = c.post("/generate", json=payload)
        assert a.text == b.text


class TestServeStartup:
    def test_corrupt_model_fails_before_binding(self, tmp_path, monkeypatch):
        from ctvae.errors import ModelCorruptionError

        bad = tmp_path / "bad.ctvm"
        bad.write_bytes(b"nope" + b"\0" * 60)
        bound = []
        monkeypatch.setattr("uvicorn.run", lambda *a, **k: bound.append(True))
        with pytest.raises(ModelCorruptionError):
            serve(bad, bind="127.0.0.1:9")
        assert bound == []


class TestCatalog:
    def test_load_catalog_parses_kinds(self, tmp_path, toy_model):
        m, _ = toy_model
        path = tmp_path / "catalog.csv"
        path.write_text("product,g\nA2,0\nB1,1\n")
        catalog = load_catalog(path, m.bundle.schema)
        assert catalog == {"A2": {"g": "0"}, "B1": {"g": "1"}}

    def test_catalog_requires_group_key(self, tmp_path, toy_model):
        m, _ = toy_model
        path = tmp_path / "catalog.csv"
        path.write_text("id,g\nA2,0\n")
        with pytest.raises(ValueError):
            load_catalog(path, m.bundle.schema)
