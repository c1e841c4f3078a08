"""HTTP service behavior, checked against the committed response schemas."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import pytest
from fastapi.testclient import TestClient

from stagecraft.api import create_app, export_schemas
from stagecraft.errors import FormatError
from stagecraft.protocol_io import protocol_to_object

SCHEMA_DIR = Path(__file__).resolve().parents[1] / "schemas"

MAJORITY_ID = "majority-voting"
BROKEN_ID = "majority-voting-broken"


def validate(payload: dict, schema_name: str) -> None:
    schema = json.loads((SCHEMA_DIR / f"{schema_name}.schema.json").read_text())
    jsonschema.validate(payload, schema)


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


@pytest.fixture(scope="module")
def graphs0(client):
    return client.get(f"/api/protocols/{MAJORITY_ID}/stage-graphs").json()["graphs"][0]


def stage_ids(graph: dict) -> list[str]:
    return [s["id"] for s in graph["stages"]]


# -- protocols -------------------------------------------------------------------


def test_list_protocols(client):
    r = client.get("/api/protocols")
    assert r.status_code == 200
    validate(r.json(), "protocol_list")
    ids = [p["id"] for p in r.json()["protocols"]]
    assert MAJORITY_ID in ids
    assert BROKEN_ID in ids
    assert ids == sorted(ids)


def test_get_protocol(client):
    r = client.get(f"/api/protocols/{MAJORITY_ID}")
    assert r.status_code == 200
    validate(r.json(), "protocol_info")
    body = r.json()
    assert body["states"] == ["Y", "N", "y", "n"]
    assert [t["name"] for t in body["transitions"]] == ["a", "b", "c", "d"]
    assert body["predicate"] == {"coeffs": {"Y": 1, "N": -1}, "op": ">=", "const": 0}


def test_get_protocol_unknown(client):
    r = client.get("/api/protocols/nope")
    assert r.status_code == 404
    validate(r.json(), "api_error_model")
    assert r.json()["code"] == "unknown_protocol"


def test_create_protocol(client, majority_doc):
    obj = protocol_to_object(majority_doc)
    obj["name"] = "Tiny Consensus"
    r = client.post("/api/protocols", json=obj)
    assert r.status_code == 201
    validate(r.json(), "protocol_info")
    assert r.json()["id"] == "tiny-consensus"

    # Re-uploading the identical document is fine.
    assert client.post("/api/protocols", json=obj).status_code == 201

    obj["output"] = {"Y": 0, "N": 1, "y": 0, "n": 1}
    r = client.post("/api/protocols", json=obj)
    assert r.status_code == 409
    validate(r.json(), "api_error_model")
    assert r.json()["code"] == "protocol_exists"


def test_create_protocol_rejects_bad_documents(client, majority_doc):
    obj = protocol_to_object(majority_doc)
    del obj["states"]
    r = client.post("/api/protocols", json=obj)
    assert r.status_code == 400
    validate(r.json(), "api_error_model")
    assert r.json()["code"] == "missing_field"
    assert r.json()["location"] == "states"

    r = client.post("/api/protocols", json=[1, 2, 3])
    assert r.status_code == 400
    assert r.json()["code"] == "validation"


# -- verification ------------------------------------------------------------------


def test_verify_majority(client):
    r = client.post(f"/api/protocols/{MAJORITY_ID}/verify")
    assert r.status_code == 200
    validate(r.json(), "verify_response")
    body = r.json()
    assert body["outcome"] == "verified"
    assert [g["output_value"] for g in body["graphs"]] == [0, 1]
    assert [rep["verdict"] for rep in body["reports"]] == ["proved", "proved"]
    assert body["run"] is None
    assert body["reason"] is None


def test_verify_is_cached_byte_identically(client):
    a = client.post(f"/api/protocols/{MAJORITY_ID}/verify", json={"n_cert": 7})
    b = client.post(f"/api/protocols/{MAJORITY_ID}/verify")
    assert a.content == b.content


def test_verify_broken(client):
    r = client.post(f"/api/protocols/{BROKEN_ID}/verify")
    assert r.status_code == 200
    validate(r.json(), "verify_response")
    body = r.json()
    assert body["outcome"] == "refuted"
    assert body["run"] == [
        {"config": {"Y": 1, "N": 1}, "transition": "a"},
        {"config": {"y": 1, "n": 1}, "transition": None},
    ]
    assert [rep["verdict"] for rep in body["reports"]] == ["proved", "not_proved"]


def test_verify_bound_is_validated(client):
    for bad in (0, 13):
        r = client.post(f"/api/protocols/{MAJORITY_ID}/verify", json={"n_cert": bad})
        assert r.status_code == 400
        assert r.json()["code"] == "validation"


def test_verify_unknown_protocol(client):
    assert client.post("/api/protocols/nope/verify").status_code == 404


def test_stage_graphs(client, graphs0):
    r = client.get(f"/api/protocols/{MAJORITY_ID}/stage-graphs")
    assert r.status_code == 200
    validate(r.json(), "stage_graphs_response")
    body = r.json()
    assert body["outcome"] == "verified"
    assert len(body["graphs"]) == 2
    assert len(graphs0["stages"]) == 3
    assert [s["speed"] for s in graphs0["stages"]] == [
        "O(n^2 log n)", "2^(O(n log n))", None,
    ]


# -- stage detail ------------------------------------------------------------------


def test_stage_detail_with_configuration(client, graphs0):
    middle = stage_ids(graphs0)[1]
    r = client.get(
        f"/api/protocols/{MAJORITY_ID}/stages/{middle}",
        params={"config": json.dumps({"N": 1, "n": 4, "y": 2})},
    )
    assert r.status_code == 200
    validate(r.json(), "stage_detail")
    body = r.json()
    assert body["graph_output_value"] == 0
    assert body["certificate"] == {"weights": {"y": 1}}
    assert body["certificate_value"] == 2
    assert body["config_in_stage"] is True
    assert body["dead"] == ["a", "b"]
    assert body["eventually_dead"] == ["c", "d"]
    assert body["terminal"] is False


def test_stage_detail_terminal(client, graphs0):
    terminal = stage_ids(graphs0)[2]
    r = client.get(f"/api/protocols/{MAJORITY_ID}/stages/{terminal}")
    assert r.status_code == 200
    body = r.json()
    assert body["terminal"] is True
    assert body["certificate"] is None
    assert body["certificate_value"] is None
    assert body["config"] is None
    assert sorted(body["dead"]) == ["a", "b", "c", "d"]
    assert body["witness"] == {"N": 1}


def test_stage_detail_config_errors(client, graphs0):
    middle = stage_ids(graphs0)[1]
    url = f"/api/protocols/{MAJORITY_ID}/stages/{middle}"

    r = client.get(url, params={"config": "{not json"})
    assert (r.status_code, r.json()["code"]) == (400, "syntax")

    r = client.get(url, params={"config": json.dumps({"Z": 1})})
    assert (r.status_code, r.json()["code"]) == (400, "unknown_state")

    r = client.get(url, params={"config": json.dumps({"Y": -1})})
    assert (r.status_code, r.json()["code"]) == (400, "negative_count")

    r = client.get(url, params={"config": json.dumps([1])})
    assert (r.status_code, r.json()["code"]) == (400, "bad_type")


def test_stage_detail_unknown_stage(client):
    r = client.get(f"/api/protocols/{MAJORITY_ID}/stages/S99")
    assert r.status_code == 404
    assert r.json()["code"] == "unknown_stage"


# -- sessions ----------------------------------------------------------------------


def make_session(client, config: dict, seed: int = 1, pid: str = MAJORITY_ID) -> dict:
    r = client.post(
        "/api/sessions", json={"protocol_id": pid, "config": config, "seed": seed}
    )
    assert r.status_code == 201
    validate(r.json(), "session_snapshot")
    return r.json()


def test_create_session(client):
    graphs1 = client.get(f"/api/protocols/{MAJORITY_ID}/stage-graphs").json()["graphs"][1]
    snap = make_session(client, {"Y": 1, "N": 1}, seed=5)
    assert snap["seed"] == 5
    assert snap["run"] == ["c0"]
    assert snap["run_length"] == 1
    assert snap["cursor"] == 0
    assert snap["current"]["id"] == "c0"
    assert snap["current"]["counts"] == {"Y": 1, "N": 1}
    assert snap["current"]["placements"] == [None, stage_ids(graphs1)[0]]
    assert snap["edges"] == []
    assert snap["warnings"] == []


def test_create_session_accepts_protocol_alias(client):
    r = client.post(
        "/api/sessions",
        json={"protocol": MAJORITY_ID, "config": {"Y": 2}, "seed": 0},
    )
    assert r.status_code == 201


def test_create_session_generates_seed(client):
    r = client.post("/api/sessions", json={"protocol_id": MAJORITY_ID, "config": {"Y": 2}})
    assert r.status_code == 201
    assert isinstance(r.json()["seed"], int)


def test_create_session_warns_outside_roots(client):
    snap = make_session(client, {"n": 2})
    assert snap["warnings"] == [
        "start configuration lies outside the root of every stage graph"
    ]


def test_create_session_errors(client):
    r = client.post("/api/sessions", json={"protocol_id": "nope", "config": {"Y": 1}})
    assert r.status_code == 404

    r = client.post("/api/sessions", json={"protocol_id": MAJORITY_ID, "config": {}})
    assert r.status_code == 422
    assert r.json()["code"] == "empty_configuration"


def test_get_session(client):
    snap = make_session(client, {"Y": 1, "N": 1}, seed=3)
    r = client.get(f"/api/sessions/{snap['id']}")
    assert r.status_code == 200
    assert r.json() == snap


def test_get_session_unknown(client):
    r = client.get("/api/sessions/zz")
    assert r.status_code == 404
    assert r.json()["code"] == "unknown_session"


def test_step_manual(client):
    snap = make_session(client, {"Y": 1, "N": 1}, seed=2)
    r = client.post(
        f"/api/sessions/{snap['id']}/step",
        json={"mode": "manual", "pair": ["Y", "N"], "expected_run_length": 1},
    )
    assert r.status_code == 200
    validate(r.json(), "session_snapshot")
    body = r.json()
    assert body["run"] == ["c0", "c1"]
    assert body["current"]["counts"] == {"y": 1, "n": 1}
    assert body["edges"] == [{"from": "c0", "transition": "a", "to": "c1"}]


def test_step_rejects_stale_run_length(client):
    snap = make_session(client, {"Y": 1, "N": 1})
    sid = snap["id"]
    ok = {"mode": "manual", "pair": ["Y", "N"], "expected_run_length": 1}
    assert client.post(f"/api/sessions/{sid}/step", json=ok).status_code == 200
    r = client.post(f"/api/sessions/{sid}/step", json=ok)
    assert r.status_code == 409
    validate(r.json(), "api_error_model")
    assert r.json()["code"] == "stale_session"


def test_step_engine_errors(client):
    sid = make_session(client, {"Y": 1, "N": 1})["id"]

    r = client.post(
        f"/api/sessions/{sid}/step",
        json={"mode": "fly", "expected_run_length": 1},
    )
    assert (r.status_code, r.json()["code"]) == (422, "bad_mode")

    r = client.post(
        f"/api/sessions/{sid}/step",
        json={"mode": "manual", "pair": ["y", "n"], "expected_run_length": 1},
    )
    assert (r.status_code, r.json()["code"]) == (422, "pair_not_present")

    r = client.post(f"/api/sessions/{sid}/step", json={"mode": "random"})
    assert (r.status_code, r.json()["code"]) == (400, "validation")


def test_seek_and_branch(client):
    sid = make_session(client, {"Y": 2, "N": 2})["id"]
    client.post(
        f"/api/sessions/{sid}/step",
        json={"mode": "manual", "pair": ["Y", "N"], "expected_run_length": 1},
    )
    r = client.post(
        f"/api/sessions/{sid}/seek", json={"index": 0, "expected_run_length": 2}
    )
    assert r.status_code == 200
    assert r.json()["cursor"] == 0

    r = client.post(
        f"/api/sessions/{sid}/step",
        json={"mode": "manual", "pair": ["Y", "N"], "expected_run_length": 2},
    )
    assert r.json()["run"] == ["c0", "c1"]
    assert len(r.json()["nodes"]) == 2


def test_seek_out_of_range(client):
    sid = make_session(client, {"Y": 2})["id"]
    r = client.post(
        f"/api/sessions/{sid}/seek", json={"index": 4, "expected_run_length": 1}
    )
    assert (r.status_code, r.json()["code"]) == (422, "index_out_of_range")


def test_progress_endpoint(client, graphs0):
    terminal = stage_ids(graphs0)[2]
    sid = make_session(client, {"N": 1, "n": 4, "y": 2})["id"]
    r = client.post(
        f"/api/sessions/{sid}/progress",
        json={"max_steps": 10, "expected_run_length": 1},
    )
    assert r.status_code == 200
    validate(r.json(), "progress_response")
    body = r.json()
    assert body["steps"] == 2
    assert body["reached_child"] is True
    assert body["reached_stage"] == terminal
    assert body["session"]["current"]["counts"] == {"N": 1, "n": 6}


def test_progress_zero_steps_in_terminal(client):
    sid = make_session(client, {"y": 2})["id"]
    r = client.post(
        f"/api/sessions/{sid}/progress",
        json={"max_steps": 5, "expected_run_length": 1},
    )
    assert r.status_code == 200
    assert r.json()["steps"] == 0
    assert r.json()["reached_child"] is True


def test_progress_requires_placement(client):
    sid = make_session(client, {"n": 2})["id"]
    r = client.post(
        f"/api/sessions/{sid}/progress",
        json={"max_steps": 5, "expected_run_length": 1},
    )
    assert (r.status_code, r.json()["code"]) == (422, "no_placement")


def test_progress_step_without_certificate(client):
    sid = make_session(client, {"y": 2})["id"]
    r = client.post(
        f"/api/sessions/{sid}/step",
        json={"mode": "progress", "expected_run_length": 1},
    )
    assert (r.status_code, r.json()["code"]) == (422, "no_certificate")


def test_unknown_session_everywhere(client):
    assert client.post(
        "/api/sessions/zz/step",
        json={"mode": "random", "expected_run_length": 1},
    ).status_code == 404
    assert client.post(
        "/api/sessions/zz/seek", json={"index": 0, "expected_run_length": 1}
    ).status_code == 404
    assert client.post(
        "/api/sessions/zz/progress", json={"expected_run_length": 1}
    ).status_code == 404


# -- deployment details -------------------------------------------------------------


def test_committed_schemas_are_current(tmp_path):
    written = export_schemas(tmp_path)
    committed = sorted(p.name for p in SCHEMA_DIR.glob("*.schema.json"))
    assert sorted(written) == committed
    for name in written:
        assert (tmp_path / name).read_bytes() == (SCHEMA_DIR / name).read_bytes(), name


def test_protocol_dir_loading(tmp_path, majority_doc):
    obj = protocol_to_object(majority_doc)
    obj["name"] = "Disk Loaded"
    (tmp_path / "disk.json").write_text(json.dumps(obj))
    with TestClient(create_app(protocol_dir=tmp_path)) as c:
        ids = [p["id"] for p in c.get("/api/protocols").json()["protocols"]]
    assert "disk-loaded" in ids


def test_protocol_dir_rejects_malformed_files(tmp_path):
    (tmp_path / "bad.json").write_text("{\"name\": \"x\"}")
    with pytest.raises(FormatError) as err:
        create_app(protocol_dir=tmp_path)
    assert err.value.code == "bad_protocol_dir"
    assert "bad.json" in err.value.message


def test_unknown_route(client):
    r = client.get("/api/nothing")
    assert r.status_code == 404
    validate(r.json(), "api_error_model")
