"""HTTP and WebSocket service tests against an in-process app."""

import json
import time

import pytest
from fastapi.testclient import TestClient

from cogsaw.config import Settings
from cogsaw.rounds import parse_log
from cogsaw.service import create_app

IDENTITY_2X2 = [[0, 1], [2, 3]]
E01 = {"label": "LR", "first": 0, "second": 1}
E23 = {"label": "LR", "first": 2, "second": 3}
T02 = {"label": "TB", "first": 0, "second": 2}
T13 = {"label": "TB", "first": 1, "second": 3}


@pytest.fixture()
def client(tmp_path):
    app = create_app(Settings(data_dir=str(tmp_path)))
    with TestClient(app) as c:
        c.data_dir = tmp_path
        yield c


def create_round(client, **overrides) -> dict:
    body = {"grid": IDENTITY_2X2, "round_id": "t1"}
    body.update(overrides)
    resp = client.post("/rounds", json=body)
    assert resp.status_code == 200, resp.text
    return resp.json()


def join(ws, round_id: str, token: str) -> dict:
    ws.send_json({"type": "join", "roundId": round_id, "token": token})
    msg = ws.receive_json()
    assert msg["type"] == "welcome", msg
    return msg


def send_op(ws, payload: dict) -> dict:
    ws.send_json(payload)
    return ws.receive_json()


# ---------------------------------------------------------------- admin REST

def test_create_round_reports_the_shape(client):
    info = create_round(client)
    assert info["round_id"] == "t1"
    assert (info["rows"], info["cols"]) == (2, 2)
    assert info["piece_count"] == 4
    assert info["edge_total"] == 4
    assert info["ws_url"] == "/ws"
    status = client.get("/rounds/t1").json()
    assert status["state"] == "open"
    assert status["players"] == []
    assert status["group_size"] == info["group_size"]


def test_round_ids_are_unique(client):
    create_round(client)
    assert client.post("/rounds", json={"grid": IDENTITY_2X2,
                                        "round_id": "t1"}).status_code == 409


def test_bad_round_requests_are_refused(client):
    assert client.post("/rounds", json={"round_id": "x"}).status_code == 422
    assert client.post("/rounds", json={"grid": [[0, 1], [1, 2]],
                                        "round_id": "x"}).status_code == 422
    assert client.post("/rounds", json={"grid": [[0, 1, 2]],
                                        "rows": 9, "round_id": "x"
                                        }).status_code == 200


def test_unknown_round_is_404(client):
    for url in ("/rounds/nope", "/rounds/nope/metrics", "/rounds/nope/log",
                "/rounds/nope/cog", "/rounds/nope/manifest",
                "/rounds/nope/pieces/piece_0.png"):
        assert client.get(url).status_code == 404
    assert client.post("/rounds/nope/sweep").status_code == 404


def test_manifest_and_piece_assets(client):
    create_round(client)
    manifest = client.get("/rounds/t1/manifest").json()
    assert sorted(p["id"] for p in manifest["pieces"]) == [0, 1, 2, 3]
    assert sorted(manifest["display_order"]) == [0, 1, 2, 3]
    asset = manifest["pieces"][0]["asset"]
    resp = client.get(f"/rounds/t1/pieces/{asset}")
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "image/png"
    assert resp.content[:4] == b"\x89PNG"
    # only names listed in the manifest are servable
    assert client.get("/rounds/t1/pieces/manifest.json").status_code == 404
    assert client.get("/rounds/t1/pieces/round.jsonl").status_code == 404


# ------------------------------------------------------------- player socket

def test_join_welcome_carries_the_manifest(client):
    create_round(client)
    with client.websocket_connect("/ws") as ws:
        msg = join(ws, "t1", "p1")
        assert msg["round_id"] == "t1"
        assert msg["player"] == "p1"
        assert msg["seq"] == 1
        assert len(msg["manifest"]["pieces"]) == 4
    status = client.get("/rounds/t1").json()
    assert status["players"] == ["p1"]


def test_join_guards(client):
    create_round(client, group_size=1)
    with client.websocket_connect("/ws") as ws:
        reply = send_op(ws, {"type": "connect", "edge": E01})
        assert reply == {"type": "reject", "reason": "join_first"}
        ws.send_json({"type": "join", "roundId": "zzz", "token": "p1"})
        assert ws.receive_json()["reason"] == "unknown_round"
        join(ws, "t1", "p1")
        ws.send_json({"type": "join", "roundId": "t1", "token": "p1"})
        assert ws.receive_json()["reason"] == "already_joined"
        with client.websocket_connect("/ws") as other:
            other.send_json({"type": "join", "roundId": "t1", "token": "p1"})
            assert other.receive_json()["reason"] == "token_in_use"
            other.send_json({"type": "join", "roundId": "t1", "token": "p2"})
            assert other.receive_json()["reason"] == "round_full"


def test_malformed_traffic_is_rejected_politely(client):
    create_round(client)
    with client.websocket_connect("/ws") as ws:
        ws.send_text("{broken")
        assert ws.receive_json()["reason"] == "bad_json"
        ws.send_json({"type": "levitate"})
        assert ws.receive_json()["reason"] == "unknown_message"
        ws.send_json({"type": "connect", "edge": {"label": "XX",
                                                  "first": 0, "second": 1}})
        assert ws.receive_json()["reason"] == "bad_message"
        ws.send_json({"type": "accept_hint", "edges": []})
        assert ws.receive_json()["reason"] == "bad_message"


def test_full_solve_over_the_wire(client):
    create_round(client)
    with client.websocket_connect("/ws") as ws:
        join(ws, "t1", "solo")
        for payload in (E01, T02):
            reply = send_op(ws, {"type": "connect", "edge": payload})
            assert reply["type"] == "ack" and reply["op"] == "connect"
        reply = send_op(ws, {"type": "connect", "edge": T13})
        assert reply["type"] == "ack"
        solved = ws.receive_json()
        assert solved["type"] == "solved"
        assert solved["winner"] == "solo"
        assert solved["cp"] >= 0.0
    status = client.get("/rounds/t1").json()
    assert status["state"] == "solved"
    assert status["winner"] == "solo"


def test_rejections_carry_the_round_reason(client):
    create_round(client)
    with client.websocket_connect("/ws") as ws:
        join(ws, "t1", "p1")
        send_op(ws, {"type": "connect", "edge": E01})
        reply = send_op(ws, {"type": "connect", "edge": E01})
        assert reply == {"type": "reject", "reason": "connect_duplicate"}
        reply = send_op(ws, {"type": "connect",
                             "edge": {"label": "LR", "first": 0,
                                      "second": 9}})
        assert reply["reason"] == "unknown_piece"
        reply = send_op(ws, {"type": "disconnect", "piece": 3})
        assert reply["reason"] == "piece_isolated"
        reply = send_op(ws, {"type": "accept_hint", "edges": [E01]})
        assert reply["reason"] == "hint_not_applicable"


def test_heartbeat_echoes_the_sequence(client):
    create_round(client)
    with client.websocket_connect("/ws") as ws:
        join(ws, "t1", "p1")
        reply = send_op(ws, {"type": "heartbeat"})
        assert reply == {"type": "ack", "seq": 1, "op": "heartbeat"}


def test_responsive_feedback_reaches_the_actor(client):
    create_round(client)
    with client.websocket_connect("/ws") as veteran, \
            client.websocket_connect("/ws") as novice:
        join(veteran, "t1", "vet")
        join(novice, "t1", "nov")
        assert send_op(veteran, {"type": "connect",
                                 "edge": E01})["type"] == "ack"
        reply = send_op(novice, {"type": "connect", "edge": T02})
        assert reply["type"] == "ack"
        feedback = novice.receive_json()
        assert feedback["type"] == "feedback"
        assert feedback["mode"] == "connecting_action"
        assert feedback["policy"] == "responsive"
        assert feedback["edges"] == [E01]
        assert isinstance(feedback["version"], int)


def test_accept_hint_applies_the_edges(client):
    create_round(client)
    with client.websocket_connect("/ws") as ws:
        join(ws, "t1", "p1")
        reply = send_op(ws, {"type": "accept_hint", "edges": [E01, E23]})
        assert reply["type"] == "ack" and reply["op"] == "accept_hint"
        hint_with_stranger = {"type": "accept_hint",
                              "edges": [{"label": "TB", "first": 0,
                                         "second": 77}]}
        assert send_op(ws, hint_with_stranger)["reason"] == "unknown_piece"


def test_solved_broadcast_reaches_everyone(client):
    create_round(client)
    with client.websocket_connect("/ws") as winner, \
            client.websocket_connect("/ws") as watcher:
        join(winner, "t1", "win")
        join(watcher, "t1", "watch")
        send_op(winner, {"type": "connect", "edge": E01})
        send_op(winner, {"type": "connect", "edge": T02})
        assert send_op(winner, {"type": "connect", "edge": T13})["type"] == \
            "ack"
        assert winner.receive_json()["type"] == "solved"
        others = watcher.receive_json()
        assert others == {"type": "solved", "winner": "win",
                          "cp": others["cp"]}


def test_socket_close_frees_the_token(client):
    create_round(client)
    with client.websocket_connect("/ws") as ws:
        join(ws, "t1", "p1")
        send_op(ws, {"type": "connect", "edge": E01})
    # the departure was logged; the same token may rejoin and continue
    with client.websocket_connect("/ws") as ws:
        msg = join(ws, "t1", "p1")
        assert msg["seq"] > 2
        reply = send_op(ws, {"type": "connect", "edge": T02})
        assert reply["type"] == "ack"
    log = client.get("/rounds/t1/log").text
    ops = [json.loads(l)["op"] for l in log.splitlines()[1:]]
    assert "leave" in ops


def test_stagnation_sweep_nudges_idle_players(client):
    create_round(client, stagnation_period=0.05, group_size=3)
    with client.websocket_connect("/ws") as active, \
            client.websocket_connect("/ws") as idle:
        join(active, "t1", "act")
        join(idle, "t1", "idl")
        send_op(active, {"type": "connect", "edge": E01})
        time.sleep(0.1)
        swept = client.post("/rounds/t1/sweep").json()
        assert swept["dispatched"] >= 1
        assert swept["solved"] is False
        feedback = idle.receive_json()
        assert feedback["type"] == "feedback"
        assert feedback["policy"] == "stimulative"
        assert feedback["mode"] == "connecting_action"
        assert feedback["edges"] == [E01]


# ----------------------------------------------------- logs, cog and metrics

def solve_round(client, round_id="t1", token="solo"):
    with client.websocket_connect("/ws") as ws:
        join(ws, round_id, token)
        for payload in (E01, T02, T13):
            send_op(ws, {"type": "connect", "edge": payload})
        ws.receive_json()  # solved


def test_metrics_flow(client):
    create_round(client)
    assert client.get("/rounds/t1/metrics").status_code == 409
    solve_round(client)
    metrics = client.get("/rounds/t1/metrics").json()
    assert metrics["winner"] == "solo"
    assert metrics["completion_seconds"] >= 0.0
    assert metrics["feedback_ratio"] == 0.0
    assert metrics["feedback_precision"] is None
    assert metrics["entry_count"] == 4
    assert metrics["progress_samples"][-1][1] == 1.0


def test_served_log_matches_the_disk_file(client):
    create_round(client)
    solve_round(client)
    served = client.get("/rounds/t1/log")
    assert served.headers["content-type"].startswith("application/x-ndjson")
    header, entries = parse_log(served.text.splitlines())
    assert header.round_id == "t1"
    assert entries[-1].op in ("connect", "leave")
    on_disk = (client.data_dir / "t1" / "round.jsonl").read_text()
    assert served.text == on_disk


def test_cog_export_endpoint(client):
    create_round(client)
    with client.websocket_connect("/ws") as ws:
        join(ws, "t1", "p1")
        send_op(ws, {"type": "connect", "edge": E01})
        text = client.get("/rounds/t1/cog").text
    assert text.startswith("# opinion-graph v")
    assert "LR 0 1 1 0 1.000000" in text
