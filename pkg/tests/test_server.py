import copy
import json

import numpy as np
import pytest
from starlette.testclient import TestClient

from conftest import BASE_2D
from sttnav.recording import read_jsonl, write_jsonl
from sttnav.scenario import parse_scenario
from sttnav.server import Session, create_app
from sttnav.sim import run_episode

import io


def session_scenario(**updates):
    raw = copy.deepcopy(BASE_2D)
    raw.update(updates)
    raw.setdefault("t_c", 2.0)
    raw["t_c"] = updates.get("t_c", 2.0)
    if raw["tube"]["k1"] * raw["t_c"] <= 1.0:
        raw["tube"] = dict(raw["tube"], k1=2.5 / raw["t_c"])
    return parse_scenario(raw)


STATIC_OBS = [{"id": 1, "motion": {"kind": "static", "position": [6.0, 3.0]},
               "radius": 0.3}]


def drain_until_done(ws, acks=None, limit=2000):
    final = None
    while limit:
        limit -= 1
        fr = ws.receive_json()
        if fr["type"] in ("command", "error") and acks is not None:
            acks.append(fr)
        if fr["type"] == "snapshot" and fr["payload"]["status"] != "Running" \
                and not fr["payload"]["paused"]:
            final = fr["payload"]
            break
    assert final is not None, "session never finished"
    return final


def test_scenarios_endpoint():
    app = create_app(session_scenario(), time_scale=0.0, start_paused=True)
    with TestClient(app) as client:
        assert client.get("/scenarios").json() == {
            "scenarios": ["mobile_robot", "quadrotor"]}


def test_hello_and_snapshot_sequence_monotone():
    app = create_app(session_scenario(), time_scale=0.0)
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws:
            hello = ws.receive_json()
            assert hello["type"] == "hello"
            assert hello["payload"]["dims"] == 2
            assert "tube.k1" in hello["payload"]["adjustable"]
            seqs = [hello["seq"]]
            for _ in range(5):
                fr = ws.receive_json()
                seqs.append(fr["seq"])
            assert all(b > a for a, b in zip(seqs, seqs[1:]))


def test_command_free_session_equals_batch_run():
    sc = session_scenario(obstacles=STATIC_OBS, disturbance={"bound": 0.1})
    app = create_app(sc, time_scale=0.0)
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws:
            ws.receive_json()
            drain_until_done(ws)
        session_log = client.app.state.session.finished_log
        jsonl_session = client.get("/log").text
    batch_log = run_episode(sc, record_obstacles=True)
    assert np.array_equal(session_log.sigma, batch_log.sigma)
    assert np.array_equal(session_log.x, batch_log.x)
    assert np.array_equal(session_log.rho, batch_log.rho)
    buf = io.StringIO()
    write_jsonl(batch_log, buf)
    assert jsonl_session == buf.getvalue()  # bit-for-bit


def test_drag_command_causality_window():
    sc = session_scenario(obstacles=STATIC_OBS)
    app = create_app(sc, time_scale=0.0, start_paused=True)
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws:
            ws.receive_json()
            ws.send_json({"type": "command",
                          "payload": {"kind": "drag", "id": 1, "position": [6.0, 3.05]}})
            ack = None
            while ack is None:
                fr = ws.receive_json()
                if fr["type"] == "command":
                    ack = fr["payload"]
            assert ack["ok"]
            ack_tick = ack["tick"]
            ws.send_json({"type": "command", "payload": {"kind": "resume"}})
            drain_until_done(ws)
        session = client.app.state.session
        log = session.finished_log
    # obstacle position deviates from its script no earlier than T+1,
    # no later than T+2 (rows are post-tick states)
    moved = np.nonzero(np.linalg.norm(
        log.obstacle_centers[:, 0, :] - np.array([6.0, 3.0]), axis=1) > 1e-12)[0]
    assert len(moved)
    first_row = int(moved[0])
    assert ack_tick + 1 <= first_row <= ack_tick + 2


def test_session_log_passes_primary_audits_after_drags():
    from sttnav.sim import audit_episode
    sc = session_scenario(obstacles=STATIC_OBS)
    app = create_app(sc, time_scale=0.0, start_paused=True)
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws:
            ws.receive_json()
            for k in range(5):
                ws.send_json({"type": "command",
                              "payload": {"kind": "drag", "id": 1,
                                          "position": [6.0 - 0.002 * k, 3.0]}})
            ws.send_json({"type": "command", "payload": {"kind": "resume"}})
            drain_until_done(ws)
        log = client.app.state.session.finished_log
    assert log.status == "Success"
    assert audit_episode(log).ok


def test_headless_replay_reproduces_session_log_exactly():
    sc = session_scenario(obstacles=STATIC_OBS)
    app = create_app(sc, time_scale=0.0, start_paused=True)
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws:
            ws.receive_json()
            ws.send_json({"type": "command",
                          "payload": {"kind": "drag", "id": 1, "position": [5.95, 3.05]}})
            ws.send_json({"type": "command",
                          "payload": {"kind": "set_param", "path": "tube.k3",
                                      "value": 3.0}})
            ws.send_json({"type": "command", "payload": {"kind": "resume"}})
            drain_until_done(ws)
        schedule = client.get("/commands").json()["commands"]
        jsonl_session = client.get("/log").text
    assert len(schedule) >= 2
    replayed = run_episode(sc, commands=[(t, c) for t, c in schedule])
    buf = io.StringIO()
    write_jsonl(replayed, buf)
    assert buf.getvalue() == jsonl_session


def test_rejections_do_not_reach_other_clients():
    sc = session_scenario(obstacles=STATIC_OBS)
    app = create_app(sc, time_scale=0.0, start_paused=True)
    with TestClient(app) as client:
        with client.websocket_connect("/session") as a, \
                client.websocket_connect("/session") as b:
            a.receive_json()
            b.receive_json()
            a.send_json({"type": "command",
                         "payload": {"kind": "set_param", "path": "plant.model",
                                     "value": "x"}})
            fr = a.receive_json()
            while fr["type"] == "snapshot":
                fr = a.receive_json()
            assert fr["type"] == "error"
            b.send_json({"type": "command", "payload": {"kind": "pause"}})
            fr = b.receive_json()
            while fr["type"] == "snapshot":
                fr = b.receive_json()
            assert fr["type"] == "command"  # b's own ack, not a's error


def test_drag_outside_workspace_rejected_with_error_frame():
    sc = session_scenario(obstacles=STATIC_OBS)
    app = create_app(sc, time_scale=0.0, start_paused=True)
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws:
            ws.receive_json()
            ws.send_json({"type": "command",
                          "payload": {"kind": "drag", "id": 1, "position": [50.0, 0.0]}})
            fr = ws.receive_json()
            while fr["type"] == "snapshot":
                fr = ws.receive_json()
            assert fr["type"] == "error"
            assert "workspace" in fr["payload"]["message"]


def test_reset_restarts_generation():
    sc = session_scenario(obstacles=STATIC_OBS)
    app = create_app(sc, time_scale=0.0)
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws:
            ws.receive_json()
            drain_until_done(ws)
            ws.send_json({"type": "command", "payload": {"kind": "reset"}})
            saw_reset = False
            for _ in range(2000):
                fr = ws.receive_json()
                if fr["type"] == "command" and fr["payload"]["message"] == "reset":
                    saw_reset = True
                if saw_reset and fr["type"] == "snapshot" \
                        and fr["payload"]["generation"] == 1:
                    break
            assert saw_reset
