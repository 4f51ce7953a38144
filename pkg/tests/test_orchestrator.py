"""End-to-end orchestrator behaviour over a live simulated fleet."""

import json
import queue

import pytest

from fieldops.config import OrchestratorConfig
from fieldops.evaluation import SUITE_PROMPTS
from fieldops.gateway import BackendConfig, make_backend
from fieldops.orchestrator import PIPELINE_STAGES, Orchestrator, event_mission_text
from fieldops.records import (
    COMPLETED,
    FAILED_EXECUTION,
    REJECTED_SAFEGUARD,
    SOURCE_DEVICE,
    SOURCE_OPERATOR,
)
from fieldops.simnet import DEFAULT_FLEET, WorldModel

HOLD = SUITE_PROMPTS[0]
MOVE_EAST = SUITE_PROMPTS[1]
ALL_EAST = SUITE_PROMPTS[8]


def drain(events, *, want, mission_id=None, timeout=30.0):
    """Pull subscribed events until one matches; returns the matching event."""
    while True:
        ev = events.get(timeout=timeout)
        if ev.get("kind") != want:
            continue
        if mission_id is not None and ev.get("mission_id") != mission_id:
            continue
        return ev


def fast_world(speed=50.0):
    world = WorldModel()
    for name, kind, frame in DEFAULT_FLEET:
        world.add_asset(name, kind, frame, speed=speed)
    return world


def test_operator_mission_completes(live_stack):
    orch, fleet = live_stack("compliant")
    events = orch.subscribe()
    mission_id = orch.submit_mission(HOLD)
    record = orch.wait_terminal(mission_id, timeout=30.0)

    assert record is not None and record.terminal_state == COMPLETED
    assert record.source == SOURCE_OPERATOR
    assert record.hybrid_success and record.strict_success
    assert len(record.retrieved_rule_ids) == 3
    assert record.plan is not None and len(record.plan.actions) == 4
    assert record.pre_verdict.ok and record.post_verdict.ok
    assert record.post_verdict.deterministic_concur is True
    assert record.safeguard_report.passed
    # the east gate starts uncovered; the covered three must be recorded
    assert record.start_covered_gates == ["FRAME_NorthGate", "FRAME_SouthGate",
                                          "FRAME_WestGate"]
    for entry in record.dispatch_log:
        assert entry.sent_time <= entry.ack_time <= entry.complete_time

    # stage events arrive in pipeline order, then the terminal event
    seen = []
    while len(seen) < len(PIPELINE_STAGES):
        ev = events.get(timeout=5.0)
        if ev.get("kind") == "stage" and ev["mission_id"] == mission_id:
            seen.append(ev["stage"])
    assert tuple(seen) == PIPELINE_STAGES
    terminal = drain(events, want="terminal", mission_id=mission_id, timeout=5.0)
    assert terminal["terminal_state"] == COMPLETED

    # timing components account for the wall-clock total
    assert record.latency.consistent()
    assert record.latency.total_ms > 0
    assert record.latency.dispatch_ms <= record.latency.total_ms

    # both persistence logs captured the run
    lines = orch.config.missions_log.read_text().splitlines()
    assert len(lines) == 1
    stored = json.loads(lines[0])
    assert stored["id"] == mission_id
    assert stored["terminal_state"] == COMPLETED
    telemetry = orch.config.telemetry_log.read_text().splitlines()
    assert telemetry
    first = json.loads(telemetry[0])
    assert {"ts", "version", "name", "frame", "battery"} <= set(first)

    # serialized record survives a JSON round trip
    assert json.loads(json.dumps(record.to_dict()))["id"] == mission_id


def test_missions_run_fifo_in_submit_order(live_stack):
    orch, fleet = live_stack("compliant")
    events = orch.subscribe()
    first = orch.submit_mission(HOLD)
    second = orch.submit_mission(MOVE_EAST)

    submitted_second = drain(events, want="queue", mission_id=second)
    assert submitted_second["event"] == "submitted"
    assert submitted_second["position"] == 1  # queued behind the active mission

    r1 = orch.wait_terminal(first, timeout=30.0)
    r2 = orch.wait_terminal(second, timeout=30.0)
    assert r1.terminal_state == COMPLETED and r2.terminal_state == COMPLETED
    assert r1.finished_at <= r2.started_at


def test_device_event_spawns_queued_mission(live_stack):
    orch, fleet = live_stack("queue_demo")
    events = orch.subscribe()
    operator_id = orch.submit_mission(MOVE_EAST)
    # lands on the control queue strictly after the submit above
    emitter = fleet.inject_event("low_battery", "FRAME_SouthGate")
    assert emitter == "FRAME_Ugv_T01"

    device_ev = drain(events, want="device_event")
    assert device_ev["event"] == "low_battery"
    event_id = drain(events, want="queue")["mission_id"]
    if event_id == operator_id:  # first queue event may be the operator submit
        while event_id == operator_id:
            event_id = drain(events, want="queue")["mission_id"]

    r1 = orch.wait_terminal(operator_id, timeout=30.0)
    r2 = orch.wait_terminal(event_id, timeout=30.0)
    assert r1.terminal_state == COMPLETED
    assert r2.terminal_state == COMPLETED
    assert r2.source == SOURCE_DEVICE
    assert r2.command_text == "Low battery alert from FRAME_Ugv_T01 at FRAME_SouthGate."
    assert r1.finished_at <= r2.started_at  # queued, not interleaved


def test_unsafe_plan_rejected_before_dispatch(live_stack):
    orch, fleet = live_stack("all_east")
    mission_id = orch.submit_mission(ALL_EAST)
    record = orch.wait_terminal(mission_id, timeout=30.0)

    assert record.terminal_state == REJECTED_SAFEGUARD
    assert record.dispatch_log == []  # nothing was ever sent to a device
    assert record.pre_verdict is None  # rejected before the judge
    assert not record.hybrid_success and not record.strict_success
    rule_ids = {v.rule_id for v in record.safeguard_report.violations}
    assert "WF-03" in rule_ids  # uncovers guarded gates
    assert "WF-06" in rule_ids  # whole-fleet single-destination redeploy
    for violation in record.safeguard_report.violations:
        assert violation.message  # each violation cites its rule


def test_unknown_references_rejected(live_stack, tmp_path):
    plan = {"actions": [
        {"agent": "FRAME_Ghost", "command": "move_to FRAME_NorthGate"},
        {"agent": "FRAME_Drone_T01", "command": "move_to FRAME_Nowhere"},
    ], "reason": "made-up targets"}
    script = tmp_path / "ghost.json"
    script.write_text(json.dumps([{"match": "*", "response": json.dumps(plan)}]))

    orch, fleet = live_stack(str(script))
    mission_id = orch.submit_mission("Investigate the anomaly.")
    record = orch.wait_terminal(mission_id, timeout=30.0)

    assert record.terminal_state == REJECTED_SAFEGUARD
    assert len(record.reference_errors) == 2
    rule_ids = sorted(v.rule_id for v in record.safeguard_report.violations)
    assert rule_ids == ["CAP-06", "WF-08"]  # unknown frame / unknown agent
    assert record.dispatch_log == []


def test_disconnect_mid_flight_fails_execution(live_stack):
    # realtime + uniformly fast assets: the flight lasts ~2 s of wall clock,
    # long enough to sever the link while the drone is in transit
    orch, fleet = live_stack("kill_uav", world=fast_world(), realtime=True,
                             action_deadline_s=30.0)
    events = orch.subscribe()
    mission_id = orch.submit_mission(MOVE_EAST)
    while True:
        ev = events.get(timeout=30.0)
        if (ev.get("kind") == "telemetry" and ev["name"] == "FRAME_Drone_T02"
                and ev["frame"] == "in_transit"):
            fleet.kill("FRAME_Drone_T02")
            break

    record = orch.wait_terminal(mission_id, timeout=30.0)
    assert record.terminal_state == FAILED_EXECUTION
    assert not record.hybrid_success and not record.strict_success
    # the scripted judge swears the drone arrived; telemetry says otherwise
    assert record.post_verdict is not None
    assert not record.post_verdict.ok
    assert record.post_verdict.deterministic_concur is False
    by_agent = {e.agent: e for e in record.dispatch_log}
    assert by_agent["FRAME_Drone_T02"].complete_time is None
    assert by_agent["FRAME_Robot_T01"].complete_time is not None
    gone = drain(events, want="device_gone", timeout=5.0)
    assert gone["name"] == "FRAME_Drone_T02"
    snap = orch.state_dict()["snapshot"]
    assert snap["assets"]["FRAME_Drone_T02"]["status"] == "unavailable"


def test_mission_without_fleet_fails_execution(tmp_path):
    cfg = OrchestratorConfig(device_port=0, api_port=0, log_dir=str(tmp_path),
                             backend=BackendConfig(kind="scripted", script_path="compliant"))
    backend = make_backend(cfg.backend)
    orch = Orchestrator(cfg, backend=backend, judge_backend=backend)
    orch.start()
    try:
        record = orch.wait_terminal(orch.submit_mission(HOLD), timeout=10.0)
        assert record.terminal_state == FAILED_EXECUTION
        assert record.error == "no registered assets"
        assert record.start_covered_gates == []
    finally:
        orch.stop()


def test_submit_validation_and_unknown_lookup(live_stack):
    orch, fleet = live_stack("compliant")
    with pytest.raises(ValueError):
        orch.submit_mission("   ")
    assert orch.get_record("no-such-mission") is None
    assert orch.wait_terminal("no-such-mission", timeout=0.1) is None


def test_state_dict_shape(live_stack):
    orch, fleet = live_stack("compliant")
    state = orch.state_dict()
    assert set(state) == {"snapshot", "active_mission", "queue", "connected_devices"}
    assert state["active_mission"] is None
    assert state["queue"] == []
    assert state["connected_devices"] == sorted(n for n, _, _ in DEFAULT_FLEET)
    assets = state["snapshot"]["assets"]
    assert set(assets) == set(state["connected_devices"])
    assert assets["FRAME_Drone_T01"]["frame"] == "FRAME_WestGate"
    assert assets["FRAME_Drone_T01"]["battery"] <= 100.0


def test_duplicate_register_replaces_connection(tmp_path):
    import socket as socketlib
    from fieldops.protocol import encode_message

    cfg = OrchestratorConfig(device_port=0, api_port=0, log_dir=str(tmp_path),
                             backend=BackendConfig(kind="scripted", script_path="compliant"))
    backend = make_backend(cfg.backend)
    orch = Orchestrator(cfg, backend=backend, judge_backend=backend)
    orch.start()
    events = orch.subscribe()

    def register(sock, frame, seq):
        sock.sendall(encode_message({"type": "register", "seq": seq,
                                     "name": "FRAME_Drone_T01", "kind": "uav",
                                     "frame": frame, "battery": 55.0}))
        return drain(events, want="register", timeout=5.0)

    try:
        old = socketlib.create_connection(("127.0.0.1", orch.device_port), timeout=5.0)
        assert register(old, "FRAME_WestGate", 0)["frame"] == "FRAME_WestGate"
        new = socketlib.create_connection(("127.0.0.1", orch.device_port), timeout=5.0)
        assert register(new, "FRAME_EastGate", 0)["frame"] == "FRAME_EastGate"

        state = orch.state_dict()
        assert state["connected_devices"] == ["FRAME_Drone_T01"]
        assert state["snapshot"]["assets"]["FRAME_Drone_T01"]["frame"] == "FRAME_EastGate"
        # the superseded connection is closed from the orchestrator side
        old.settimeout(5.0)
        assert old.recv(1) == b""
        new.close()
        old.close()
    finally:
        orch.stop()


def test_event_mission_text_templates():
    assert (event_mission_text("low_battery", "FRAME_Ugv_T01", "FRAME_SouthGate")
            == "Low battery alert from FRAME_Ugv_T01 at FRAME_SouthGate.")
    assert (event_mission_text("unknown_vehicle", "FRAME_Drone_T01", "FRAME_WestGate")
            == "Unknown vehicle approaching West Gate.")
    assert (event_mission_text("resolved", "FRAME_Drone_T01", "FRAME_WestGate")
            == "The situation at the west gate is resolved. Resume normal checkpoint security.")
