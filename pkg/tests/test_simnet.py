"""Simulated fleet: kinematics, battery model, events, and the control socket."""

import json

import pytest

from fieldops.errors import FieldopsError
from fieldops.simnet import (
    DEFAULT_FLEET,
    DWELL_TICKS,
    FleetControl,
    IDLE_DRAIN_PCT,
    LOW_BATTERY_EVENT_PCT,
    MOVE_DRAIN_PCT,
    SPEEDS_M_S,
    WorldModel,
    default_world,
    send_inject,
    world_from_file,
)

UAV = "FRAME_Drone_T01"  # starts at WestGate
ROBOT = "FRAME_Robot_T01"  # starts at Checkpoint
UGV = "FRAME_Ugv_T01"  # starts at SouthGate


def messages_of(world, name, n=1, types=None):
    out = []
    for _ in range(n):
        for who, msg in world.tick():
            if who == name and (types is None or msg["type"] in types):
                out.append(msg)
    return out


def test_default_world_layout():
    world = default_world()
    assert sorted(world.assets) == sorted(n for n, _, _ in DEFAULT_FLEET)
    for name, kind, frame in DEFAULT_FLEET:
        asset = world.assets[name]
        assert asset.kind == kind
        assert asset.frame == frame
        assert asset.position == world.frames[frame]
        assert asset.speed == SPEEDS_M_S[kind]
        assert asset.battery_pct == 100.0


def test_gate_run_takes_exact_tick_count():
    # 100 m at 5 m/s with 0.1 s ticks: step 0.5 m, arrival on tick 200
    world = default_world()
    world.apply_command(UAV, "m-1", 0, "move_to", "FRAME_Checkpoint")
    for tick in range(1, 300):
        msgs = [m for who, m in world.tick() if who == UAV]
        if any(m["type"] == "complete" for m in msgs):
            break
    assert tick == 200
    asset = world.assets[UAV]
    assert asset.position == world.frames["FRAME_Checkpoint"]  # exact snap
    assert asset.frame == "FRAME_Checkpoint"
    assert asset.target_frame is None


def test_transit_telemetry_and_completion_order():
    world = default_world()
    world.apply_command(UAV, "m-1", 0, "move_to", "FRAME_Checkpoint")
    first = [m for who, m in world.tick() if who == UAV]
    assert first[0]["type"] == "telemetry"
    assert first[0]["frame"] == "in_transit"
    assert first[0]["status"] == "moving"
    for _ in range(198):
        world.tick()
    last = [m for who, m in world.tick() if who == UAV]
    assert [m["type"] for m in last] == ["telemetry", "complete"]
    assert last[0]["frame"] == "FRAME_Checkpoint"
    assert last[0]["status"] == "active"
    assert last[1] == {"type": "complete", "mission_id": "m-1", "action_index": 0}


def test_battery_drain_rates():
    world = default_world()
    world.apply_command(UAV, "m-1", 0, "move_to", "FRAME_Checkpoint")
    for _ in range(100):
        world.tick()
    mover = world.assets[UAV].battery_pct
    idler = world.assets[ROBOT].battery_pct
    assert mover == pytest.approx(100.0 - 100 * MOVE_DRAIN_PCT, abs=1e-9)
    assert idler == pytest.approx(100.0 - 100 * IDLE_DRAIN_PCT, abs=1e-9)
    assert MOVE_DRAIN_PCT > IDLE_DRAIN_PCT


def test_dwell_actions_complete_after_fixed_ticks():
    world = default_world()
    world.apply_command(ROBOT, "m-2", 1, "issue_warning", "FRAME_Checkpoint")
    for tick in range(1, DWELL_TICKS + 1):
        msgs = messages_of(world, ROBOT, types=("complete",))
        if msgs:
            break
    assert tick == DWELL_TICKS
    assert msgs[0]["action_index"] == 1


def test_observe_sets_status():
    world = default_world()
    world.apply_command(UAV, "m-3", 0, "observe", "FRAME_WestGate")
    msg = messages_of(world, UAV, types=("telemetry",))[0]
    assert msg["status"] == "observing_vehicle"


def test_unexecutable_move_never_completes():
    world = default_world()
    world.apply_command(UAV, "m-4", 0, "move_to", "FRAME_Nowhere")
    assert not world.busy()
    assert messages_of(world, UAV, n=5, types=("complete",)) == []


def test_return_to_base_recharges_on_arrival():
    world = default_world()
    world.assets[UAV].battery_pct = 40.0
    world.apply_command(UAV, "m-5", 0, "return_to_base", None)
    for _ in range(250):
        if messages_of(world, UAV, types=("complete",)):
            break
    assert world.assets[UAV].frame == "FRAME_Checkpoint"
    # recharged to full, minus the arrival tick's own drain
    assert world.assets[UAV].battery_pct == pytest.approx(100.0 - MOVE_DRAIN_PCT, abs=1e-9)


def test_low_battery_event_edge_triggered_with_rearm():
    world = default_world()
    asset = world.assets[UGV]
    asset.battery_pct = LOW_BATTERY_EVENT_PCT + 0.005
    events = messages_of(world, UGV, types=("event",))
    assert [e["event"] for e in events] == ["low_battery"]
    assert events[0]["frame"] == "FRAME_SouthGate"
    # stays below threshold: no repeat while disarmed
    assert messages_of(world, UGV, n=10, types=("event",)) == []
    # recover above threshold, then drop again: fires once more
    asset.battery_pct = LOW_BATTERY_EVENT_PCT + 5.0
    world.tick()
    asset.battery_pct = LOW_BATTERY_EVENT_PCT + 0.005
    events = messages_of(world, UGV, types=("event",))
    assert [e["event"] for e in events] == ["low_battery"]


def test_busy_reflects_outstanding_work():
    world = default_world()
    assert not world.busy()
    world.apply_command(ROBOT, "m-6", 0, "hold_position", None)
    assert world.busy()
    for _ in range(DWELL_TICKS):
        world.tick()
    assert not world.busy()


def test_killed_asset_stops_reporting():
    world = default_world()
    world.kill(UAV)
    assert messages_of(world, UAV, n=3) == []
    world.apply_command(UAV, "m-7", 0, "move_to", "FRAME_Checkpoint")
    assert not world.busy()


def test_identical_worlds_tick_identically():
    def run(seed):
        world = default_world(seed=seed)
        world.apply_command(UAV, "m-8", 0, "move_to", "FRAME_Checkpoint")
        world.apply_command(ROBOT, "m-8", 1, "observe", "FRAME_Checkpoint")
        return [msg for _ in range(250) for msg in world.tick()]

    assert run(1) == run(1)
    assert run(1) == run(2)  # the model itself is deterministic


# ------------------------------------------------------------------- events

def test_inject_event_validation():
    world = default_world()
    with pytest.raises(FieldopsError):
        world.inject_event("meteor_strike", "FRAME_NorthGate")
    with pytest.raises(FieldopsError):
        world.inject_event("low_battery", "FRAME_Nowhere")


def test_inject_unknown_vehicle_prefers_uav():
    world = default_world()
    # nearest asset to SouthGate is the ugv parked there, but sightings go
    # to an observer: the closest uav gets the event
    name, msg = world.inject_event("unknown_vehicle", "FRAME_SouthGate")
    assert name == UAV
    assert msg == {"type": "event", "name": UAV, "event": "unknown_vehicle",
                   "frame": "FRAME_SouthGate"}


def test_inject_low_battery_uses_nearest_asset():
    world = default_world()
    name, _ = world.inject_event("low_battery", "FRAME_SouthGate")
    assert name == UGV


def test_nearest_asset_tie_breaks_by_name():
    world = WorldModel()
    world.add_asset("B_unit", "uav", "FRAME_NorthGate")
    world.add_asset("A_unit", "uav", "FRAME_NorthGate")
    assert world.nearest_asset("FRAME_NorthGate") == "A_unit"


# ------------------------------------------------------------- construction

def test_add_asset_validation():
    world = WorldModel()
    world.add_asset("X", "uav", "FRAME_NorthGate")
    with pytest.raises(FieldopsError):
        world.add_asset("X", "uav", "FRAME_NorthGate")
    with pytest.raises(FieldopsError):
        world.add_asset("Y", "submarine", "FRAME_NorthGate")
    with pytest.raises(FieldopsError):
        world.add_asset("Z", "uav", "FRAME_Nowhere")


def test_world_from_file(tmp_path):
    doc = {
        "frames": {"FRAME_A": [0, 0], "FRAME_B": [10, 0]},
        "assets": [
            {"name": "Scout", "kind": "uav", "frame": "FRAME_A", "speed": 50.0},
            {"name": "Guard", "kind": "robot", "frame": "FRAME_B"},
        ],
    }
    path = tmp_path / "fleet.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    world = world_from_file(path)
    assert world.frames == {"FRAME_A": (0.0, 0.0), "FRAME_B": (10.0, 0.0)}
    assert world.assets["Scout"].speed == 50.0
    assert world.assets["Guard"].speed == SPEEDS_M_S["robot"]

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"assets": []}), encoding="utf-8")
    with pytest.raises(FieldopsError):
        world_from_file(bad)


# ------------------------------------------------------------ control socket

class FakeFleet:
    def __init__(self):
        self.calls = []

    def inject_event(self, kind, frame):
        self.calls.append((kind, frame))
        if frame == "FRAME_Nowhere":
            raise FieldopsError("unknown frame")
        return "FRAME_Drone_T01"


def test_control_socket_round_trip():
    fleet = FakeFleet()
    control = FleetControl(fleet, port=0)
    control.start()
    try:
        name = send_inject("low_battery", "FRAME_SouthGate", port=control.port)
        assert name == "FRAME_Drone_T01"
        assert fleet.calls == [("low_battery", "FRAME_SouthGate")]
        with pytest.raises(FieldopsError):
            send_inject("low_battery", "FRAME_Nowhere", port=control.port)
        # and the socket still serves after an error reply
        assert send_inject("resolved", "FRAME_SouthGate", port=control.port)
    finally:
        control.stop()


def test_control_socket_rejects_unknown_op():
    import socket as socketlib
    control = FleetControl(FakeFleet(), port=0)
    control.start()
    try:
        with socketlib.create_connection(("127.0.0.1", control.port), timeout=5.0) as sock:
            sock.sendall(b'{"op": "self_destruct"}\n')
            reply = json.loads(sock.makefile("r").readline())
        assert reply["ok"] is False
        assert "unknown op" in reply["error"]
    finally:
        control.stop()
