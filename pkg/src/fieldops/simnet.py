"""Deterministic simulated fleet: gates, checkpoint, and four assets that
connect to the orchestrator as ordinary devices over the wire protocol.

The world advances on discrete ticks. Kinematics are straight-line at fixed
per-kind speeds, battery drains per tick, and non-movement actions finish
after a fixed dwell. All state mutation happens on the tick path (or under
the same lock), so a fixed seed and command sequence reproduce bit-identical
telemetry.
"""

from __future__ import annotations

import json
import math
import socket
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .config import DEFAULT_FRAMES
from .errors import FieldopsError
from .knowledge import IN_TRANSIT
from .protocol import (
    EVENT_KINDS,
    LineReader,
    MSG_COMMAND,
    SeqCounter,
    decode_line,
    encode_message,
)

TICK_INTERVAL_S = 0.1
MOVE_DRAIN_PCT = 0.05   # battery % per tick while moving
IDLE_DRAIN_PCT = 0.01   # battery % per tick otherwise
LOW_BATTERY_EVENT_PCT = 15.0
DWELL_TICKS = 3         # observe / issue_warning / block / hold duration

SPEEDS_M_S = {"uav": 5.0, "robot": 2.0, "ugv": 3.0}

BASE_FRAME = "FRAME_Checkpoint"

DEFAULT_FLEET = (
    ("FRAME_Drone_T01", "uav", "FRAME_WestGate"),
    ("FRAME_Drone_T02", "uav", "FRAME_NorthGate"),
    ("FRAME_Robot_T01", "robot", "FRAME_Checkpoint"),
    ("FRAME_Ugv_T01", "ugv", "FRAME_SouthGate"),
)

# Wall-clock pacing when nothing is moving and the world is not in realtime
# mode: keeps idle battery drain negligible instead of spinning the CPU.
_IDLE_WALL_SLEEP_S = 0.05


@dataclass
class SimAsset:
    name: str
    kind: str
    position: tuple[float, float]
    speed: float
    battery_pct: float = 100.0
    status: str = "active"
    frame: Optional[str] = None          # frame name when parked, None in transit
    target_frame: Optional[str] = None
    pending: Optional[tuple] = None      # (mission_id, action_index, verb)
    dwell_remaining: int = 0
    low_battery_armed: bool = True
    alive: bool = True


class WorldModel:
    """Pure simulation state; no sockets. Fleet drives it and ships messages."""

    def __init__(self, frames: Optional[dict] = None, tick_interval: float = TICK_INTERVAL_S,
                 seed: int = 0, base_frame: str = BASE_FRAME):
        self.frames = dict(frames) if frames is not None else dict(DEFAULT_FRAMES)
        self.tick_interval = tick_interval
        self.seed = seed
        self.base_frame = base_frame
        self.assets: dict[str, SimAsset] = {}
        self.tick_count = 0

    def add_asset(self, name: str, kind: str, start_frame: str,
                  speed: Optional[float] = None) -> SimAsset:
        if name in self.assets:
            raise FieldopsError(f"duplicate asset name: {name}")
        if kind not in SPEEDS_M_S:
            raise FieldopsError(f"unknown asset kind: {kind}")
        if start_frame not in self.frames:
            raise FieldopsError(f"unknown start frame: {start_frame}")
        asset = SimAsset(name=name, kind=kind, position=self.frames[start_frame],
                         speed=speed if speed is not None else SPEEDS_M_S[kind],
                         frame=start_frame)
        self.assets[name] = asset
        return asset

    def kill(self, name: str) -> None:
        self.assets[name].alive = False

    def busy(self) -> bool:
        return any(a.alive and (a.target_frame is not None or a.dwell_remaining > 0)
                   for a in self.assets.values())

    def apply_command(self, name: str, mission_id: str, action_index: int,
                      verb: str, target: Optional[str]) -> None:
        asset = self.assets.get(name)
        if asset is None or not asset.alive:
            return
        if verb in ("move_to", "return_to_base"):
            frame = target if verb == "move_to" else self.base_frame
            if frame not in self.frames:
                return  # unexecutable command: never completes
            asset.target_frame = frame
            asset.frame = None if self.frames[frame] != asset.position else asset.frame
            asset.status = "moving"
            asset.dwell_remaining = 0
        else:
            asset.dwell_remaining = DWELL_TICKS
            if verb == "observe":
                asset.status = "observing_vehicle"
        asset.pending = (mission_id, action_index, verb)

    def nearest_asset(self, frame: str, prefer_kind: Optional[str] = None) -> str:
        if frame not in self.frames:
            raise FieldopsError(f"unknown frame: {frame}")
        fx, fy = self.frames[frame]
        alive = [a for a in self.assets.values() if a.alive]
        if not alive:
            raise FieldopsError("no alive assets")
        preferred = [a for a in alive if a.kind == prefer_kind] if prefer_kind else []
        pool = preferred or alive
        return min(pool, key=lambda a: (math.hypot(a.position[0] - fx,
                                                   a.position[1] - fy), a.name)).name

    def nearest_frame(self, position: tuple[float, float]) -> str:
        return min(self.frames,
                   key=lambda f: (math.hypot(self.frames[f][0] - position[0],
                                             self.frames[f][1] - position[1]), f))

    def inject_event(self, kind: str, frame: str) -> tuple[str, dict]:
        """Returns (emitting asset name, event message sans seq)."""
        if kind not in EVENT_KINDS:
            raise FieldopsError(f"unknown event kind: {kind}")
        name = self.nearest_asset(frame, prefer_kind="uav" if kind == "unknown_vehicle" else None)
        return name, {"type": "event", "name": name, "event": kind, "frame": frame}

    def tick(self) -> list[tuple[str, dict]]:
        """Advance one tick; returns (asset name, wire message sans seq) in order.

        Per asset the order is telemetry first, then any completion, then any
        battery event — so an arrival's telemetry always precedes its
        complete message on the device's connection.
        """
        self.tick_count += 1
        out: list[tuple[str, dict]] = []
        for name in sorted(self.assets):
            asset = self.assets[name]
            if not asset.alive:
                continue
            completed: Optional[tuple] = None
            moved = False

            if asset.target_frame is not None:
                tx, ty = self.frames[asset.target_frame]
                dx, dy = tx - asset.position[0], ty - asset.position[1]
                dist = math.hypot(dx, dy)
                step = asset.speed * self.tick_interval
                moved = True
                if dist <= step + 1e-12:
                    asset.position = (tx, ty)
                    asset.frame = asset.target_frame
                    asset.target_frame = None
                    asset.status = "active"
                    completed = asset.pending
                    asset.pending = None
                    if completed and completed[2] == "return_to_base":
                        asset.battery_pct = 100.0  # recharged at base
                else:
                    asset.position = (asset.position[0] + step * dx / dist,
                                      asset.position[1] + step * dy / dist)
                    asset.frame = None
            elif asset.dwell_remaining > 0:
                asset.dwell_remaining -= 1
                if asset.dwell_remaining == 0 and asset.pending is not None:
                    completed = asset.pending
                    asset.pending = None

            drain = MOVE_DRAIN_PCT if moved else IDLE_DRAIN_PCT
            asset.battery_pct = max(0.0, asset.battery_pct - drain)

            out.append((name, {
                "type": "telemetry", "name": name,
                "frame": asset.frame if asset.frame is not None else IN_TRANSIT,
                "x": round(asset.position[0], 6), "y": round(asset.position[1], 6),
                "status": asset.status, "battery": round(asset.battery_pct, 6),
            }))
            if completed is not None:
                out.append((name, {"type": "complete", "mission_id": completed[0],
                                   "action_index": completed[1]}))
            if asset.battery_pct < LOW_BATTERY_EVENT_PCT:
                if asset.low_battery_armed:
                    asset.low_battery_armed = False
                    at = asset.frame or self.nearest_frame(asset.position)
                    out.append((name, {"type": "event", "name": name,
                                       "event": "low_battery", "frame": at}))
            else:
                asset.low_battery_armed = True
        return out


def default_world(seed: int = 0, frames: Optional[dict] = None) -> WorldModel:
    world = WorldModel(frames=frames, seed=seed)
    for name, kind, start in DEFAULT_FLEET:
        world.add_asset(name, kind, start)
    return world


def world_from_file(path: str | Path, seed: int = 0) -> WorldModel:
    """Fleet config: {"frames": {name: [x,y]}?, "assets": [{name,kind,frame,speed?}]}"""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    frames = None
    if "frames" in doc:
        frames = {str(k): (float(v[0]), float(v[1])) for k, v in doc["frames"].items()}
    world = WorldModel(frames=frames, seed=seed)
    entries = doc.get("assets")
    if not isinstance(entries, list) or not entries:
        raise FieldopsError(f"{path}: fleet file needs a non-empty 'assets' array")
    for entry in entries:
        world.add_asset(entry["name"], entry["kind"], entry["frame"],
                        speed=entry.get("speed"))
    return world


class Fleet:
    """Network shell around a WorldModel: one device connection per asset."""

    def __init__(self, world: WorldModel, host: str, port: int, realtime: bool = False):
        self.world = world
        self.host = host
        self.port = port
        self.realtime = realtime
        self._lock = threading.RLock()
        self._socks: dict[str, socket.socket] = {}
        self._seqs: dict[str, SeqCounter] = {}
        self._wlocks: dict[str, threading.Lock] = {}
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def start(self) -> None:
        for name, asset in sorted(self.world.assets.items()):
            sock = socket.create_connection((self.host, self.port), timeout=10.0)
            sock.settimeout(None)
            self._socks[name] = sock
            self._seqs[name] = SeqCounter()
            self._wlocks[name] = threading.Lock()
            self._send(name, {"type": "register", "name": name, "kind": asset.kind,
                              "frame": asset.frame, "battery": asset.battery_pct})
            t = threading.Thread(target=self._reader_loop, args=(name,),
                                 name=f"sim-{name}", daemon=True)
            t.start()
            self._threads.append(t)
        ticker = threading.Thread(target=self._tick_loop, name="sim-tick", daemon=True)
        ticker.start()
        self._threads.append(ticker)

    def stop(self) -> None:
        self._stop.set()
        for sock in self._socks.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                sock.close()
            except OSError:
                pass
        for t in self._threads:
            t.join(timeout=5.0)

    def kill(self, name: str) -> None:
        """Hard failure of one asset: it stops ticking and drops its link."""
        with self._lock:
            self.world.kill(name)
        sock = self._socks.get(name)
        if sock is not None:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()

    def inject_event(self, kind: str, frame: str) -> str:
        with self._lock:
            name, msg = self.world.inject_event(kind, frame)
        self._send(name, msg)
        return name

    def _send(self, name: str, msg: dict) -> None:
        sock = self._socks.get(name)
        if sock is None:
            return
        msg = dict(msg)
        msg["seq"] = self._seqs[name].take()
        try:
            with self._wlocks[name]:
                sock.sendall(encode_message(msg))
        except OSError:
            pass  # dropped link: orchestrator sees the disconnect on its side

    def _reader_loop(self, name: str) -> None:
        sock = self._socks[name]
        reader = LineReader()
        while not self._stop.is_set():
            try:
                data = sock.recv(65536)
            except OSError:
                return
            if not data:
                return
            for line in reader.feed(data):
                try:
                    msg = decode_line(line)
                except Exception:
                    continue
                if msg["type"] != MSG_COMMAND:
                    continue
                # acknowledge receipt, then hand the task to the world
                self._send(name, {"type": "ack", "mission_id": msg["mission_id"],
                                  "action_index": msg["action_index"]})
                with self._lock:
                    self.world.apply_command(name, msg["mission_id"], msg["action_index"],
                                             msg["verb"], msg["target"])

    def _tick_loop(self) -> None:
        while not self._stop.is_set():
            with self._lock:
                messages = self.world.tick()
                busy = self.world.busy()
            for name, msg in messages:
                if self.world.assets[name].alive:
                    self._send(name, msg)
            if self.realtime:
                time.sleep(self.world.tick_interval)
            elif not busy:
                time.sleep(_IDLE_WALL_SLEEP_S)


def spawn_fleet(host: str, port: int, *, world: Optional[WorldModel] = None,
                realtime: bool = False, seed: int = 0) -> Fleet:
    """Connect a default (or provided) fleet to a running orchestrator."""
    fleet = Fleet(world or default_world(seed=seed), host, port, realtime=realtime)
    fleet.start()
    return fleet


DEFAULT_CONTROL_PORT = 8766


class FleetControl:
    """Local line-JSON socket so a second process can poke a running fleet.

    One request per connection: {"op": "inject", "kind": ..., "frame": ...}
    answered with {"ok": true, "name": <emitting asset>} or {"ok": false,
    "error": ...}.
    """

    def __init__(self, fleet: Fleet, host: str = "127.0.0.1",
                 port: int = DEFAULT_CONTROL_PORT):
        self.fleet = fleet
        self._server = socket.create_server((host, port))
        self._server.settimeout(0.2)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, name="sim-control",
                                        daemon=True)

    @property
    def port(self) -> int:
        return self._server.getsockname()[1]

    def start(self) -> None:
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        self._server.close()
        self._thread.join(timeout=5.0)

    def _serve(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            with conn:
                try:
                    conn.settimeout(5.0)
                    line = conn.makefile("r", encoding="utf-8").readline()
                    req = json.loads(line)
                    if req.get("op") != "inject":
                        raise FieldopsError(f"unknown op: {req.get('op')!r}")
                    name = self.fleet.inject_event(req["kind"], req["frame"])
                    reply = {"ok": True, "name": name}
                except Exception as exc:
                    reply = {"ok": False, "error": str(exc)}
                try:
                    conn.sendall((json.dumps(reply) + "\n").encode("utf-8"))
                except OSError:
                    pass


def send_inject(kind: str, frame: str, host: str = "127.0.0.1",
                port: int = DEFAULT_CONTROL_PORT) -> str:
    """Client side of FleetControl; returns the emitting asset's name."""
    try:
        with socket.create_connection((host, port), timeout=5.0) as sock:
            sock.sendall((json.dumps({"op": "inject", "kind": kind, "frame": frame})
                          + "\n").encode("utf-8"))
            reply = json.loads(sock.makefile("r", encoding="utf-8").readline())
    except OSError as exc:
        raise FieldopsError(f"cannot reach fleet control at {host}:{port}: {exc}") from exc
    if not reply.get("ok"):
        raise FieldopsError(f"inject failed: {reply.get('error', 'no reply')}")
    return reply["name"]
