"""Newline-delimited JSON wire protocol spoken between field devices and the orchestrator.

Every message is one JSON object on one line, terminated by "\n".  All messages
carry a per-connection, per-direction monotonically increasing integer ``seq``
so either side can detect drops or reordering on a flaky link.

Message shapes (exact keys, plus "seq"):
  register   device->server  {"type","name","kind","frame","battery"}
  telemetry  device->server  {"type","name","frame","x","y","status","battery"}
  command    server->device  {"type","mission_id","action_index","verb","target"}
  ack        device->server  {"type","mission_id","action_index"}
  complete   device->server  {"type","mission_id","action_index"}
  event      device->server  {"type","name","event","frame"}
"""

from __future__ import annotations

import json
import threading
from typing import Optional

from .errors import FieldopsError


class ProtocolError(FieldopsError):
    """Raised when a wire message cannot be decoded or fails validation."""


MSG_REGISTER = "register"
MSG_TELEMETRY = "telemetry"
MSG_ACK = "ack"
MSG_COMPLETE = "complete"
MSG_EVENT = "event"
MSG_COMMAND = "command"

MESSAGE_TYPES = (MSG_REGISTER, MSG_TELEMETRY, MSG_ACK, MSG_COMPLETE, MSG_EVENT, MSG_COMMAND)

EVENT_KINDS = ("low_battery", "unknown_vehicle", "resolved")

# Required fields per message type, beyond "type" and "seq".
_REQUIRED: dict[str, tuple[str, ...]] = {
    MSG_REGISTER: ("name", "kind", "frame", "battery"),
    MSG_TELEMETRY: ("name", "frame", "x", "y", "status", "battery"),
    MSG_ACK: ("mission_id", "action_index"),
    MSG_COMPLETE: ("mission_id", "action_index"),
    MSG_EVENT: ("name", "event", "frame"),
    MSG_COMMAND: ("mission_id", "action_index", "verb", "target"),
}

_NUMERIC_FIELDS = ("x", "y", "battery")


def encode_message(msg: dict) -> bytes:
    """Serialize one message to its wire form (UTF-8 JSON + newline)."""
    return (json.dumps(msg, separators=(",", ":"), sort_keys=True) + "\n").encode("utf-8")


def decode_line(line: str) -> dict:
    """Parse and validate a single wire line.  Raises ProtocolError on any defect."""
    text = line.strip()
    if not text:
        raise ProtocolError("empty wire line")
    try:
        msg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"wire line is not valid JSON: {exc}") from exc
    if not isinstance(msg, dict):
        raise ProtocolError("wire message must be a JSON object")

    mtype = msg.get("type")
    if mtype not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type: {mtype!r}")

    seq = msg.get("seq")
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
        raise ProtocolError(f"{mtype}: seq must be a non-negative integer")

    missing = [f for f in _REQUIRED[mtype] if f not in msg]
    if missing:
        raise ProtocolError(f"{mtype}: missing fields {missing}")

    for f in _NUMERIC_FIELDS:
        if f in _REQUIRED[mtype] and not isinstance(msg[f], (int, float)):
            raise ProtocolError(f"{mtype}: field {f!r} must be numeric")
    if "action_index" in _REQUIRED[mtype]:
        idx = msg["action_index"]
        if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
            raise ProtocolError(f"{mtype}: action_index must be a non-negative integer")
    if mtype == MSG_EVENT and msg["event"] not in EVENT_KINDS:
        raise ProtocolError(f"event: unknown event kind {msg['event']!r}")

    return msg


# -- message constructors (centralize the exact key sets) --------------------

def register_msg(seq: int, name: str, kind: str, frame: str, battery: float) -> dict:
    return {"type": MSG_REGISTER, "seq": seq, "name": name, "kind": kind,
            "frame": frame, "battery": battery}


def telemetry_msg(seq: int, name: str, frame: str, x: float, y: float,
                  status: str, battery: float) -> dict:
    return {"type": MSG_TELEMETRY, "seq": seq, "name": name, "frame": frame,
            "x": x, "y": y, "status": status, "battery": battery}


def command_msg(seq: int, mission_id: str, action_index: int, verb: str,
                target: Optional[str]) -> dict:
    return {"type": MSG_COMMAND, "seq": seq, "mission_id": mission_id,
            "action_index": action_index, "verb": verb, "target": target}


def ack_msg(seq: int, mission_id: str, action_index: int) -> dict:
    return {"type": MSG_ACK, "seq": seq, "mission_id": mission_id,
            "action_index": action_index}


def complete_msg(seq: int, mission_id: str, action_index: int) -> dict:
    return {"type": MSG_COMPLETE, "seq": seq, "mission_id": mission_id,
            "action_index": action_index}


def event_msg(seq: int, name: str, event: str, frame: str) -> dict:
    return {"type": MSG_EVENT, "seq": seq, "name": name, "event": event, "frame": frame}


class SeqCounter:
    """Thread-safe outbound sequence numbers, one per connection direction."""

    def __init__(self) -> None:
        self._next = 0
        self._lock = threading.Lock()

    def take(self) -> int:
        with self._lock:
            value = self._next
            self._next += 1
            return value


class SeqValidator:
    """Checks inbound seq values are strictly increasing for one peer."""

    def __init__(self) -> None:
        self._last: Optional[int] = None

    def check(self, seq: int) -> None:
        if self._last is not None and seq <= self._last:
            raise ProtocolError(f"seq regression: got {seq} after {self._last}")
        self._last = seq


class LineReader:
    """Accumulates raw socket bytes and yields complete wire lines."""

    def __init__(self) -> None:
        self._buf = b""

    def feed(self, data: bytes) -> list[str]:
        self._buf += data
        lines: list[str] = []
        while b"\n" in self._buf:
            raw, self._buf = self._buf.split(b"\n", 1)
            if raw.strip():
                lines.append(raw.decode("utf-8"))
        return lines
