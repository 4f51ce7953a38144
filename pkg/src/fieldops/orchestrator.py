"""Edge command-and-control core.

One control-loop thread owns all mission, queue, and connection state; device
socket readers, the operator API, and the per-mission pipeline workers talk
to it exclusively through an internal message queue. Telemetry lands in the
knowledge base through its single-writer path (the control loop), so pipeline
workers can snapshot a consistent world at any moment.

Mission lifecycle: submit -> FIFO queue -> retrieval -> decision inference ->
plan parse/reference checks -> deterministic safeguards -> pre-execution
judge -> dispatch over device links -> post-execution judge -> terminal state.
Every failure short-circuits to a terminal state; no mission is ever lost.
"""

from __future__ import annotations

import json
import queue
import socket
import threading
import time
from collections import deque
from dataclasses import replace
from typing import Optional

from .config import OrchestratorConfig
from .errors import GatewayError, PlanParseError, UnknownAssetError
from .evaluation import strict_evaluate
from .gateway import make_backend
from .judging import deterministic_post_check, judge_post, judge_pre
from .knowledge import AssetState, KnowledgeBase, RuleSet, coverage, default_rules
from .plans import (
    SafeguardReport,
    Violation,
    check_safeguards,
    parse_plan,
    validate_references,
)
from .prompts import DECISION_SYSTEM, build_decision_prompt
from .protocol import (
    LineReader,
    MSG_ACK,
    MSG_COMMAND,
    MSG_COMPLETE,
    MSG_EVENT,
    MSG_REGISTER,
    MSG_TELEMETRY,
    ProtocolError,
    SeqCounter,
    SeqValidator,
    decode_line,
    encode_message,
)
from .records import (
    COMPLETED,
    FAILED_BACKEND,
    FAILED_EXECUTION,
    REJECTED_JUDGE,
    REJECTED_SAFEGUARD,
    SOURCE_DEVICE,
    SOURCE_OPERATOR,
    DispatchEntry,
    LatencyBreakdown,
    MissionRecord,
)
from .retrieval import retrieve_top_k
from .util import humanize_frame, new_ulid, now_ms, one_line, perf_ms

# Canonical mission texts for device-originated events, so retrieval treats
# device and operator missions identically.
EVENT_MISSION_TEMPLATES = {
    "low_battery": "Low battery alert from {name} at {frame}.",
    "unknown_vehicle": "Unknown vehicle approaching {gate}.",
    "resolved": "The situation at the {gate_lower} is resolved. Resume normal checkpoint security.",
}

PIPELINE_STAGES = ("retrieval", "inference", "safeguard", "judge_pre", "dispatch", "judge_post")


def event_mission_text(kind: str, name: str, frame: str) -> str:
    template = EVENT_MISSION_TEMPLATES[kind]
    gate = humanize_frame(frame)
    return template.format(name=name, frame=frame, gate=gate, gate_lower=gate.lower())


class DeviceConnection:
    """One registered device socket: locked writes, outbound seq numbering."""

    def __init__(self, sock: socket.socket, peer: str):
        self.sock = sock
        self.peer = peer
        self.name: Optional[str] = None
        self.kind: Optional[str] = None
        self._seq = SeqCounter()
        self._wlock = threading.Lock()

    def send(self, msg: dict) -> None:
        msg = dict(msg)
        msg["seq"] = self._seq.take()
        with self._wlock:
            self.sock.sendall(encode_message(msg))

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class _DispatchTracker:
    """Ack/complete bookkeeping for the single in-flight dispatch."""

    def __init__(self, mission_id: str, plan):
        self.mission_id = mission_id
        self.actions = plan.actions
        self.entries = [
            DispatchEntry(agent=a.agent, command=a.command.as_string(), action_index=i)
            for i, a in enumerate(plan.actions)
        ]
        self._by_index = {e.action_index: e for e in self.entries}
        self._given_up: set[int] = set()
        self._cond = threading.Condition()
        self._sent = threading.Event()
        self._closed = False

    # -- control-loop side ----------------------------------------------
    def mark_sent(self, index: int, ts: int) -> None:
        with self._cond:
            if not self._closed:
                self._by_index[index].sent_time = ts

    def mark_unreachable(self, index: int) -> None:
        with self._cond:
            if not self._closed:
                self._given_up.add(index)
                self._cond.notify_all()

    def all_sent(self) -> None:
        self._sent.set()

    def mark_ack(self, index: int, ts: int) -> None:
        with self._cond:
            entry = self._by_index.get(index)
            if entry is not None and not self._closed and entry.ack_time is None:
                entry.ack_time = ts

    def mark_complete(self, index: int, ts: int) -> None:
        with self._cond:
            entry = self._by_index.get(index)
            if entry is not None and not self._closed and entry.complete_time is None:
                entry.complete_time = ts
                self._cond.notify_all()

    def agent_gone(self, agent: str) -> None:
        """Disconnected device: its unfinished actions become incomplete now."""
        with self._cond:
            if self._closed:
                return
            for entry in self.entries:
                if entry.agent == agent and entry.complete_time is None:
                    self._given_up.add(entry.action_index)
            self._cond.notify_all()

    # -- pipeline-worker side --------------------------------------------
    def wait_sent(self, timeout: float) -> None:
        self._sent.wait(timeout)

    def _unresolved(self) -> list[DispatchEntry]:
        return [e for e in self.entries
                if e.complete_time is None and e.action_index not in self._given_up]

    def wait_all(self, deadline_s: float) -> None:
        """Block until every action completed, expired, or lost its device."""
        deadline_ms = deadline_s * 1000.0
        with self._cond:
            while True:
                pending = self._unresolved()
                if not pending:
                    return
                now = now_ms()
                expired = [e for e in pending
                           if e.sent_time is not None and now - e.sent_time >= deadline_ms]
                if expired:
                    for entry in expired:
                        self._given_up.add(entry.action_index)
                    continue
                waits = [e.sent_time + deadline_ms - now for e in pending
                         if e.sent_time is not None]
                timeout = (min(waits) / 1000.0) if waits else 0.5
                self._cond.wait(timeout=max(timeout, 0.005))

    def close(self) -> None:
        with self._cond:
            self._closed = True


class Orchestrator:
    """The mission pipeline host. start() spins the device server and control
    loop; submit_mission() is thread-safe and returns immediately."""

    def __init__(self, config: Optional[OrchestratorConfig] = None,
                 rules: Optional[RuleSet] = None,
                 backend=None, judge_backend=None):
        self.config = config or OrchestratorConfig()
        self.rules = rules if rules is not None else default_rules()
        self.kb = KnowledgeBase(self.rules)
        self.backend = backend if backend is not None else make_backend(self.config.backend)
        if judge_backend is not None:
            self.judge_backend = judge_backend
        elif self.config.judge_backend is not None:
            self.judge_backend = make_backend(self.config.judge_backend)
        else:
            self.judge_backend = self.backend

        self._ctrl: queue.Queue = queue.Queue()
        self._rlock = threading.Lock()
        self._records: dict[str, MissionRecord] = {}
        self._terminal_events: dict[str, threading.Event] = {}
        self._qlock = threading.Lock()
        self._queue: deque[str] = deque()
        self._active: Optional[str] = None
        self._connections: dict[str, DeviceConnection] = {}
        self._tracker: Optional[_DispatchTracker] = None
        self._subs: list[queue.Queue] = []
        self._sublock = threading.Lock()
        self._stop = threading.Event()
        self._server_sock: Optional[socket.socket] = None
        self._threads: list[threading.Thread] = []
        self._missions_fh = None
        self._telemetry_fh = None
        self._loglock = threading.Lock()
        self.device_port: Optional[int] = None

    # ------------------------------------------------------------------ setup

    def start(self) -> None:
        self.config.missions_log.parent.mkdir(parents=True, exist_ok=True)
        self._missions_fh = open(self.config.missions_log, "a", encoding="utf-8")
        # line-buffered so the stream can be tailed while the server runs
        self._telemetry_fh = open(self.config.telemetry_log, "a", encoding="utf-8",
                                  buffering=1)
        self._server_sock = socket.create_server(
            (self.config.device_host, self.config.device_port))
        self._server_sock.settimeout(0.2)
        self.device_port = self._server_sock.getsockname()[1]
        for target, name in ((self._control_loop, "fieldops-control"),
                             (self._accept_loop, "fieldops-accept")):
            t = threading.Thread(target=target, name=name, daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self) -> None:
        if self._stop.is_set():
            return
        self._stop.set()
        self._ctrl.put(("stop",))
        if self._server_sock is not None:
            try:
                self._server_sock.close()
            except OSError:
                pass
        with self._qlock:
            conns = list(self._connections.values())
        for conn in conns:
            conn.close()
        for t in self._threads:
            t.join(timeout=5.0)
        with self._loglock:
            for fh in (self._missions_fh, self._telemetry_fh):
                if fh is not None:
                    fh.close()
            self._missions_fh = self._telemetry_fh = None

    # ------------------------------------------------------------ public API

    def submit_mission(self, text: str, source: str = SOURCE_OPERATOR) -> str:
        cleaned = text.strip()
        if not cleaned:
            raise ValueError("mission text must be non-empty")
        record = MissionRecord(id=new_ulid(), command_text=cleaned, source=source,
                               received_at=now_ms(), latency=LatencyBreakdown())
        with self._rlock:
            self._records[record.id] = record
            self._terminal_events[record.id] = threading.Event()
        self._ctrl.put(("submit", record.id))
        return record.id

    def get_record(self, mission_id: str) -> Optional[MissionRecord]:
        with self._rlock:
            return self._records.get(mission_id)

    def wait_terminal(self, mission_id: str, timeout: float = 60.0) -> Optional[MissionRecord]:
        with self._rlock:
            event = self._terminal_events.get(mission_id)
        if event is None:
            return None
        if not event.wait(timeout):
            return None
        return self.get_record(mission_id)

    def wait_for_assets(self, count: int, timeout: float = 10.0) -> bool:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if len(self.kb.snapshot()) >= count:
                return True
            time.sleep(0.01)
        return len(self.kb.snapshot()) >= count

    def state_dict(self) -> dict:
        with self._qlock:
            active, queued = self._active, list(self._queue)
            devices = sorted(self._connections)
        return {
            "snapshot": self.kb.snapshot().to_dict(),
            "active_mission": active,
            "queue": queued,
            "connected_devices": devices,
        }

    def subscribe(self, maxsize: int = 2000) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=maxsize)
        with self._sublock:
            self._subs.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._sublock:
            if q in self._subs:
                self._subs.remove(q)

    # -------------------------------------------------------------- eventing

    def _publish(self, event: dict) -> None:
        event = {"ts": now_ms(), **event}
        with self._sublock:
            subs = list(self._subs)
        for q in subs:
            try:
                q.put_nowait(event)
            except queue.Full:
                pass  # a stalled consumer must not stall the pipeline

    def _publish_stage(self, record: MissionRecord, stage: str, data: dict) -> None:
        self._publish({"kind": "stage", "mission_id": record.id, "stage": stage, "data": data})

    # --------------------------------------------------------- control loop

    def _control_loop(self) -> None:
        handlers = {
            "submit": self._on_submit,
            "register": self._on_register,
            "device_msg": self._on_device_msg,
            "device_gone": self._on_device_gone,
            "dispatch": self._on_dispatch,
            "mission_done": self._on_mission_done,
        }
        while True:
            msg = self._ctrl.get()
            if msg[0] == "stop":
                break
            try:
                handlers[msg[0]](*msg[1:])
            except Exception as exc:  # a bad message must not kill the loop
                self._publish({"kind": "error", "detail": f"{msg[0]}: {exc}"})

    def _on_submit(self, mission_id: str) -> None:
        with self._qlock:
            start_now = self._active is None
            if start_now:
                self._active = mission_id
            else:
                self._queue.append(mission_id)
            position = 0 if start_now else len(self._queue)
        self._publish({"kind": "queue", "event": "submitted", "mission_id": mission_id,
                       "position": position})
        if start_now:
            self._start_mission(mission_id)

    def _start_mission(self, mission_id: str) -> None:
        record = self.get_record(mission_id)
        record.started_at = now_ms()
        self._publish({"kind": "queue", "event": "started", "mission_id": mission_id})
        worker = threading.Thread(target=self._run_pipeline, args=(mission_id,),
                                  name=f"fieldops-mission-{mission_id[:8]}", daemon=True)
        worker.start()

    def _on_mission_done(self, mission_id: str) -> None:
        with self._qlock:
            if self._tracker is not None and self._tracker.mission_id == mission_id:
                self._tracker = None
            if self._active == mission_id:
                self._active = None
            next_id = self._queue.popleft() if self._queue and self._active is None else None
            if next_id is not None:
                self._active = next_id
        if next_id is not None:
            self._start_mission(next_id)

    def _on_register(self, conn: DeviceConnection, msg: dict) -> None:
        name, kind, frame = msg["name"], msg["kind"], msg["frame"]
        position = self.config.frames.get(frame, (0.0, 0.0))
        try:
            state = AssetState(name=name, kind=kind, location_frame=frame,
                               position=position, status="active",
                               battery_pct=float(msg["battery"]), last_update=now_ms())
        except ValueError as exc:
            self._publish({"kind": "error", "detail": f"register {name!r} rejected: {exc}"})
            conn.close()
            return
        conn.name, conn.kind = name, kind
        with self._qlock:
            old = self._connections.get(name)
            self._connections[name] = conn
        if old is not None and old is not conn:
            old.close()
        self.kb.register_asset(state)
        self._publish({"kind": "register", "name": name, "device_kind": kind, "frame": frame})

    def _on_device_msg(self, conn: DeviceConnection, msg: dict) -> None:
        mtype = msg["type"]
        if mtype == MSG_TELEMETRY:
            self._on_telemetry(conn, msg)
        elif mtype in (MSG_ACK, MSG_COMPLETE):
            tracker = self._tracker
            if tracker is not None and msg["mission_id"] == tracker.mission_id:
                if mtype == MSG_ACK:
                    tracker.mark_ack(msg["action_index"], now_ms())
                else:
                    tracker.mark_complete(msg["action_index"], now_ms())
        elif mtype == MSG_EVENT:
            self._on_device_event(msg)

    def _on_telemetry(self, conn: DeviceConnection, msg: dict) -> None:
        kind = conn.kind or "uav"
        try:
            state = AssetState(name=msg["name"], kind=kind, location_frame=msg["frame"],
                               position=(float(msg["x"]), float(msg["y"])),
                               status=msg["status"], battery_pct=float(msg["battery"]))
            version = self.kb.update_telemetry(state)
        except (ValueError, UnknownAssetError) as exc:
            self._publish({"kind": "error", "detail": f"telemetry dropped: {exc}"})
            return
        with self._loglock:
            if self._telemetry_fh is not None:
                self._telemetry_fh.write(json.dumps(
                    {"ts": now_ms(), "version": version, **{k: msg[k] for k in
                     ("name", "frame", "x", "y", "status", "battery")}},
                    separators=(",", ":")) + "\n")
        self._publish({"kind": "telemetry", "version": version,
                       **{k: msg[k] for k in ("name", "frame", "x", "y", "status", "battery")}})

    def _on_device_event(self, msg: dict) -> None:
        text = event_mission_text(msg["event"], msg["name"], msg["frame"])
        self._publish({"kind": "device_event", "event": msg["event"], "name": msg["name"],
                       "frame": msg["frame"], "mission_text": text})
        record = MissionRecord(id=new_ulid(), command_text=text, source=SOURCE_DEVICE,
                               received_at=now_ms(), latency=LatencyBreakdown())
        with self._rlock:
            self._records[record.id] = record
            self._terminal_events[record.id] = threading.Event()
        self._on_submit(record.id)

    def _on_device_gone(self, conn: DeviceConnection) -> None:
        name = conn.name
        conn.close()
        if name is None:
            return
        with self._qlock:
            if self._connections.get(name) is conn:
                del self._connections[name]
            else:
                return  # superseded by a re-registration
        current = self.kb.snapshot().assets.get(name)
        if current is not None and current.status != "unavailable":
            self.kb.update_telemetry(replace(current, status="unavailable"))
        tracker = self._tracker
        if tracker is not None:
            tracker.agent_gone(name)
        self._publish({"kind": "device_gone", "name": name})

    def _on_dispatch(self, tracker: _DispatchTracker) -> None:
        self._tracker = tracker
        for entry, action in zip(tracker.entries, tracker.actions):
            with self._qlock:
                conn = self._connections.get(entry.agent)
            if conn is None:
                tracker.mark_unreachable(entry.action_index)
                continue
            wire = {"type": MSG_COMMAND, "mission_id": tracker.mission_id,
                    "action_index": entry.action_index,
                    "verb": action.command.verb, "target": action.command.target}
            try:
                conn.send(wire)
                tracker.mark_sent(entry.action_index, now_ms())
            except OSError:
                tracker.mark_unreachable(entry.action_index)
        tracker.all_sent()

    # ------------------------------------------------------------- pipeline

    def _run_pipeline(self, mission_id: str) -> None:
        record = self.get_record(mission_id)
        t0 = perf_ms()
        try:
            self._pipeline_body(record, t0)
        except Exception as exc:  # no lost missions: any defect is a terminal state
            record.terminal_state = FAILED_BACKEND
            record.error = record.error or f"pipeline failure: {exc}"
        record.finished_at = now_ms()
        record.latency.total_ms = perf_ms() - t0
        self._persist(record)
        self._publish({"kind": "terminal", "mission_id": record.id,
                       "terminal_state": record.terminal_state,
                       "hybrid_success": record.hybrid_success,
                       "strict_success": record.strict_success,
                       "error": record.error})
        with self._rlock:
            event = self._terminal_events[record.id]
        event.set()
        self._ctrl.put(("mission_done", record.id))

    def _rule_cite(self, rule_id: str) -> str:
        rule = self.rules.get(rule_id)
        return rule.text if rule else ""

    def _pipeline_body(self, record: MissionRecord, t0: float) -> None:
        cfg = self.config
        snapshot = self.kb.snapshot()
        record.start_covered_gates = sorted(
            g for g, n in coverage(snapshot, cfg.gate_frames).items() if n > 0)
        if not snapshot.assets:
            record.terminal_state = FAILED_EXECUTION
            record.error = "no registered assets"
            return

        # Step: retrieval
        t = perf_ms()
        scored = retrieve_top_k(record.command_text, self.rules, k=3)
        record.latency.retrieval_ms = perf_ms() - t
        record.retrieved_rule_ids = [s.rule.id for s in scored]
        record.retrieved_scores = [s.to_dict() for s in scored]
        self._publish_stage(record, "retrieval", {"scores": record.retrieved_scores})

        # Step: decision inference
        prompt = build_decision_prompt(record.command_text, snapshot, scored)
        record.decision_prompt = prompt.rendered
        t = perf_ms()
        try:
            result = self.backend.complete(prompt.rendered, system=DECISION_SYSTEM)
        except GatewayError as exc:
            record.latency.inference_ms = perf_ms() - t
            record.terminal_state = FAILED_BACKEND
            record.error = f"decision backend: {exc}"
            return
        record.latency.inference_ms = perf_ms() - t
        record.raw_response = result.raw_text
        record.backend_label = result.backend_label
        try:
            plan = parse_plan(result.raw_text)
        except PlanParseError as exc:
            record.terminal_state = FAILED_BACKEND
            record.error = f"unparseable plan: {exc}"
            return
        record.plan = plan
        self._publish_stage(record, "inference", {"plan": plan.to_dict(),
                                                  "backend": record.backend_label})

        # Step: deterministic safeguards (reference validity first)
        issues = validate_references(plan, snapshot, cfg.frames)
        if issues:
            record.reference_errors = [i.message for i in issues]
            violations = tuple(
                Violation("WF-08" if i.kind == "unknown_agent" else "CAP-06",
                          f"{i.message} ({self._rule_cite('WF-08' if i.kind == 'unknown_agent' else 'CAP-06')})")
                for i in issues)
            record.safeguard_report = SafeguardReport(violations=violations, warnings=())
            self._publish_stage(record, "safeguard",
                                {"report": record.safeguard_report.to_dict()})
            record.terminal_state = REJECTED_SAFEGUARD
            return
        report = check_safeguards(plan, snapshot, self.rules,
                                  gate_frames=cfg.gate_frames, base_frame=cfg.base_frame,
                                  battery_threshold=cfg.battery_threshold_pct)
        record.safeguard_report = report
        self._publish_stage(record, "safeguard", {"report": report.to_dict()})
        if not report.passed:
            record.terminal_state = REJECTED_SAFEGUARD
            return

        # Step: pre-execution judge
        t = perf_ms()
        pre_verdict, _ = judge_pre(plan, record.command_text, scored, snapshot,
                                   self.judge_backend)
        record.latency.judge_ms += perf_ms() - t
        record.pre_verdict = pre_verdict
        self._publish_stage(record, "judge_pre", {"verdict": pre_verdict.to_dict()})
        if not pre_verdict.ok:
            record.terminal_state = REJECTED_JUDGE
            return

        # Step: dispatch and await completion
        t = perf_ms()
        tracker = _DispatchTracker(record.id, plan)
        record.dispatch_log = tracker.entries
        self._ctrl.put(("dispatch", tracker))
        tracker.wait_sent(timeout=5.0)
        tracker.wait_all(cfg.action_deadline_s)
        tracker.close()
        record.latency.dispatch_ms = perf_ms() - t
        self._publish_stage(record, "dispatch",
                            {"entries": [e.to_dict() for e in tracker.entries]})

        post_snapshot = self.kb.snapshot()
        record.final_snapshot_version = post_snapshot.version

        # Step: post-execution judge (deterministic check wins disagreements)
        t = perf_ms()
        post_verdict, _ = judge_post(plan, record.command_text, post_snapshot, scored,
                                     tracker.entries, self.judge_backend)
        record.latency.judge_ms += perf_ms() - t
        record.post_verdict = post_verdict
        self._publish_stage(record, "judge_post", {"verdict": post_verdict.to_dict()})

        all_complete = all(e.complete_time is not None for e in tracker.entries)
        det_ok = deterministic_post_check(plan, post_snapshot, tracker.entries)
        if all_complete and det_ok:
            record.terminal_state = COMPLETED
        else:
            record.terminal_state = FAILED_EXECUTION
            record.error = "actions incomplete or telemetry contradicts commanded outcome"
        record.hybrid_success = post_verdict.ok
        record.strict_success = strict_evaluate(
            record, post_snapshot, self.rules, gate_frames=cfg.gate_frames,
            base_frame=cfg.base_frame, battery_threshold=cfg.battery_threshold_pct)

    def _persist(self, record: MissionRecord) -> None:
        with self._loglock:
            if self._missions_fh is not None:
                self._missions_fh.write(json.dumps(record.to_dict(),
                                                   separators=(",", ":")) + "\n")
                self._missions_fh.flush()

    # --------------------------------------------------------- device server

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, addr = self._server_sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn = DeviceConnection(sock, f"{addr[0]}:{addr[1]}")
            t = threading.Thread(target=self._reader_loop, args=(conn,),
                                 name=f"fieldops-device-{addr[1]}", daemon=True)
            t.start()

    def _reader_loop(self, conn: DeviceConnection) -> None:
        reader = LineReader()
        seq_check = SeqValidator()
        registered = False
        try:
            while not self._stop.is_set():
                data = conn.sock.recv(65536)
                if not data:
                    break
                for line in reader.feed(data):
                    msg = decode_line(line)
                    seq_check.check(msg["seq"])
                    if not registered:
                        if msg["type"] != MSG_REGISTER:
                            raise ProtocolError("first message must be register")
                        registered = True
                        self._ctrl.put(("register", conn, msg))
                    elif msg["type"] == MSG_REGISTER:
                        raise ProtocolError("duplicate register on one connection")
                    else:
                        self._ctrl.put(("device_msg", conn, msg))
        except ProtocolError as exc:
            self._publish({"kind": "error", "detail": f"device {conn.peer}: {exc}"})
        except OSError:
            pass
        finally:
            self._ctrl.put(("device_gone", conn))
