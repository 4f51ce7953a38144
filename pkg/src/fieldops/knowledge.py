"""Operational policy rules plus the live telemetry snapshot.

Together these are the grounding store the mission pipeline draws on: a
fixed rule set loaded from JSON and a versioned, single-writer view of
every fleet asset.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .errors import RuleLoadError, UnknownAssetError
from .util import now_ms

RULE_DOMAINS = ("roe", "workflow", "capability")
RULE_PRIORITIES = ("critical", "high", "medium")
ASSET_KINDS = ("uav", "ugv", "robot")
ASSET_STATUSES = ("active", "standby", "moving", "observing_vehicle", "unavailable", "low_battery")

IN_TRANSIT = "in_transit"

_RULE_ID_RE = re.compile(r"^(ROE|WF|CAP)-[0-9][0-9]$")
_DOMAIN_PREFIX = {"ROE": "roe", "WF": "workflow", "CAP": "capability"}


@dataclass(frozen=True)
class PolicyRule:
    id: str
    domain: str
    priority: str
    text: str


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[PolicyRule, ...]
    source_path: str = "<memory>"

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def get(self, rule_id: str) -> Optional[PolicyRule]:
        for rule in self.rules:
            if rule.id == rule_id:
                return rule
        return None

    def to_json(self) -> str:
        payload = {"rules": [vars(r) for r in self.rules]}
        return json.dumps(payload, ensure_ascii=False, indent=2)


def _validate_rule(entry: dict, index: int) -> PolicyRule:
    if not isinstance(entry, dict):
        raise RuleLoadError(f"rule #{index} is not an object")
    missing = {"id", "domain", "priority", "text"} - set(entry)
    if missing:
        raise RuleLoadError(f"rule #{index} missing fields: {sorted(missing)}")
    rid, domain, priority, text = entry["id"], entry["domain"], entry["priority"], entry["text"]
    if not isinstance(rid, str) or not _RULE_ID_RE.match(rid):
        raise RuleLoadError(f"rule #{index}: bad id {rid!r} (expected ROE-NN / WF-NN / CAP-NN)")
    if domain not in RULE_DOMAINS:
        raise RuleLoadError(f"rule {rid}: unknown domain {domain!r}")
    if priority not in RULE_PRIORITIES:
        raise RuleLoadError(f"rule {rid}: unknown priority {priority!r}")
    if _DOMAIN_PREFIX[rid.split("-")[0]] != domain:
        raise RuleLoadError(f"rule {rid}: id prefix does not match domain {domain!r}")
    if not isinstance(text, str) or not text.strip():
        raise RuleLoadError(f"rule {rid}: empty text")
    return PolicyRule(id=rid, domain=domain, priority=priority, text=text)


def parse_rules(document: str, source_path: str = "<memory>") -> RuleSet:
    """Parse a rule document; same validation as load_rules, no file I/O."""
    try:
        payload = json.loads(document)
    except json.JSONDecodeError as exc:
        raise RuleLoadError(f"{source_path}: not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("rules"), list):
        raise RuleLoadError(f"{source_path}: expected an object with a top-level 'rules' array")
    entries = payload["rules"]
    if not entries:
        raise RuleLoadError(f"{source_path}: rule list is empty")
    rules = []
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        rule = _validate_rule(entry, i)
        if rule.id in seen:
            raise RuleLoadError(f"{source_path}: duplicate rule id {rule.id}")
        seen.add(rule.id)
        rules.append(rule)
    return RuleSet(rules=tuple(rules), source_path=source_path)


def load_rules(path: str | Path) -> RuleSet:
    """Load the policy rule set from a JSON file, preserving file order."""
    p = Path(path)
    if not p.exists():
        raise RuleLoadError(f"rule file not found: {p}")
    return parse_rules(p.read_text(encoding="utf-8"), source_path=str(p))


def default_rules() -> RuleSet:
    """The rule set shipped with the package (identical to ./rules.json)."""
    doc = resources.files("fieldops.data").joinpath("rules.json").read_text(encoding="utf-8")
    return parse_rules(doc, source_path="fieldops://data/rules.json")


@dataclass(frozen=True)
class AssetState:
    name: str
    kind: str
    location_frame: str  # a known frame name, or "in_transit"
    position: tuple[float, float]
    status: str = "active"
    battery_pct: float = 100.0
    current_task: Optional[str] = None
    last_update: int = 0  # epoch ms

    def __post_init__(self):
        if self.kind not in ASSET_KINDS:
            raise ValueError(f"unknown asset kind {self.kind!r}")
        if self.status not in ASSET_STATUSES:
            raise ValueError(f"unknown asset status {self.status!r}")
        if not 0.0 <= self.battery_pct <= 100.0:
            raise ValueError(f"battery_pct out of range: {self.battery_pct}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "frame": self.location_frame,
            "x": self.position[0],
            "y": self.position[1],
            "status": self.status,
            "battery": self.battery_pct,
            "task": self.current_task,
            "last_update": self.last_update,
        }


@dataclass(frozen=True)
class TelemetrySnapshot:
    assets: dict[str, AssetState] = field(default_factory=dict)
    version: int = 0
    snapshot_time: int = 0

    def __len__(self) -> int:
        return len(self.assets)

    def sorted_assets(self) -> list[AssetState]:
        return [self.assets[name] for name in sorted(self.assets)]

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "snapshot_time": self.snapshot_time,
            "assets": {name: state.to_dict() for name, state in sorted(self.assets.items())},
        }


class KnowledgeBase:
    """Latest-state telemetry store with a strictly increasing version.

    Single-writer, multi-reader: all mutations go through one thread (the
    orchestrator control loop); snapshot() may be called from any thread and
    always sees a complete, settled world view.
    """

    def __init__(self, rules: Optional[RuleSet] = None):
        self.rules = rules if rules is not None else default_rules()
        self._lock = threading.Lock()
        self._assets: dict[str, AssetState] = {}
        self._version = 0
        self._updated_at = 0

    def register_asset(self, state: AssetState) -> int:
        """Insert a new asset (or refresh a re-connecting one). Bumps version."""
        with self._lock:
            self._assets[state.name] = state
            self._version += 1
            self._updated_at = state.last_update or now_ms()
            return self._version

    def is_registered(self, name: str) -> bool:
        with self._lock:
            return name in self._assets

    def update_telemetry(self, report: AssetState) -> int:
        """Apply one telemetry report; returns the new snapshot version.

        Every report is an event: identical content still increments the
        version. Unregistered names are rejected.
        """
        with self._lock:
            if report.name not in self._assets:
                raise UnknownAssetError(f"unregistered asset: {report.name}")
            arrived = now_ms()
            self._assets[report.name] = replace(report, last_update=arrived)
            self._version += 1
            self._updated_at = arrived
            return self._version

    def snapshot(self) -> TelemetrySnapshot:
        """Immutable copy of the current world view."""
        with self._lock:
            return TelemetrySnapshot(
                assets=dict(self._assets),
                version=self._version,
                snapshot_time=self._updated_at,
            )

    def asset_names(self) -> list[str]:
        with self._lock:
            return sorted(self._assets)


def coverage(snapshot: TelemetrySnapshot, gate_frames: Iterable[str]) -> dict[str, int]:
    """Asset count per gate frame; the checkpoint never counts toward a gate."""
    counts = {g: 0 for g in gate_frames}
    for state in snapshot.assets.values():
        if state.location_frame in counts:
            counts[state.location_frame] += 1
    return counts
