"""Action-plan parsing and the deterministic policy safeguards.

The LLM's raw text is parsed into a strict plan schema, checked against the
live world for dangling references, then screened by rule checks that need
no model: coverage retention, fleet-wide redeployment, per-kind capability
limits, battery floors and one-task-per-asset. Violations are data; the
orchestrator fails the mission closed before anything is dispatched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import PlanParseError
from .knowledge import IN_TRANSIT, RuleSet, TelemetrySnapshot

COMMAND_VERBS = ("move_to", "hold_position", "observe", "issue_warning", "block", "return_to_base")
TARGETED_VERBS = frozenset({"move_to", "observe", "issue_warning", "block"})
MOVEMENT_VERBS = frozenset({"move_to", "return_to_base"})

# Verbs a uav may carry (CAP-01: observation/reconnaissance only).
UAV_ALLOWED_VERBS = frozenset({"move_to", "observe", "hold_position", "return_to_base"})

DEFAULT_BASE_FRAME = "FRAME_Checkpoint"
DEFAULT_GATE_FRAMES = ("FRAME_NorthGate", "FRAME_EastGate", "FRAME_SouthGate", "FRAME_WestGate")
LOW_BATTERY_TASK_PCT = 20.0  # below this an asset only gets hold/return commands


@dataclass(frozen=True)
class Command:
    verb: str
    target: Optional[str] = None

    def __post_init__(self):
        if self.verb not in COMMAND_VERBS:
            raise PlanParseError(f"unknown command verb {self.verb!r}")
        if self.verb in TARGETED_VERBS and not self.target:
            raise PlanParseError(f"{self.verb} requires a target frame")
        if self.verb not in TARGETED_VERBS and self.target:
            raise PlanParseError(f"{self.verb} takes no target (got {self.target!r})")

    def as_string(self) -> str:
        return f"{self.verb} {self.target}" if self.target else self.verb


@dataclass(frozen=True)
class Action:
    agent: str
    command: Command


@dataclass(frozen=True)
class ActionPlan:
    actions: tuple[Action, ...]
    reason: str

    def to_dict(self) -> dict:
        return {
            "actions": [{"agent": a.agent, "command": a.command.as_string()} for a in self.actions],
            "reason": self.reason,
        }

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


@dataclass(frozen=True)
class Violation:
    rule_id: str
    message: str

    def to_dict(self) -> dict:
        return {"rule_id": self.rule_id, "message": self.message}


@dataclass(frozen=True)
class SafeguardReport:
    violations: tuple[Violation, ...] = ()
    warnings: tuple[Violation, ...] = ()  # advisory findings, never blocking

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "violations": [v.to_dict() for v in self.violations],
            "warnings": [w.to_dict() for w in self.warnings],
        }


def extract_first_json_object(raw: str) -> dict:
    """Return the first balanced JSON object embedded in raw text.

    Tolerates surrounding prose by scanning each '{' and attempting a
    string-aware balance; the first candidate that json-parses to an object
    wins.
    """
    starts = [i for i, ch in enumerate(raw) if ch == "{"]
    for start in starts:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(raw)):
            ch = raw[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidate = raw[start:i + 1]
                    try:
                        obj = json.loads(candidate)
                    except json.JSONDecodeError:
                        break  # malformed from this start; try the next '{'
                    if isinstance(obj, dict):
                        return obj
                    break
        # fall through to next start position
    raise PlanParseError("no JSON object found in model output")


def parse_command(text: str) -> Command:
    """Parse '<verb>' or '<verb> <frame>' into a Command."""
    if not isinstance(text, str) or not text.strip():
        raise PlanParseError(f"empty command string: {text!r}")
    parts = text.split()
    if len(parts) == 1:
        return Command(verb=parts[0])
    if len(parts) == 2:
        return Command(verb=parts[0], target=parts[1])
    raise PlanParseError(f"command does not match '<verb> [frame]': {text!r}")


def parse_plan(raw: str) -> ActionPlan:
    """Parse LLM output into an ActionPlan, preserving action order."""
    obj = extract_first_json_object(raw)
    keys = set(obj)
    if keys != {"actions", "reason"}:
        raise PlanParseError(f"plan must have exactly the keys actions/reason, got {sorted(keys)}")
    if not isinstance(obj["actions"], list):
        raise PlanParseError("'actions' must be an array")
    if not isinstance(obj["reason"], str):
        raise PlanParseError("'reason' must be a string")
    actions = []
    for idx, entry in enumerate(obj["actions"]):
        if not isinstance(entry, dict) or set(entry) != {"agent", "command"}:
            raise PlanParseError(f"action #{idx} must be an object with exactly agent/command")
        agent, command = entry["agent"], entry["command"]
        if not isinstance(agent, str) or not agent:
            raise PlanParseError(f"action #{idx}: agent must be a non-empty string")
        if not isinstance(command, str):
            raise PlanParseError(f"action #{idx}: command must be a string")
        actions.append(Action(agent=agent, command=parse_command(command)))
    return ActionPlan(actions=tuple(actions), reason=obj["reason"])


@dataclass(frozen=True)
class ReferenceIssue:
    kind: str  # "unknown_agent" | "unknown_frame"
    subject: str
    message: str


def validate_references(plan: ActionPlan, snapshot: TelemetrySnapshot,
                        frames: Iterable[str]) -> list[ReferenceIssue]:
    """Check every agent exists in the snapshot and every target is a known frame."""
    known_frames = set(frames)
    errors = []
    for action in plan.actions:
        if action.agent not in snapshot.assets:
            errors.append(ReferenceIssue(
                kind="unknown_agent", subject=action.agent,
                message=f"agent {action.agent} is not a registered asset"))
        target = action.command.target
        if target is not None and target not in known_frames:
            errors.append(ReferenceIssue(
                kind="unknown_frame", subject=target,
                message=f"target {target} is not a predefined map frame"))
    return errors


def project_frames(plan: ActionPlan, snapshot: TelemetrySnapshot,
                   base_frame: str = DEFAULT_BASE_FRAME) -> dict[str, str]:
    """World after the plan: each commanded mover assumed at its target.

    Non-movement commands leave the asset where it is; with no movement at
    all the projection equals the snapshot.
    """
    projected = {name: state.location_frame for name, state in snapshot.assets.items()}
    for action in plan.actions:
        if action.agent not in projected:
            continue
        if action.command.verb == "move_to":
            projected[action.agent] = action.command.target
        elif action.command.verb == "return_to_base":
            projected[action.agent] = base_frame
    return projected


def _covered(projection: dict[str, str], gate: str) -> bool:
    return any(frame == gate for frame in projection.values())


def check_safeguards(plan: ActionPlan, snapshot: TelemetrySnapshot, rules: RuleSet,
                     gate_frames: Iterable[str] = DEFAULT_GATE_FRAMES,
                     base_frame: str = DEFAULT_BASE_FRAME,
                     battery_threshold: float = LOW_BATTERY_TASK_PCT,
                     confirmed_threat: bool = False) -> SafeguardReport:
    """Run every deterministic rule check against the post-plan projection.

    The verdict depends only on the plan's actions and the snapshot — never
    on the plan's reason text or anything the mission text said, so no
    instruction can argue its way past a violated constraint.
    """
    violations: list[Violation] = []
    warnings: list[Violation] = []
    gates = list(gate_frames)
    projection = project_frames(plan, snapshot, base_frame)
    before = {name: state.location_frame for name, state in snapshot.assets.items()}

    def text(rule_id: str) -> str:
        rule = rules.get(rule_id)
        return rule.text if rule else ""

    # WF-03 / CAP-08: a gate that is covered now must stay covered.
    lost = [g for g in gates if _covered(before, g) and not _covered(projection, g)]
    for gate in lost:
        violations.append(Violation("WF-03", f"plan leaves {gate} uncovered ({text('WF-03')})"))
    if lost:
        violations.append(Violation("CAP-08", f"movement uncovers {', '.join(lost)} ({text('CAP-08')})"))

    # WF-06: no whole-fleet redeployment to one frame without a confirmed threat.
    moved = any(a.command.verb in MOVEMENT_VERBS for a in plan.actions)
    destinations = set(projection.values())
    if moved and len(snapshot) > 1 and len(destinations) == 1 and not confirmed_threat:
        frame = next(iter(destinations))
        violations.append(Violation("WF-06", f"plan relocates every asset to {frame} "
                                             f"with no confirmed threat ({text('WF-06')})"))

    # Per-action capability checks.
    commands_per_agent: dict[str, int] = {}
    for action in plan.actions:
        state = snapshot.assets.get(action.agent)
        if state is None:
            continue  # dangling references are reported by validate_references
        verb = action.command.verb
        commands_per_agent[action.agent] = commands_per_agent.get(action.agent, 0) + 1

        if state.kind == "uav" and verb not in UAV_ALLOWED_VERBS:
            violations.append(Violation("CAP-01", f"{action.agent} is a uav and may not {verb} "
                                                  f"({text('CAP-01')})"))
        if verb == "block" and state.kind != "ugv":
            violations.append(Violation("CAP-02", f"{action.agent} ({state.kind}) may not block "
                                                  f"({text('CAP-02')})"))
        if verb == "issue_warning" and state.kind != "robot":
            violations.append(Violation("CAP-03", f"{action.agent} ({state.kind}) may not issue "
                                                  f"warnings ({text('CAP-03')})"))
        if state.battery_pct < battery_threshold and verb not in ("return_to_base", "hold_position"):
            violations.append(Violation("CAP-04", f"{action.agent} battery at {state.battery_pct:g}% "
                                                  f"is below {battery_threshold:g}% ({text('CAP-04')})"))

    # CAP-07: one primary task per asset per plan.
    for agent, count in sorted(commands_per_agent.items()):
        if count > 1:
            violations.append(Violation("CAP-07", f"{agent} is given {count} commands in one plan "
                                                  f"({text('CAP-07')})"))

    # WF-02, advisory only: ground assets sent to a gate no uav has eyes on.
    uav_frames = {projection[n] for n, s in snapshot.assets.items() if s.kind == "uav"}
    uav_frames |= {before[n] for n, s in snapshot.assets.items() if s.kind == "uav"}
    uav_frames |= {a.command.target for a in plan.actions
                   if a.command.verb == "observe" and a.command.target
                   and snapshot.assets.get(a.agent) is not None
                   and snapshot.assets[a.agent].kind == "uav"}
    for action in plan.actions:
        state = snapshot.assets.get(action.agent)
        if state is None or state.kind == "uav":
            continue
        target = action.command.target
        if action.command.verb == "move_to" and target in gates and target not in uav_frames:
            warnings.append(Violation("WF-02", f"{action.agent} committed to {target} without uav "
                                               f"reconnaissance ({text('WF-02')})"))

    return SafeguardReport(violations=tuple(violations), warnings=tuple(warnings))
