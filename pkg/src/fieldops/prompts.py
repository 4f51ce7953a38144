"""Deterministic prompt assembly for the decision LLM and the judge.

Rendering is a pure function of its inputs: same mission text, snapshot and
retrieved rules produce byte-identical prompts, which the golden fixtures
under fixtures/prompts/ pin down.
"""

from __future__ import annotations

from dataclasses import dataclass

from .knowledge import TelemetrySnapshot
from .retrieval import ScoredRule
from .util import one_line

PHASE_PRE = "pre_execution"
PHASE_POST = "post_execution"

# System instructions: same backend model, different role framing.
DECISION_SYSTEM = (
    "You are the command-and-control planner for a small fleet of field assets. "
    "Follow the retrieved operational policies and the current telemetry. "
    "Return only the JSON object requested, with no extra prose."
)
JUDGE_SYSTEM = (
    "You are an independent verification judge for field mission plans. "
    "You never issue commands; you only evaluate. "
    "Return only the JSON verdict requested, with no extra prose."
)

INSTRUCTION_BLOCK = (
    "Instruction: Return only valid JSON. Use predefined device names and command "
    "templates. Preserve command order. Maintain gate coverage.\n"
    "Command templates: move_to <frame> | hold_position | observe <frame> | "
    "issue_warning <frame> | block <frame> | return_to_base"
)

FORMAT_BLOCK = (
    "Expected Output Format:\n"
    "{\n"
    '  "actions": [\n'
    '    {"agent": "<agent>", "command": "<command>"}\n'
    "  ],\n"
    '  "reason": "<short explanation>"\n'
    "}"
)

VERDICT_FORMAT_BLOCK = (
    "Expected Output Format:\n"
    '{"verdict": "success" | "failure", "feedback": "<short explanation>"}'
)


@dataclass(frozen=True)
class ContextualPrompt:
    mission_text: str
    instruction_block: str
    state_block: str
    context_block: str
    format_block: str
    rendered: str


def _asset_line(state) -> str:
    pct = round(state.battery_pct, 1)
    return (f"{state.name}: at {one_line(state.location_frame)}, "
            f"status={one_line(state.status)}, battery={pct:g}%")


def _state_block(snapshot: TelemetrySnapshot, header: str = "Current State") -> str:
    lines = [f"{header}:"]
    lines.extend(_asset_line(s) for s in snapshot.sorted_assets())
    return "\n".join(lines)


def _context_block(retrieved: list[ScoredRule]) -> str:
    if not retrieved:
        return "Retrieved Context: (none)"
    ordered = sorted(retrieved, key=lambda s: (-s.combined, s.rule.id))
    lines = ["Retrieved Context:"]
    lines.extend(f"{s.rule.id}: {one_line(s.rule.text)}" for s in ordered)
    return "\n".join(lines)


def _mission_line(command: str) -> str:
    return f'Mission Command: "{one_line(command).strip()}"'


def _plan_lines(plan) -> str:
    if not plan.actions:
        return "(no actions)"
    lines = [f"- {a.agent}: {a.command.as_string()}" for a in plan.actions]
    return "\n".join(lines)


def build_decision_prompt(command: str, snapshot: TelemetrySnapshot,
                          retrieved: list[ScoredRule]) -> ContextualPrompt:
    """Assemble the five-block decision prompt for one mission command."""
    if len(snapshot) == 0:
        raise ValueError("cannot build a decision prompt from an empty snapshot")
    mission = _mission_line(command)
    state = _state_block(snapshot)
    context = _context_block(retrieved)
    rendered = "\n\n".join([mission, INSTRUCTION_BLOCK, state, context, FORMAT_BLOCK]) + "\n"
    return ContextualPrompt(
        mission_text=command,
        instruction_block=INSTRUCTION_BLOCK,
        state_block=state,
        context_block=context,
        format_block=FORMAT_BLOCK,
        rendered=rendered,
    )


def build_judge_prompt(plan, snapshot: TelemetrySnapshot, retrieved: list[ScoredRule],
                       phase: str, mission_text: str) -> str:
    """Render the verification prompt for either judge phase.

    pre_execution asks for a policy-compliance call on the candidate plan;
    post_execution presents the post-dispatch telemetry and asks whether the
    commanded actions actually happened.
    """
    if phase == PHASE_PRE:
        role = ("Judge Role: Independent pre-execution review. Evaluate whether the "
                "proposed plan complies with the retrieved operational policies and "
                "the current telemetry. Nothing has been executed yet.")
        plan_header = "Proposed Plan"
        state = _state_block(snapshot)
    elif phase == PHASE_POST:
        role = ("Judge Role: Independent post-execution review. The plan below was "
                "dispatched. Using the updated telemetry, decide whether the intended "
                "actions actually occurred.")
        plan_header = "Commanded Actions"
        state = _state_block(snapshot, header="Post-Execution State")
    else:
        raise ValueError(f"unknown judge phase {phase!r}")

    plan_block = f"{plan_header}:\n{_plan_lines(plan)}\nReason: {one_line(plan.reason)}"
    blocks = [role, _mission_line(mission_text), plan_block, state,
              _context_block(retrieved), VERDICT_FORMAT_BLOCK]
    return "\n\n".join(blocks) + "\n"
