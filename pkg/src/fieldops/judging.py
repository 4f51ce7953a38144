"""Independent verification layer around the mission pipeline.

A plan that clears the deterministic safeguards still gets a pre-execution
policy review from the judge backend, and after dispatch the outcome is
re-checked two ways: a telemetry-grounded deterministic check and a model
verdict. The deterministic check always wins a disagreement — a model
cannot overrule telemetry. Every failure path folds to a failure verdict.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .errors import GatewayError, PlanParseError
from .gateway import CompletionResult
from .knowledge import TelemetrySnapshot
from .plans import ActionPlan, extract_first_json_object
from .prompts import JUDGE_SYSTEM, PHASE_POST, PHASE_PRE, build_judge_prompt
from .retrieval import ScoredRule

VERDICT_SUCCESS = "success"
VERDICT_FAILURE = "failure"

FRAME_TOLERANCE_M = 1.0  # matches the simulator's arrival snap distance


@dataclass(frozen=True)
class JudgeVerdict:
    verdict: str  # "success" | "failure"
    feedback: str
    phase: str  # "pre_execution" | "post_execution"
    deterministic_concur: Optional[bool] = None  # post phase only

    def __post_init__(self):
        if (self.phase == PHASE_POST) != (self.deterministic_concur is not None):
            raise ValueError("deterministic_concur is set exactly for post_execution verdicts")

    @property
    def ok(self) -> bool:
        return self.verdict == VERDICT_SUCCESS

    def to_dict(self) -> dict:
        d = {"verdict": self.verdict, "feedback": self.feedback, "phase": self.phase}
        if self.phase == PHASE_POST:
            d["deterministic_concur"] = self.deterministic_concur
        return d


def parse_verdict(raw: str, phase: str, deterministic_concur: Optional[bool] = None) -> JudgeVerdict:
    """Total parse: any string maps to exactly one verdict, unparseable -> failure."""
    kwargs = {"deterministic_concur": deterministic_concur} if phase == PHASE_POST else {}
    try:
        obj = extract_first_json_object(raw)
    except PlanParseError:
        return JudgeVerdict(VERDICT_FAILURE, "unparseable judge output", phase, **kwargs)
    verdict = obj.get("verdict")
    if not isinstance(verdict, str) or verdict.lower() not in (VERDICT_SUCCESS, VERDICT_FAILURE):
        return JudgeVerdict(VERDICT_FAILURE, "unparseable judge output", phase, **kwargs)
    feedback = obj.get("feedback")
    if not isinstance(feedback, str):
        feedback = ""
    return JudgeVerdict(verdict.lower(), feedback, phase, **kwargs)


def judge_pre(plan: ActionPlan, mission_text: str, retrieved: list[ScoredRule],
              snapshot: TelemetrySnapshot, backend) -> tuple[JudgeVerdict, Optional[CompletionResult]]:
    """Pre-execution policy-compliance judgment; backend errors fail closed."""
    prompt = build_judge_prompt(plan, snapshot, retrieved, PHASE_PRE, mission_text)
    try:
        result = backend.complete(prompt, system=JUDGE_SYSTEM)
    except GatewayError as exc:
        return JudgeVerdict(VERDICT_FAILURE, f"judge backend error: {exc}", PHASE_PRE), None
    return parse_verdict(result.raw_text, PHASE_PRE), result


def deterministic_post_check(plan: ActionPlan, post_snapshot: TelemetrySnapshot,
                             dispatch_log: list) -> bool:
    """Telemetry ground truth: did the commanded actions actually happen?

    Every move_to agent must sit at its commanded frame in the post
    snapshot; every other action must have a completion acknowledgment in
    the dispatch log. An empty plan passes vacuously.
    """
    completes = {}
    for entry in dispatch_log:
        completes[entry.action_index] = entry.complete_time is not None

    for index, action in enumerate(plan.actions):
        if action.command.verb == "move_to":
            state = post_snapshot.assets.get(action.agent)
            if state is None or state.location_frame != action.command.target:
                return False
        else:
            if not completes.get(index, False):
                return False
    return True


def judge_post(plan: ActionPlan, mission_text: str, post_snapshot: TelemetrySnapshot,
               retrieved: list[ScoredRule], dispatch_log: list,
               backend) -> tuple[JudgeVerdict, Optional[CompletionResult]]:
    """Post-execution judgment: deterministic check AND model verdict.

    The final verdict is a conjunction — if either side says failure, the
    mission failed. If the backend errors out, the deterministic check
    stands alone and the feedback says so.
    """
    ground_truth = deterministic_post_check(plan, post_snapshot, dispatch_log)
    prompt = build_judge_prompt(plan, post_snapshot, retrieved, PHASE_POST, mission_text)
    try:
        result = backend.complete(prompt, system=JUDGE_SYSTEM)
    except GatewayError as exc:
        verdict = VERDICT_SUCCESS if ground_truth else VERDICT_FAILURE
        feedback = f"judge backend error ({exc}); deterministic telemetry check alone: {verdict}"
        return JudgeVerdict(verdict, feedback, PHASE_POST, deterministic_concur=ground_truth), None

    model = parse_verdict(result.raw_text, PHASE_POST, deterministic_concur=True)
    concur = model.ok == ground_truth
    if ground_truth and model.ok:
        final, feedback = VERDICT_SUCCESS, model.feedback
    elif not ground_truth and not model.ok:
        final, feedback = VERDICT_FAILURE, model.feedback
    elif not ground_truth:
        final = VERDICT_FAILURE
        feedback = (f"telemetry contradicts the model verdict: commanded actions did not "
                    f"complete (model said: {model.feedback or 'success'})")
    else:
        final, feedback = VERDICT_FAILURE, model.feedback or "model verdict: failure"
    return JudgeVerdict(final, feedback, PHASE_POST, deterministic_concur=concur), result
