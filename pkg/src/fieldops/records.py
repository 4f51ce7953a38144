"""Mission execution records: the full trace of one command through the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .judging import JudgeVerdict
from .plans import ActionPlan, SafeguardReport

# Terminal states a mission can reach.
COMPLETED = "completed"
REJECTED_SAFEGUARD = "rejected_safeguard"
REJECTED_JUDGE = "rejected_judge"
FAILED_EXECUTION = "failed_execution"
FAILED_BACKEND = "failed_backend"
TERMINAL_STATES = (COMPLETED, REJECTED_SAFEGUARD, REJECTED_JUDGE, FAILED_EXECUTION, FAILED_BACKEND)

SOURCE_OPERATOR = "operator"
SOURCE_DEVICE = "device_event"

LATENCY_SLACK_MS = 5.0  # allowed bookkeeping gap between stage sum and total


@dataclass
class LatencyBreakdown:
    retrieval_ms: float = 0.0
    inference_ms: float = 0.0
    judge_ms: float = 0.0
    dispatch_ms: float = 0.0
    total_ms: float = 0.0

    def component_sum(self) -> float:
        return self.retrieval_ms + self.inference_ms + self.judge_ms + self.dispatch_ms

    def consistent(self, slack_ms: float = LATENCY_SLACK_MS) -> bool:
        return abs(self.total_ms - self.component_sum()) <= slack_ms

    def to_dict(self) -> dict:
        return {
            "retrieval_ms": self.retrieval_ms,
            "inference_ms": self.inference_ms,
            "judge_ms": self.judge_ms,
            "dispatch_ms": self.dispatch_ms,
            "total_ms": self.total_ms,
        }


@dataclass
class DispatchEntry:
    agent: str
    command: str
    action_index: int
    sent_time: Optional[int] = None  # epoch ms
    ack_time: Optional[int] = None
    complete_time: Optional[int] = None

    @property
    def completed(self) -> bool:
        return self.complete_time is not None

    def to_dict(self) -> dict:
        return {
            "agent": self.agent,
            "command": self.command,
            "action_index": self.action_index,
            "sent_time": self.sent_time,
            "ack_time": self.ack_time,
            "complete_time": self.complete_time,
        }


@dataclass
class MissionRecord:
    id: str
    command_text: str
    source: str = SOURCE_OPERATOR
    received_at: int = 0  # epoch ms
    started_at: int = 0
    finished_at: int = 0
    retrieved_rule_ids: list[str] = field(default_factory=list)
    retrieved_scores: list[dict] = field(default_factory=list)
    decision_prompt: str = ""
    raw_response: str = ""
    backend_label: str = ""
    plan: Optional[ActionPlan] = None
    reference_errors: list[str] = field(default_factory=list)
    safeguard_report: Optional[SafeguardReport] = None
    pre_verdict: Optional[JudgeVerdict] = None
    post_verdict: Optional[JudgeVerdict] = None
    dispatch_log: list[DispatchEntry] = field(default_factory=list)
    start_covered_gates: list[str] = field(default_factory=list)
    final_snapshot_version: Optional[int] = None
    hybrid_success: bool = False
    strict_success: bool = False
    latency: LatencyBreakdown = field(default_factory=LatencyBreakdown)
    terminal_state: Optional[str] = None
    error: str = ""

    @property
    def terminal(self) -> bool:
        return self.terminal_state is not None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "command_text": self.command_text,
            "source": self.source,
            "received_at": self.received_at,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "retrieved_rule_ids": list(self.retrieved_rule_ids),
            "retrieved_scores": list(self.retrieved_scores),
            "decision_prompt": self.decision_prompt,
            "raw_response": self.raw_response,
            "backend_label": self.backend_label,
            "plan": self.plan.to_dict() if self.plan else None,
            "reference_errors": list(self.reference_errors),
            "safeguard_report": self.safeguard_report.to_dict() if self.safeguard_report else None,
            "pre_verdict": self.pre_verdict.to_dict() if self.pre_verdict else None,
            "post_verdict": self.post_verdict.to_dict() if self.post_verdict else None,
            "dispatch_log": [e.to_dict() for e in self.dispatch_log],
            "start_covered_gates": list(self.start_covered_gates),
            "final_snapshot_version": self.final_snapshot_version,
            "hybrid_success": self.hybrid_success,
            "strict_success": self.strict_success,
            "latency": self.latency.to_dict(),
            "terminal_state": self.terminal_state,
            "error": self.error,
        }
