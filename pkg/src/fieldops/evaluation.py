"""Ten-prompt evaluation suite: strict outcome grading, confusion metrics, reports.

Two gradings exist for every mission. Hybrid success is the judge pipeline's
own final call (model verdict fused with the deterministic telemetry check).
Strict success re-derives the outcome from ground truth alone: completion,
telemetry, rule compliance against the final world state, and retained gate
coverage. Comparing the two yields the TP/FP/FN/TN confusion cells.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .gateway import BackendConfig
from .judging import deterministic_post_check
from .knowledge import RuleSet, TelemetrySnapshot, coverage
from .plans import DEFAULT_BASE_FRAME, DEFAULT_GATE_FRAMES, LOW_BATTERY_TASK_PCT, check_safeguards
from .records import COMPLETED, MissionRecord

SUITE_PROMPTS = (
    "Hold all positions.",
    "Move the drone to the east gate.",
    "An unknown vehicle is approaching the west gate.",
    "An unknown vehicle approaches the west gate while surveillance at the south gate is lost.",
    "Unknown vehicles are approaching both the north and east gates.",
    "An unknown vehicle approaches the north gate while a minor disturbance is reported at the west gate.",
    "The situation at the west gate is resolved. Resume normal checkpoint security.",
    "The drone at the south gate is unavailable. Maintain full gate coverage.",
    "Send all assets to the east gate immediately.",
    "Respond to a possible breach at the north gate while maintaining coverage at all other gates.",
)

CATEGORIES = ("baseline", "unknown_events", "multi_event", "recovery", "policy")

# 1-indexed prompt number -> category.
DEFAULT_CATEGORY_MAP = {
    1: "baseline", 2: "baseline",
    3: "unknown_events",
    4: "multi_event", 5: "multi_event", 6: "multi_event",
    7: "recovery", 8: "recovery",
    9: "policy", 10: "policy",
}


@dataclass(frozen=True)
class ScenarioSuite:
    prompts: tuple[str, ...] = SUITE_PROMPTS
    category_map: dict = field(default_factory=lambda: dict(DEFAULT_CATEGORY_MAP))

    def __post_init__(self):
        if len(self.prompts) != 10:
            raise ValueError(f"suite must contain exactly 10 prompts, got {len(self.prompts)}")
        if set(self.category_map) != set(range(1, len(self.prompts) + 1)):
            raise ValueError("category_map must cover every prompt index exactly once")
        unknown = {c for c in self.category_map.values() if c not in CATEGORIES}
        if unknown:
            raise ValueError(f"unknown categories: {sorted(unknown)}")

    def category(self, prompt_number: int) -> str:
        return self.category_map[prompt_number]


def strict_evaluate(record: MissionRecord, final_snapshot: TelemetrySnapshot,
                    rules: RuleSet,
                    gate_frames=DEFAULT_GATE_FRAMES,
                    base_frame: str = DEFAULT_BASE_FRAME,
                    battery_threshold: float = LOW_BATTERY_TASK_PCT) -> bool:
    """Ground-truth grading, independent of any model verdict.

    True iff the mission completed, every dispatched action finished, the
    telemetry check confirms the commanded outcomes, the executed plan still
    clears every rule check against the final world state, and no gate that
    was covered when the mission started has been left uncovered.
    """
    if record.terminal_state != COMPLETED or record.plan is None:
        return False
    if not all(e.complete_time is not None for e in record.dispatch_log):
        return False
    if not deterministic_post_check(record.plan, final_snapshot, record.dispatch_log):
        return False
    report = check_safeguards(record.plan, final_snapshot, rules,
                              gate_frames=gate_frames, base_frame=base_frame,
                              battery_threshold=battery_threshold)
    if not report.passed:
        return False
    final_coverage = coverage(final_snapshot, gate_frames)
    return all(final_coverage.get(g, 0) > 0 for g in record.start_covered_gates)


TP, FP, FN, TN = "TP", "FP", "FN", "TN"


def classify_outcome(record: MissionRecord) -> str:
    """Prediction = hybrid (the judge's call); ground truth = strict."""
    if record.hybrid_success:
        return TP if record.strict_success else FP
    return FN if record.strict_success else TN


def compute_metrics(tp: int, fp: int, fn: int, tn: int = 0) -> tuple[float, float, float]:
    """(precision, recall, F1); any 0-denominator term is 0 by convention."""
    if min(tp, fp, fn, tn) < 0:
        raise ValueError("confusion counts must be non-negative")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass
class SuiteReport:
    backend_label: str
    mode: str  # "fresh" | "cumulative"
    records: list[dict] = field(default_factory=list)
    outcomes: list[dict] = field(default_factory=list)  # per prompt: number/category/states
    category_hybrid_pct: dict = field(default_factory=dict)
    category_strict_pct: dict = field(default_factory=dict)
    overall_hybrid_pct: float = 0.0
    overall_strict_pct: float = 0.0
    confusion: dict = field(default_factory=lambda: {TP: 0, FP: 0, FN: 0, TN: 0})
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    latency_mean_ms: dict = field(default_factory=dict)
    incomplete: bool = False
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "backend_label": self.backend_label,
            "mode": self.mode,
            "records": self.records,
            "outcomes": self.outcomes,
            "category_hybrid_pct": self.category_hybrid_pct,
            "category_strict_pct": self.category_strict_pct,
            "overall_hybrid_pct": self.overall_hybrid_pct,
            "overall_strict_pct": self.overall_strict_pct,
            "confusion": self.confusion,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "latency_mean_ms": self.latency_mean_ms,
            "incomplete": self.incomplete,
            "error": self.error,
        }


def _pct(values: list[bool]) -> float:
    if not values:
        return 0.0
    return float(Fraction(sum(values), len(values)) * 100)


def aggregate(suite: ScenarioSuite, records: list[MissionRecord],
              backend_label: str, mode: str, incomplete: bool = False,
              error: str = "") -> SuiteReport:
    """Fold terminal mission records (in prompt order) into a SuiteReport."""
    report = SuiteReport(backend_label=backend_label, mode=mode,
                         incomplete=incomplete or len(records) < len(suite.prompts),
                         error=error)
    by_category_h: dict[str, list[bool]] = {c: [] for c in CATEGORIES}
    by_category_s: dict[str, list[bool]] = {c: [] for c in CATEGORIES}
    hybrid_all, strict_all = [], []
    for i, record in enumerate(records, start=1):
        category = suite.category(i)
        by_category_h[category].append(record.hybrid_success)
        by_category_s[category].append(record.strict_success)
        hybrid_all.append(record.hybrid_success)
        strict_all.append(record.strict_success)
        cell = classify_outcome(record)
        report.confusion[cell] += 1
        report.records.append(record.to_dict())
        report.outcomes.append({
            "prompt_number": i,
            "prompt": record.command_text,
            "category": category,
            "terminal_state": record.terminal_state,
            "hybrid_success": record.hybrid_success,
            "strict_success": record.strict_success,
            "classification": cell,
        })
    report.category_hybrid_pct = {c: _pct(v) for c, v in by_category_h.items() if v}
    report.category_strict_pct = {c: _pct(v) for c, v in by_category_s.items() if v}
    report.overall_hybrid_pct = _pct(hybrid_all)
    report.overall_strict_pct = _pct(strict_all)
    report.precision, report.recall, report.f1 = compute_metrics(
        report.confusion[TP], report.confusion[FP], report.confusion[FN], report.confusion[TN])
    if records:
        report.latency_mean_ms = {
            stage: statistics.fmean(getattr(r.latency, stage) for r in records)
            for stage in ("retrieval_ms", "inference_ms", "judge_ms", "dispatch_ms", "total_ms")
        }
    return report


# Fields whose values depend on wall clock or run identity, not behaviour.
# decision_prompt embeds telemetry battery levels, which advance with simulated
# time exactly like a timestamp does, so it is stripped alongside them.
VOLATILE_KEYS = frozenset({
    "id", "mission_id", "received_at", "started_at", "finished_at",
    "sent_time", "ack_time", "complete_time", "last_update", "snapshot_time",
    "version", "final_snapshot_version", "latency", "latency_mean_ms",
    "inference_duration_ms", "ts", "decision_prompt", "generated_at",
})


def stable_view(value):
    """Recursively drop run-identity/timing fields; what remains must be
    byte-identical across repeated scripted runs."""
    if isinstance(value, dict):
        return {k: stable_view(v) for k, v in sorted(value.items()) if k not in VOLATILE_KEYS}
    if isinstance(value, list):
        return [stable_view(v) for v in value]
    return value


def render_table(report: SuiteReport) -> str:
    """Plain-text per-category success table plus the confusion summary."""
    lines = []
    lines.append(f"Backend: {report.backend_label}   mode: {report.mode}")
    lines.append("")
    header = f"{'Scenario category':<22}{'Hybrid %':>10}{'Strict %':>10}"
    lines.append(header)
    lines.append("-" * len(header))
    for category in CATEGORIES:
        if category not in report.category_hybrid_pct:
            continue
        lines.append(f"{category:<22}{report.category_hybrid_pct[category]:>10.1f}"
                     f"{report.category_strict_pct[category]:>10.1f}")
    lines.append("-" * len(header))
    lines.append(f"{'overall':<22}{report.overall_hybrid_pct:>10.1f}{report.overall_strict_pct:>10.1f}")
    lines.append("")
    c = report.confusion
    lines.append(f"Confusion: TP={c['TP']} FP={c['FP']} FN={c['FN']} TN={c['TN']}")
    lines.append(f"Precision={report.precision:.3f} Recall={report.recall:.3f} F1={report.f1:.3f}")
    if report.latency_mean_ms:
        lines.append("")
        lines.append("Mean latency (ms): " + "  ".join(
            f"{stage.removesuffix('_ms')}={value:.1f}"
            for stage, value in report.latency_mean_ms.items()))
    if report.incomplete:
        lines.append("")
        lines.append(f"INCOMPLETE RUN: {report.error or 'missing missions'}")
    return "\n".join(lines) + "\n"


def render_latency_csv(report: SuiteReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["prompt_number", "terminal_state", "retrieval_ms", "inference_ms",
                     "judge_ms", "dispatch_ms", "total_ms"])
    for i, rec in enumerate(report.records, start=1):
        lat = rec["latency"]
        writer.writerow([i, rec["terminal_state"], lat["retrieval_ms"], lat["inference_ms"],
                         lat["judge_ms"], lat["dispatch_ms"], lat["total_ms"]])
    return buf.getvalue()


def write_reports(report: SuiteReport, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n",
                                     encoding="utf-8")
    (out / "table1.txt").write_text(render_table(report), encoding="utf-8")
    (out / "latency.csv").write_text(render_latency_csv(report), encoding="utf-8")


def run_suite(backend_cfg: BackendConfig, *, suite: Optional[ScenarioSuite] = None,
              cumulative: bool = False, out_dir: Optional[str] = None,
              seed: int = 0, realtime: bool = False,
              action_deadline_s: float = 60.0) -> SuiteReport:
    """Run all ten prompts end-to-end against a live orchestrator + simulated fleet.

    Default protocol boots a fresh world per prompt so failures cannot
    cascade; cumulative mode keeps one world for all ten. The backend object
    is shared across the whole run either way, so a scripted backend consumes
    its entries in suite order.
    """
    from .gateway import make_backend
    from .orchestrator import Orchestrator
    from .simnet import Fleet, default_world

    suite = suite or ScenarioSuite()
    backend = make_backend(backend_cfg)
    mode = "cumulative" if cumulative else "fresh"
    records: list[MissionRecord] = []
    error = ""

    import tempfile
    with tempfile.TemporaryDirectory(prefix="fieldops-eval-") as log_dir:
        from .config import OrchestratorConfig

        def new_stack():
            cfg = OrchestratorConfig(device_port=0, api_port=0, log_dir=log_dir,
                                     backend=backend_cfg,
                                     action_deadline_s=action_deadline_s)
            orch = Orchestrator(cfg, backend=backend, judge_backend=backend)
            orch.start()
            fleet = Fleet(default_world(seed=seed), "127.0.0.1", orch.device_port,
                          realtime=realtime)
            fleet.start()
            orch.wait_for_assets(len(fleet.world.assets), timeout=10.0)
            return orch, fleet

        orch = fleet = None
        try:
            if cumulative:
                orch, fleet = new_stack()
            for prompt in suite.prompts:
                if not cumulative:
                    orch, fleet = new_stack()
                try:
                    mission_id = orch.submit_mission(prompt)
                    record = orch.wait_terminal(mission_id, timeout=max(action_deadline_s * 2, 120))
                    if record is None:
                        error = f"mission for prompt {prompt!r} did not reach a terminal state"
                        break
                    records.append(record)
                finally:
                    if not cumulative:
                        fleet.stop()
                        orch.stop()
                        orch = fleet = None
        except Exception as exc:  # backend unreachable etc. -> partial report
            error = str(exc)
        finally:
            if fleet is not None:
                fleet.stop()
            if orch is not None:
                orch.stop()

    label = getattr(backend, "label", backend_cfg.kind)
    report = aggregate(suite, records, backend_label=label, mode=mode,
                       incomplete=bool(error), error=error)
    if out_dir:
        write_reports(report, out_dir)
    return report
