"""Policy-aware LLM mission orchestration for simulated field assets.

Natural-language commands are grounded against a verbatim policy rule set by
lexical retrieval, turned into structured action plans by a pluggable LLM
backend, checked by deterministic safeguards and an LLM judge, dispatched to
devices over a line-JSON TCP protocol, and verified post-execution against
live telemetry.
"""

from .config import GATE_FRAMES, OrchestratorConfig, load_config
from .errors import FieldopsError, GatewayError, PlanParseError, UnknownAssetError
from .evaluation import ScenarioSuite, SuiteReport, run_suite
from .gateway import BackendConfig, RemoteBackend, ScriptedBackend, make_backend
from .knowledge import (
    AssetState,
    KnowledgeBase,
    PolicyRule,
    RuleSet,
    TelemetrySnapshot,
    default_rules,
    load_rules,
)
from .orchestrator import Orchestrator
from .plans import Action, ActionPlan, SafeguardReport, Violation, parse_plan
from .protocol import ProtocolError
from .records import MissionRecord, TERMINAL_STATES
from .retrieval import ScoredRule, retrieve_top_k
from .simnet import Fleet, WorldModel, default_world, spawn_fleet

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionPlan",
    "AssetState",
    "BackendConfig",
    "FieldopsError",
    "Fleet",
    "GATE_FRAMES",
    "GatewayError",
    "KnowledgeBase",
    "MissionRecord",
    "Orchestrator",
    "OrchestratorConfig",
    "PlanParseError",
    "PolicyRule",
    "ProtocolError",
    "RemoteBackend",
    "RuleSet",
    "SafeguardReport",
    "ScenarioSuite",
    "ScoredRule",
    "ScriptedBackend",
    "SuiteReport",
    "TERMINAL_STATES",
    "TelemetrySnapshot",
    "UnknownAssetError",
    "Violation",
    "WorldModel",
    "default_rules",
    "default_world",
    "load_config",
    "load_rules",
    "make_backend",
    "parse_plan",
    "retrieve_top_k",
    "run_suite",
    "spawn_fleet",
    "__version__",
]
