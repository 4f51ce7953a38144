"""Runtime configuration: an orchestrator.toml file with every key mirrored by
a FIELDOPS_* environment variable (environment wins over file, file over defaults)."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .gateway import DEFAULT_MODEL, DEFAULT_TIMEOUT_MS, BackendConfig

DEFAULT_DEVICE_PORT = 8765
DEFAULT_API_PORT = 8080

# Symmetric cross around the checkpoint: equal travel distance to every gate.
DEFAULT_FRAMES: dict[str, tuple[float, float]] = {
    "FRAME_Checkpoint": (0.0, 0.0),
    "FRAME_NorthGate": (0.0, 100.0),
    "FRAME_EastGate": (100.0, 0.0),
    "FRAME_SouthGate": (0.0, -100.0),
    "FRAME_WestGate": (-100.0, 0.0),
}

GATE_FRAMES = ("FRAME_NorthGate", "FRAME_EastGate", "FRAME_SouthGate", "FRAME_WestGate")
BASE_FRAME = "FRAME_Checkpoint"


@dataclass
class OrchestratorConfig:
    device_host: str = "127.0.0.1"
    device_port: int = DEFAULT_DEVICE_PORT
    api_host: str = "127.0.0.1"
    api_port: int = DEFAULT_API_PORT
    log_dir: str = "."
    action_deadline_s: float = 60.0
    battery_threshold_pct: float = 20.0
    base_frame: str = BASE_FRAME
    gate_frames: tuple[str, ...] = GATE_FRAMES
    frames: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_FRAMES))
    backend: BackendConfig = field(default_factory=lambda: BackendConfig.from_env(dict(os.environ)))
    judge_backend: Optional[BackendConfig] = None  # None -> share the decision backend

    @property
    def missions_log(self) -> Path:
        return Path(self.log_dir) / "missions.log"

    @property
    def telemetry_log(self) -> Path:
        return Path(self.log_dir) / "telemetry.log"


_ENV_KEYS = {
    "FIELDOPS_DEVICE_HOST": ("device_host", str),
    "FIELDOPS_DEVICE_PORT": ("device_port", int),
    "FIELDOPS_API_HOST": ("api_host", str),
    "FIELDOPS_API_PORT": ("api_port", int),
    "FIELDOPS_LOG_DIR": ("log_dir", str),
    "FIELDOPS_ACTION_DEADLINE_S": ("action_deadline_s", float),
    "FIELDOPS_BATTERY_THRESHOLD_PCT": ("battery_threshold_pct", float),
    "FIELDOPS_BASE_FRAME": ("base_frame", str),
}


def _backend_from_table(table: dict) -> Optional[BackendConfig]:
    script = table.get("script")
    endpoint = table.get("endpoint")
    timeout_ms = int(table.get("timeout_ms", DEFAULT_TIMEOUT_MS))
    if script:
        return BackendConfig(kind="scripted", script_path=str(script),
                             request_timeout_ms=timeout_ms)
    if endpoint:
        return BackendConfig(kind="remote", endpoint=str(endpoint),
                             model_name=str(table.get("model", DEFAULT_MODEL)),
                             request_timeout_ms=timeout_ms)
    return None


def load_config(path: Optional[str] = None, env: Optional[dict] = None) -> OrchestratorConfig:
    """Build a config from defaults <- toml file (if given/found) <- environment."""
    env = dict(os.environ) if env is None else env
    cfg = OrchestratorConfig(backend=BackendConfig.from_env(env))

    file_path = path or env.get("FIELDOPS_CONFIG")
    if file_path is None and Path("orchestrator.toml").is_file():
        file_path = "orchestrator.toml"
    if file_path:
        with open(file_path, "rb") as fh:
            doc = tomllib.load(fh)
        server = doc.get("server", {})
        pipeline = doc.get("pipeline", {})
        logging_t = doc.get("logging", {})
        updates: dict = {}
        for key in ("device_host", "api_host"):
            if key in server:
                updates[key] = str(server[key])
        for key in ("device_port", "api_port"):
            if key in server:
                updates[key] = int(server[key])
        if "log_dir" in logging_t:
            updates["log_dir"] = str(logging_t["log_dir"])
        if "action_deadline_s" in pipeline:
            updates["action_deadline_s"] = float(pipeline["action_deadline_s"])
        if "battery_threshold_pct" in pipeline:
            updates["battery_threshold_pct"] = float(pipeline["battery_threshold_pct"])
        if "base_frame" in pipeline:
            updates["base_frame"] = str(pipeline["base_frame"])
        if "gate_frames" in pipeline:
            updates["gate_frames"] = tuple(str(f) for f in pipeline["gate_frames"])
        if "frames" in doc:
            updates["frames"] = {
                str(name): (float(xy[0]), float(xy[1])) for name, xy in doc["frames"].items()
            }
        cfg = replace(cfg, **updates)
        llm_backend = _backend_from_table(doc.get("llm", {}))
        if llm_backend and "LLM_SCRIPT" not in env and "LLM_ENDPOINT" not in env:
            cfg = replace(cfg, backend=llm_backend)
        judge_backend = _backend_from_table(doc.get("judge", {}))
        if judge_backend:
            cfg = replace(cfg, judge_backend=judge_backend)

    env_updates: dict = {}
    for var, (attr, cast) in _ENV_KEYS.items():
        if var in env:
            env_updates[attr] = cast(env[var])
    if env_updates:
        cfg = replace(cfg, **env_updates)
    return cfg
