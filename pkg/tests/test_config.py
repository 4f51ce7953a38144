"""Configuration layering: defaults, toml file, environment overrides."""

import pytest

from fieldops.config import (
    BASE_FRAME,
    DEFAULT_FRAMES,
    GATE_FRAMES,
    OrchestratorConfig,
    load_config,
)

FULL_TOML = """
[server]
device_host = "0.0.0.0"
device_port = 9001
api_host = "0.0.0.0"
api_port = 9002

[pipeline]
action_deadline_s = 12.5
battery_threshold_pct = 25.0
base_frame = "FRAME_Depot"
gate_frames = ["FRAME_NorthGate", "FRAME_EastGate"]

[logging]
log_dir = "/tmp/fieldops-logs"

[frames]
FRAME_Depot = [1.0, 2.0]
FRAME_NorthGate = [0.0, 50.0]
FRAME_EastGate = [50.0, 0.0]

[llm]
endpoint = "http://127.0.0.1:9999"
model = "tiny-model"
timeout_ms = 4000

[judge]
script = "compliant"
"""


def write_toml(tmp_path, text, name="orchestrator.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_defaults_without_file():
    cfg = load_config(path=None, env={})
    assert cfg.device_port == 8765
    assert cfg.api_port == 8080
    assert cfg.log_dir == "."
    assert cfg.action_deadline_s == 60.0
    assert cfg.battery_threshold_pct == 20.0
    assert cfg.base_frame == BASE_FRAME
    assert cfg.gate_frames == GATE_FRAMES
    assert cfg.frames == DEFAULT_FRAMES
    assert cfg.backend.kind == "remote"  # no script configured anywhere
    assert cfg.judge_backend is None


def test_frame_layout_is_symmetric_cross():
    # every gate is equidistant from the base frame
    bx, by = DEFAULT_FRAMES[BASE_FRAME]
    dists = {g: ((DEFAULT_FRAMES[g][0] - bx) ** 2 + (DEFAULT_FRAMES[g][1] - by) ** 2) ** 0.5
             for g in GATE_FRAMES}
    assert set(dists.values()) == {100.0}


def test_file_overrides_defaults(tmp_path):
    cfg = load_config(path=write_toml(tmp_path, FULL_TOML), env={})
    assert cfg.device_host == "0.0.0.0" and cfg.device_port == 9001
    assert cfg.api_port == 9002
    assert cfg.log_dir == "/tmp/fieldops-logs"
    assert cfg.action_deadline_s == 12.5
    assert cfg.battery_threshold_pct == 25.0
    assert cfg.base_frame == "FRAME_Depot"
    assert cfg.gate_frames == ("FRAME_NorthGate", "FRAME_EastGate")
    assert cfg.frames == {"FRAME_Depot": (1.0, 2.0), "FRAME_NorthGate": (0.0, 50.0),
                          "FRAME_EastGate": (50.0, 0.0)}
    assert cfg.backend.kind == "remote"
    assert cfg.backend.endpoint == "http://127.0.0.1:9999"
    assert cfg.backend.model_name == "tiny-model"
    assert cfg.backend.request_timeout_ms == 4000
    assert cfg.judge_backend is not None and cfg.judge_backend.kind == "scripted"


def test_partial_file_keeps_other_defaults(tmp_path):
    cfg = load_config(path=write_toml(tmp_path, '[server]\napi_port = 9100\n'), env={})
    assert cfg.api_port == 9100
    assert cfg.device_port == 8765
    assert cfg.frames == DEFAULT_FRAMES


def test_env_overrides_file(tmp_path):
    env = {
        "FIELDOPS_API_PORT": "9200",
        "FIELDOPS_LOG_DIR": "/tmp/env-logs",
        "FIELDOPS_ACTION_DEADLINE_S": "3.5",
        "FIELDOPS_BATTERY_THRESHOLD_PCT": "30",
        "FIELDOPS_BASE_FRAME": "FRAME_EnvBase",
    }
    cfg = load_config(path=write_toml(tmp_path, FULL_TOML), env=env)
    assert cfg.api_port == 9200
    assert cfg.log_dir == "/tmp/env-logs"
    assert cfg.action_deadline_s == 3.5
    assert cfg.battery_threshold_pct == 30.0
    assert cfg.base_frame == "FRAME_EnvBase"
    # untouched keys still come from the file
    assert cfg.device_port == 9001


def test_env_backend_beats_file_llm_table(tmp_path):
    path = write_toml(tmp_path, FULL_TOML)
    cfg = load_config(path=path, env={"LLM_SCRIPT": "compliant"})
    assert cfg.backend.kind == "scripted"
    assert cfg.backend.script_path == "compliant"
    cfg = load_config(path=path, env={"LLM_ENDPOINT": "http://env:1", "LLM_MODEL": "env-m"})
    assert cfg.backend.endpoint == "http://env:1"


def test_file_llm_script_mode(tmp_path):
    cfg = load_config(path=write_toml(tmp_path, '[llm]\nscript = "faulty"\n'), env={})
    assert cfg.backend.kind == "scripted"
    assert cfg.backend.script_path == "faulty"


def test_config_file_from_env_var(tmp_path):
    path = write_toml(tmp_path, '[server]\napi_port = 9300\n')
    cfg = load_config(path=None, env={"FIELDOPS_CONFIG": path})
    assert cfg.api_port == 9300


def test_explicit_path_missing_file_raises(tmp_path):
    with pytest.raises(OSError):
        load_config(path=str(tmp_path / "nope.toml"), env={})


def test_log_path_properties(tmp_path):
    cfg = OrchestratorConfig(log_dir=str(tmp_path))
    assert cfg.missions_log == tmp_path / "missions.log"
    assert cfg.telemetry_log == tmp_path / "telemetry.log"
