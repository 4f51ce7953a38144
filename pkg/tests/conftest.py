"""Shared fixtures: rule set, snapshot builders, live orchestrator stacks."""

import pytest

from fieldops.config import OrchestratorConfig
from fieldops.gateway import BackendConfig, make_backend
from fieldops.knowledge import AssetState, KnowledgeBase, default_rules
from fieldops.orchestrator import Orchestrator
from fieldops.simnet import Fleet, default_world

# The canonical four-asset posture: one gate uncovered (east), robot at base.
DEFAULT_POSTURE = (
    ("FRAME_Drone_T01", "uav", "FRAME_WestGate"),
    ("FRAME_Drone_T02", "uav", "FRAME_NorthGate"),
    ("FRAME_Robot_T01", "robot", "FRAME_Checkpoint"),
    ("FRAME_Ugv_T01", "ugv", "FRAME_SouthGate"),
)


@pytest.fixture(scope="session")
def rules():
    return default_rules()


def make_snapshot(overrides=None, posture=DEFAULT_POSTURE):
    """Build a TelemetrySnapshot from the default posture.

    overrides: {asset_name: {field: value}} applied to the AssetState kwargs.
    """
    overrides = overrides or {}
    kb = KnowledgeBase()
    for name, kind, frame in posture:
        kwargs = dict(name=name, kind=kind, location_frame=frame,
                      position=(0.0, 0.0), status="active",
                      battery_pct=100.0, last_update=0)
        kwargs.update(overrides.get(name, {}))
        kb.register_asset(AssetState(**kwargs))
    return kb.snapshot()


@pytest.fixture
def snapshot():
    return make_snapshot()


@pytest.fixture
def live_stack(tmp_path):
    """Factory for a running orchestrator + simulated fleet, torn down at exit.

    Returns build(script, ...) -> (orchestrator, fleet). The scripted backend
    instance is shared between decision and judge roles, exactly as the
    shipped evaluation runs do.
    """
    opened = []

    def build(script, *, seed=0, world=None, realtime=False,
              action_deadline_s=60.0):
        backend_cfg = BackendConfig(kind="scripted", script_path=script)
        backend = make_backend(backend_cfg)
        log_dir = tmp_path / f"stack{len(opened)}"
        log_dir.mkdir()
        cfg = OrchestratorConfig(device_port=0, api_port=0, log_dir=str(log_dir),
                                 backend=backend_cfg,
                                 action_deadline_s=action_deadline_s)
        orch = Orchestrator(cfg, backend=backend, judge_backend=backend)
        orch.start()
        fleet = Fleet(world or default_world(seed=seed), "127.0.0.1",
                      orch.device_port, realtime=realtime)
        fleet.start()
        assert orch.wait_for_assets(len(fleet.world.assets), timeout=10.0)
        opened.append((orch, fleet))
        return orch, fleet

    yield build
    for orch, fleet in reversed(opened):
        fleet.stop()
        orch.stop()
