"""Command-line front door: serve, send, status, retrieve, eval, simnet."""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import threading
import urllib.error
import urllib.request
from pathlib import Path

from .errors import FieldopsError


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    # Flag twins of LLM_ENDPOINT / LLM_MODEL / LLM_TIMEOUT_MS / LLM_SCRIPT.
    parser.add_argument("--endpoint", help="LLM server base URL")
    parser.add_argument("--model", help="model name sent to the LLM server")
    parser.add_argument("--timeout-ms", type=int, help="LLM request timeout")
    parser.add_argument("--script", help="scripted-backend file (or shipped name)")


def _backend_env(args: argparse.Namespace) -> dict[str, str]:
    """Merge backend CLI flags over the process environment."""
    env = dict(os.environ)
    if args.endpoint:
        env["LLM_ENDPOINT"] = args.endpoint
    if args.model:
        env["LLM_MODEL"] = args.model
    if args.timeout_ms is not None:
        env["LLM_TIMEOUT_MS"] = str(args.timeout_ms)
    if args.script:
        env["LLM_SCRIPT"] = args.script
    return env


def _api_base(args: argparse.Namespace) -> str:
    return (args.api or os.environ.get("FIELDOPS_API")
            or "http://127.0.0.1:8080").rstrip("/")


def _http_json(url: str, payload: dict | None = None, timeout: float = 30.0) -> dict:
    data = None
    headers = {}
    if payload is not None:
        data = json.dumps(payload).encode("utf-8")
        headers["Content-Type"] = "application/json"
    req = urllib.request.Request(url, data=data, headers=headers)
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        detail = exc.read().decode("utf-8", "replace").strip()
        raise FieldopsError(f"{url}: HTTP {exc.code} {detail}") from exc
    except urllib.error.URLError as exc:
        raise FieldopsError(f"{url}: {exc.reason}") from exc


# ----------------------------------------------------------------- commands

def cmd_serve(args: argparse.Namespace) -> int:
    from dataclasses import replace

    from .api import OperatorAPI
    from .config import load_config
    from .knowledge import default_rules, load_rules
    from .orchestrator import Orchestrator

    cfg = load_config(args.config, env=_backend_env(args))
    if args.device_port is not None:
        cfg = replace(cfg, device_port=args.device_port)
    if args.api_port is not None:
        cfg = replace(cfg, api_port=args.api_port)
    if args.log_dir is not None:
        cfg = replace(cfg, log_dir=args.log_dir)

    rules = load_rules(args.rules) if args.rules else default_rules()
    orch = Orchestrator(cfg, rules=rules)
    orch.start()
    api = OperatorAPI(orch, cfg.api_host, cfg.api_port)
    api.start()

    # Install handlers before announcing readiness: anything watching stdout
    # may signal us the moment the banner appears.
    done = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: done.set())
    signal.signal(signal.SIGTERM, lambda *_: done.set())

    print(f"device protocol on {cfg.device_host}:{orch.device_port}", flush=True)
    print(f"operator API on http://{cfg.api_host}:{api.port}", flush=True)
    print(f"logs in {cfg.log_dir}", flush=True)
    done.wait()
    print("shutting down", flush=True)
    api.stop()
    orch.stop()
    return 0


def cmd_send(args: argparse.Namespace) -> int:
    base = _api_base(args)
    reply = _http_json(f"{base}/missions", {"text": args.text})
    mission_id = reply["mission_id"]
    if not args.wait:
        print(json.dumps(reply))
        return 0
    import time
    deadline = time.time() + args.wait
    while time.time() < deadline:
        record = _http_json(f"{base}/missions/{mission_id}")
        if record.get("terminal_state"):
            print(json.dumps(record, indent=2))
            return 0 if record["terminal_state"] == "completed" else 1
        time.sleep(0.2)
    print(json.dumps({"mission_id": mission_id, "error": "wait timed out"}))
    return 1


def cmd_status(args: argparse.Namespace) -> int:
    print(json.dumps(_http_json(f"{_api_base(args)}/state"), indent=2))
    return 0


def cmd_retrieve(args: argparse.Namespace) -> int:
    from .knowledge import default_rules, load_rules
    from .retrieval import retrieve_top_k

    rules = load_rules(args.rules) if args.rules else default_rules()
    for scored in retrieve_top_k(args.query, rules, k=args.k):
        print(json.dumps(scored.to_dict()))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from .evaluation import run_suite
    from .gateway import BackendConfig

    env = _backend_env(args)
    if args.backend == "scripted":
        script = args.script or env.get("LLM_SCRIPT")
        if not script:
            print("eval --backend scripted requires --script", file=sys.stderr)
            return 2
        backend_cfg = BackendConfig(kind="scripted", script_path=script)
    else:
        backend_cfg = BackendConfig.from_env(env)
        if backend_cfg.kind != "remote":
            backend_cfg = BackendConfig(kind="remote", endpoint=backend_cfg.endpoint,
                                        model_name=backend_cfg.model_name,
                                        request_timeout_ms=backend_cfg.request_timeout_ms)

    out_dir = Path(args.out)
    report = run_suite(backend_cfg, cumulative=args.cumulative, out_dir=out_dir,
                       seed=args.seed)
    print((out_dir / "table1.txt").read_text(encoding="utf-8"))
    if report.error:
        print(f"suite aborted: {report.error}", file=sys.stderr)
    return 1 if (report.incomplete or report.error) else 0


def cmd_simnet_run(args: argparse.Namespace) -> int:
    from .simnet import Fleet, FleetControl, default_world, world_from_file

    world = (world_from_file(args.fleet, seed=args.seed) if args.fleet
             else default_world(seed=args.seed))
    fleet = Fleet(world, args.host, args.port, realtime=args.realtime)
    fleet.start()
    control = FleetControl(fleet, "127.0.0.1", args.control_port)
    control.start()

    # Install handlers before announcing readiness: anything watching stdout
    # may signal us the moment the banner appears.
    done = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: done.set())
    signal.signal(signal.SIGTERM, lambda *_: done.set())

    print(f"{len(world.assets)} assets connected to {args.host}:{args.port}", flush=True)
    print(f"control socket on 127.0.0.1:{control.port}", flush=True)
    done.wait()
    control.stop()
    fleet.stop()
    return 0


def cmd_simnet_inject(args: argparse.Namespace) -> int:
    from .simnet import send_inject

    name = send_inject(args.kind, args.frame, port=args.control_port)
    print(json.dumps({"ok": True, "name": name}))
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fieldops",
                                     description="Policy-aware mission orchestration "
                                                 "for simulated field assets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the orchestrator and operator API")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--device-port", type=int, help="device protocol port")
    p.add_argument("--api-port", type=int, help="operator API port")
    p.add_argument("--log-dir", help="directory for missions.log / telemetry.log")
    p.add_argument("--rules", help="policy rules JSON file")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("send", help="submit a mission command")
    p.add_argument("--text", required=True, help="natural-language command")
    p.add_argument("--api", help="operator API base URL")
    p.add_argument("--wait", type=float, default=0.0, metavar="SECONDS",
                   help="poll until terminal and print the full record")
    p.set_defaults(func=cmd_send)

    p = sub.add_parser("status", help="print queue, devices, and telemetry")
    p.add_argument("--api", help="operator API base URL")
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("retrieve", help="score policy rules against a query")
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--rules", help="policy rules JSON file")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval", help="run the scenario suite and write reports")
    p.add_argument("--backend", choices=("remote", "scripted"), required=True)
    p.add_argument("--cumulative", action="store_true",
                   help="carry world state across prompts instead of resetting")
    p.add_argument("--out", default="eval_out", help="report directory")
    p.add_argument("--seed", type=int, default=0)
    _add_backend_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simnet", help="simulated fleet")
    simsub = p.add_subparsers(dest="simnet_command", required=True)

    q = simsub.add_parser("run", help="connect a simulated fleet to an orchestrator")
    q.add_argument("--host", default="127.0.0.1")
    q.add_argument("--port", type=int, default=8765)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--realtime", action="store_true",
                   help="tick on the wall clock instead of free-running")
    q.add_argument("--fleet", help="fleet config JSON file")
    q.add_argument("--control-port", type=int, default=8766)
    q.set_defaults(func=cmd_simnet_run)

    q = simsub.add_parser("inject", help="inject an event into a running fleet")
    q.add_argument("--kind", required=True,
                   choices=("unknown_vehicle", "low_battery", "resolved"))
    q.add_argument("--frame", required=True)
    q.add_argument("--control-port", type=int, default=8766)
    q.set_defaults(func=cmd_simnet_inject)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FieldopsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
