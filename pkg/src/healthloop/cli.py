"""Command-line client for the simulation service.

Every subcommand talks to the HTTP API: by default an in-process
instance of the app (no server needed), or a remote base URL via
--server. Outputs land as files under --out plus a short stdout
summary; failures print one machine-readable JSON line on stderr and
exit nonzero.
"""
from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
from typing import Any

import httpx
import yaml

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ERROR = 2


def _fail(message: str, code: int = EXIT_ERROR) -> int:
    sys.stderr.write(json.dumps({"error": message}) + "\n")
    return code


class ServiceClient:
    """Thin HTTP client; in-process unless --server is given."""

    def __init__(self, server: str | None = None):
        self.server = server.rstrip("/") if server else None

    def request(self, method: str, path: str, payload: dict | None = None) -> tuple[int, Any]:
        if self.server:
            with httpx.Client(base_url=self.server, timeout=600.0) as client:
                resp = client.request(method, path, json=payload)
                return (resp.status_code, resp.json())

        async def go() -> tuple[int, Any]:
            from .service import create_app

            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(
                transport=transport, base_url="http://healthloop.local", timeout=600.0
            ) as client:
                resp = await client.request(method, path, json=payload)
                return (resp.status_code, resp.json())

        return asyncio.run(go())

    def post(self, path: str, payload: dict) -> tuple[int, Any]:
        return self.request("POST", path, payload)

    def get(self, path: str) -> tuple[int, Any]:
        return self.request("GET", path)


def _load_yaml_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError("config root must be a mapping")
    return data


def _write(out_dir: str, name: str, content: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(content)
    return path


def _error_of(status: int, data: Any) -> str:
    if isinstance(data, dict):
        if "error" in data:
            return str(data["error"])
        if "detail" in data:
            return json.dumps(data["detail"])
    return f"service returned status {status}"


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = _load_yaml_config(args.config)
    except (OSError, yaml.YAMLError, ValueError) as exc:
        return _fail(f"config {args.config}: {exc}")
    payload = {"config": config, "seed": args.seed, "arm": args.arm}
    status, data = ServiceClient(args.server).post("/run", payload)
    if status != 200:
        return _fail(_error_of(status, data))
    _write(args.out, "metrics.csv", data["metrics_csv"])
    _write(args.out, "trace.csv", data["trace_csv"])
    _write(args.out, "daily.csv", data["daily_csv"])
    _write(args.out, "audit.jsonl", data["audit_jsonl"])
    _write(args.out, "events.jsonl", data["events_jsonl"])
    _write(args.out, "summary.txt", data["summary"] + "\n")
    print(data["summary"])
    print(f"artifacts written to {args.out}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    try:
        config = _load_yaml_config(args.config)
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except (OSError, yaml.YAMLError, ValueError) as exc:
        return _fail(str(exc))
    status, data = ServiceClient(args.server).post(
        "/compare", {"config": config, "seeds": seeds}
    )
    if status != 200:
        return _fail(_error_of(status, data))
    _write(args.out, "compare.csv", data["csv"])
    _write(args.out, "summary.txt", data["summary"] + "\n")
    print(data["summary"])
    print(f"artifacts written to {args.out}")
    return EXIT_OK


def cmd_mine(args: argparse.Namespace) -> int:
    try:
        with open(args.events, "r", encoding="utf-8") as fh:
            events_text = fh.read()
    except OSError as exc:
        return _fail(str(exc))
    payload = {
        "events_jsonl": events_text,
        "consequent": args.consequent,
        "window_minutes": args.window_minutes,
        "delta_minutes": args.delta_minutes,
        "min_support": args.min_support,
        "max_len": args.max_len,
    }
    status, data = ServiceClient(args.server).post("/mine", payload)
    if status != 200:
        return _fail(_error_of(status, data))
    if args.out:
        _write(args.out, "rules.csv", data["csv"])
    print(f"parsed {data['events']} events ({data['rejects']} rejected lines)")
    print(f"{len(data['rules'])} rules")
    for rule in data["rules"][:10]:
        chain = " -> ".join(rule["antecedent"])
        print(
            f"  [{chain}] support={rule['support']} hits={rule['hits']} "
            f"confidence={rule['confidence']:.3f} lift={rule['lift']:.3f}"
        )
    if args.out:
        print(f"rules.csv written to {args.out}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        with open(args.events, "r", encoding="utf-8") as fh:
            events_text = fh.read()
    except OSError as exc:
        return _fail(str(exc))
    payload = {"events_jsonl": events_text, "alpha": args.alpha, "beta": args.beta}
    status, data = ServiceClient(args.server).post("/report", payload)
    if status != 200:
        return _fail(_error_of(status, data))
    _write(args.out, "waveform.csv", data["waveform_csv"])
    _write(args.out, "risk.csv", data["risk_csv"])
    print(
        f"report over {data['days']} days from {data['events']} events "
        f"({data['rejects']} rejected lines)"
    )
    print(f"artifacts written to {args.out}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    if bool(args.config) == bool(args.events):
        return _fail("validate needs exactly one of --config or --events")
    kind = "config" if args.config else "events"
    path = args.config or args.events
    try:
        with open(path, "r", encoding="utf-8") as fh:
            content = fh.read()
    except OSError as exc:
        return _fail(str(exc))
    status, data = ServiceClient(args.server).post(
        "/validate", {"kind": kind, "content": content}
    )
    if status != 200:
        return _fail(_error_of(status, data))
    if data["valid"]:
        extra = f" ({data['events']} events)" if kind == "events" else ""
        print(f"{path}: ok{extra}")
        return EXIT_OK
    for err in data["errors"]:
        print(err)
    return _fail(f"{path}: invalid {kind}: {len(data['errors'])} problem(s)", EXIT_INVALID)


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="healthloop",
        description="Closed-loop lifestyle simulation: run experiments, compare arms, mine rules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment arm")
    run.add_argument("--config", required=True, help="experiment config YAML")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--arm", choices=("active", "placebo"), default=None)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--server", default=None, help="remote service base URL")
    run.set_defaults(func=cmd_run)

    compare = sub.add_parser("compare", help="paired active-vs-placebo comparison")
    compare.add_argument("--config", required=True)
    compare.add_argument("--seeds", required=True, help="comma-separated seed list")
    compare.add_argument("--out", required=True)
    compare.add_argument("--server", default=None)
    compare.set_defaults(func=cmd_compare)

    mine = sub.add_parser("mine", help="mine sequential rules from an event log")
    mine.add_argument("--events", required=True, help="event log (JSON lines)")
    mine.add_argument("--consequent", required=True, help="consequent category")
    mine.add_argument("--window-minutes", type=float, default=240.0, dest="window_minutes")
    mine.add_argument("--delta-minutes", type=float, default=240.0, dest="delta_minutes")
    mine.add_argument("--min-support", type=int, default=2, dest="min_support")
    mine.add_argument("--max-len", type=int, default=3, dest="max_len")
    mine.add_argument("--out", default=None)
    mine.add_argument("--server", default=None)
    mine.set_defaults(func=cmd_mine)

    report = sub.add_parser("report", help="waveform and risk CSV export from an event log")
    report.add_argument("--events", required=True)
    report.add_argument("--alpha", type=float, default=0.1)
    report.add_argument("--beta", type=float, default=0.9)
    report.add_argument("--out", required=True)
    report.add_argument("--server", default=None)
    report.set_defaults(func=cmd_report)

    validate = sub.add_parser("validate", help="check a config or event log")
    validate.add_argument("--config", default=None)
    validate.add_argument("--events", default=None)
    validate.add_argument("--server", default=None)
    validate.set_defaults(func=cmd_validate)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except httpx.HTTPError as exc:
        return _fail(f"transport error: {exc}")


if __name__ == "__main__":
    sys.exit(main())
