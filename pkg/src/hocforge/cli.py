"""Command-line client for the generation service.

Each subcommand marshals its arguments into the same request models the
HTTP service accepts.  With ``--server`` (or HOCFORGE_SERVER) the request
is POSTed to a running service; otherwise the handler runs in-process.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import handlers
from .errors import HocforgeError
from .schemas import (
    ExtractRequest,
    IllumRequest,
    ScoreProbeRequest,
    SynthRequest,
    ValidateRequest,
)

SERVER_ENV_VAR = "HOCFORGE_SERVER"

_ROUTES = {
    "extract": (ExtractRequest, handlers.run_extract),
    "synth": (SynthRequest, handlers.run_synth),
    "illum": (IllumRequest, handlers.run_illum),
    "validate": (ValidateRequest, handlers.run_validate),
    "score-probe": (ScoreProbeRequest, handlers.run_score_probe),
}


def _dispatch(command: str, request, server: str | None) -> dict:
    if server:
        import httpx

        response = httpx.post(
            f"{server.rstrip('/')}/v1/{command}",
            json=request.model_dump(),
            timeout=None,
        )
        if response.status_code != 200:
            raise HocforgeError(f"server returned {response.status_code}: {response.text}")
        return response.json()
    _, handler = _ROUTES[command]
    return handler(request).model_dump()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hocforge",
        description="Synthetic object-cluster image generator",
    )
    parser.add_argument(
        "--server",
        default=os.environ.get(SERVER_ENV_VAR),
        help="base URL of a running hocforge service (default: run in-process)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract cutouts from single-object frames")
    p.add_argument("--frames", required=True, dest="frames_dir")
    p.add_argument("--out", required=True, dest="out_dir")
    p.add_argument("--lo", type=float, default=0.08)
    p.add_argument("--hi", type=float, default=0.25)
    p.add_argument("--border", type=float, default=0.05)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", required=True, dest="config_path")
    p.add_argument("--out", required=True, dest="out_dir")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--debug-overlay", action="store_true", dest="debug_overlay")

    p = sub.add_parser("illum", help="illumination-transfer one image pair")
    p.add_argument("--image", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, default=None)

    p = sub.add_parser("validate", help="check a manifest against its images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", required=True)

    p = sub.add_parser("score-probe", help="one scorer protocol round-trip")
    p.add_argument("--scorer", required=True)
    p.add_argument("--png", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .server import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    model_cls, _ = _ROUTES[args.command]
    payload = {
        key: value
        for key, value in vars(args).items()
        if key not in ("command", "server") and value is not None
    }
    request = model_cls(**payload)

    try:
        result = _dispatch(args.command, request, args.server)
    except HocforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    print(json.dumps(result, indent=2, sort_keys=True))
    if args.command == "validate" and not result["ok"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
