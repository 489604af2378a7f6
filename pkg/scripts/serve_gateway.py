#!/usr/bin/env python3
"""Serve the session gateway (and the browser UI, when built) over HTTP."""

import argparse
from pathlib import Path

import uvicorn
from fastapi.staticfiles import StaticFiles

from agentmesh.gateway import create_app


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--kb-root", default=None, help="directory of per-user .kb files")
    parser.add_argument(
        "--frontend",
        default=str(Path(__file__).resolve().parent.parent / "frontend" / "dist"),
        help="built UI directory to serve at /",
    )
    args = parser.parse_args()

    app = create_app(kb_root=args.kb_root)
    frontend = Path(args.frontend)
    if frontend.is_dir():
        app.mount("/", StaticFiles(directory=frontend, html=True), name="ui")
    uvicorn.run(app, host=args.host, port=args.port)


if __name__ == "__main__":
    main()
