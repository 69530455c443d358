"""Command line entry points.

``serve`` runs the session service, ``mock-backend`` runs the deterministic
generation backend standalone, ``analyze`` digests interaction logs, and
``replay`` rebuilds a session on a running server from its event log.

Every ``serve`` flag falls back to a ``WORLDSMITH_*`` environment variable
(flag beats env beats built-in default).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

from .telemetry import (
    EVENT_KINDS,
    CodingLexicon,
    code_prompt,
    prompt_stats,
    read_events,
    transition_matrix,
)

log = logging.getLogger(__name__)


def _env(name: str, default):
    return os.environ.get(f"WORLDSMITH_{name}", default)


def _parse_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"listen address must be host:port, got {value!r}")
    return host or "127.0.0.1", int(port)


def _parse_blur_sigma(value: str):
    if value == "auto":
        return None
    try:
        sigma = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"blur sigma must be 'auto' or a number, got {value!r}")
    if sigma < 0:
        raise argparse.ArgumentTypeError("blur sigma must be non-negative")
    return sigma


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="worldsmith")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the session service")
    serve.add_argument("--listen", type=_parse_listen, default=_env("LISTEN", "127.0.0.1:8000"))
    serve.add_argument("--data-dir", default=_env("DATA_DIR", "./worldsmith-data"))
    backend = serve.add_mutually_exclusive_group()
    backend.add_argument("--backend-url", default=_env("BACKEND_URL", None))
    backend.add_argument(
        "--backend", choices=["mock"], default=_env("BACKEND", None), dest="backend_kind"
    )
    serve.add_argument("--batch-count", type=int, default=int(_env("BATCH_COUNT", 12)))
    serve.add_argument("--resolution", type=int, default=int(_env("RESOLUTION", 512)))
    serve.add_argument(
        "--blur-sigma", type=_parse_blur_sigma, default=_env("BLUR_SIGMA", "auto")
    )
    serve.add_argument("--log-level", default=_env("LOG_LEVEL", "info"))

    mock = sub.add_parser("mock-backend", help="run the deterministic backend standalone")
    mock.add_argument("--listen", type=_parse_listen, default=_env("LISTEN", "127.0.0.1:8100"))
    mock.add_argument("--log-level", default=_env("LOG_LEVEL", "info"))

    analyze = sub.add_parser("analyze", help="digest an interaction log")
    analyze_sub = analyze.add_subparsers(dest="analysis", required=True)

    transitions = analyze_sub.add_parser(
        "transitions", help="behavioral transition matrix as CSV"
    )
    transitions.add_argument("events", help="NDJSON event log")
    transitions.add_argument("--no-collapse-runs", action="store_true")
    transitions.add_argument(
        "--kinds", nargs="+", default=None, help="restrict and order the event kinds"
    )

    stats = analyze_sub.add_parser("stats", help="prompt statistics as JSON")
    stats.add_argument("events", help="NDJSON event log")
    stats.add_argument("--lexicon", default=None, help="JSON file of code -> terms")

    codes = analyze_sub.add_parser("codes", help="code one prompt against the lexicon")
    codes.add_argument("text", help="prompt text")
    codes.add_argument("--lexicon", default=None)

    replay = sub.add_parser("replay", help="rebuild a session on a server from its log")
    replay.add_argument("events", help="NDJSON event log to replay")
    replay.add_argument("--server", required=True, help="base URL of the target service")
    replay.add_argument(
        "--config", default=None, help="JSON file of session creation parameters"
    )
    replay.add_argument("--session-id", default=None)
    replay.add_argument("--poll-timeout", type=float, default=120.0)

    return parser


def _blur_sigma_arg(value):
    # env fallback arrives as a raw string, flags already parsed
    return _parse_blur_sigma(value) if isinstance(value, str) else value


def _listen_arg(value):
    return _parse_listen(value) if isinstance(value, str) else value


def cmd_serve(args) -> int:
    import uvicorn

    from .backend import HttpBackend, MockBackend
    from .service import Engine, create_app

    logging.basicConfig(level=args.log_level.upper())
    if args.backend_url:
        backend = HttpBackend(args.backend_url)
    else:
        backend = MockBackend()
        if args.backend_kind != "mock":
            log.info("no backend configured, using the deterministic mock")
    engine = Engine(
        args.data_dir,
        backend,
        batch_count=args.batch_count,
        blur_sigma=_blur_sigma_arg(args.blur_sigma),
        default_resolution=args.resolution,
    )
    host, port = _listen_arg(args.listen)
    uvicorn.run(create_app(engine), host=host, port=port, log_level=args.log_level)
    return 0


def cmd_mock_backend(args) -> int:
    import uvicorn

    from .backend import MockBackend, build_protocol_app

    logging.basicConfig(level=args.log_level.upper())
    host, port = _listen_arg(args.listen)
    uvicorn.run(build_protocol_app(MockBackend()), host=host, port=port, log_level=args.log_level)
    return 0


def _load_lexicon(path: str | None) -> CodingLexicon | None:
    return None if path is None else CodingLexicon.from_file(path)


def transitions_csv(events, kinds=None, collapse_runs: bool = True) -> str:
    """Render the transition matrix as CSV with labeled rows and columns."""
    kinds = tuple(kinds) if kinds else EVENT_KINDS
    matrix = transition_matrix(events, kinds=kinds, collapse_runs=collapse_runs)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["from\\to", *kinds])
    for name, row in zip(kinds, matrix):
        writer.writerow([name, *(f"{v:.6f}" for v in row)])
    return out.getvalue()


def cmd_analyze(args, out=sys.stdout) -> int:
    if args.analysis == "transitions":
        events = read_events(args.events)
        out.write(
            transitions_csv(
                events, kinds=args.kinds, collapse_runs=not args.no_collapse_runs
            )
        )
        return 0
    if args.analysis == "stats":
        events = read_events(args.events)
        doc = prompt_stats(events, lexicon=_load_lexicon(args.lexicon))
        json.dump(doc, out, indent=2, sort_keys=True)
        out.write("\n")
        return 0
    if args.analysis == "codes":
        found = sorted(code_prompt(args.text, lexicon=_load_lexicon(args.lexicon)))
        out.write(json.dumps({"text": args.text, "codes": found}) + "\n")
        return 0
    raise AssertionError(f"unknown analysis {args.analysis!r}")


def cmd_replay(args, client=None, out=sys.stdout) -> int:
    import httpx

    from .replay import replay_session

    events = read_events(args.events)
    config = None
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    own_client = client is None
    if own_client:
        client = httpx.Client(base_url=args.server, timeout=30.0)
    try:
        report = replay_session(
            client,
            events,
            session_config=config,
            session_id=args.session_id,
            poll_timeout=args.poll_timeout,
        )
    finally:
        if own_client:
            client.close()
    out.write(
        json.dumps(
            {
                "session_id": report.session_id,
                "applied": report.applied,
                "jobs": len(report.job_ids),
            }
        )
        + "\n"
    )
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    if args.command == "mock-backend":
        return cmd_mock_backend(args)
    if args.command == "analyze":
        return cmd_analyze(args)
    if args.command == "replay":
        return cmd_replay(args)
    raise AssertionError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
