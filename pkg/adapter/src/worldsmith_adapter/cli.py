"""Command line entry point: worldsmith-adapter serve."""
from __future__ import annotations

import argparse
import os
import sys

from .config import AdapterConfig
from .wire import KINDS


def _env(name: str, default: str | None = None) -> str | None:
    return os.environ.get(f"WORLDSMITH_ADAPTER_{name}", default)


def _listen(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {value!r}")
    return host, int(port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="worldsmith-adapter",
        description="serve an image-generation pipeline over the /v1 protocol",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    serve = sub.add_parser("serve", help="run the protocol server")
    serve.add_argument("--listen", default=_env("LISTEN", "127.0.0.1:8100"),
                       help="host:port to bind")
    serve.add_argument("--model", default=_env("MODEL", "procedural"),
                       help="'procedural' or a diffusers model identifier")
    serve.add_argument("--device", default=_env("DEVICE", "cpu"))
    serve.add_argument("--max-concurrent", type=int,
                       default=int(_env("MAX_CONCURRENT", "1")))
    serve.add_argument("--steps", type=int, default=int(_env("STEPS", "30")))
    serve.add_argument("--guidance", type=float,
                       default=float(_env("GUIDANCE", "7.5")))
    serve.add_argument("--attention-weight", type=float,
                       default=float(_env("ATTENTION_WEIGHT", "0.7")))
    serve.add_argument("--mask-threshold", type=float,
                       default=float(_env("MASK_THRESHOLD", "0.5")))
    serve.add_argument("--kinds", nargs="+", default=list(KINDS),
                       help="restrict the advertised request kinds")
    serve.add_argument("--max-resolution", type=int,
                       default=int(_env("MAX_RESOLUTION", "2048")))
    serve.add_argument("--log-level", default=_env("LOG_LEVEL", "info"))
    return parser


def config_from_args(args: argparse.Namespace) -> AdapterConfig:
    return AdapterConfig(
        model=args.model,
        device=args.device,
        max_concurrent=args.max_concurrent,
        steps=args.steps,
        guidance=args.guidance,
        attention_weight=args.attention_weight,
        mask_threshold=args.mask_threshold,
        kinds=tuple(args.kinds),
        max_resolution=args.max_resolution,
    )


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import build_app

    host, port = _listen(args.listen) if isinstance(args.listen, str) else args.listen
    app = build_app(config_from_args(args))
    uvicorn.run(app, host=host, port=port, log_level=args.log_level)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
