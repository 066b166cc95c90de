"""Command line entry: embed-bridge --model <id> [--stdio | --port N]."""

from __future__ import annotations

import argparse
import logging
import sys

from .encoders import DEFAULT_MODEL, EncoderError, load_encoder
from .server import BridgeConfig, serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-bridge",
        description="Serve sentence embeddings over line-delimited JSON.",
    )
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help="model id, or hash:<dim>[:<seed>] for the test stub")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--stdio", action="store_true", help="serve on stdin/stdout (default)")
    mode.add_argument("--port", type=int, help="serve on a TCP port instead")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--batch", type=int, default=32, dest="batch_size")
    parser.add_argument("--max-len", type=int, default=512)
    parser.add_argument("--log-text", action="store_true",
                        help="allow raw text in debug logs (off by default)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    config = BridgeConfig(
        model=args.model,
        batch_size=args.batch_size,
        port=args.port,
        host=args.host,
        max_len=args.max_len,
        log_text=args.log_text,
    )
    try:
        encoder = load_encoder(config.model, batch_size=config.batch_size)
    except EncoderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        serve(config, encoder=encoder)
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
