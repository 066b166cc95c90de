"""Request loop: {"id","texts"} in, {"id","vectors"} out, handshake first."""

from __future__ import annotations

import json
import logging
import socket
import sys
from dataclasses import dataclass

import numpy as np

from .encoders import DEFAULT_MODEL

logger = logging.getLogger(__name__)


@dataclass
class BridgeConfig:
    model: str = DEFAULT_MODEL
    batch_size: int = 32
    port: int | None = None  # None = stdio
    host: str = "127.0.0.1"
    max_len: int = 512
    log_text: bool = False  # raw text stays out of logs unless explicitly enabled


def _handle_request(encoder, config: BridgeConfig, line: str) -> dict:
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"id": None, "error": f"malformed JSON: {exc.msg}"}
    req_id = request.get("id") if isinstance(request, dict) else None
    if not isinstance(request, dict) or "texts" not in request:
        return {"id": req_id, "error": "request must carry id and texts"}
    texts = request["texts"]
    if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
        return {"id": req_id, "error": "texts must be a list of strings"}
    truncated = [i for i, t in enumerate(texts) if len(t) > config.max_len]
    clipped = [t[:config.max_len] for t in texts]
    if config.log_text:
        logger.debug("request %s: %r", req_id, clipped)
    else:
        logger.debug("request %s: %d texts", req_id, len(clipped))
    try:
        vectors = encoder.encode(clipped) if clipped else np.zeros((0, encoder.dim))
    except Exception as exc:  # keep serving after a bad batch
        logger.warning("encode failed for request %s: %s", req_id, exc)
        return {"id": req_id, "error": f"encoding failed: {exc}"}
    norms = np.linalg.norm(vectors, axis=1) if len(vectors) else np.empty(0)
    if len(vectors) and (norms < 1e-12).any():
        return {"id": req_id, "error": "encoder produced a zero vector"}
    if len(vectors):
        vectors = vectors / norms[:, None]
    response = {"id": req_id, "vectors": [list(map(float, v)) for v in vectors]}
    if truncated:
        response["truncated"] = truncated
    return response


def _loop(encoder, config: BridgeConfig, reader, writer) -> None:
    handshake = {"name": encoder.name, "dim": encoder.dim}
    writer.write(json.dumps(handshake) + "\n")
    writer.flush()
    for line in reader:
        if not line.strip():
            continue
        response = _handle_request(encoder, config, line)
        writer.write(json.dumps(response) + "\n")
        writer.flush()


def serve(config: BridgeConfig, encoder=None) -> None:
    """Answer embedding requests until the peer disconnects.

    stdio mode serves exactly one session; TCP mode accepts clients one
    at a time (single request-processing loop) until interrupted.
    """
    if encoder is None:
        from .encoders import load_encoder

        encoder = load_encoder(config.model, batch_size=config.batch_size)
    if config.port is None:
        _loop(encoder, config, sys.stdin, sys.stdout)
        return
    with socket.create_server((config.host, config.port)) as server:
        logger.info("listening on %s:%d", config.host, server.getsockname()[1])
        while True:
            conn, peer = server.accept()
            logger.info("client %s connected", peer)
            with conn:
                reader = conn.makefile("r", encoding="utf-8")
                writer = conn.makefile("w", encoding="utf-8")
                try:
                    _loop(encoder, config, reader, writer)
                except (BrokenPipeError, ConnectionResetError):
                    logger.info("client %s disconnected", peer)
