"""Text and user embeddings: providers, batching, and the vector cache."""

from __future__ import annotations

import hashlib
import json
import logging
import socket
import struct
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_DIM = 256
NORM_TOL = 1e-6


class EmbeddingError(Exception):
    pass


class DegenerateTextError(EmbeddingError):
    """Text carries no embeddable signal (empty, or cancels to zero)."""


class DegenerateUserError(EmbeddingError):
    """User's mean post vector has no direction."""


class ProviderContractError(EmbeddingError):
    """Provider broke its shape/normalization contract; not retryable."""


class TransportError(EmbeddingError):
    """Provider unreachable or connection lost; retryable."""


def normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        raise DegenerateTextError("zero vector cannot be normalized")
    return vec / norm


@dataclass
class FallbackProvider:
    """Hermetic character-3-gram hashing embedder.

    Signed feature hashing of character trigrams into `dim` buckets; a
    pure function of (text, dim, seed), so the whole pipeline runs with
    no model inference.
    """

    dim: int = DEFAULT_DIM
    seed: int = 0
    name: str = "fallback"

    def __post_init__(self) -> None:
        if self.dim < 8:
            raise ValueError("fallback dim must be >= 8")
        self._key = self.seed.to_bytes(8, "little", signed=True)

    def _grams(self, text: str) -> list[str]:
        if len(text) >= 3:
            return [text[i:i + 3] for i in range(len(text) - 2)]
        return [text]

    def embed_one(self, text: str) -> np.ndarray:
        if not text:
            raise DegenerateTextError("cannot embed empty text")
        vec = np.zeros(self.dim)
        for gram in self._grams(text):
            h = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=self._key)
            value = int.from_bytes(h.digest(), "little")
            bucket = value % self.dim
            sign = 1.0 if (value >> 63) & 1 == 0 else -1.0
            vec[bucket] += sign
        return normalize(vec)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.embed_one(t) for t in texts])

    def close(self) -> None:
        pass


class BridgeProvider:
    """Client for the line-delimited JSON provider protocol.

    Speaks to an external embedding server over a child-process pipe or a
    TCP socket: handshake {"name","dim"} first, then {"id","texts"} ->
    {"id","vectors"} exchanges.
    """

    def __init__(
        self,
        command: Sequence[str] | None = None,
        address: tuple[str, int] | None = None,
    ):
        if (command is None) == (address is None):
            raise ValueError("provide exactly one of command or address")
        self._proc = None
        self._sock = None
        self._next_id = 0
        self._pending: dict[int, list] = {}
        try:
            if command is not None:
                self._proc = subprocess.Popen(
                    list(command),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                )
                self._writer = self._proc.stdin
                self._reader = self._proc.stdout
            else:
                self._sock = socket.create_connection(address)
                self._writer = self._sock.makefile("w", encoding="utf-8")
                self._reader = self._sock.makefile("r", encoding="utf-8")
        except OSError as exc:
            raise TransportError(f"cannot reach embedding provider: {exc}") from exc
        handshake = self._read_line()
        try:
            self.name = handshake["name"]
            self.dim = int(handshake["dim"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderContractError(f"bad handshake: {handshake!r}") from exc

    def _read_line(self) -> dict:
        line = self._reader.readline()
        if not line:
            raise TransportError("provider closed the connection")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProviderContractError(f"undecodable provider message: {line!r}") from exc

    def _roundtrip(self, texts: Sequence[str]) -> list:
        req_id = self._next_id
        self._next_id += 1
        try:
            self._writer.write(json.dumps({"id": req_id, "texts": list(texts)}) + "\n")
            self._writer.flush()
        except (OSError, ValueError) as exc:
            raise TransportError(f"provider write failed: {exc}") from exc
        while req_id not in self._pending:
            msg = self._read_line()
            if "error" in msg:
                raise ProviderContractError(f"provider error: {msg['error']}")
            self._pending[msg["id"]] = msg["vectors"]
        return self._pending.pop(req_id)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        vectors = self._roundtrip(texts)
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.shape != (len(texts), self.dim):
            raise ProviderContractError(
                f"expected {(len(texts), self.dim)} vectors, got {arr.shape}"
            )
        return arr

    def close(self) -> None:
        for stream in (getattr(self, "_writer", None), getattr(self, "_reader", None)):
            try:
                if stream is not None:
                    stream.close()
            except OSError:
                pass
        if self._proc is not None:
            self._proc.terminate()
            self._proc.wait(timeout=10)
        if self._sock is not None:
            self._sock.close()


def embed_texts(provider, texts: Sequence[str], batch_size: int = 64) -> np.ndarray:
    """Embed texts in input order, enforcing the provider contract."""
    if not texts:
        return np.zeros((0, provider.dim))
    if any(not t for t in texts):
        raise DegenerateTextError("cannot embed empty text")
    chunks = []
    for start in range(0, len(texts), batch_size):
        batch = texts[start:start + batch_size]
        arr = np.asarray(provider.embed(batch), dtype=np.float64)
        if arr.shape != (len(batch), provider.dim):
            raise ProviderContractError(
                f"provider {provider.name} returned shape {arr.shape} "
                f"for a batch of {len(batch)} (dim {provider.dim})"
            )
        if not np.all(np.isfinite(arr)):
            raise ProviderContractError("provider returned non-finite values")
        norms = np.linalg.norm(arr, axis=1)
        if np.any(norms < 1e-12):
            raise ProviderContractError("provider returned a zero vector")
        if np.any(np.abs(norms - 1.0) > NORM_TOL):
            arr = arr / norms[:, None]
        chunks.append(arr)
    return np.vstack(chunks)


def user_embedding(post_vectors: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Mean of a user's post vectors, re-normalized to the unit sphere."""
    arr = np.asarray(post_vectors, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("user_embedding requires at least one vector")
    mean = arr.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-9:
        raise DegenerateUserError("mean post vector has no direction")
    return mean / norm


# Vector cache: SPVC magic, u16 version, u32 dim, u64 count, then per
# entry a u32 key length, utf-8 key bytes, and dim little-endian f32s.
_MAGIC = b"SPVC"
_VERSION = 1


def save_vectors(path: str | Path, vectors: dict[str, np.ndarray], dim: int) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HIQ", _VERSION, dim, len(vectors)))
        for key, vec in vectors.items():
            arr = np.asarray(vec, dtype="<f4")
            if arr.shape != (dim,):
                raise ValueError(f"vector for {key!r} has shape {arr.shape}, want ({dim},)")
            encoded = key.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(arr.tobytes())


def load_vectors(path: str | Path) -> tuple[dict[str, np.ndarray], int]:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a vector cache file")
        version, dim, count = struct.unpack("<HIQ", fh.read(14))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported cache version {version}")
        vectors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (key_len,) = struct.unpack("<I", fh.read(4))
            key = fh.read(key_len).decode("utf-8")
            vec = np.frombuffer(fh.read(4 * dim), dtype="<f4").astype(np.float64)
            vectors[key] = vec
    return vectors, dim


def provider_from_spec(spec: str, dim: int = DEFAULT_DIM, seed: int = 0):
    """Build a provider from a config string.

    "fallback" -> hermetic hashing embedder; "cmd:<argv...>" -> child
    process speaking the bridge protocol; "tcp:host:port" -> TCP bridge.
    """
    if spec == "fallback":
        return FallbackProvider(dim=dim, seed=seed)
    if spec.startswith("cmd:"):
        return BridgeProvider(command=spec[4:].split())
    if spec.startswith("tcp:"):
        host, _, port = spec[4:].rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"bad tcp provider spec {spec!r}; want tcp:host:port")
        return BridgeProvider(address=(host, int(port)))
    raise ValueError(f"unknown embedding provider spec {spec!r}")
