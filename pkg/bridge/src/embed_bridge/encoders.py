"""Encoder backends: the real sentence-embedding model and a hermetic stub."""

from __future__ import annotations

import hashlib

import numpy as np

DEFAULT_MODEL = "intfloat/multilingual-e5-large"


class EncoderError(Exception):
    pass


class SentenceTransformerEncoder:
    """Wraps a sentence-transformers model; vectors come back unit-normalized."""

    def __init__(self, model_id: str = DEFAULT_MODEL, batch_size: int = 32):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderError(
                "sentence-transformers is not installed (pip install embed-bridge[model])"
            ) from exc
        try:
            self._model = SentenceTransformer(model_id)
        except Exception as exc:  # model missing, no network, bad id
            raise EncoderError(f"cannot load model {model_id!r}: {exc}") from exc
        self.name = model_id
        self.dim = int(self._model.get_sentence_embedding_dimension())
        self.batch_size = batch_size

    def encode(self, texts: list[str]) -> np.ndarray:
        vectors = self._model.encode(
            texts,
            batch_size=self.batch_size,
            convert_to_numpy=True,
            normalize_embeddings=True,
            show_progress_bar=False,
        )
        return np.asarray(vectors, dtype=np.float64)


class HashEncoder:
    """Deterministic trigram-hash embedder for protocol tests; no model needed."""

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 8:
            raise EncoderError("hash encoder dim must be >= 8")
        self.dim = dim
        self.seed = seed
        self.name = f"hash:{dim}"
        self._key = seed.to_bytes(8, "little", signed=True)

    def _one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        grams = [text[i:i + 3] for i in range(len(text) - 2)] if len(text) >= 3 else [text]
        for gram in grams:
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=self._key)
            value = int.from_bytes(digest.digest(), "little")
            vec[value % self.dim] += 1.0 if value & 1 == 0 else -1.0
        norm = np.linalg.norm(vec)
        if norm < 1e-12:
            vec[0] = 1.0
            norm = 1.0
        return vec / norm

    def encode(self, texts: list[str]) -> np.ndarray:
        return np.stack([self._one(t) for t in texts])


def load_encoder(model_spec: str, batch_size: int = 32):
    """Build an encoder from its CLI spec.

    "hash:<dim>[:<seed>]" selects the hermetic stub; anything else is
    treated as a sentence-transformers model identifier.
    """
    if model_spec.startswith("hash:"):
        parts = model_spec.split(":")
        dim = int(parts[1])
        seed = int(parts[2]) if len(parts) > 2 else 0
        return HashEncoder(dim=dim, seed=seed)
    return SentenceTransformerEncoder(model_spec, batch_size=batch_size)
