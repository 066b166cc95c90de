"""Cluster interpretability: TF-IDF keywords, medoid posts, action stats."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .events import ActionKind, RawEvent

logger = logging.getLogger(__name__)

# Hashtags and @-placeholders survive as single tokens; bare punctuation
# is dropped, as are single-character tokens.
_TOKEN_RE = re.compile(r"@<\w+>|#\w+|\w+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return [t for t in (m.group().lower() for m in _TOKEN_RE.finditer(text)) if len(t) > 1]


@dataclass
class TfidfModel:
    """Smoothed-idf TF-IDF with a deterministic, sorted vocabulary."""

    vocabulary: dict[str, int]
    idf: np.ndarray

    @classmethod
    def fit(cls, documents: Sequence[str]) -> "TfidfModel":
        df: Counter[str] = Counter()
        n_docs = 0
        for doc in documents:
            n_docs += 1
            df.update(set(tokenize(doc)))
        vocabulary = {term: i for i, term in enumerate(sorted(df))}
        idf = np.zeros(len(vocabulary))
        for term, i in vocabulary.items():
            idf[i] = math.log((1 + n_docs) / (1 + df[term])) + 1.0
        return cls(vocabulary=vocabulary, idf=idf)

    def transform(self, document: str) -> np.ndarray:
        """Raw term counts weighted by idf, over the model vocabulary."""
        vec = np.zeros(len(self.vocabulary))
        for token in tokenize(document):
            idx = self.vocabulary.get(token)
            if idx is not None:
                vec[idx] += 1.0
        return vec * self.idf

    def top_terms(self, documents: Sequence[str], n: int) -> list[str]:
        """Terms with highest mean TF-IDF over the documents, ties lexicographic."""
        if not documents:
            return []
        scores = np.zeros(len(self.vocabulary))
        for doc in documents:
            scores += self.transform(doc)
        scores /= len(documents)
        terms = sorted(self.vocabulary, key=lambda t: (-scores[self.vocabulary[t]], t))
        return [t for t in terms[:n] if scores[self.vocabulary[t]] > 0.0]


def tfidf_top_terms(
    cluster_corpora: dict[int, Sequence[str]], n: int
) -> dict[int, list[str]]:
    """Per-cluster top-n keywords against a model fit on all clusters' posts."""
    if n < 1:
        raise ValueError("n must be >= 1")
    all_docs = [doc for docs in cluster_corpora.values() for doc in docs]
    model = TfidfModel.fit(all_docs)
    result: dict[int, list[str]] = {}
    for cluster in sorted(cluster_corpora):
        docs = cluster_corpora[cluster]
        if not docs:
            logger.warning("cluster %d has no documents; no keywords", cluster)
            result[cluster] = []
            continue
        result[cluster] = model.top_terms(docs, n)
    return result


def medoid_posts(
    post_vectors: Sequence[tuple[str, np.ndarray]],
    centroid: np.ndarray,
    m: int,
) -> list[str]:
    """The m posts most cosine-similar to the centroid, most similar first."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if len(post_vectors) < m:
        logger.warning("only %d posts available for %d medoids", len(post_vectors), m)
    c = np.asarray(centroid, dtype=np.float64)
    c = c / max(np.linalg.norm(c), 1e-12)
    scored = []
    for uri, vec in post_vectors:
        v = np.asarray(vec, dtype=np.float64)
        sim = float(v @ c / max(np.linalg.norm(v), 1e-12))
        scored.append((-sim, uri))
    scored.sort()
    return [uri for _, uri in scored[:m]]


KIND_ORDER = [k for k in ActionKind]


@dataclass
class ClusterStats:
    """Action-kind counts per cluster plus the derived summary columns."""

    clusters: list[int]
    action_counts: dict[int, dict[ActionKind, int]]
    user_counts: dict[int, int]

    def kind_row(self, kind: ActionKind) -> list[int]:
        return [self.action_counts[c].get(kind, 0) for c in self.clusters]

    def totals(self) -> dict[ActionKind, int]:
        return {kind: sum(self.kind_row(kind)) for kind in KIND_ORDER}

    def total_actions(self) -> list[int]:
        return [
            sum(self.action_counts[c].get(kind, 0) for kind in KIND_ORDER)
            for c in self.clusters
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["action", *(f"cluster_{c}" for c in self.clusters), "average", "std", "max", "total"]
        )
        for kind in KIND_ORDER:
            row = self.kind_row(kind)
            writer.writerow([kind.value, *row, *_summary(row)])
        totals = self.total_actions()
        writer.writerow(["total_actions", *totals, *_summary(totals)])
        users = [self.user_counts.get(c, 0) for c in self.clusters]
        writer.writerow(["users", *users, *_summary(users)])
        return buf.getvalue()

    def to_text(self) -> str:
        headers = ["Action", *(f"Cluster {c}" for c in self.clusters),
                   "Average ± std", "Max", "Total"]
        rows = []
        for kind in KIND_ORDER:
            row = self.kind_row(kind)
            avg, std, mx, total = _summary(row)
            rows.append([kind.value, *map(str, row), f"{avg} ± {std}", str(mx), str(total)])
        totals = self.total_actions()
        avg, std, mx, total = _summary(totals)
        rows.append(["Total Actions", *map(str, totals), f"{avg} ± {std}", str(mx), str(total)])
        users = [self.user_counts.get(c, 0) for c in self.clusters]
        avg, std, mx, total = _summary(users)
        rows.append(["No. of Users", *map(str, users), f"{avg} ± {std}", str(mx), str(total)])
        widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for r in rows:
            lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(
            {
                "clusters": self.clusters,
                "actions": {
                    kind.value: {str(c): self.action_counts[c].get(kind, 0) for c in self.clusters}
                    for kind in KIND_ORDER
                },
                "users": {str(c): self.user_counts.get(c, 0) for c in self.clusters},
            },
            sort_keys=True,
        )


def _summary(row: Sequence[int]) -> tuple[float, float, int, int]:
    arr = np.asarray(row, dtype=np.float64)
    if arr.size == 0:
        return 0.0, 0.0, 0, 0
    return (
        round(float(arr.mean()), 2),
        round(float(arr.std()), 2),
        int(arr.max()),
        int(arr.sum()),
    )


def cluster_stats(events: Iterable[RawEvent], assignment: dict[str, int]) -> ClusterStats:
    """Tally action kinds per cluster, attributing each event to its actor."""
    clusters = sorted(set(assignment.values()))
    action_counts: dict[int, dict[ActionKind, int]] = {c: {} for c in clusters}
    skipped = 0
    for event in events:
        cluster = assignment.get(event.did)
        if cluster is None:
            skipped += 1
            continue
        counts = action_counts[cluster]
        counts[event.kind] = counts.get(event.kind, 0) + 1
    if skipped:
        logger.warning("%d events from unclustered actors excluded from stats", skipped)
    user_counts: dict[int, int] = {c: 0 for c in clusters}
    for cluster in assignment.values():
        user_counts[cluster] += 1
    return ClusterStats(
        clusters=clusters, action_counts=action_counts, user_counts=user_counts
    )
