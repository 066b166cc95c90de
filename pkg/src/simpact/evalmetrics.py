"""Behavioral-fidelity metrics: score generated records against real threads."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from jsonschema import Draft4Validator

from .analysis import TfidfModel
from .clustering import fit_constrained_kmeans, squared_distances
from .mincostflow import nearest_assignment
from .events import ActionKind
from .threads import Thread

logger = logging.getLogger(__name__)

ACTION_LABELS = ("like", "follow", "repost", "ignore")
DEFAULT_BINS = 16
DEFAULT_JACCARD_N = 100

POST_SCHEMA = {
    "$schema": "http://json-schema.org/draft-04/schema",
    "type": "object",
    "properties": {"text": {"type": "string"}},
    "required": ["text"],
    "additionalProperties": False,
}

REPLY_SCHEMA = {
    "$schema": "http://json-schema.org/draft-04/schema",
    "type": "object",
    "properties": {
        "actions": {
            "type": "object",
            "properties": {
                "like": {"type": "boolean"},
                "follow": {"type": "boolean"},
                "repost": {"type": "boolean"},
                "ignore": {"type": "boolean"},
            },
            "required": ["like", "follow", "repost", "ignore"],
            "additionalProperties": False,
        },
        "text": {"type": "string"},
    },
    "required": ["actions", "text"],
    "additionalProperties": False,
}

_POST_VALIDATOR = Draft4Validator(POST_SCHEMA)
_REPLY_VALIDATOR = Draft4Validator(REPLY_SCHEMA)


class GenerationFormatError(ValueError):
    pass


@dataclass
class GenerationRecord:
    cluster: int
    prompt_thread_id: str
    text: str | None = None
    actions: dict[str, bool] | None = None


def parse_generation(line: str, lineno: int | None = None) -> GenerationRecord:
    """Parse one generation line: cluster + prompt id + a schema-valid output.

    The output object must validate against the post schema (text only)
    or the reply schema (actions + text); extra output fields are
    rejected, and ignore=true forbids the other three actions.
    """
    where = f"line {lineno}: " if lineno is not None else ""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise GenerationFormatError(f"{where}malformed JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise GenerationFormatError(f"{where}record must be a JSON object")
    try:
        cluster = int(obj["cluster"])
        prompt_thread_id = str(obj["prompt_thread_id"])
        output = obj["output"]
    except (KeyError, TypeError, ValueError) as exc:
        raise GenerationFormatError(
            f"{where}record requires cluster, prompt_thread_id, and output"
        ) from exc
    validator = _REPLY_VALIDATOR if isinstance(output, dict) and "actions" in output else _POST_VALIDATOR
    errors = sorted(validator.iter_errors(output), key=str)
    if errors:
        raise GenerationFormatError(f"{where}output violates schema: {errors[0].message}")
    actions = output.get("actions")
    if actions and actions.get("ignore") and any(actions[k] for k in ("like", "follow", "repost")):
        raise GenerationFormatError(f"{where}ignore=true forbids other actions")
    return GenerationRecord(
        cluster=cluster,
        prompt_thread_id=prompt_thread_id,
        text=output.get("text"),
        actions=dict(actions) if actions is not None else None,
    )


def read_generations(path) -> list[GenerationRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                records.append(parse_generation(line, lineno=lineno))
    return records


def max_cosine(gen_vectors: np.ndarray, ref_vectors: np.ndarray) -> float:
    """Highest cosine similarity over all (generated, reference) pairs."""
    gen, ref = _as_matrices(gen_vectors, ref_vectors)
    sims = _unit(gen) @ _unit(ref).T
    return float(sims.max())


def avg_cosine(gen_vectors: np.ndarray, ref_vectors: np.ndarray) -> float:
    """Cosine between the two sides' mean embeddings."""
    gen, ref = _as_matrices(gen_vectors, ref_vectors)
    gmean, rmean = gen.mean(axis=0), ref.mean(axis=0)
    gn, rn = np.linalg.norm(gmean), np.linalg.norm(rmean)
    if gn < 1e-12 or rn < 1e-12:
        raise ValueError("mean embedding has no direction")
    return float(gmean @ rmean / (gn * rn))


def _as_matrices(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both vector sets must be non-empty")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return a, b


def _unit(arr: np.ndarray) -> np.ndarray:
    return arr / np.maximum(np.linalg.norm(arr, axis=1), 1e-12)[:, None]


def jaccard_top_tfidf(
    gen_corpus: Sequence[str], ref_corpus: Sequence[str], n: int = DEFAULT_JACCARD_N
) -> float:
    """Overlap of the two corpora's top-n keywords under a shared TF-IDF fit."""
    if not gen_corpus or not ref_corpus:
        raise ValueError("both corpora must be non-empty")
    model = TfidfModel.fit(list(gen_corpus) + list(ref_corpus))
    if not model.vocabulary:
        raise ValueError("empty vocabulary")
    a = set(model.top_terms(gen_corpus, n))
    b = set(model.top_terms(ref_corpus, n))
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def js_from_histograms(p: Sequence[float], q: Sequence[float]) -> float:
    """Jensen-Shannon divergence of two histograms, base-2 logs (in [0, 1])."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("histograms must have equal length")
    if p.sum() <= 0 or q.sum() <= 0:
        raise ValueError("histograms must have positive mass")
    p = p / p.sum()
    q = q / q.sum()
    m = (p + q) / 2.0
    div = 0.0
    for side in (p, q):
        for x, mx in zip(side, m):
            if x > 0.0:
                div += 0.5 * x * math.log2(x / mx)
    return div


def js_divergence(
    gen_vectors: np.ndarray,
    ref_vectors: np.ndarray,
    bins: int = DEFAULT_BINS,
    seed: int = 0,
) -> float:
    """Distributional divergence between two embedding sets.

    Pools both sides, bins the space with a seeded unconstrained k-means
    (the pool is canonically sorted first, so the result is exactly
    symmetric in its arguments), and returns the base-2 Jensen-Shannon
    divergence of the two bin-occupancy histograms.
    """
    gen, ref = _as_matrices(gen_vectors, ref_vectors)
    if bins < 2:
        raise ValueError("bins must be >= 2")
    pooled = np.vstack([gen, ref])
    if len(pooled) < bins:
        logger.warning("only %d pooled points; reducing bins from %d", len(pooled), bins)
        bins = len(pooled)
    order = np.lexsort(pooled.T[::-1])
    model = fit_constrained_kmeans(pooled[order], k=bins, min_size=0, seed=seed)
    gen_bins = nearest_assignment(squared_distances(gen, model.centroids))
    ref_bins = nearest_assignment(squared_distances(ref, model.centroids))
    p = np.bincount(gen_bins, minlength=bins).astype(np.float64)
    q = np.bincount(ref_bins, minlength=bins).astype(np.float64)
    return js_from_histograms(p, q)


def action_f1(
    predictions: Sequence[GenerationRecord],
    ground_truth: dict[str, dict[str, bool]],
    average: str = "micro",
) -> float:
    """F1 over the four binary action labels, pooled across samples.

    Predictions align with observed action sets by prompt_thread_id; a
    prediction without an actions object counts as all-false. With no
    positives on either side the score is defined as 1.0.
    """
    if average not in ("micro", "macro"):
        raise ValueError("average must be 'micro' or 'macro'")
    unmatched = [p.prompt_thread_id for p in predictions if p.prompt_thread_id not in ground_truth]
    if unmatched:
        raise ValueError(f"predictions reference unknown thread ids: {sorted(set(unmatched))}")
    per_label = {label: [0, 0, 0] for label in ACTION_LABELS}  # tp, fp, fn
    for pred in predictions:
        truth = ground_truth[pred.prompt_thread_id]
        actions = pred.actions or {}
        for label in ACTION_LABELS:
            p = bool(actions.get(label, False))
            t = bool(truth.get(label, False))
            if p and t:
                per_label[label][0] += 1
            elif p:
                per_label[label][1] += 1
            elif t:
                per_label[label][2] += 1
    def f1(tp: int, fp: int, fn: int) -> float:
        if tp + fp + fn == 0:
            return 1.0
        return 2 * tp / (2 * tp + fp + fn)
    if average == "micro":
        tp = sum(v[0] for v in per_label.values())
        fp = sum(v[1] for v in per_label.values())
        fn = sum(v[2] for v in per_label.values())
        return f1(tp, fp, fn)
    return float(np.mean([f1(*per_label[label]) for label in ACTION_LABELS]))


def thread_action_labels(thread: Thread) -> dict[str, bool]:
    """Observed action set of a thread's terminal element.

    like/follow/repost map to themselves; text-producing terminals are
    all-false; the remaining disengagement kinds map to ignore.
    """
    kind = thread.terminal.kind
    labels = {label: False for label in ACTION_LABELS}
    if kind is ActionKind.LIKE:
        labels["like"] = True
    elif kind is ActionKind.FOLLOW:
        labels["follow"] = True
    elif kind is ActionKind.REPOST:
        labels["repost"] = True
    elif kind not in (ActionKind.POST, ActionKind.REPLY, ActionKind.QUOTE, ActionKind.POST_UPDATE):
        labels["ignore"] = True
    return labels


METRIC_NAMES = ("jaccard_top_tfidf", "avg_cosine", "max_cosine", "js_divergence", "f1")
_METRIC_DISPLAY = (
    ("jaccard_top_tfidf", "Jaccard Similarity", "↑"),
    ("avg_cosine", "Avg. Cosine Similarity", "↑"),
    ("max_cosine", "Max. Cosine Similarity", "↑"),
    ("js_divergence", "JS Divergence", "↓"),
    ("f1", "F1 Score", "↑"),
)


@dataclass
class ClusterReport:
    cluster: int
    metrics: dict[str, float]


@dataclass
class MetricsReport:
    per_cluster: list[ClusterReport]
    population: dict[str, float]
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "per_cluster": [
                    {"cluster": r.cluster, **{k: r.metrics[k] for k in METRIC_NAMES}}
                    for r in sorted(self.per_cluster, key=lambda r: r.cluster)
                ],
                "population": {k: self.population[k] for k in METRIC_NAMES},
                "metadata": self.metadata,
            },
            sort_keys=True,
            indent=2,
        )


def aggregate(cluster_reports: Sequence[ClusterReport]) -> dict[str, float]:
    """Unweighted mean of each metric across clusters."""
    if not cluster_reports:
        raise ValueError("need at least one cluster report")
    return {
        name: float(np.mean([r.metrics[name] for r in cluster_reports]))
        for name in METRIC_NAMES
    }


def evaluate(
    generations: Sequence[GenerationRecord],
    reference_threads: Sequence[Thread],
    provider,
    bins: int = DEFAULT_BINS,
    jaccard_n: int = DEFAULT_JACCARD_N,
    seed: int = 0,
    f1_average: str = "micro",
) -> MetricsReport:
    """Score generations against ground-truth threads, cluster by cluster."""
    from .embedding import embed_texts  # local import avoids cycle at module load

    by_cluster_refs: dict[int, list[Thread]] = {}
    for thread in reference_threads:
        by_cluster_refs.setdefault(thread.cluster, []).append(thread)
    by_cluster_gens: dict[int, list[GenerationRecord]] = {}
    for record in generations:
        by_cluster_gens.setdefault(record.cluster, []).append(record)

    reports = []
    for cluster in sorted(by_cluster_gens):
        refs = by_cluster_refs.get(cluster)
        if not refs:
            raise ValueError(f"no reference threads for cluster {cluster}")
        gens = by_cluster_gens[cluster]
        gen_texts = [g.text for g in gens if g.text]
        ref_texts = [t.terminal.text for t in refs if t.terminal.text]
        if not gen_texts or not ref_texts:
            raise ValueError(f"cluster {cluster} has no text on one side")
        gen_vecs = embed_texts(provider, gen_texts)
        ref_vecs = embed_texts(provider, ref_texts)
        truth = {t.thread_id: thread_action_labels(t) for t in refs}
        metrics = {
            "jaccard_top_tfidf": jaccard_top_tfidf(gen_texts, ref_texts, jaccard_n),
            "avg_cosine": avg_cosine(gen_vecs, ref_vecs),
            "max_cosine": max_cosine(gen_vecs, ref_vecs),
            "js_divergence": js_divergence(gen_vecs, ref_vecs, bins=bins, seed=seed),
            "f1": action_f1(gens, truth, average=f1_average),
        }
        reports.append(ClusterReport(cluster=cluster, metrics=metrics))
    return MetricsReport(
        per_cluster=reports,
        population=aggregate(reports),
        metadata={
            "bins": bins,
            "jaccard_n": jaccard_n,
            "seed": seed,
            "f1_average": f1_average,
            "js_estimator": "pooled-kmeans-histogram",
        },
    )


def render_comparison(reports: dict[str, MetricsReport]) -> str:
    """Text table: metric rows with direction arrows, one column per system."""
    systems = list(reports)
    headers = ["Metric", *systems]
    rows = []
    for key, display, arrow in _METRIC_DISPLAY:
        row = [f"{display} ({arrow})"]
        for system in systems:
            row.append(f"{reports[system].population[key]:.4f}")
        rows.append(row)
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines) + "\n"
