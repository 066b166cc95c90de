"""Size-constrained K-means over user embeddings, with model selection."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .mincostflow import (
    InfeasibleConstraintError,
    assignment_cost,
    constrained_assignment,
)

logger = logging.getLogger(__name__)

DEFAULT_MIN_SIZE = 10
DEFAULT_KS = (2, 25, 100, 1000)
DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-4
DEFAULT_SAMPLE_CAP = 10_000


def squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) matrix of squared Euclidean distances."""
    d2 = (
        (points * points).sum(axis=1)[:, None]
        + (centroids * centroids).sum(axis=1)[None, :]
        - 2.0 * points @ centroids.T
    )
    return np.maximum(d2, 0.0)


def kmeanspp_init(points: np.ndarray, k: int, seed: int) -> np.ndarray:
    """D^2-sampled initial centroids; distinct input points, seed-deterministic."""
    n = len(points)
    if k > n:
        raise InfeasibleConstraintError(f"k={k} exceeds {n} points")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    d2 = squared_distances(points, points[chosen])[:, 0]
    while len(chosen) < k:
        total = d2.sum()
        if total <= 0.0:
            remaining = np.setdiff1d(np.arange(n), np.asarray(chosen))
            idx = int(rng.choice(remaining))
        else:
            idx = int(rng.choice(n, p=d2 / total))
            if idx in chosen:  # can only happen via float underflow
                remaining = np.setdiff1d(np.arange(n), np.asarray(chosen))
                idx = int(rng.choice(remaining))
        chosen.append(idx)
        d2 = np.minimum(d2, squared_distances(points, points[[idx]])[:, 0])
    return points[chosen].copy()


def assign_min_size(points: np.ndarray, centroids: np.ndarray, min_size: int) -> np.ndarray:
    """Exact cost-minimal assignment with a per-cluster lower bound."""
    return constrained_assignment(squared_distances(points, centroids), min_size)


@dataclass
class ClusterModel:
    k: int
    min_size: int
    seed: int
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    iterations: int
    inertia_history: list[float] = field(default_factory=list)
    ids: list[str] | None = None

    @property
    def assignment(self) -> dict[str, int]:
        if self.ids is None:
            raise ValueError("model was fit without point ids")
        return {uid: int(c) for uid, c in zip(self.ids, self.labels)}

    def to_json(self) -> str:
        return json.dumps(
            {
                "k": self.k,
                "min_size": self.min_size,
                "seed": self.seed,
                "iterations": self.iterations,
                "inertia": self.inertia,
                "inertia_history": self.inertia_history,
                "centroids": self.centroids.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str, labels=None, ids=None) -> "ClusterModel":
        obj = json.loads(text)
        return cls(
            k=obj["k"],
            min_size=obj["min_size"],
            seed=obj["seed"],
            centroids=np.asarray(obj["centroids"], dtype=np.float64),
            labels=np.asarray(labels if labels is not None else [], dtype=np.int64),
            inertia=obj["inertia"],
            iterations=obj["iterations"],
            inertia_history=list(obj.get("inertia_history", [])),
            ids=ids,
        )


def _update_centroids(
    points: np.ndarray, labels: np.ndarray, centroids: np.ndarray
) -> np.ndarray:
    k = len(centroids)
    new = centroids.copy()
    empty = []
    for j in range(k):
        mask = labels == j
        if mask.any():
            new[j] = points[mask].mean(axis=0)
        else:
            empty.append(j)
    if empty:  # only possible when min_size == 0
        d2 = squared_distances(points, new)[np.arange(len(points)), labels]
        order = np.argsort(-d2)
        for j, idx in zip(empty, order):
            new[j] = points[idx]
    return new


def fit_constrained_kmeans(
    points: np.ndarray,
    k: int,
    min_size: int = DEFAULT_MIN_SIZE,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    ids: list[str] | None = None,
) -> ClusterModel:
    """Lloyd iterations with an exact min-cost-flow assignment step.

    Alternates the size-constrained assignment and centroid means until
    the max centroid shift drops below tol, the assignment stops
    changing, or max_iter; inertia is non-increasing across iterations.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if k * min_size > n:
        raise InfeasibleConstraintError(
            f"infeasible: k * min_size = {k * min_size} exceeds {n} points"
        )
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    centroids = kmeanspp_init(points, k, seed)
    history: list[float] = []
    prev_labels: np.ndarray | None = None
    labels = np.zeros(n, dtype=np.int64)
    iterations = 0
    for it in range(1, max_iter + 1):
        cost = squared_distances(points, centroids)
        labels = constrained_assignment(cost, min_size)
        history.append(assignment_cost(cost, labels))
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            iterations = it - 1
            break
        centroids_new = _update_centroids(points, labels, centroids)
        shift = float(np.sqrt(((centroids_new - centroids) ** 2).sum(axis=1)).max())
        centroids = centroids_new
        prev_labels = labels
        iterations = it
        if shift < tol:
            cost = squared_distances(points, centroids)
            labels = constrained_assignment(cost, min_size)
            history.append(assignment_cost(cost, labels))
            break
    else:
        cost = squared_distances(points, centroids)
        labels = constrained_assignment(cost, min_size)
        history.append(assignment_cost(cost, labels))
    return ClusterModel(
        k=k,
        min_size=min_size,
        seed=seed,
        centroids=centroids,
        labels=labels,
        inertia=history[-1],
        iterations=iterations,
        inertia_history=history,
        ids=ids,
    )


def silhouette(
    points: np.ndarray,
    labels: np.ndarray,
    sample_cap: int = DEFAULT_SAMPLE_CAP,
    seed: int = 0,
) -> float:
    """Mean silhouette coefficient, exact when len(points) <= sample_cap.

    Uses Euclidean distances; singleton-cluster points and 0/0 cases
    score 0. Above the cap, scores are averaged over a seeded sample of
    points, each still compared against the full dataset.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(points)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ValueError("silhouette requires at least 2 clusters")
    if n <= sample_cap:
        sample = np.arange(n)
    else:
        rng = np.random.default_rng(seed)
        sample = np.sort(rng.choice(n, size=sample_cap, replace=False))

    dist = np.sqrt(squared_distances(points[sample], points))
    cluster_sizes = {int(c): int((labels == c).sum()) for c in uniq}
    sums = np.stack([dist[:, labels == c].sum(axis=1) for c in uniq], axis=1)
    scores = np.zeros(len(sample))
    cluster_pos = {int(c): i for i, c in enumerate(uniq)}
    for row, idx in enumerate(sample):
        own = int(labels[idx])
        own_pos = cluster_pos[own]
        own_size = cluster_sizes[own]
        if own_size <= 1:
            continue  # intra-distance undefined for singletons; score 0
        a = sums[row, own_pos] / (own_size - 1)
        b = min(
            sums[row, cluster_pos[int(c)]] / cluster_sizes[int(c)]
            for c in uniq if int(c) != own
        )
        denom = max(a, b)
        scores[row] = 0.0 if denom <= 0.0 else (b - a) / denom
    return float(scores.mean())


@dataclass
class GranularitySuite:
    models: dict[int, ClusterModel]
    silhouettes: dict[int, float]
    best_k: int | None


def fit_granularities(
    points: np.ndarray,
    ks,
    min_size: int = DEFAULT_MIN_SIZE,
    seed: int = 0,
    sample_cap: int = DEFAULT_SAMPLE_CAP,
    **fit_kwargs,
) -> GranularitySuite:
    """Fit one model per granularity on identical inputs; skip infeasible Ks."""
    points = np.asarray(points, dtype=np.float64)
    models: dict[int, ClusterModel] = {}
    silhouettes: dict[int, float] = {}
    for k in sorted(set(ks)):
        try:
            model = fit_constrained_kmeans(
                points, k, min_size=min_size, seed=seed, **fit_kwargs
            )
        except InfeasibleConstraintError as exc:
            logger.warning("skipping K=%d: %s", k, exc)
            continue
        models[k] = model
        if len(np.unique(model.labels)) >= 2:
            silhouettes[k] = silhouette(points, model.labels, sample_cap, seed)
        else:
            logger.warning("K=%d yields a single cluster; silhouette undefined", k)
    best_k = max(silhouettes, key=silhouettes.__getitem__) if silhouettes else None
    return GranularitySuite(models=models, silhouettes=silhouettes, best_k=best_k)
