"""Exact lower-bounded transportation solve for cluster assignment.

Each point supplies one unit, each cluster demands `min_size` units, and
a shared slack sink absorbs the surplus; arc cost is the point-to-centroid
squared distance. Solved by successive shortest paths with Johnson
potentials, warm-started from the nearest-centroid assignment (which is
dual-feasible), so only the total deficit many Dijkstra passes are needed.
"""

from __future__ import annotations

import heapq

import numpy as np


class InfeasibleConstraintError(ValueError):
    """k * min_size exceeds the number of points."""


def nearest_assignment(cost: np.ndarray) -> np.ndarray:
    """Unconstrained assignment; ties go to the lowest cluster index."""
    return np.argmin(cost, axis=1)


def constrained_assignment(cost: np.ndarray, min_size: int) -> np.ndarray:
    """Minimum-cost assignment subject to every cluster receiving min_size points.

    cost: (n_points, k) array of nonnegative arc costs. Returns the label
    vector of the exact optimum; deterministic (no randomness).
    """
    n, k = cost.shape
    if min_size < 0:
        raise ValueError("min_size must be >= 0")
    if k * min_size > n:
        raise InfeasibleConstraintError(
            f"infeasible: k * min_size = {k * min_size} exceeds {n} points"
        )
    labels = nearest_assignment(cost)
    if min_size == 0:
        return labels

    counts = np.bincount(labels, minlength=k)
    deficit = int(np.maximum(min_size - counts, 0).sum())
    if deficit == 0:
        return labels

    cost_rows = cost.tolist()  # python floats: much faster inner loop
    labels = labels.tolist()
    counts = counts.tolist()
    members: list[set[int]] = [set() for _ in range(k)]
    for i, j in enumerate(labels):
        members[j].add(i)

    # Node ids: points 0..n-1, clusters n..n+k-1, slack n+k.
    slack = n + k
    pi = [0.0] * (n + k + 1)
    for i in range(n):
        pi[i] = -cost_rows[i][labels[i]]

    inf = float("inf")
    while deficit > 0:
        dist = [inf] * (n + k + 1)
        parent = [-1] * (n + k + 1)
        done = [False] * (n + k + 1)
        dist[slack] = 0.0
        heap = [(0.0, slack)]
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            if u == slack:
                # Leave the slack along residual reverse arcs into
                # clusters currently holding surplus units.
                for j in range(k):
                    if counts[j] > min_size:
                        nd = d + max(0.0, pi[slack] - pi[n + j])
                        if nd < dist[n + j]:
                            dist[n + j] = nd
                            parent[n + j] = u
                            heapq.heappush(heap, (nd, n + j))
            elif u >= n:
                # Cluster node: send one of its members elsewhere.
                j = u - n
                pij = pi[u]
                for i in members[j]:
                    nd = d + max(0.0, -cost_rows[i][j] + pij - pi[i])
                    if nd < dist[i]:
                        dist[i] = nd
                        parent[i] = u
                        heapq.heappush(heap, (nd, i))
            else:
                # Point node: may move to any other cluster.
                row = cost_rows[u]
                piu = pi[u]
                current = labels[u]
                for j in range(k):
                    if j == current:
                        continue
                    v = n + j
                    nd = d + max(0.0, row[j] + piu - pi[v])
                    if nd < dist[v]:
                        dist[v] = nd
                        parent[v] = u
                        heapq.heappush(heap, (nd, v))

        target = -1
        best = inf
        for j in range(k):
            if counts[j] < min_size and dist[n + j] < best:
                best = dist[n + j]
                target = j
        if target < 0:  # unreachable given n >= k*min_size
            raise RuntimeError("no augmenting path to a deficit cluster")

        dt = dist[n + target]
        for v in range(n + k + 1):
            pi[v] += min(dist[v], dt)

        # Walk back slack -> j1 -> i1 -> ... -> target, moving each point
        # one cluster forward along the path.
        v = n + target
        while parent[v] != slack:
            i = parent[v]           # point moving into cluster v-n
            j_from = parent[i] - n  # its current cluster
            members[j_from].discard(i)
            members[v - n].add(i)
            labels[i] = v - n
            v = parent[i]
        counts[v - n] -= 1
        counts[target] += 1
        deficit -= 1

    return np.asarray(labels, dtype=np.int64)


def assignment_cost(cost: np.ndarray, labels: np.ndarray) -> float:
    return float(cost[np.arange(len(labels)), labels].sum())
