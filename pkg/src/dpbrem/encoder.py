"""K-means state encoding of a UE drop.

Clusters are seeded at the BS coordinates and keep that order, so feature
block ``k`` of the state always describes the users around BS ``k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_ITERATIONS = 100


@dataclass(frozen=True)
class ClusterSummary:
    centers: np.ndarray   # (K, 2), cluster k seeded at BS k
    counts: np.ndarray    # (K,)


def _assign(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    dx = points[:, 0:1] - centers[None, :, 0]
    dy = points[:, 1:2] - centers[None, :, 1]
    # argmax/argmin return the first index on ties -> lowest cluster wins
    return np.argmin(dx * dx + dy * dy, axis=1)


def kmeans_cluster(ue_positions, bs_positions, max_iter: int = MAX_ITERATIONS) -> ClusterSummary:
    """Lloyd iterations from the BS coordinates until assignments stop changing.

    Cluster means use ``math.fsum`` so the result does not depend on the
    order in which UEs are listed. Empty clusters keep their previous center.
    """
    points = np.asarray(ue_positions, dtype=float)
    centers = np.array(bs_positions, dtype=float)
    if points.ndim != 2 or len(points) == 0:
        raise ValueError("need at least one UE position")
    k = len(centers)
    labels = None
    for _ in range(max_iter):
        new_labels = _assign(points, centers)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = points[labels == j]
            if len(members):
                centers[j, 0] = math.fsum(members[:, 0]) / len(members)
                centers[j, 1] = math.fsum(members[:, 1]) / len(members)
    counts = np.bincount(labels, minlength=k)
    return ClusterSummary(centers=centers, counts=counts)


def encode_state(summary: ClusterSummary, arena_half_width: float, n_ue: int) -> np.ndarray:
    """Flatten to ``[x0, y0, c0, x1, y1, c1, ...]`` with coordinates in [-1, 1]
    and counts as fractions of ``n_ue``."""
    k = len(summary.centers)
    state = np.empty(3 * k)
    state[0::3] = summary.centers[:, 0] / arena_half_width
    state[1::3] = summary.centers[:, 1] / arena_half_width
    state[2::3] = summary.counts / n_ue
    return state


def encode_drop(deployment, drop) -> np.ndarray:
    summary = kmeans_cluster(drop.positions, deployment.bs_positions)
    return encode_state(summary, deployment.arena_half_width, drop.n_ue)
