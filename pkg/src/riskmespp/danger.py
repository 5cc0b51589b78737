"""Per-vertex danger distributions over the five levels and the online map.

A distribution is a length-5 float array ``eta`` with ``eta[l - 1]`` the
probability of level ``l``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .env_graph import EnvironmentGraph, neighborhood_of
from .similarity import DescriptorCorpus, ScoreMatrix

N_LEVELS = 5
UNIFORM = np.full(N_LEVELS, 1.0 / N_LEVELS)


class DangerError(ValueError):
    pass


def check_distribution(eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (N_LEVELS,):
        raise DangerError(f"danger distribution must have 5 entries, got shape {eta.shape}")
    if (eta < 0).any() or (eta > 1).any() or abs(eta.sum() - 1.0) > 1e-9:
        raise DangerError(f"not a probability vector: {eta}")
    return eta


def binarize(scores, theta: float) -> np.ndarray:
    return (np.asarray(scores, dtype=float) >= theta).astype(int)


def estimate_distribution(binarized: Sequence, fallback=UNIFORM) -> np.ndarray:
    """Frequency of ones per level across all binarized vectors."""
    if len(binarized) == 0:
        raise DangerError("need at least one binarized vector")
    counts = np.sum(np.asarray(binarized, dtype=float).reshape(-1, N_LEVELS), axis=0)
    rho = counts.sum()
    if rho == 0:
        return np.array(fallback, dtype=float)
    return counts / rho


def point_estimate(eta) -> int:
    eta = np.asarray(eta, dtype=float)
    # highest level among the maxima
    return int(N_LEVELS - np.argmax(eta[::-1]))


def cumulative_confidence(eta, kappa: int) -> float:
    if not 1 <= kappa <= N_LEVELS:
        raise DangerError(f"kappa must be in 1..5, got {kappa}")
    return float(np.sum(np.asarray(eta, dtype=float)[:kappa]))


@dataclass
class DangerEstimateMap:
    eta: np.ndarray        # (n, 5); row v - 1 is vertex v
    visited: np.ndarray    # (n,) bool
    updated_at: np.ndarray  # (n,) int, -1 = prior

    @property
    def n(self) -> int:
        return self.eta.shape[0]

    def copy(self) -> "DangerEstimateMap":
        return DangerEstimateMap(self.eta.copy(), self.visited.copy(), self.updated_at.copy())

    def dist(self, v: int) -> np.ndarray:
        return self.eta[v - 1]

    def z(self, v: int) -> int:
        return point_estimate(self.eta[v - 1])

    def H(self, v: int, kappa: int) -> float:
        return cumulative_confidence(self.eta[v - 1], kappa)

    def point_estimates(self) -> np.ndarray:
        return N_LEVELS - np.argmax(self.eta[:, ::-1], axis=1)


def make_prior(kind: str, graph: EnvironmentGraph) -> DangerEstimateMap:
    n = graph.n
    if kind in ("uniform", "PU"):
        return DangerEstimateMap(np.tile(UNIFORM, (n, 1)), np.zeros(n, bool), np.full(n, -1))
    if kind in ("perfect", "PK"):
        eta = np.zeros((n, N_LEVELS))
        eta[np.arange(n), np.asarray(graph.truth_levels) - 1] = 1.0
        return DangerEstimateMap(eta, np.ones(n, bool), np.full(n, -1))
    raise DangerError(f"unknown prior {kind!r}; expected 'uniform' or 'perfect'")


def vertex_estimate(graph: EnvironmentGraph, v: int, scores: ScoreMatrix, corpus: DescriptorCorpus,
                    theta: float, image_fraction: float = 0.05) -> np.ndarray:
    """Danger distribution from the first ``ceil(fraction * r)`` images of ``v``'s scene."""
    scene = graph.scene(v)
    if not scene:
        raise DangerError(f"vertex {v} has no scene images")
    k = max(1, math.ceil(image_fraction * len(scene) - 1e-12))
    ys = [binarize(scores.level_scores(img, dset), theta)
          for img in scene[:k] for dset in corpus.sets]
    return estimate_distribution(ys)


def update_on_visit(emap: DangerEstimateMap, graph: EnvironmentGraph, v: int, scores: ScoreMatrix,
                    corpus: DescriptorCorpus, theta: float, image_fraction: float = 0.05,
                    t: int = 0, estimate: Optional[np.ndarray] = None) -> DangerEstimateMap:
    """First-visit update of ``v``, spread to unvisited vertices of its neighborhood.

    Mutates and returns ``emap``. ``estimate`` skips recomputation when the
    caller already has ``v``'s distribution.
    """
    graph.check_vertex(v)
    if emap.visited[v - 1]:
        return emap
    eta = vertex_estimate(graph, v, scores, corpus, theta, image_fraction) if estimate is None else estimate
    for u in sorted(neighborhood_of(graph, v)):
        if u == v or not emap.visited[u - 1]:
            emap.eta[u - 1] = eta
            emap.updated_at[u - 1] = t
    emap.visited[v - 1] = True
    return emap


def bhattacharyya(emap: DangerEstimateMap, graph: EnvironmentGraph) -> float:
    """Mean over vertices of sqrt(estimated probability of the true level)."""
    idx = np.asarray(graph.truth_levels) - 1
    return float(np.mean(np.sqrt(emap.eta[np.arange(graph.n), idx])))
