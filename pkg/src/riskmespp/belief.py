"""Target belief b = [b_c, b_1, ..., b_n] with motion and capture updates."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .env_graph import EnvironmentGraph

TOL = 1e-9


class BeliefError(ValueError):
    pass


def check_belief(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.size < 2:
        raise BeliefError(f"belief must be a vector of length n + 1, got shape {b.shape}")
    if (b < -TOL).any() or (b > 1 + TOL).any() or abs(b.sum() - 1.0) > TOL:
        raise BeliefError(f"belief is not a probability vector (sum={b.sum()!r})")
    return b


def init_belief(n: int, vertex_probs: Mapping[int, float], capture: float = 0.0) -> np.ndarray:
    b = np.zeros(n + 1)
    b[0] = capture
    for v, p in vertex_probs.items():
        if not 1 <= v <= n:
            raise BeliefError(f"unknown vertex {v}")
        b[v] += p
    if abs(b.sum() - 1.0) > TOL:
        raise BeliefError(f"belief spec sums to {b.sum():.6g}, expected 1")
    return check_belief(b)


def uniform_over(n: int, vertices: Sequence[int]) -> np.ndarray:
    p = 1.0 / len(vertices)
    return init_belief(n, {v: p for v in vertices})


def random_initial_belief(graph: EnvironmentGraph, rng: np.random.Generator, k: int = 9,
                          exclude: Sequence[int] = (1,)) -> np.ndarray:
    """Uniform belief over ``k`` distinct random vertices, avoiding ``exclude``."""
    pool = [v for v in graph.vertices if v not in set(exclude)]
    chosen = sorted(int(v) for v in rng.choice(pool, size=min(k, len(pool)), replace=False))
    return uniform_over(graph.n, chosen)


@dataclass(frozen=True)
class MotionModel:
    M: np.ndarray
    is_identity: bool = field(default=False, compare=False)

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise BeliefError(f"motion matrix must be square, got shape {M.shape}")
        if (M < 0).any():
            raise BeliefError("motion matrix has negative entries")
        bad = np.flatnonzero(np.abs(M.sum(axis=1) - 1.0) > TOL)
        if bad.size:
            raise BeliefError(f"motion matrix row {bad[0] + 1} sums to {M[bad[0]].sum():.6g}, expected 1")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "is_identity", bool(np.array_equal(M, np.eye(M.shape[0]))))

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @classmethod
    def identity(cls, n: int) -> "MotionModel":
        return cls(np.eye(n))

    @classmethod
    def lazy_random_walk(cls, graph: EnvironmentGraph, stay: float = 0.5) -> "MotionModel":
        M = np.zeros((graph.n, graph.n))
        for v in graph.vertices:
            nbrs = graph.neighbors(v)
            M[v - 1, v - 1] = stay if nbrs else 1.0
            for u in nbrs:
                M[v - 1, u - 1] = (1.0 - stay) / len(nbrs)
        return cls(M)

    def check_graph(self, graph: EnvironmentGraph) -> None:
        if self.n != graph.n:
            raise BeliefError(f"motion matrix is {self.n}x{self.n}, graph has {graph.n} vertices")
        rows, cols = np.nonzero(self.M)
        for u, v in zip(rows + 1, cols + 1):
            if not graph.adjacent_or_equal(int(u), int(v)):
                raise BeliefError(f"motion matrix moves mass along non-edge ({u}, {v})")


@dataclass(frozen=True)
class CaptureModel:
    """Same-vertex perfect detection, or explicit (n+1)x(n+1) matrices keyed (agent, vertex)."""

    matrices: Optional[Mapping[tuple[int, int], np.ndarray]] = None

    def __post_init__(self):
        if self.matrices is None:
            return
        for key, C in self.matrices.items():
            C = np.asarray(C, dtype=float)
            if C.ndim != 2 or C.shape[0] != C.shape[1]:
                raise BeliefError(f"capture matrix {key} must be square, got shape {C.shape}")
            if (C < 0).any() or (np.abs(C.sum(axis=1) - 1.0) > TOL).any():
                raise BeliefError(f"capture matrix {key} is not row-stochastic")
            if C[0, 0] != 1.0:
                raise BeliefError(f"capture matrix {key} must keep captured mass captured")

    @property
    def perfect(self) -> bool:
        return self.matrices is None

    @staticmethod
    def same_vertex_matrix(n: int, u: int) -> np.ndarray:
        C = np.eye(n + 1)
        C[u, u] = 0.0
        C[u, 0] = 1.0
        return C

    @classmethod
    def explicit_same_vertex(cls, n: int, agents: Sequence[int]) -> "CaptureModel":
        return cls({(a, u): cls.same_vertex_matrix(n, u) for a in agents for u in range(1, n + 1)})


PERFECT = CaptureModel()


def update(b, motion: MotionModel, positions: Mapping[int, int], capture: CaptureModel = PERFECT) -> np.ndarray:
    """One step: target motion on b_1..b_n, then detection at the agents' new vertices."""
    b = np.asarray(b, dtype=float)
    n = b.size - 1
    if motion.n != n:
        raise BeliefError(f"belief has {n} vertices but motion matrix is {motion.n}x{motion.n}")
    out = np.empty_like(b)
    out[0] = b[0]
    out[1:] = b[1:] if motion.is_identity else b[1:] @ motion.M
    if capture.perfect:
        for v in set(positions.values()):
            if not 1 <= v <= n:
                raise BeliefError(f"agent position {v} outside 1..{n}")
            out[0] += out[v]
            out[v] = 0.0
        return out
    for a in sorted(positions):
        C = np.asarray(capture.matrices[(a, positions[a])])
        if C.shape != (n + 1, n + 1):
            raise BeliefError(f"capture matrix for agent {a} has shape {C.shape}, expected {(n + 1, n + 1)}")
        out = out @ C
    return out


def discounted_capture_objective(captures: Sequence[float], gamma: float) -> float:
    """Sum over t of gamma^t * b_c(t)."""
    if not 0 < gamma <= 1:
        raise BeliefError(f"gamma must lie in (0, 1], got {gamma}")
    return float(sum(gamma ** t * c for t, c in enumerate(captures)))
