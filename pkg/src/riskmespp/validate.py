"""Post-hoc checks of plans against adjacency and danger constraints.

Deliberately recomputes point estimates and cumulative confidences from the
raw distributions instead of reusing the planner's feasibility code.
"""
from __future__ import annotations

from typing import Iterable, Mapping, Sequence

from .env_graph import EnvironmentGraph


def _z(eta_v) -> int:
    top = max(eta_v)
    return max(l for l in range(1, 6) if eta_v[l - 1] == top)


def plan_violations(paths: Mapping[int, Sequence[int]], graph: EnvironmentGraph, eta,
                    agents: Iterable, mode: str, exempt: Iterable[int] = ()) -> list[str]:
    """Problems with ``paths`` under the danger map ``eta`` (row ``v - 1`` per vertex).

    Steps t >= 1 are checked against the agent's constraint; agents in
    ``exempt`` (stranded, holding position) are only checked for adjacency.
    """
    prof = {a.id: a for a in agents}
    skip = set(exempt)
    out = []
    for a, path in paths.items():
        for t in range(1, len(path)):
            u, v = path[t - 1], path[t]
            if u != v and v not in graph.neighbors(u):
                out.append(f"agent {a} step {t}: {u} -> {v} is not an edge")
            if a in skip or mode == "NC":
                continue
            row = [float(x) for x in eta[v - 1]]
            k = prof[a].kappa
            if mode == "PT" and _z(row) > k:
                out.append(f"agent {a} step {t}: vertex {v} point estimate {_z(row)} > kappa {k}")
            elif mode == "PB" and sum(row[:k]) < prof[a].alpha - 1e-9:
                out.append(f"agent {a} step {t}: vertex {v} confidence {sum(row[:k]):.4f} < alpha {prof[a].alpha}")
    return out


def ground_truth_violations(positions: Sequence[Mapping[int, int]], graph: EnvironmentGraph,
                            agents: Iterable) -> list[str]:
    """Steps where an agent stood on a vertex whose true level exceeds its kappa."""
    kappa = {a.id: a.kappa for a in agents}
    out = []
    for t, pos in enumerate(positions):
        for a, v in pos.items():
            if graph.truth_levels[v - 1] > kappa[a]:
                out.append(f"agent {a} at t={t} on vertex {v} (level {graph.truth_levels[v - 1]} > {kappa[a]})")
    return out
