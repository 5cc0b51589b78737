"""Graph-abstracted search environment and synthetic hazard scenarios.

Vertices are 1-indexed. Per-vertex arrays (``truth_levels``, ``scenes``,
``hazard_types``) are stored 0-indexed, so vertex ``v`` lives at ``v - 1``.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

LEVELS = (1, 2, 3, 4, 5)
HAZARD_TYPES = ("none", "collapse", "fire")

# (none, collapse, fire) fractions for the named scene types.
SCENARIO_TYPES = {
    "NFF": (1 / 3, 0.0, 2 / 3),
    "NCC": (1 / 3, 2 / 3, 0.0),
    "NCF": (1 / 3, 1 / 3, 1 / 3),
}


class EnvError(ValueError):
    """Raised for malformed or invalid environment descriptions."""


@dataclass(frozen=True)
class EnvironmentGraph:
    n: int
    edges: tuple[tuple[int, int], ...]
    neighborhoods: dict[str, tuple[int, ...]]
    truth_levels: tuple[int, ...]
    scenes: tuple[tuple[str, ...], ...]
    hazard_types: Optional[tuple[str, ...]] = None
    _adj: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    _hood_of: dict[int, str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.n
        if n < 1:
            raise EnvError("graph needs at least one vertex")
        adj: list[set[int]] = [set() for _ in range(n + 1)]
        for u, v in self.edges:
            if u == v:
                raise EnvError(f"self-loop at vertex {u}")
            for w in (u, v):
                if not 1 <= w <= n:
                    raise EnvError(f"edge ({u}, {v}) references unknown vertex {w}")
            adj[u].add(v)
            adj[v].add(u)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(a)) for a in adj))

        hood_of: dict[int, str] = {}
        for name, members in self.neighborhoods.items():
            for v in members:
                if not 1 <= v <= n:
                    raise EnvError(f"neighborhood {name!r} references unknown vertex {v}")
                if v in hood_of:
                    raise EnvError(
                        f"neighborhoods are not a partition: vertex {v} in both "
                        f"{hood_of[v]!r} and {name!r}"
                    )
                hood_of[v] = name
        missing = [v for v in range(1, n + 1) if v not in hood_of]
        if missing:
            raise EnvError(f"neighborhoods are not a partition: vertex {missing[0]} unassigned")
        object.__setattr__(self, "_hood_of", hood_of)

        if len(self.truth_levels) != n:
            raise EnvError(f"expected {n} truth levels, got {len(self.truth_levels)}")
        for v, lv in enumerate(self.truth_levels, start=1):
            if lv not in LEVELS:
                raise EnvError(f"vertex {v}: truth level {lv} out of range 1..5")
        if len(self.scenes) != n:
            raise EnvError(f"expected {n} scenes, got {len(self.scenes)}")
        if self.hazard_types is not None:
            if len(self.hazard_types) != n:
                raise EnvError(f"expected {n} hazard types, got {len(self.hazard_types)}")
            for v, h in enumerate(self.hazard_types, start=1):
                if h not in HAZARD_TYPES:
                    raise EnvError(f"vertex {v}: unknown hazard type {h!r}")

        seen = self.distances(1)
        if len(seen) != n:
            lost = min(set(range(1, n + 1)) - set(seen))
            raise EnvError(f"graph is disconnected: vertex {lost} unreachable from 1")

    @property
    def vertices(self) -> range:
        return range(1, self.n + 1)

    def check_vertex(self, v: int) -> None:
        if not (isinstance(v, (int, np.integer)) and 1 <= v <= self.n):
            raise EnvError(f"unknown vertex {v}")

    def neighbors(self, v: int) -> tuple[int, ...]:
        self.check_vertex(v)
        return self._adj[v]

    def closed_neighbors(self, v: int) -> tuple[int, ...]:
        """Moves available from ``v``: stay or step to an adjacent vertex, ascending."""
        return tuple(sorted((v, *self._adj[v])))

    def adjacent_or_equal(self, u: int, v: int) -> bool:
        return u == v or v in self._adj[u]

    def level(self, v: int) -> int:
        self.check_vertex(v)
        return self.truth_levels[v - 1]

    def hazard(self, v: int) -> Optional[str]:
        self.check_vertex(v)
        return None if self.hazard_types is None else self.hazard_types[v - 1]

    def scene(self, v: int) -> tuple[str, ...]:
        self.check_vertex(v)
        return self.scenes[v - 1]

    def neighborhood_name(self, v: int) -> str:
        self.check_vertex(v)
        return self._hood_of[v]

    def distances(self, source: int, allowed: Optional[Iterable[int]] = None) -> dict[int, int]:
        """BFS hop distances from ``source``, optionally inside an induced subgraph."""
        ok = None if allowed is None else set(allowed)
        dist = {source: 0}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for w in self._adj[u]:
                if w not in dist and (ok is None or w in ok):
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return dist

    def to_dict(self) -> dict:
        verts = []
        for v in self.vertices:
            rec = {
                "id": v,
                "neighborhood": self._hood_of[v],
                "truth_level": self.truth_levels[v - 1],
                "scene_images": list(self.scenes[v - 1]),
            }
            if self.hazard_types is not None:
                rec["hazard"] = self.hazard_types[v - 1]
            verts.append(rec)
        edges = sorted({(min(u, v), max(u, v)) for u, v in self.edges})
        return {"vertices": verts, "edges": [list(e) for e in edges]}


def neighborhood_of(graph: EnvironmentGraph, v: int) -> frozenset[int]:
    """The neighborhood group containing ``v`` (always includes ``v``)."""
    name = graph.neighborhood_name(v)
    return frozenset(graph.neighborhoods[name])


def graph_from_dict(data: dict) -> EnvironmentGraph:
    try:
        verts = sorted(data["vertices"], key=lambda r: int(r["id"]))
        ids = [int(r["id"]) for r in verts]
        n = len(ids)
        if ids != list(range(1, n + 1)):
            raise EnvError(f"vertex ids must be exactly 1..{n}, got {ids[:5]}...")
        hoods: dict[str, list[int]] = {}
        for r in verts:
            hoods.setdefault(str(r["neighborhood"]), []).append(int(r["id"]))
        has_hazard = all("hazard" in r for r in verts)
        edges = []
        for e in data["edges"]:
            if len(e) != 2:
                raise EnvError(f"edge {e!r} must have two endpoints")
            edges.append((int(e[0]), int(e[1])))
        return EnvironmentGraph(
            n=n,
            edges=tuple(edges),
            neighborhoods={k: tuple(v) for k, v in hoods.items()},
            truth_levels=tuple(int(r["truth_level"]) for r in verts),
            scenes=tuple(tuple(str(s) for s in r.get("scene_images", [])) for r in verts),
            hazard_types=tuple(str(r["hazard"]) for r in verts) if has_hazard else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, EnvError):
            raise
        raise EnvError(f"malformed environment: {exc!r}") from exc


def load_environment(path) -> EnvironmentGraph:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise EnvError(f"{path}: not valid JSON ({exc})") from exc
    return graph_from_dict(data)


def save_environment(graph: EnvironmentGraph, path) -> None:
    Path(path).write_text(json.dumps(graph.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class HazardScenarioSpec:
    """Fractions of (none, collapse, fire) vertices plus the level law for hazards."""

    proportions: tuple[float, float, float]
    seed: int = 0
    # P(level = 1..5) for collapse/fire vertices; none-type vertices are always level 1.
    level_distribution: tuple[float, ...] = (0.0, 0.25, 0.25, 0.25, 0.25)
    # Vertices forced to hazard type "none" (the team's entry point).
    safe_vertices: tuple[int, ...] = (1,)

    def __post_init__(self):
        p = np.asarray(self.proportions, dtype=float)
        if p.shape != (3,) or (p < 0).any() or abs(p.sum() - 1) > 1e-9:
            raise EnvError(f"hazard proportions must be 3 non-negative values summing to 1, got {self.proportions}")
        q = np.asarray(self.level_distribution, dtype=float)
        if q.shape != (5,) or (q < 0).any() or abs(q.sum() - 1) > 1e-9:
            raise EnvError("level_distribution must be 5 non-negative values summing to 1")

    @classmethod
    def named(cls, kind: str, seed: int = 0, **kw) -> "HazardScenarioSpec":
        try:
            return cls(SCENARIO_TYPES[kind.upper()], seed=seed, **kw)
        except KeyError:
            raise EnvError(f"unknown scenario type {kind!r}; expected one of {sorted(SCENARIO_TYPES)}") from None


def _apportion(proportions, n: int) -> list[int]:
    # Largest-remainder rounding: every count is within one vertex of p * n.
    raw = np.asarray(proportions, dtype=float) * n
    counts = np.floor(raw).astype(int)
    rem = raw - counts
    for i in np.argsort(-rem, kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    return counts.tolist()


def generate_scenario(graph: EnvironmentGraph, spec: HazardScenarioSpec) -> EnvironmentGraph:
    rng = np.random.default_rng(spec.seed)
    counts = _apportion(spec.proportions, graph.n)
    order = list(rng.permutation(graph.n) + 1)
    if counts[0] > 0:
        pinned = [v for v in spec.safe_vertices if 1 <= v <= graph.n][: counts[0]]
        order = pinned + [v for v in order if v not in pinned]
    types = [""] * graph.n
    pos = 0
    for kind, c in zip(HAZARD_TYPES, counts):
        for v in order[pos:pos + c]:
            types[int(v) - 1] = kind
        pos += c
    levels = []
    for kind in types:
        if kind == "none":
            levels.append(1)
        else:
            levels.append(int(rng.choice(LEVELS, p=spec.level_distribution)))
    return EnvironmentGraph(
        n=graph.n,
        edges=graph.edges,
        neighborhoods=graph.neighborhoods,
        truth_levels=tuple(levels),
        scenes=graph.scenes,
        hazard_types=tuple(types),
    )


def hazard_counts(graph: EnvironmentGraph) -> dict[str, int]:
    kinds = graph.hazard_types or ()
    return {k: sum(1 for h in kinds if h == k) for k in HAZARD_TYPES}


def default_environment_path() -> Path:
    return Path(__file__).with_name("data") / "school.json"


def load_school() -> EnvironmentGraph:
    """The bundled 46-vertex school layout (approximate; built by scripts/make_school.py)."""
    return load_environment(default_environment_path())
