"""Danger-constrained receding-horizon search planner.

Each agent plans a walk of ``h`` moves from its current vertex. The plan
value is the discounted probability mass captured along the horizon,

    sum_{t=1..h} gamma^t * sum_v psi_v(t),

where the residual belief flows through the target motion model and is
removed wherever some agent stands (perfect same-vertex detection). Agents
plan one after another in ascending id with earlier agents' walks held fixed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .belief import MotionModel, check_belief
from .danger import DangerEstimateMap
from .env_graph import EnvironmentGraph

MODES = ("NC", "PT", "PB")
EPS = 1e-12
# slack on H >= alpha so that e.g. 3 * 0.2 >= 0.6 holds despite rounding
CONF_TOL = 1e-9


class PlannerError(ValueError):
    pass


class StrandedAgent(PlannerError):
    def __init__(self, agent_id: int, vertex: int):
        super().__init__(f"agent {agent_id} is stranded at vertex {vertex}: "
                         "no move satisfies its danger constraint")
        self.agent_id = agent_id
        self.vertex = vertex


@dataclass(frozen=True)
class AgentProfile:
    id: int
    kappa: int = 5
    alpha: float = 1.0
    start: int = 1
    mva: bool = False

    def __post_init__(self):
        if self.kappa not in (1, 2, 3, 4, 5):
            raise PlannerError(f"agent {self.id}: kappa must be in 1..5, got {self.kappa}")
        if not 0 < self.alpha <= 1:
            raise PlannerError(f"agent {self.id}: alpha must be in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 14
    gamma: float = 0.99
    mode: str = "NC"
    replan_period: int = 1

    def __post_init__(self):
        if self.horizon < 1:
            raise PlannerError("horizon must be >= 1")
        if not 0 < self.gamma <= 1:
            raise PlannerError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.mode not in MODES:
            raise PlannerError(f"unknown constraint mode {self.mode!r}")
        if self.replan_period < 1:
            raise PlannerError("replan_period must be >= 1")


@dataclass
class PlanningProblem:
    graph: EnvironmentGraph
    belief: np.ndarray
    estimates: DangerEstimateMap
    agents: Sequence[AgentProfile]
    positions: Mapping[int, int]
    config: PlannerConfig = field(default_factory=PlannerConfig)
    motion: Optional[MotionModel] = None

    def __post_init__(self):
        self.belief = check_belief(self.belief)
        if self.belief.size != self.graph.n + 1:
            raise PlannerError(f"belief length {self.belief.size} does not match n + 1 = {self.graph.n + 1}")
        if self.motion is None:
            self.motion = MotionModel.identity(self.graph.n)
        for a in self.agents:
            if a.id not in self.positions:
                raise PlannerError(f"no position for agent {a.id}")
            self.graph.check_vertex(self.positions[a.id])

    def agent(self, agent_id: int) -> AgentProfile:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise PlannerError(f"unknown agent {agent_id}")


@dataclass(frozen=True)
class JointPlan:
    paths: dict[int, tuple[int, ...]]
    objective: float
    stranded: frozenset[int] = frozenset()

    def position(self, agent_id: int, step: int) -> int:
        path = self.paths[agent_id]
        return path[min(step, len(path) - 1)]


def feasible_vertices(emap: DangerEstimateMap, agent: AgentProfile, mode: str) -> frozenset[int]:
    n = emap.n
    if mode == "NC":
        return frozenset(range(1, n + 1))
    if mode == "PT":
        z = emap.point_estimates()
        return frozenset(int(v) + 1 for v in np.flatnonzero(z <= agent.kappa))
    if mode == "PB":
        H = emap.eta[:, :agent.kappa].sum(axis=1)
        return frozenset(int(v) + 1 for v in np.flatnonzero(H >= agent.alpha - CONF_TOL))
    raise PlannerError(f"unknown constraint mode {mode!r}")


def check_not_stranded(graph: EnvironmentGraph, agent_id: int, start: int, feas: frozenset[int]) -> None:
    """An agent on an infeasible vertex may still step off it; it is stranded
    only when neither staying nor any neighbor is allowed."""
    if start not in feas and not any(u in feas for u in graph.neighbors(start)):
        raise StrandedAgent(agent_id, start)


# ---------------------------------------------------------------------------
# MILP model and LP export


@dataclass
class MilpModel:
    """Explicit linear model. Constraints are (name, {var: coef}, sense, rhs)."""

    var_names: list[str]
    var_kind: dict[str, str]                  # "B" binary, "C" continuous
    bounds: dict[str, tuple[float, float]]
    constraints: list[tuple[str, dict[str, float], str, float]]
    objective: dict[str, float]               # maximized
    objective_constant: float = 0.0
    horizon: int = 0
    agents: tuple[int, ...] = ()

    @property
    def binaries(self) -> list[str]:
        return [v for v in self.var_names if self.var_kind[v] == "B"]

    def to_arrays(self):
        """(c, A, lb, ub, lo_bounds, hi_bounds, integrality) for a minimizing solver."""
        index = {name: i for i, name in enumerate(self.var_names)}
        nv = len(self.var_names)
        c = np.zeros(nv)
        for name, coef in self.objective.items():
            c[index[name]] = -coef
        A = np.zeros((len(self.constraints), nv))
        lo = np.full(len(self.constraints), -np.inf)
        hi = np.full(len(self.constraints), np.inf)
        for r, (_, row, sense, rhs) in enumerate(self.constraints):
            for name, coef in row.items():
                A[r, index[name]] += coef
            if sense in ("<=", "="):
                hi[r] = rhs
            if sense in (">=", "="):
                lo[r] = rhs
        vlo = np.array([self.bounds[v][0] for v in self.var_names])
        vhi = np.array([self.bounds[v][1] for v in self.var_names])
        integrality = np.array([1 if self.var_kind[v] == "B" else 0 for v in self.var_names])
        return c, A, lo, hi, vlo, vhi, integrality


def _x(a, t, v):
    return f"x_{a}_{t}_{v}"


def build_milp(problem: PlanningProblem, fixed_plans: Optional[Mapping[int, Sequence[int]]] = None,
               agent_ids: Optional[Sequence[int]] = None) -> MilpModel:
    """Model for the agents in ``agent_ids`` (default: all not in ``fixed_plans``)."""
    g, cfg = problem.graph, problem.config
    h, n = cfg.horizon, g.n
    fixed = {a: tuple(p) for a, p in (fixed_plans or {}).items()}
    free = sorted(agent_ids if agent_ids is not None else [a.id for a in problem.agents if a.id not in fixed])
    M = problem.motion.M

    names: list[str] = []
    kind: dict[str, str] = {}
    bounds: dict[str, tuple[float, float]] = {}
    cons: list = []

    def add_var(name, k, lo=0.0, hi=1.0):
        names.append(name)
        kind[name] = k
        bounds[name] = (lo, hi)

    feas = {}
    for a in free:
        agent = problem.agent(a)
        start = problem.positions[a]
        feas[a] = feasible_vertices(problem.estimates, agent, cfg.mode)
        check_not_stranded(g, a, start, feas[a])
        for t in range(h + 1):
            for v in g.vertices:
                add_var(_x(a, t, v), "B")
    for t in range(h + 1):
        for v in g.vertices:
            add_var(f"beta_{t}_{v}", "C")
    for t in range(1, h + 1):
        for v in g.vertices:
            add_var(f"psi_{t}_{v}", "C")

    for a in free:
        start = problem.positions[a]
        for t in range(h + 1):
            cons.append((f"place_{a}_{t}", {_x(a, t, v): 1.0 for v in g.vertices}, "=", 1.0))
        cons.append((f"start_{a}", {_x(a, 0, start): 1.0}, "=", 1.0))
        for t in range(h):
            for v in g.vertices:
                row = {_x(a, t + 1, v): 1.0}
                for u in g.closed_neighbors(v):
                    row[_x(a, t, u)] = row.get(_x(a, t, u), 0.0) - 1.0
                cons.append((f"move_{a}_{t + 1}_{v}", row, "<=", 0.0))
        for t in range(1, h + 1):
            for v in g.vertices:
                if v not in feas[a]:
                    cons.append((f"danger_{a}_{t}_{v}", {_x(a, t, v): 1.0}, "=", 0.0))

    b0 = problem.belief
    for v in g.vertices:
        cons.append((f"belief0_{v}", {f"beta_0_{v}": 1.0}, "=", float(b0[v])))
    for t in range(1, h + 1):
        fixed_here = {}
        for p in fixed.values():
            u = p[min(t, len(p) - 1)]
            fixed_here[u] = fixed_here.get(u, 0) + 1
        for v in g.vertices:
            inflow = {f"beta_{t - 1}_{u}": -float(M[u - 1, v - 1])
                      for u in g.vertices if M[u - 1, v - 1] != 0.0}
            row = {f"psi_{t}_{v}": 1.0, **inflow}
            cons.append((f"flowcap_{t}_{v}", row, "<=", 0.0))
            row = {f"psi_{t}_{v}": 1.0}
            for a in free:
                row[_x(a, t, v)] = -1.0
            cons.append((f"seen_{t}_{v}", row, "<=", float(min(1, fixed_here.get(v, 0)))))
            row = {f"beta_{t}_{v}": 1.0, f"psi_{t}_{v}": 1.0, **inflow}
            cons.append((f"flow_{t}_{v}", row, "=", 0.0))

    gamma = cfg.gamma
    objective = {f"psi_{t}_{v}": gamma ** t for t in range(1, h + 1) for v in g.vertices}
    return MilpModel(names, kind, bounds, cons, objective, horizon=h, agents=tuple(free))


def _fmt(x: float) -> str:
    return repr(float(x))


def _lp_row(row: Mapping[str, float]) -> str:
    parts = []
    for name, coef in row.items():
        if coef == 0:
            continue
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        term = name if mag == 1.0 else f"{_fmt(mag)} {name}"
        parts.append(f"{sign} {term}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def export_lp(model: MilpModel, path) -> None:
    """Write ``model`` in CPLEX LP text format."""
    lines = [f"\\ search plan model: agents {list(model.agents)}, horizon {model.horizon}", "Maximize"]
    lines.append(f" obj: {_lp_row(model.objective)}")
    lines.append("Subject To")
    ops = {"<=": "<=", ">=": ">=", "=": "="}
    for name, row, sense, rhs in model.constraints:
        lines.append(f" {name}: {_lp_row(row)} {ops[sense]} {_fmt(rhs)}")
    lines.append("Bounds")
    for v in model.var_names:
        if model.var_kind[v] == "C":
            lo, hi = model.bounds[v]
            lines.append(f" {_fmt(lo)} <= {v} <= {_fmt(hi)}")
    lines.append("Binaries")
    bins = model.binaries
    for i in range(0, len(bins), 8):
        lines.append(" " + " ".join(bins[i:i + 8]))
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Exact solvers


def flow_captures(problem: PlanningProblem, paths: Mapping[int, Sequence[int]]) -> np.ndarray:
    """Per-step captured mass sum_v psi_v(t), t = 0..h (entry 0 is always 0)."""
    h = problem.config.horizon
    motion = problem.motion
    beta = problem.belief[1:].copy()
    out = np.zeros(h + 1)
    for t in range(1, h + 1):
        phi = beta if motion.is_identity else beta @ motion.M
        occ = {p[min(t, len(p) - 1)] - 1 for p in paths.values()}
        idx = list(occ)
        out[t] = phi[idx].sum()
        beta = phi.copy()
        beta[idx] = 0.0
    return out


def plan_objective(problem: PlanningProblem, paths: Mapping[int, Sequence[int]]) -> float:
    caps = flow_captures(problem, paths)
    gamma = problem.config.gamma
    return float(sum(gamma ** t * caps[t] for t in range(1, len(caps))))


def _fixed_occupancy(fixed: Mapping[int, Sequence[int]], h: int) -> list[tuple[int, ...]]:
    occ = []
    for t in range(h + 1):
        occ.append(tuple(sorted({p[min(t, len(p) - 1)] for p in fixed.values()})))
    return occ


def _lex_greater(prefix: Sequence[int], best: Optional[Sequence[int]]) -> bool:
    return best is not None and tuple(prefix) > tuple(best[:len(prefix)])


def _solve_general(problem: PlanningProblem, start: int, feas: frozenset[int],
                   fixed: Mapping[int, Sequence[int]]) -> tuple[tuple[int, ...], float]:
    """Depth-first branch and bound over walks for any motion model."""
    g, cfg = problem.graph, problem.config
    h, gamma = cfg.horizon, cfg.gamma
    motion = problem.motion
    occ_fixed = _fixed_occupancy(fixed, h)
    moves = {v: tuple(u for u in g.closed_neighbors(v) if u in feas) for v in feas | {start}}
    disc = [gamma ** t for t in range(h + 2)]

    def step(beta, t, u):
        phi = beta if motion.is_identity else beta @ motion.M
        idx = list({u - 1, *(w - 1 for w in occ_fixed[t])})
        gained = phi[idx].sum()
        nxt = phi.copy()
        nxt[idx] = 0.0
        return nxt, gained

    # greedy incumbent: best immediate capture, smallest vertex on ties
    path, beta, val = [start], problem.belief[1:].copy(), 0.0
    for t in range(1, h + 1):
        best_u, best_state = None, None
        for u in moves[path[-1]]:
            nxt, gained = step(beta, t, u)
            if best_u is None or gained > best_state[1] + EPS:
                best_u, best_state = u, (nxt, gained)
        path.append(best_u)
        beta = best_state[0]
        val += disc[t] * best_state[1]
    best = [val, tuple(path)]

    def dfs(t, prefix, beta, obj):
        if t == h:
            if obj > best[0] + EPS or (obj >= best[0] - EPS and tuple(prefix) < best[1]):
                best[0], best[1] = obj, tuple(prefix)
            return
        bound = obj + disc[t + 1] * beta.sum()
        if bound < best[0] - EPS or (bound <= best[0] + EPS and _lex_greater(prefix, best[1])):
            return
        for u in moves[prefix[-1]]:
            nxt, gained = step(beta, t + 1, u)
            prefix.append(u)
            dfs(t + 1, prefix, nxt, obj + disc[t + 1] * gained)
            prefix.pop()

    dfs(0, [start], problem.belief[1:].copy(), 0.0)
    return best[1], plan_objective(problem, {**fixed, -1: best[1]})


def _solve_static(problem: PlanningProblem, start: int, feas: frozenset[int],
                  fixed: Mapping[int, Sequence[int]]) -> tuple[tuple[int, ...], float]:
    """Exact solver for a static target with perfect same-vertex detection.

    With identity motion a vertex's mass is collected once, at its first
    visit by anyone. Against fixed teammates that reach ``v`` first at
    ``T_v``, the agent gains ``b_v (gamma^s - gamma^T_v)`` by arriving at
    ``s < T_v``. Gains only shrink with time, so an optimal walk runs along
    shortest feasible paths between the vertices it collects; the value
    function is a search over visit orders of the (few) vertices with mass.
    """
    g, cfg = problem.graph, problem.config
    h, gamma = cfg.horizon, cfg.gamma
    beta = problem.belief[1:]
    disc = [gamma ** t for t in range(h + 2)]

    first = {}
    for p in fixed.values():
        for t in range(1, h + 1):
            u = p[min(t, len(p) - 1)]
            if first.get(u, h + 1) > t:
                first[u] = t
    team_const = sum(beta[v - 1] * disc[t] for v, t in first.items())

    targets = [v for v in sorted(feas) if beta[v - 1] > 0 and first.get(v, h + 1) > 1]
    bit = {v: 1 << i for i, v in enumerate(targets)}
    tgain = {}
    for v in targets:
        T = first.get(v)
        cut = disc[T] if T is not None else 0.0
        lim = (T - 1) if T is not None else h
        tgain[v] = [0.0] + [beta[v - 1] * (disc[s] - cut) if s <= lim else 0.0 for s in range(1, h + 1)]

    dist_cache: dict[int, dict[int, int]] = {}

    def dists(c):
        d = dist_cache.get(c)
        if d is None:
            d = dist_cache[c] = g.distances(c, allowed=feas)
        return d

    memo: dict[tuple[int, int, int], float] = {}

    def value(c, t, mask):
        key = (c, t, mask)
        if key in memo:
            return memo[key]
        best = 0.0
        if t < h:
            dc = dists(c)
            for j in targets:
                if mask & bit[j]:
                    continue
                d = dc.get(j)
                if d is None:
                    continue
                s = t + max(d, 1)
                if s > h:
                    continue
                gain = tgain[j][s]
                if gain <= 0.0:
                    continue
                cand = gain + value(j, s, mask | bit[j])
                if cand > best:
                    best = cand
        memo[key] = best
        return best

    best_val = value(start, 0, 0)
    path, acc, mask = [start], 0.0, 0
    for t in range(1, h + 1):
        cur = path[-1]
        for u in g.closed_neighbors(cur):
            if u not in feas:
                continue
            gain = 0.0
            m2 = mask
            if u in bit and not mask & bit[u]:
                gain = tgain[u][t]
                m2 = mask | bit[u]
            if acc + gain + value(u, t, m2) >= best_val - 1e-12 * max(1.0, best_val):
                path.append(u)
                acc += gain
                mask = m2
                break
        else:  # pragma: no cover - the current vertex is always a candidate
            raise PlannerError("walk reconstruction failed")
    return tuple(path), float(team_const + acc)


def solve_single_agent(problem: PlanningProblem, agent_id: int,
                       fixed_plans: Optional[Mapping[int, Sequence[int]]] = None,
                       method: str = "auto") -> tuple[tuple[int, ...], float]:
    """Optimal walk for one agent given teammates' fixed walks.

    Returns the lexicographically smallest optimal vertex sequence and the
    team plan value (fixed teammates' captures included).
    """
    agent = problem.agent(agent_id)
    start = problem.positions[agent_id]
    feas = feasible_vertices(problem.estimates, agent, problem.config.mode)
    check_not_stranded(problem.graph, agent_id, start, feas)
    fixed = dict(fixed_plans or {})
    if method == "auto":
        method = "static" if problem.motion.is_identity else "bnb"
    if method == "static":
        if not problem.motion.is_identity:
            raise PlannerError("static solver requires an identity motion model")
        return _solve_static(problem, start, feas, fixed)
    if method == "bnb":
        return _solve_general(problem, start, feas, fixed)
    raise PlannerError(f"unknown solver method {method!r}")


def plan_team(problem: PlanningProblem, method: str = "auto") -> JointPlan:
    h = problem.config.horizon
    paths: dict[int, tuple[int, ...]] = {}
    stranded = set()
    for agent in sorted(problem.agents, key=lambda a: a.id):
        try:
            path, _ = solve_single_agent(problem, agent.id, paths, method=method)
        except StrandedAgent:
            path = (problem.positions[agent.id],) * (h + 1)
            stranded.add(agent.id)
        paths[agent.id] = path
    objective = plan_objective(problem, paths) if paths else 0.0
    return JointPlan(paths, objective, frozenset(stranded))
