"""Discrete-time search missions with online danger estimation and agent loss."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import belief as bl
from .danger import bhattacharyya, make_prior, update_on_visit, vertex_estimate
from .env_graph import EnvironmentGraph
from .planner import AgentProfile, JointPlan, PlannerConfig, PlanningProblem, plan_team
from .similarity import DescriptorCorpus, ScoreMatrix

OUTCOMES = ("success", "abort", "cutoff")


def _formula_table() -> tuple[float, ...]:
    return tuple(7.47e-8 * (l - 1) * math.exp(l) for l in range(1, 6))


HAZARD_TABLES = {
    "formula": _formula_table(),
    "paper-range": (0.0, 9e-5, 1.6e-3, 2.8e-2, 0.495),
    "none": (0.0,) * 5,
}


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class HazardModel:
    p_loss: tuple[float, ...] = HAZARD_TABLES["paper-range"]
    nav_failure: float = 0.0

    def __post_init__(self):
        p = tuple(float(x) for x in self.p_loss)
        if len(p) != 5 or any(not 0 <= x <= 1 for x in p):
            raise SimulationError(f"p_loss needs 5 probabilities in [0, 1], got {self.p_loss}")
        if any(b < a for a, b in zip(p, p[1:])):
            raise SimulationError("p_loss must be non-decreasing in the danger level")
        if not 0 <= self.nav_failure <= 1:
            raise SimulationError("nav_failure must lie in [0, 1]")
        object.__setattr__(self, "p_loss", p)

    @classmethod
    def builtin(cls, name: str, nav_failure: float = 0.0) -> "HazardModel":
        try:
            return cls(HAZARD_TABLES[name], nav_failure)
        except KeyError:
            raise SimulationError(f"unknown hazard table {name!r}; built-ins: {sorted(HAZARD_TABLES)}") from None


@dataclass
class MissionResult:
    outcome: str
    end_time: int
    capture_time: Optional[int]
    agent_losses: dict[int, Optional[tuple[int, str]]]
    mva_lost: bool
    nmva_lost: bool
    bc_trace: list[float]
    stranded_steps: int = 0
    # filled only with record=True: (t, snapshot eta, plan) per planning call, positions per step
    plans: list = field(default_factory=list, repr=False)
    positions: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "end_time": self.end_time,
            "capture_time": self.capture_time,
            "agent_losses": {str(a): (None if v is None else {"step": v[0], "cause": v[1]})
                             for a, v in sorted(self.agent_losses.items())},
            "mva_lost": self.mva_lost,
            "nmva_lost": self.nmva_lost,
            "stranded_steps": self.stranded_steps,
            "bc_trace": self.bc_trace,
        }


def classify_outcome(detected_at: Optional[int], n_active: int, t: int, tau: int) -> Optional[str]:
    """Outcome at the end of step ``t``, or None while the mission continues."""
    if detected_at is not None and detected_at <= tau:
        return "success"
    if n_active == 0:
        return "abort"
    if t >= tau:
        return "cutoff"
    return None


class EstimateCache:
    """Memoized per-vertex danger estimates for one (scores, corpus, theta) setup."""

    def __init__(self, graph: EnvironmentGraph, scores: ScoreMatrix, corpus: DescriptorCorpus,
                 theta: float = 0.5, image_fraction: float = 0.05):
        self.graph, self.scores, self.corpus = graph, scores, corpus
        self.theta, self.image_fraction = theta, image_fraction
        self._cache: dict[int, np.ndarray] = {}

    def __call__(self, v: int) -> np.ndarray:
        eta = self._cache.get(v)
        if eta is None:
            eta = self._cache[v] = vertex_estimate(self.graph, v, self.scores, self.corpus,
                                                   self.theta, self.image_fraction)
        return eta


def run_mission(env: EnvironmentGraph, scores: Optional[ScoreMatrix], corpus: Optional[DescriptorCorpus],
                team: Sequence[AgentProfile], planner_cfg: PlannerConfig = PlannerConfig(),
                hazard: HazardModel = HazardModel(), belief_spec=None, target_spec=None,
                tau: int = 100, seed: int = 0, prior: str = "uniform", theta: float = 0.5,
                image_fraction: float = 0.05, motion: Optional[bl.MotionModel] = None,
                estimates: Optional[EstimateCache] = None, record: bool = False) -> MissionResult:
    """Run one mission. ``belief_spec=None`` draws a uniform belief over nine random vertices.

    ``target_spec`` pins the target's starting vertex; by default it is drawn
    from the initial belief.
    """
    if tau < 1:
        raise SimulationError("tau must be >= 1")
    belief_rng, target_rng, loss_rng = (np.random.default_rng(s)
                                        for s in np.random.SeedSequence(seed).spawn(3))
    motion = motion or bl.MotionModel.identity(env.n)
    starts = sorted({a.start for a in team})
    if belief_spec is None:
        b = bl.random_initial_belief(env, belief_rng, exclude=starts)
    else:
        b = bl.check_belief(np.asarray(belief_spec, dtype=float))
    if target_spec is None:
        p = b[1:] / b[1:].sum()
        target = int(target_rng.choice(env.n, p=p)) + 1
    else:
        target = int(target_spec)

    emap = make_prior(prior, env)
    if estimates is None and prior not in ("perfect", "PK"):
        if scores is None or corpus is None:
            raise SimulationError("scores and corpus are required unless the prior is perfect")
        estimates = EstimateCache(env, scores, corpus, theta, image_fraction)

    def visit(v, t):
        if not emap.visited[v - 1]:
            update_on_visit(emap, env, v, scores, corpus, theta, image_fraction, t=t, estimate=estimates(v))

    positions = {a.id: a.start for a in team}
    for v in starts:
        visit(v, 0)
    mva = {a.id for a in team if a.mva}
    losses: dict[int, Optional[tuple[int, str]]] = {a.id: None for a in team}
    active = [a for a in team]
    bc_trace = [bhattacharyya(emap, env)]
    result = MissionResult("cutoff", tau, None, losses, False, False, bc_trace)
    if record:
        result.positions.append(dict(positions))

    plan: Optional[JointPlan] = None
    plan_age = 0
    detected_at = None
    for t in range(1, tau + 1):
        if plan is None or plan_age >= planner_cfg.replan_period:
            problem = PlanningProblem(env, b, emap, active, {a.id: positions[a.id] for a in active},
                                      planner_cfg, motion)
            plan = plan_team(problem)
            plan_age = 0
            if record:
                result.plans.append((t - 1, emap.eta.copy(), plan))
        plan_age += 1
        result.stranded_steps += sum(1 for a in active if a.id in plan.stranded)

        moved = {}
        for a in active:
            nxt = plan.position(a.id, plan_age)
            moved[a.id] = nxt != positions[a.id]
            positions[a.id] = nxt
        if not motion.is_identity:
            target = int(target_rng.choice(env.n, p=motion.M[target - 1])) + 1

        for a in active:
            visit(positions[a.id], t)

        survivors = []
        for a in active:
            p_danger = hazard.p_loss[env.truth_levels[positions[a.id] - 1] - 1]
            if loss_rng.random() < p_danger:
                losses[a.id] = (t, "danger")
            elif moved[a.id] and hazard.nav_failure > 0 and loss_rng.random() < hazard.nav_failure:
                losses[a.id] = (t, "navigation")
            else:
                survivors.append(a)
        active = survivors

        if any(positions[a.id] == target for a in active):
            detected_at = t
        b = bl.update(b, motion, {a.id: positions[a.id] for a in active})
        bc_trace.append(bhattacharyya(emap, env))
        if record:
            result.positions.append({a.id: positions[a.id] for a in active})

        outcome = classify_outcome(detected_at, len(active), t, tau)
        if outcome is not None:
            result.outcome, result.end_time = outcome, t
            result.capture_time = detected_at
            break

    result.mva_lost = any(losses[a] is not None for a in mva)
    result.nmva_lost = any(losses[a.id] is not None for a in team if a.id not in mva)
    return result
