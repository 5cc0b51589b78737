import math

import numpy as np
import pytest

from riskmespp.belief import MotionModel
from riskmespp.env_graph import EnvironmentGraph, load_school
from riskmespp.planner import AgentProfile, PlannerConfig
from riskmespp.similarity import ScoreFidelity, default_corpus, synthesize_scores
from riskmespp.simulator import HAZARD_TABLES, HazardModel, SimulationError, classify_outcome, run_mission
from riskmespp.validate import ground_truth_violations, plan_violations


@pytest.fixture(scope="module")
def school():
    g = load_school()
    corpus = default_corpus().subset(["fire"])
    return g, synthesize_scores(g, corpus, ScoreFidelity(), seed=0), corpus


def team345():
    return [AgentProfile(1, 3, 0.6, 1, True), AgentProfile(2, 4, 0.4, 1), AgentProfile(3, 5, 0.4, 1)]


def test_hazard_tables():
    f = HAZARD_TABLES["formula"]
    assert f[0] == 0.0
    assert f[4] == pytest.approx(7.47e-8 * 4 * math.e ** 5)
    assert HAZARD_TABLES["paper-range"] == (0.0, 9e-5, 1.6e-3, 2.8e-2, 0.495)
    assert HazardModel.builtin("none").p_loss == (0.0,) * 5
    with pytest.raises(SimulationError):
        HazardModel((0.0, 0.2, 0.1, 0.3, 0.4))
    with pytest.raises(SimulationError):
        HazardModel.builtin("volcano")


def test_classify_outcome():
    assert classify_outcome(5, 0, 5, 10) == "success"
    assert classify_outcome(None, 0, 3, 10) == "abort"
    assert classify_outcome(None, 2, 10, 10) == "cutoff"
    assert classify_outcome(None, 2, 3, 10) is None


def test_target_next_to_start_found_quickly():
    g = EnvironmentGraph(3, ((1, 2), (2, 3)), {"a": (1, 2, 3)}, (1, 1, 1), (("i1",), ("i2",), ("i3",)))
    res = run_mission(g, None, None, [AgentProfile(1)], PlannerConfig(4, 0.95), HazardModel.builtin("none"),
                      belief_spec=[0, 0, 0, 1.0], tau=10, prior="perfect")
    assert res.outcome == "success" and res.capture_time == 2


def test_same_seed_same_result(school):
    g, s, c = school
    cfg = PlannerConfig(mode="PB")
    a = run_mission(g, s, c, team345(), cfg, HazardModel.builtin("paper-range"), seed=11)
    b = run_mission(g, s, c, team345(), cfg, HazardModel.builtin("paper-range"), seed=11)
    assert a.to_dict() == b.to_dict()


def test_outcomes_and_end_times(school):
    g, s, c = school
    for seed in range(15):
        r = run_mission(g, s, c, team345(), PlannerConfig(mode="NC"), HazardModel.builtin("paper-range"),
                        seed=seed, tau=40)
        assert r.outcome in ("success", "abort", "cutoff")
        assert 1 <= r.end_time <= 40
        if r.outcome == "success":
            assert r.capture_time == r.end_time
        if r.outcome == "abort":
            assert all(v is not None for v in r.agent_losses.values())
        assert len(r.bc_trace) == r.end_time + 1


def test_no_hazard_never_loses_agents(school):
    g, s, c = school
    for seed in range(10):
        r = run_mission(g, s, c, team345(), PlannerConfig(), HazardModel.builtin("none"), seed=seed)
        assert not r.mva_lost and not r.nmva_lost


def test_navigation_failure_only_when_moving(school):
    g, s, c = school
    r = run_mission(g, s, c, team345(), PlannerConfig(), HazardModel((0.0,) * 5, nav_failure=1.0), seed=0)
    # every agent moves on the first step and is lost to navigation
    assert r.outcome == "abort" and r.end_time == 1
    assert all(v == (1, "navigation") for v in r.agent_losses.values())


def test_recorded_plans_respect_constraints(school):
    g, s, c = school
    for mode in ("PT", "PB"):
        team = team345()
        r = run_mission(g, s, c, team, PlannerConfig(mode=mode), HazardModel.builtin("paper-range"),
                        seed=3, record=True)
        for _, eta, plan in r.plans:
            assert plan_violations(plan.paths, g, eta, team, mode, exempt=plan.stranded) == []


def test_perfect_knowledge_pt_never_enters_over_threshold(school):
    g, s, c = school
    team = team345()
    r = run_mission(g, None, None, team, PlannerConfig(mode="PT"), HazardModel.builtin("paper-range"),
                    seed=5, prior="perfect", record=True)
    assert ground_truth_violations(r.positions, g, team) == []


def test_moving_target(school):
    g, s, c = school
    motion = MotionModel.lazy_random_walk(g, 0.8)
    r = run_mission(g, s, c, team345(), PlannerConfig(horizon=4), HazardModel.builtin("none"),
                    seed=2, tau=30, motion=motion)
    assert r.outcome in ("success", "cutoff")


def test_scores_required_for_uniform_prior(school):
    g, _, _ = school
    with pytest.raises(SimulationError):
        run_mission(g, None, None, team345(), seed=0)
