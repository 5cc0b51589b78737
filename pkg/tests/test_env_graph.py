import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskmespp.env_graph import (
    EnvError,
    EnvironmentGraph,
    HazardScenarioSpec,
    generate_scenario,
    graph_from_dict,
    hazard_counts,
    load_environment,
    load_school,
    neighborhood_of,
    save_environment,
)


def path_graph(n=4, levels=None):
    return EnvironmentGraph(
        n, tuple((i, i + 1) for i in range(1, n)), {"all": tuple(range(1, n + 1))},
        levels or (1,) * n, tuple((f"img{v}",) for v in range(1, n + 1)))


def test_self_loop_rejected():
    with pytest.raises(EnvError, match="self-loop at vertex 2"):
        EnvironmentGraph(2, ((1, 2), (2, 2)), {"a": (1, 2)}, (1, 1), ((), ()))


def test_neighborhoods_must_partition():
    with pytest.raises(EnvError, match="partition"):
        EnvironmentGraph(3, ((1, 2), (2, 3)), {"a": (1, 2), "b": (2, 3)}, (1, 1, 1), ((), (), ()))
    with pytest.raises(EnvError, match="unassigned"):
        EnvironmentGraph(3, ((1, 2), (2, 3)), {"a": (1, 2)}, (1, 1, 1), ((), (), ()))


def test_disconnected_and_bad_level():
    with pytest.raises(EnvError, match="disconnected"):
        EnvironmentGraph(3, ((1, 2),), {"a": (1, 2, 3)}, (1, 1, 1), ((), (), ()))
    with pytest.raises(EnvError, match="out of range"):
        path_graph(3, levels=(1, 6, 1))


def test_adjacency_queries():
    g = path_graph(4)
    assert g.neighbors(2) == (1, 3)
    assert g.closed_neighbors(2) == (1, 2, 3)
    assert g.adjacent_or_equal(3, 3) and not g.adjacent_or_equal(1, 3)
    assert g.distances(1) == {1: 0, 2: 1, 3: 2, 4: 3}
    assert g.distances(1, allowed={1, 2, 4}) == {1: 0, 2: 1}
    with pytest.raises(EnvError):
        g.check_vertex(5)


def test_json_roundtrip(tmp_path):
    g = load_school()
    save_environment(g, tmp_path / "g.json")
    assert load_environment(tmp_path / "g.json") == g
    assert graph_from_dict(json.loads((tmp_path / "g.json").read_text())) == g


def test_school_fixture():
    g = load_school()
    assert g.n == 46
    assert hazard_counts(g) == {"none": 15, "collapse": 0, "fire": 31}
    assert g.level(1) == 1
    # every vertex reachable inside one planning horizon
    assert max(max(g.distances(v).values()) for v in g.vertices) <= 14
    assert all(len(g.scene(v)) == 40 for v in g.vertices)
    assert neighborhood_of(g, 1) == frozenset(range(1, 7))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), kind=st.sampled_from(["NFF", "NCC", "NCF"]))
def test_scenario_counts_within_one(seed, kind):
    g = load_school()
    spec = HazardScenarioSpec.named(kind, seed=seed)
    out = generate_scenario(g, spec)
    counts = hazard_counts(out)
    for name, p in zip(("none", "collapse", "fire"), spec.proportions):
        assert abs(counts[name] - p * g.n) <= 1
    assert out.hazard(1) == "none"
    for v in out.vertices:
        if out.hazard(v) == "none":
            assert out.level(v) == 1
    assert generate_scenario(g, spec) == out


def test_scenario_bad_spec():
    with pytest.raises(EnvError):
        HazardScenarioSpec((0.5, 0.5, 0.5))
    with pytest.raises(EnvError):
        HazardScenarioSpec.named("XYZ")
