"""Build the bundled 46-vertex school environment (src/riskmespp/data/school.json).

The layout is hand-drawn to resemble a school floor: a gym at the entrance,
two corridors, classrooms, library, offices, cafeteria and a stairwell.
Edges and room assignment are approximate. Hazards follow the NFF mix
(15 safe vertices, 31 fire vertices) with fire clustered around the library
and cafeteria and tapering off along the corridors. ``--random-seed`` swaps
in an i.i.d. NFF draw from ``generate_scenario`` instead.

    python scripts/make_school.py [--images 40] [--random-seed S]
"""
import argparse

from riskmespp.env_graph import (
    EnvironmentGraph,
    HazardScenarioSpec,
    default_environment_path,
    generate_scenario,
    save_environment,
)

NEIGHBORHOODS = {
    "gym": (1, 2, 3, 4, 5, 6),
    "corridor_west": (7, 8, 9, 10, 11),
    "classrooms_north": (12, 13, 14, 15, 16),
    "classrooms_south": (17, 18, 19, 20, 21),
    "corridor_east": (22, 23, 24, 25, 26),
    "library": (27, 28, 29, 30, 31),
    "offices": (32, 33, 34, 35, 36),
    "cafeteria": (37, 38, 39, 40, 41, 42),
    "stairwell": (43, 44, 45, 46),
}

EDGES = (
    (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 1), (2, 5),
    (1, 7), (7, 8), (8, 9), (9, 10), (10, 11),
    (8, 12), (12, 13), (13, 14), (14, 15), (15, 16), (16, 10),
    (9, 17), (17, 18), (18, 19), (19, 20), (20, 21), (21, 11),
    (11, 22), (22, 23), (23, 24), (24, 25), (25, 26),
    (23, 27), (27, 28), (28, 29), (29, 30), (30, 31), (31, 27),
    (24, 32), (32, 33), (33, 34), (34, 35), (35, 36),
    (26, 37), (37, 38), (38, 39), (39, 40), (40, 41), (41, 42), (42, 37),
    (25, 43), (43, 44), (44, 45), (45, 46), (46, 36),
    # doors and stairs that shortcut the floor plan
    (4, 40), (14, 28), (19, 34), (20, 45), (33, 36),
)


# fire vertex -> level; unlisted vertices are safe (level 1)
FIRE = {
    3: 2, 4: 3,
    9: 2, 10: 3, 11: 2,
    13: 2, 14: 3, 16: 2,
    17: 3, 18: 4, 19: 4, 20: 3, 21: 2,
    22: 2, 23: 3, 24: 3, 25: 2, 26: 4,
    27: 4, 28: 5, 29: 5, 30: 4, 31: 3,
    34: 2,
    37: 4, 38: 5, 39: 5, 40: 4, 41: 5, 42: 4,
    46: 2,
}


def build(images: int, random_seed=None) -> EnvironmentGraph:
    n = 46
    scenes = tuple(tuple(f"v{v:02d}_img{k:03d}" for k in range(images)) for v in range(1, n + 1))
    if random_seed is not None:
        base = EnvironmentGraph(n, EDGES, NEIGHBORHOODS, (1,) * n, scenes)
        return generate_scenario(base, HazardScenarioSpec.named("NFF", seed=random_seed))
    return EnvironmentGraph(
        n=n,
        edges=EDGES,
        neighborhoods=NEIGHBORHOODS,
        truth_levels=tuple(FIRE.get(v, 1) for v in range(1, n + 1)),
        scenes=scenes,
        hazard_types=tuple("fire" if v in FIRE else "none" for v in range(1, n + 1)),
    )


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--random-seed", type=int, default=None)
    ap.add_argument("--images", type=int, default=40)
    ap.add_argument("--out", default=str(default_environment_path()))
    args = ap.parse_args()
    g = build(args.images, args.random_seed)
    save_environment(g, args.out)
    print(f"wrote {args.out}: n={g.n}, levels={g.truth_levels}")
