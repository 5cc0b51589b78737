"""Command-line entry point: ``riskmespp <subcommand> ...``.

Exit status: 0 on success, 1 on invalid input, 2 on I/O failure. Errors are
printed to stderr as one JSON line ``{"error": ..., "kind": ...}``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import belief as bl
from .danger import DangerEstimateMap, bhattacharyya, make_prior, point_estimate, vertex_estimate
from .env_graph import (
    HazardScenarioSpec,
    default_environment_path,
    generate_scenario,
    load_environment,
    save_environment,
)
from .harness import MAKEUPS, MissionSettings, builtin_grid, load_grid, run_experiments, write_report
from .planner import AgentProfile, PlannerConfig, PlanningProblem, build_milp, export_lp, plan_team
from .similarity import (
    ScoreFidelity,
    default_corpus,
    load_corpus,
    load_scores,
    save_scores,
    synthesize_scores,
)
from .simulator import HazardModel, run_mission

log = logging.getLogger("riskmespp")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _env(path):
    return load_environment(default_environment_path() if path == "school" else path)


def _corpus(path, types):
    corpus = default_corpus() if path is None else load_corpus(path)
    return corpus.subset(types.split(",")) if types else corpus


def _team(spec) -> list[AgentProfile]:
    if spec in MAKEUPS:
        kappas, alphas = MAKEUPS[spec]
        low = min(kappas)
        return [AgentProfile(i + 1, k, a, 1, k == low) for i, (k, a) in enumerate(zip(kappas, alphas))]
    data = json.loads(Path(spec).read_text())
    agents = [AgentProfile(int(r["id"]), int(r.get("kappa", 5)), float(r.get("alpha", 1.0)),
                           int(r.get("start", 1)), bool(r.get("mva", False))) for r in data]
    if agents and not any(a.mva for a in agents):
        low = min(a.kappa for a in agents)
        agents = [AgentProfile(a.id, a.kappa, a.alpha, a.start, a.kappa == low) for a in agents]
    return agents


def _hazard(spec, nav_failure):
    if Path(spec).is_file():
        data = json.loads(Path(spec).read_text())
        return HazardModel(tuple(data["p_loss"]), float(data.get("nav_failure", nav_failure)))
    return HazardModel.builtin(spec, nav_failure)


def _belief(path, n):
    data = json.loads(Path(path).read_text())
    if "belief" in data:
        return bl.check_belief(data["belief"])
    return bl.init_belief(n, {int(k): float(v) for k, v in data["vertices"].items()},
                          float(data.get("capture", 0.0)))


def _estimates(path, graph) -> DangerEstimateMap:
    data = json.loads(Path(path).read_text())
    emap = make_prior("uniform", graph)
    for rec in data["vertices"]:
        v = int(rec["id"])
        graph.check_vertex(v)
        emap.eta[v - 1] = rec["eta"]
    return emap


def _emit(payload: str, out):
    if out:
        Path(out).write_text(payload)
    else:
        sys.stdout.write(payload)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_gen_scenario(args):
    graph = _env(args.env)
    spec = HazardScenarioSpec.named(args.type, seed=args.seed)
    out = generate_scenario(graph, spec)
    if args.out:
        save_environment(out, args.out)
    else:
        _emit(_dumps(out.to_dict()), None)


def cmd_synth_scores(args):
    graph = _env(args.env)
    corpus = _corpus(args.corpus, args.types)
    fid = ScoreFidelity(sigma=args.sigma, leak=args.leak)
    scores = synthesize_scores(graph, corpus, fid, seed=args.seed)
    save_scores(scores, args.out)


def cmd_estimate(args):
    graph = _env(args.env)
    scores = load_scores(args.scores)
    corpus = _corpus(args.corpus, args.types)
    emap = make_prior("uniform", graph)
    verts = []
    for v in graph.vertices:
        eta = vertex_estimate(graph, v, scores, corpus, args.theta, args.image_fraction)
        emap.eta[v - 1] = eta
        verts.append({"id": v, "eta": [float(x) for x in eta], "z": point_estimate(eta),
                      "truth": graph.level(v)})
    _emit(_dumps({"theta": args.theta, "image_fraction": args.image_fraction,
                  "bc": bhattacharyya(emap, graph), "vertices": verts}), args.out)


def cmd_plan(args):
    graph = _env(args.env)
    b = _belief(args.belief, graph.n)
    emap = _estimates(args.estimates, graph) if args.estimates else make_prior(args.prior, graph)
    team = _team(args.team)
    cfg = PlannerConfig(args.horizon, args.gamma, args.mode)
    problem = PlanningProblem(graph, b, emap, team, {a.id: a.start for a in team}, cfg)
    plan = plan_team(problem)
    if args.lp_out:
        free = [a.id for a in team if a.id not in plan.stranded]
        fixed = {a: plan.paths[a] for a in plan.stranded}
        export_lp(build_milp(problem, fixed, agent_ids=free), args.lp_out)
    _emit(_dumps({"mode": args.mode, "horizon": args.horizon, "gamma": args.gamma,
                  "objective": plan.objective, "stranded": sorted(plan.stranded),
                  "paths": {str(a): list(p) for a, p in sorted(plan.paths.items())}}), args.out)


def cmd_simulate(args):
    graph = _env(args.env)
    prior = {"PK": "perfect", "PU": "uniform"}[args.prior]
    scores = load_scores(args.scores) if args.scores else None
    corpus = _corpus(args.corpus, args.types)
    if prior == "uniform" and scores is None:
        raise UsageError("simulate: --scores is required with --prior PU")
    res = run_mission(graph, scores, corpus, _team(args.team),
                      PlannerConfig(args.horizon, args.gamma, args.mode, args.replan_period),
                      _hazard(args.hazard, args.nav_failure), tau=args.tau, seed=args.seed,
                      prior=prior, theta=args.theta, image_fraction=args.image_fraction)
    _emit(_dumps(res.to_dict()), args.out)


def cmd_experiment(args):
    graph = _env(args.env)
    scores = load_scores(args.scores) if args.scores else None
    corpus = _corpus(args.corpus, args.types)
    if args.grid == "builtin":
        configs = builtin_grid(args.instances, args.seed)
    else:
        configs = load_grid(args.grid, args.instances, args.seed)
    if args.configs:
        keep = set(args.configs.split(","))
        configs = [c for c in configs if c.label in keep]
    if scores is None and any(c.prior == "PU" for c in configs):
        raise UsageError("experiment: --scores is required for PU configurations")
    settings = MissionSettings(tau=args.tau, horizon=args.horizon, gamma=args.gamma,
                               theta=args.theta, image_fraction=args.image_fraction)
    report = run_experiments(configs, graph, scores, corpus, settings, threads=args.threads,
                             progress=lambda row: log.info("%s done: success %.3f", row.label, row.success))
    write_report(report, args.out, args.format)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="riskmespp", description="Risk-aware multi-robot search planning.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, seed=True, env=True):
        if env:
            p.add_argument("--env", required=True, help="environment JSON file, or 'school' for the bundled one")
        if seed:
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None)

    def estimation(p):
        p.add_argument("--corpus", default=None, help="descriptor corpus JSON (default: bundled fire+collapse)")
        p.add_argument("--types", default=None, help="comma-separated descriptor types to use, e.g. fire")
        p.add_argument("--theta", type=float, default=0.5)
        p.add_argument("--image-fraction", type=float, default=0.05)

    p = sub.add_parser("gen-scenario", help="assign hazards to an environment")
    common(p)
    p.add_argument("--type", required=True, choices=["NFF", "NCC", "NCF"])
    p.set_defaults(func=cmd_gen_scenario)

    p = sub.add_parser("synth-scores", help="synthesize image-descriptor similarity scores")
    common(p)
    p.add_argument("--corpus", default=None)
    p.add_argument("--types", default=None)
    p.add_argument("--sigma", type=float, default=ScoreFidelity.sigma)
    p.add_argument("--leak", type=float, default=None)
    p.set_defaults(func=cmd_synth_scores, out_required=True)

    p = sub.add_parser("estimate", help="per-vertex danger distributions from scores")
    common(p, seed=False)
    p.add_argument("--scores", required=True)
    estimation(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("plan", help="plan one receding-horizon step for a team")
    common(p, seed=False)
    p.add_argument("--belief", required=True)
    p.add_argument("--estimates", default=None)
    p.add_argument("--prior", default="uniform", choices=["uniform", "perfect"])
    p.add_argument("--team", required=True, help="team JSON file or makeup code (345, 335, 333)")
    p.add_argument("--mode", default="NC", choices=["NC", "PT", "PB"])
    p.add_argument("--horizon", type=int, default=14)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--lp-out", default=None)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="run one mission")
    common(p)
    p.add_argument("--scores", default=None)
    estimation(p)
    p.add_argument("--team", required=True)
    p.add_argument("--mode", default="NC", choices=["NC", "PT", "PB"])
    p.add_argument("--prior", default="PU", choices=["PU", "PK"])
    p.add_argument("--hazard", default="paper-range", help="built-in table name or JSON file")
    p.add_argument("--nav-failure", type=float, default=0.0)
    p.add_argument("--tau", type=int, default=100)
    p.add_argument("--horizon", type=int, default=14)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--replan-period", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run a configuration grid")
    common(p)
    p.add_argument("--grid", default="builtin")
    p.add_argument("--configs", default=None, help="comma-separated labels to keep")
    p.add_argument("--scores", default=None)
    estimation(p)
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--tau", type=int, default=100)
    p.add_argument("--horizon", type=int, default=14)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--format", default="csv", choices=["csv", "json"])
    p.set_defaults(func=cmd_experiment, out_required=True)
    return ap


def _fail(message: str, kind: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": message, "kind": kind}) + "\n")
    return code


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return _fail("no subcommand given", "usage", 1)
        if getattr(args, "out_required", False) and not args.out:
            raise UsageError(f"{args.command}: --out is required")
        level = os.environ.get("RISKMESPP_LOG_LEVEL") or ("DEBUG" if args.verbose > 1 else
                                                          "INFO" if args.verbose else "WARNING")
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail(str(exc), "usage", 1)
    except OSError as exc:
        return _fail(str(exc), "io", 2)
    except (ValueError, KeyError, TypeError) as exc:
        return _fail(str(exc), "validation", 1)
    return 0


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
