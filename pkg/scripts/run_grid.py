"""Run the configuration grid on the bundled school and print the MVA-loss comparison.

    python scripts/run_grid.py --instances 1000 --out results/grid.csv
    python scripts/run_grid.py --instances 200 --configs NC,PT-PK-345,PT-PU-345,PB-PK-345,PB-PU-345
"""
import argparse
from pathlib import Path

from riskmespp.env_graph import load_environment, load_school
from riskmespp.harness import MissionSettings, builtin_grid, proportion_test, run_experiments, write_report
from riskmespp.similarity import ScoreFidelity, default_corpus, load_scores, synthesize_scores


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--env", default=None, help="environment JSON (default: bundled school)")
    ap.add_argument("--scores", default=None, help="score CSV (default: synthesized, fire descriptors)")
    ap.add_argument("--sigma", type=float, default=ScoreFidelity.sigma)
    ap.add_argument("--score-seed", type=int, default=0)
    ap.add_argument("--instances", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--configs", default=None)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--tau", type=int, default=100)
    ap.add_argument("--out", default="results/grid.csv")
    args = ap.parse_args()

    env = load_environment(args.env) if args.env else load_school()
    corpus = default_corpus().subset(["fire"])
    scores = (load_scores(args.scores) if args.scores
              else synthesize_scores(env, corpus, ScoreFidelity(sigma=args.sigma), seed=args.score_seed))
    grid = builtin_grid(args.instances, args.seed)
    if args.configs:
        keep = args.configs.split(",")
        grid = [c for c in grid if c.label in keep]

    report = run_experiments(grid, env, scores, corpus, MissionSettings(tau=args.tau), threads=args.threads,
                             progress=lambda r: print(f"{r.label:>10}  success {r.success:6.1%}  "
                                                      f"MVA loss {r.mva_loss_pct:5.1f}%  "
                                                      f"non-MVA loss {r.nmva_loss_pct:5.1f}%", flush=True))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_report(report, args.out, "json" if args.out.endswith(".json") else "csv")
    print(f"wrote {args.out}")

    labels = {r.label: r for r in report.rows}
    for low, high in [("PT-PK-345", "PT-PU-345"), ("PT-PU-345", "NC"), ("PB-PK-345", "PB-PU-345"), ("PB-PU-345", "NC")]:
        if low in labels and high in labels:
            a, b = labels[low], labels[high]
            p = proportion_test(round(a.mva_loss_pct * a.n_instances / 100), a.n_instances,
                                round(b.mva_loss_pct * b.n_instances / 100), b.n_instances)
            print(f"{low} < {high}: {a.mva_loss_pct:.1f}% vs {b.mva_loss_pct:.1f}%  p={p:.3g}")


if __name__ == "__main__":
    main()
