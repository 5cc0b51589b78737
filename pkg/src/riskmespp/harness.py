"""Monte Carlo experiment grid over planner mode, prior knowledge and team makeup."""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .env_graph import EnvironmentGraph
from .planner import AgentProfile, PlannerConfig
from .simulator import EstimateCache, HazardModel, MissionResult, run_mission
from .similarity import DescriptorCorpus, ScoreMatrix

MAKEUPS = {
    "345": ((3, 4, 5), (0.6, 0.4, 0.4)),
    "335": ((3, 3, 5), (0.6, 0.6, 0.4)),
    "333": ((3, 3, 3), (0.6, 0.6, 0.6)),
}
PRIORS = {"PK": "perfect", "PU": "uniform"}
REPORT_COLUMNS = ("label", "n_instances", "success", "abort", "cutoff", "mean_time", "time_ci",
                  "mean_capture_time", "capture_ci", "mva_loss_pct", "nmva_loss_pct", "warning")


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    label: str
    mode: str = "NC"
    prior: str = "PU"
    kappas: tuple[int, ...] = (3, 4, 5)
    alphas: tuple[float, ...] = (0.6, 0.4, 0.4)
    hazard: str = "paper-range"
    instances: int = 1000
    base_seed: int = 0

    def __post_init__(self):
        if len(self.kappas) != len(self.alphas) or not self.kappas:
            raise ExperimentError(f"{self.label}: kappa and alpha vectors must be non-empty and equal length")
        if self.prior not in PRIORS:
            raise ExperimentError(f"{self.label}: prior must be PK or PU, got {self.prior!r}")
        if self.instances < 0:
            raise ExperimentError(f"{self.label}: instances must be >= 0")

    def team(self, start: int = 1) -> list[AgentProfile]:
        low = min(self.kappas)
        return [AgentProfile(i + 1, k, a, start, mva=(k == low))
                for i, (k, a) in enumerate(zip(self.kappas, self.alphas))]


def parse_label(label: str, **overrides) -> ExperimentConfig:
    """``{mode}-{prior}-{makeup}`` such as ``PB-PU-345``; ``ND`` and ``NC`` alone
    mean the danger-free and unconstrained baselines with the 345 team."""
    parts = label.upper().split("-")
    if parts[0] == "ND":
        parts = ["NC", "PU", "345"] if len(parts) == 1 else ["NC", *parts[1:]]
        hazard = "none"
    else:
        hazard = "paper-range"
        if parts == ["NC"]:
            parts = ["NC", "PU", "345"]
    if len(parts) != 3 or parts[0] not in ("NC", "PT", "PB") or parts[1] not in PRIORS or parts[2] not in MAKEUPS:
        raise ExperimentError(f"cannot parse configuration label {label!r}")
    kappas, alphas = MAKEUPS[parts[2]]
    cfg = ExperimentConfig(label, parts[0], parts[1], kappas, alphas, hazard)
    return replace(cfg, **overrides) if overrides else cfg


def builtin_grid(instances: int = 1000, base_seed: int = 0) -> list[ExperimentConfig]:
    labels = ["ND", "NC"] + [f"{m}-{p}-{k}" for m in ("PT", "PB") for p in ("PK", "PU") for k in MAKEUPS]
    return [parse_label(lb, instances=instances, base_seed=base_seed) for lb in labels]


def load_grid(path, instances: Optional[int] = None, base_seed: Optional[int] = None) -> list[ExperimentConfig]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ExperimentError(f"{path}: not valid JSON ({exc})") from exc
    out = []
    for rec in data:
        rec = dict(rec)
        label = rec.pop("label")
        known = {f.name for f in fields(ExperimentConfig)}
        extra = set(rec) - known
        if extra:
            raise ExperimentError(f"{label}: unknown fields {sorted(extra)}")
        for key in ("kappas", "alphas"):
            if key in rec:
                rec[key] = tuple(rec[key])
        try:
            cfg = parse_label(label, **rec)
        except ExperimentError:
            cfg = ExperimentConfig(label, **rec)
        if instances is not None:
            cfg = replace(cfg, instances=instances)
        if base_seed is not None:
            cfg = replace(cfg, base_seed=base_seed)
        out.append(cfg)
    return out


@dataclass(frozen=True)
class MissionSettings:
    tau: int = 100
    horizon: int = 14
    gamma: float = 0.99
    replan_period: int = 1
    theta: float = 0.5
    image_fraction: float = 0.05
    nav_failure: float = 0.0


@dataclass
class AggregateRow:
    label: str
    n_instances: int
    success: float
    abort: float
    cutoff: float
    mean_time: float
    time_ci: float
    mean_capture_time: float
    capture_ci: float
    mva_loss_pct: float
    nmva_loss_pct: float
    warning: str = ""


@dataclass
class AggregateReport:
    rows: list[AggregateRow] = field(default_factory=list)

    def row(self, label: str) -> AggregateRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)


def confidence_interval(samples: Sequence[float]) -> tuple[float, float]:
    """Mean and 95% normal-approximation half-width (0 for a single sample)."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ExperimentError("confidence interval of an empty sample")
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(1.96 * x.std(ddof=1) / math.sqrt(x.size))


def proportion_test(k_low: int, n_low: int, k_high: int, n_high: int) -> float:
    """One-sided pooled two-proportion z-test p-value for p_low < p_high."""
    if n_low == 0 or n_high == 0:
        return 1.0
    pooled = (k_low + k_high) / (n_low + n_high)
    if pooled in (0.0, 1.0):
        return 1.0
    se = math.sqrt(pooled * (1 - pooled) * (1 / n_low + 1 / n_high))
    z = (k_high / n_high - k_low / n_low) / se
    return 0.5 * math.erfc(z / math.sqrt(2))


def aggregate(label: str, results: Sequence[MissionResult]) -> AggregateRow:
    n = len(results)
    if n == 0:
        return AggregateRow(label, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, warning="no instances")
    counts = {o: sum(r.outcome == o for r in results) for o in ("success", "abort", "cutoff")}
    mean_t, ci_t = confidence_interval([r.end_time for r in results])
    caps = [r.capture_time for r in results if r.outcome == "success"]
    mean_c, ci_c = confidence_interval(caps) if caps else (0.0, 0.0)
    return AggregateRow(
        label, n,
        counts["success"] / n, counts["abort"] / n, counts["cutoff"] / n,
        mean_t, ci_t, mean_c, ci_c,
        100.0 * sum(r.mva_lost for r in results) / n,
        100.0 * sum(r.nmva_lost for r in results) / n,
        warning="" if caps else "no successful missions",
    )


# worker state, set once per process
_SHARED: dict = {}


def _init_worker(env, scores, corpus, settings):
    _SHARED.update(env=env, scores=scores, corpus=corpus, settings=settings, caches={})


def _run_one(cfg: ExperimentConfig, seed: int) -> MissionResult:
    env, scores, corpus, st = _SHARED["env"], _SHARED["scores"], _SHARED["corpus"], _SHARED["settings"]
    est = None
    if scores is not None and corpus is not None:
        est = _SHARED["caches"].get("est")
        if est is None:
            est = _SHARED["caches"]["est"] = EstimateCache(env, scores, corpus, st.theta, st.image_fraction)
    planner = PlannerConfig(st.horizon, st.gamma, cfg.mode, st.replan_period)
    res = run_mission(env, scores, corpus, cfg.team(), planner,
                      HazardModel.builtin(cfg.hazard, st.nav_failure), tau=st.tau, seed=seed,
                      prior=PRIORS[cfg.prior], theta=st.theta, image_fraction=st.image_fraction,
                      estimates=est)
    res.bc_trace = []
    return res


def _run_chunk(args):
    cfg, seeds = args
    return [_run_one(cfg, s) for s in seeds]


def run_experiments(configs: Sequence[ExperimentConfig], env: EnvironmentGraph,
                    scores: Optional[ScoreMatrix], corpus: Optional[DescriptorCorpus],
                    settings: MissionSettings = MissionSettings(), threads: Optional[int] = None,
                    progress=None) -> AggregateReport:
    threads = threads or os.cpu_count() or 1
    jobs = []
    for cfg in configs:
        seeds = list(range(cfg.base_seed, cfg.base_seed + cfg.instances))
        step = max(1, math.ceil(len(seeds) / (4 * threads)))
        jobs.append([(cfg, seeds[i:i + step]) for i in range(0, len(seeds), step)])

    report = AggregateReport()
    if threads == 1:
        _init_worker(env, scores, corpus, settings)
        for cfg, chunks in zip(configs, jobs):
            results = [r for chunk in chunks for r in _run_chunk(chunk)]
            report.rows.append(aggregate(cfg.label, results))
            if progress:
                progress(report.rows[-1])
        return report
    with ProcessPoolExecutor(threads, initializer=_init_worker,
                             initargs=(env, scores, corpus, settings)) as pool:
        for cfg, chunks in zip(configs, jobs):
            # map preserves chunk order, so results stay in seed order
            results = [r for part in pool.map(_run_chunk, chunks) for r in part]
            report.rows.append(aggregate(cfg.label, results))
            if progress:
                progress(report.rows[-1])
    return report


def _fmt(value) -> str:
    return f"{value:.4f}" if isinstance(value, float) else str(value)


def write_report(report: AggregateReport, path, format: str = "csv") -> None:
    if format == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for row in report.rows:
                d = asdict(row)
                w.writerow([_fmt(d[c]) for c in REPORT_COLUMNS])
    elif format == "json":
        Path(path).write_text(json.dumps({"rows": [asdict(r) for r in report.rows]}, indent=2) + "\n")
    else:
        raise ExperimentError(f"unknown report format {format!r}")


def read_report(path) -> AggregateReport:
    path = Path(path)
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        return AggregateReport([AggregateRow(**r) for r in data["rows"]])
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(AggregateRow(
                rec["label"], int(rec["n_instances"]),
                *(float(rec[c]) for c in REPORT_COLUMNS[2:-1]), warning=rec.get("warning", "")))
    return AggregateReport(rows)
