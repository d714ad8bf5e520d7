"""Batch evaluation: success/collision/timeout rates and the time-efficiency metric."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyEvaluationError
from .planner import PlannerConfig, SamplingPlanner
from .sim.episode import EpisodeConfig, default_scan_config, run_episode
from .sim.grid import dijkstra_path_length
from .sim.world import read_scenario

CLIP_LO = 2.0
CLIP_HI = 8.0
DEFAULT_TIMEOUT_FACTOR = 1.25
CSV_FIELDS = ("scenario", "trial", "S", "C", "O", "T_act", "T_opt", "metric")
MEAN_ROW = "MEAN"


def metric_score(S, T_act, T_opt):
    """``S * T_opt / clip(T_act, 2 T_opt, 8 T_opt)``; lies in ``[0, 0.5]``."""
    if not T_opt > 0:
        raise ValueError(f"T_opt must be positive, got {T_opt}")
    if not S:
        return 0.0
    return T_opt / min(max(T_act, CLIP_LO * T_opt), CLIP_HI * T_opt)


def optimal_time(path_length, v_max):
    if not (path_length > 0 and v_max > 0):
        raise ValueError("path length and v_max must be positive")
    return path_length / v_max


@dataclass(frozen=True)
class EpisodeRow:
    scenario: str
    trial: int
    S: int
    C: int
    O: int
    T_act: float
    T_opt: float
    metric: float


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple
    metric: float
    sr: float
    cr: float
    tr: float
    config: dict = field(default_factory=dict)


def make_row(scenario, trial, result, T_opt):
    return EpisodeRow(
        str(scenario), int(trial), int(result.S), int(result.C), int(result.O),
        float(result.T_act), float(T_opt), metric_score(result.S, result.T_act, T_opt),
    )


def aggregate(rows, config=None):
    """Means of S, C, O and of the per-episode metric."""
    rows = tuple(rows)
    if not rows:
        raise EmptyEvaluationError("no episodes to aggregate")
    n = len(rows)
    # math.fsum keeps the means independent of row order
    return MetricsReport(
        rows,
        metric=math.fsum(r.metric for r in rows) / n,
        sr=math.fsum(r.S for r in rows) / n,
        cr=math.fsum(r.C for r in rows) / n,
        tr=math.fsum(r.O for r in rows) / n,
        config=dict(config or {}),
    )


# --- reports -----------------------------------------------------------------


def report_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in report.rows:
        w.writerow([r.scenario, r.trial, r.S, r.C, r.O, repr(r.T_act), repr(r.T_opt), repr(r.metric)])
    w.writerow([MEAN_ROW, "", repr(report.sr), repr(report.cr), repr(report.tr), "", "", repr(report.metric)])
    return buf.getvalue()


def report_markdown(report):
    lines = [
        "| Metric (↑) | SR (↑) | CR (↓) | TO (↓) |",
        "|---|---|---|---|",
        f"| {report.metric:.4f} | {100 * report.sr:.1f}% | {100 * report.cr:.1f}% | {100 * report.tr:.1f}% |",
        "",
        f"Episodes: {len(report.rows)}",
    ]
    for key in sorted(report.config):
        lines.append(f"- {key}: {report.config[key]}")
    return "\n".join(lines) + "\n"


def emit_report(report, out_dir, formats=("csv", "md")):
    """Write ``results.csv`` and/or ``report.md``; returns the paths written."""
    writers = {"csv": ("results.csv", report_csv), "md": ("report.md", report_markdown)}
    out = []
    formats = list(formats)
    if not formats:
        return out
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for fmt in formats:
        if fmt not in writers:
            raise ValueError(f"unknown report format {fmt!r}")
        name, render = writers[fmt]
        path = out_dir / name
        with open(path, "w", newline="") as fh:
            fh.write(render(report))
        out.append(path)
    return out


def read_results_csv(path):
    """Parse ``results.csv`` back into ``(rows, (SR, CR, TR, Metric))``."""
    rows, footer = [], None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            if rec["scenario"] == MEAN_ROW:
                footer = (float(rec["S"]), float(rec["C"]), float(rec["O"]), float(rec["metric"]))
                continue
            rows.append(
                EpisodeRow(
                    rec["scenario"], int(rec["trial"]), int(rec["S"]), int(rec["C"]), int(rec["O"]),
                    float(rec["T_act"]), float(rec["T_opt"]), float(rec["metric"]),
                )
            )
    return rows, footer


def write_trajectory(path, result):
    lines = ["# t x y heading"]
    lines += [" ".join(repr(float(v)) for v in row) for row in result.trajectory]
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory(path):
    rows = [
        [float(v) for v in line.split()]
        for line in Path(path).read_text().splitlines()
        if line.strip() and not line.startswith("#")
    ]
    return np.array(rows).reshape(-1, 4)


# --- suite runner ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SuiteConfig:
    embodiment: object
    trials: int = 2
    seed: int = 0
    timeout_factor: float = DEFAULT_TIMEOUT_FACTOR
    grid_resolution: float = 0.05
    distortion: object = None
    lidar_ring: bool = True
    goal_tolerance: float = 0.3
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    scan_resolution_deg: float = 0.5


def episode_seed(seed, scenario_index, trial):
    """Per-episode seed; independent of worker count and scheduling."""
    return int(np.random.SeedSequence([int(seed), int(scenario_index), int(trial)]).generate_state(1)[0])


def load_suite(directory):
    """``[(scenario id, World), ...]`` for every ``*.scn`` file, sorted by name."""
    files = sorted(Path(directory).glob("*.scn"))
    if not files:
        raise FileNotFoundError(f"no *.scn scenario files in {directory}")
    return [(f.stem, read_scenario(f)) for f in files]


def _run_job(job):
    world, ep_cfg, planner_cfg, scan_cfg = job
    return run_episode(world, ep_cfg, SamplingPlanner(planner_cfg), scan_cfg)


def run_suite(suite, cfg, jobs=1, trajectory_dir=None):
    """Run every scenario ``cfg.trials`` times and aggregate.

    With ``cfg.distortion`` set, depth passes through the distortion and the
    rigs' ``(s1, s2)`` calibration; otherwise ground-truth depth is used.
    """
    emb = cfg.embodiment
    v_max = emb.limits.v_max
    scan_cfg = default_scan_config(emb, cfg.scan_resolution_deg)
    use_gt = cfg.distortion is None
    jobs_list, meta = [], []
    for idx, (sid, world) in enumerate(suite):
        t_opt = optimal_time(dijkstra_path_length(world, emb.body, cfg.grid_resolution), v_max)
        for trial in range(cfg.trials):
            ep = EpisodeConfig(
                emb,
                dt=cfg.planner.dt,
                timeout_s=cfg.timeout_factor * CLIP_HI * t_opt,
                distortion=cfg.distortion,
                use_ground_truth_depth=use_gt,
                seed=episode_seed(cfg.seed, idx, trial),
                goal_tolerance=cfg.goal_tolerance,
                lidar_ring=cfg.lidar_ring,
            )
            jobs_list.append((world, ep, cfg.planner, scan_cfg))
            meta.append((sid, trial, t_opt))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_job, jobs_list))
    else:
        results = [_run_job(j) for j in jobs_list]
    if trajectory_dir is not None:
        Path(trajectory_dir).mkdir(parents=True, exist_ok=True)
        for (sid, trial, _), res in zip(meta, results):
            write_trajectory(Path(trajectory_dir) / f"{sid}_t{trial}.traj", res)
    rows = [make_row(sid, trial, res, t_opt) for (sid, trial, t_opt), res in zip(meta, results)]
    config = {
        "v_max": v_max,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "depth": "ground truth" if use_gt else f"distorted (sigma={cfg.distortion.noise_sigma})",
        "timeout": f"{cfg.timeout_factor} x {CLIP_HI} x T_opt",
    }
    return aggregate(rows, config), results
