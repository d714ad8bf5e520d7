"""Command-line entry point: ``crossnav <subcommand> ...``.

Exit codes::

    0  success
    1  unexpected internal error
    2  usage error (unknown subcommand, missing option)
    3  input file missing or unreadable
    4  file format error
    5  numeric parse error (file field or command-line value)
    6  numerical failure (non-convergence, singular system)
    7  invalid input values
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import SuiteConfig, emit_report, load_suite, read_trajectory, run_suite, write_trajectory
from .calibration import calibrate, read_annotations, read_calibration, write_calibration
from .depth import METRIC, RELATIVE, DisparityDistortion, eval_depth, load_pfm
from .embodiment import PRESETS, read_embodiment
from .errors import CrossNavError, FormatError, NumericalError, NumericParseError
from .geometry import DynamicLimits, Pose2D, RobotBody, read_camera_file
from .kvfile import read_kv, write_kv
from .planner import Observation, PlannerConfig, SamplingPlanner, plan, read_planner_config
from .plotting import emit_trajectory_plot
from .scan import metric_to_scan, read_scan, read_scan_config, visual_to_scan, write_scan
from .sim.episode import EpisodeConfig, default_scan_config, read_episode_config, run_episode
from .sim.markers import calibrate_in_sim
from .sim.world import generate_scenario, read_scenario, write_scenario
from .vln import ArrivalDetector, parse_confidence_line, read_confidence_stream, run_stream

log = logging.getLogger("crossnav")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_FILE = 3
EXIT_FORMAT = 4
EXIT_NUMBER = 5
EXIT_NUMERICAL = 6
EXIT_INVALID = 7


class _BadNumber(Exception):
    """Raised by argument converters; deliberately not a ValueError so argparse lets it through."""


def _number(text, kind=float):
    try:
        value = kind(text)
    except ValueError:
        raise _BadNumber(f"cannot parse {text!r} as {'an integer' if kind is int else 'a number'}") from None
    if kind is float and not math.isfinite(value):
        raise _BadNumber(f"{text!r} is not a finite number")
    return value


def _int(text):
    return _number(text, int)


def _vector(n):
    def parse(text):
        parts = text.split(",")
        if len(parts) != n:
            raise _BadNumber(f"expected {n} comma-separated numbers, got {text!r}")
        return tuple(_number(p) for p in parts)

    return parse


def _existing(path):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    return p


def _load_embodiment(name):
    if Path(name).is_file():
        return read_embodiment(name)
    if name in PRESETS:
        return PRESETS[name]
    raise FileNotFoundError(f"no embodiment file or preset named {name!r} (presets: {', '.join(PRESETS)})")


def _load_limits(path):
    kv = read_kv(_existing(path))
    return DynamicLimits(kv.float("v_max"), kv.float("w_max"), kv.float("a_v_max"), kv.float("a_w_max"))


# --- subcommands -------------------------------------------------------------


def cmd_calibrate(args):
    intr, _ = read_camera_file(_existing(args.camera))
    observations = read_annotations(_existing(args.annotations))
    image_dir = _existing(args.images)
    groups = {}
    for obs in observations:
        groups.setdefault(obs.image_id, []).append(obs)
    images = []
    for image_id in sorted(groups):
        D = load_pfm(_existing(image_dir / f"{image_id}.pfm"), RELATIVE)
        images.append((D, groups[image_id]))
    result = calibrate(images, intr, args.lam)
    write_calibration(args.out, result)
    print(f"s1 = {result.s1!r}\ns2 = {result.s2!r}\nresidual_rms = {result.residual_rms!r}")
    return EXIT_OK


def cmd_scan(args):
    intr, ext = read_camera_file(_existing(args.camera))
    cfg = read_scan_config(_existing(args.config)) if args.config else default_scan_config(PRESETS["sim"])
    if args.calib:
        calib = read_calibration(_existing(args.calib))
        scan = visual_to_scan(load_pfm(_existing(args.depth), RELATIVE), calib, intr, ext, cfg)
    else:
        scan = metric_to_scan(load_pfm(_existing(args.depth), METRIC), intr, ext, cfg)
    write_scan(args.out, scan)
    print(f"bins_with_returns = {int(scan.hit_mask().sum())}")
    return EXIT_OK


def cmd_plan(args):
    scan = read_scan(_existing(args.scan))
    limits = _load_limits(args.limits)
    cfg = read_planner_config(_existing(args.config)) if args.config else PlannerConfig()
    f, r, w = args.body
    body = RobotBody(f, r, w)
    obs = Observation(scan, args.goal, args.velocity, limits, body)
    cmd = plan(obs, cfg)
    print(f"{cmd.v!r} {cmd.w!r}")
    return EXIT_OK


def _episode_inputs(args):
    world = read_scenario(_existing(args.scenario))
    emb = _load_embodiment(args.embodiment)
    if args.config:
        ep = read_episode_config(_existing(args.config), emb, args.seed)
    else:
        ep = EpisodeConfig(emb, seed=args.seed)
    planner_cfg = read_planner_config(args.config) if args.config else PlannerConfig()
    return world, emb, ep, planner_cfg


def cmd_simulate(args):
    world, emb, ep, planner_cfg = _episode_inputs(args)
    if ep.distortion is not None and any(rig.calib is None for rig in emb.cameras):
        rng = np.random.default_rng(args.seed)
        calibs = []
        for rig in emb.cameras:
            res = calibrate_in_sim(rig.intr, ep.distortion, rng)
            calibs.append((res.s1, res.s2))
        emb = emb.with_calibration(calibs)
        ep = EpisodeConfig(emb, ep.dt, ep.timeout_s, ep.distortion, ep.use_ground_truth_depth,
                           ep.seed, ep.goal_tolerance, ep.lidar_ring)
    result = run_episode(world, ep, SamplingPlanner(planner_cfg))
    write_kv(
        args.out,
        [
            ("S", result.S),
            ("C", result.C),
            ("O", result.O),
            ("T_act", result.T_act),
            ("min_clearance", result.min_clearance),
            ("steps", len(result.trajectory) - 1),
            ("error", result.error or "none"),
        ],
        header="episode result",
    )
    if args.trajectory:
        write_trajectory(args.trajectory, result)
    if args.plot:
        emit_trajectory_plot(result, world, args.plot, emb.body, Path(args.scenario).stem)
    print(f"S = {result.S}\nC = {result.C}\nO = {result.O}\nT_act = {result.T_act!r}")
    return EXIT_OK


def cmd_plot(args):
    world = read_scenario(_existing(args.scenario))
    traj = read_trajectory(_existing(args.trajectory))
    body = _load_embodiment(args.embodiment).body if args.embodiment else None
    emit_trajectory_plot(traj, world, args.out, body, Path(args.trajectory).stem)
    return EXIT_OK


def cmd_gen_scenarios(args):
    emb = _load_embodiment(args.embodiment)
    worlds = []
    for i in range(args.count):
        seed = int(np.random.SeedSequence([args.seed, i]).generate_state(1)[0])
        worlds.append(
            generate_scenario(seed, args.density, emb.body, max_path_ratio=args.max_path_ratio)
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, world in enumerate(worlds):
        write_scenario(out / f"scenario_{i:03d}.scn", world)
    print(f"wrote {len(worlds)} scenarios to {out}")
    return EXIT_OK


def cmd_benchmark(args):
    suite = load_suite(_existing(args.suite))
    emb = _load_embodiment(args.embodiment)
    if args.vmax is not None:
        emb = emb.with_v_max(args.vmax)
    planner_cfg = read_planner_config(_existing(args.config)) if args.config else PlannerConfig()
    distortion = None
    if args.depth == "distorted":
        distortion = DisparityDistortion(args.s1_true, args.s2_true, args.noise_sigma, args.seed)
        if any(rig.calib is None for rig in emb.cameras):
            rng = np.random.default_rng(args.seed)
            emb = emb.with_calibration(
                [(r.s1, r.s2) for r in (calibrate_in_sim(rig.intr, distortion, rng) for rig in emb.cameras)]
            )
    cfg = SuiteConfig(
        emb,
        trials=args.trials,
        seed=args.seed,
        distortion=distortion,
        lidar_ring=not args.no_lidar_ring,
        planner=planner_cfg,
    )
    out = Path(args.out)
    report, _ = run_suite(suite, cfg, jobs=args.jobs, trajectory_dir=out / "trajectories")
    emit_report(report, out, ("csv", "md"))
    print(
        f"Metric = {report.metric:.4f}\nSR = {report.sr:.4f}\nCR = {report.cr:.4f}\nTO = {report.tr:.4f}"
    )
    return EXIT_OK


def cmd_eval_depth(args):
    pred = load_pfm(_existing(args.pred), METRIC)
    gt = load_pfm(_existing(args.gt), METRIC)
    mae, rmse = eval_depth(pred, gt)
    print(f"mae = {mae!r}\nrmse = {rmse!r}")
    return EXIT_OK


def cmd_vln_step(args):
    conf = args.conf
    if Path(conf).is_file():
        records = read_confidence_stream(conf)
    else:
        rec = parse_confidence_line(conf, "--conf")
        if rec is None:
            raise FormatError("--conf: empty confidence record")
        records = [rec]
    for rec in records:
        for s in (rec.left, rec.center, rec.right):
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"confidence {s} at t={rec.t} is outside [0, 1]")
    pose = Pose2D(*args.pose)
    det = ArrivalDetector(args.k, args.threshold)
    rows, _ = run_stream(records, pose, det, math.radians(args.region_deg))
    for t, cmd, wp, reached in rows:
        print(f"{t!r} {wp[0]:.6f} {wp[1]:.6f} {'reached' if reached else 'continue'}")
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="crossnav", description="Cross-embodiment visual navigation toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--seed", type=_int, default=0, help="seed for every stochastic step (default 0)")
    p.add_argument("--jobs", type=_int, default=1, help="worker processes for benchmark runs")
    p.add_argument("--verbose", "-v", action="count", default=0)
    # the global flags are also accepted after the subcommand name
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_int, default=argparse.SUPPRESS)
    common.add_argument("--jobs", type=_int, default=argparse.SUPPRESS)
    common.add_argument("--verbose", "-v", action="count", default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    s = sub.add_parser("calibrate", help="estimate (s1, s2) from marker annotations")
    s.add_argument("--images", required=True, help="directory of <image_id>.pfm relative depth maps")
    s.add_argument("--annotations", required=True)
    s.add_argument("--camera", required=True)
    s.add_argument("--lambda", dest="lam", type=_number, default=1e-6)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("scan", help="convert a depth map to a virtual laser scan")
    s.add_argument("--depth", required=True, help="PFM depth; relative if --calib is given, else metric")
    s.add_argument("--camera", required=True)
    s.add_argument("--calib")
    s.add_argument("--config", help="scan config file (bins, range, height band, stride)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("plan", help="one planning step on a scan file")
    s.add_argument("--scan", required=True)
    s.add_argument("--goal", required=True, type=_vector(2), help="x,y in the robot frame (y forward)")
    s.add_argument("--body", required=True, type=_vector(3), help="L_front,L_rear,W")
    s.add_argument("--limits", required=True)
    s.add_argument("--velocity", type=_vector(2), default=(0.0, 0.0), help="current v,w")
    s.add_argument("--config")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("simulate", help="run one closed-loop episode")
    s.add_argument("--scenario", required=True)
    s.add_argument("--embodiment", default="sim", help="embodiment file or preset name")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--trajectory")
    s.add_argument("--plot", help="also write an SVG plot here")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("plot", help="SVG plot of a trajectory file")
    s.add_argument("--scenario", required=True)
    s.add_argument("--trajectory", required=True)
    s.add_argument("--embodiment")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot)

    s = sub.add_parser("gen-scenarios", help="generate a seeded cylinder-field suite")
    s.add_argument("--count", type=_int, required=True)
    s.add_argument("--density", type=_number, required=True, help="cylinders per square meter")
    s.add_argument("--embodiment", default="sim")
    s.add_argument("--max-path-ratio", type=_number, default=1.3)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_scenarios)

    s = sub.add_parser("benchmark", help="run a scenario suite and write results.csv / report.md")
    s.add_argument("--suite", required=True)
    s.add_argument("--embodiment", default="sim")
    s.add_argument("--vmax", type=_number)
    s.add_argument("--trials", type=_int, default=2)
    s.add_argument("--config", help="planner config file")
    s.add_argument("--depth", choices=("gt", "distorted"), default="gt")
    s.add_argument("--noise-sigma", type=_number, default=0.01)
    s.add_argument("--s1-true", type=_number, default=2.0)
    s.add_argument("--s2-true", type=_number, default=0.1)
    s.add_argument("--no-lidar-ring", action="store_true", help="camera sectors only")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("eval-depth", help="MAE / RMSE between two metric PFM depth maps")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.set_defaults(func=cmd_eval_depth)

    s = sub.add_parser("vln-step", help="waypoint and arrival flag from region confidences")
    s.add_argument("--conf", required=True, help="'t s_left s_center s_right' or a file of such lines")
    s.add_argument("--pose", required=True, type=_vector(3), help="x,y,heading")
    s.add_argument("--k", type=_int, default=5)
    s.add_argument("--threshold", type=_number, default=0.8)
    s.add_argument("--region-deg", type=_number, default=25.0)
    s.set_defaults(func=cmd_vln_step)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _BadNumber as exc:
        print(f"crossnav: error: {exc}", file=sys.stderr)
        return EXIT_NUMBER
    except SystemExit as exc:  # argparse: --help (0) or usage error (2)
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure maps to an exit code
        code, kind = _categorize(exc)
        if code == EXIT_INTERNAL:
            log.debug("unexpected error", exc_info=True)
        print(f"crossnav: {kind}: {exc}", file=sys.stderr)
        return code


def _categorize(exc):
    # order matters: NumericParseError is a FormatError, which is a ValueError
    table = (
        (NumericParseError, EXIT_NUMBER, "numeric parse error"),
        (FormatError, EXIT_FORMAT, "format error"),
        ((FileNotFoundError, IsADirectoryError, PermissionError), EXIT_FILE, "file error"),
        (NumericalError, EXIT_NUMERICAL, "numerical error"),
        ((CrossNavError, ValueError), EXIT_INVALID, "invalid input"),
    )
    for types, code, kind in table:
        if isinstance(exc, types):
            return code, kind
    return EXIT_INTERNAL, f"internal error ({type(exc).__name__})"


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
