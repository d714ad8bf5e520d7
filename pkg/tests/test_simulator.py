import math

import networkx as nx
import numpy as np
import pytest

from crossnav.embodiment import PRESETS
from crossnav.errors import FormatError, GenerationError, NumericParseError, PathPlanningError
from crossnav.geometry import CameraExtrinsics, CameraIntrinsics, DynamicLimits, Pose2D, RobotBody
from crossnav.planner import VelocityCommand
from crossnav.scan import ScanConfig, metric_to_scan
from crossnav.sim import (
    Box,
    Cylinder,
    EpisodeConfig,
    EpisodeResult,
    RobotState,
    World,
    camera_world_pose,
    check_collision,
    dijkstra_path_length,
    generate_scenario,
    ground_truth_scan,
    occupancy_grid,
    read_scenario,
    render_depth,
    run_episode,
    step_dynamics,
    write_scenario,
)
from crossnav.sim.episode import default_scan_config, read_episode_config
from crossnav.sim.grid import grid_graph
from crossnav.sim.world import DEFAULT_BOUNDS, boundary_walls

SIM = PRESETS["sim"]
LIM = DynamicLimits(0.5, math.pi / 4, 1.0, math.pi)
BIG = (-50, -50, 50, 50)


# --- dynamics ------------------------------------------------------------------


def test_accel_clip():
    s = step_dynamics(RobotState(Pose2D(0, 0)), VelocityCommand(0.5, 0.0), LIM, 0.1)
    assert s.v == pytest.approx(0.1)


def test_cmd_within_reach():
    s = step_dynamics(RobotState(Pose2D(0, 0), 0.3, 0.1), VelocityCommand(0.35, 0.2), LIM, 0.1)
    assert (s.v, s.w) == (0.35, 0.2)


def test_straight_motion():
    s = RobotState(Pose2D(0, 0), 0.5, 0.0)
    for _ in range(10):
        s = step_dynamics(s, VelocityCommand(0.5, 0.0), LIM, 0.1)
    assert s.pose.y == pytest.approx(0.5, abs=1e-12) and abs(s.pose.x) < 1e-12


def test_velocity_hold_and_limits(rng):
    for _ in range(50):
        v, w = rng.uniform(-0.5, 0.5), rng.uniform(-0.7, 0.7)
        s = step_dynamics(RobotState(Pose2D(0, 0), v, w), VelocityCommand(v, w), LIM, 0.1)
        assert (s.v, s.w) == (v, w)
    s = step_dynamics(RobotState(Pose2D(0, 0), 0.5, 0.0), VelocityCommand(5.0, 9.0), LIM, 1.0)
    assert s.v == 0.5 and s.w == pytest.approx(math.pi / 4)


# --- rendering -------------------------------------------------------------------


def test_render_wall_principal_depth():
    intr = CameraIntrinsics.from_fov(321, 241, 75.0)
    ext = CameraExtrinsics.mounted(0.42)
    world = World((Box(0.0, 3.5, 20.0, 0.5, 5.0),), BIG, Pose2D(0, 0), (0, -5))
    D = render_depth(world, camera_world_pose(Pose2D(0, 0), ext), intr)
    assert D.data[120, 160] == pytest.approx(3.0, abs=1e-9)
    # perpendicular depth: the whole flat wall reads 3 m wherever it is hit above ground
    upper = D.data[:100][D.mask[:100]]
    np.testing.assert_allclose(upper, 3.0, atol=1e-9)


def test_render_pitched_ground_closed_form():
    intr = CameraIntrinsics.from_fov(161, 121, 75.0)  # principal point on pixel (80, 60)
    pitch = math.radians(30)
    ext = CameraExtrinsics.mounted(0.42, pitch=pitch)
    world = World((), BIG, Pose2D(0, 0), (1, 1))
    D = render_depth(world, camera_world_pose(Pose2D(0, 0), ext), intr)
    v = np.arange(intr.height)[:, None].repeat(intr.width, axis=1)
    yn = (v - intr.cy) / intr.fy
    down = yn * math.cos(pitch) + math.sin(pitch)
    with np.errstate(divide="ignore"):
        want = np.where(down > 0, 0.42 / down, np.nan)
    hit = down > 0
    np.testing.assert_array_equal(D.mask, hit)
    np.testing.assert_allclose(D.data[hit], want[hit], rtol=1e-12)
    # on the optical axis the ray length is h / sin(pitch)
    assert D.data[60, 80] == pytest.approx(0.42 / math.sin(pitch), rel=1e-12)


def test_render_cylinder_on_axis():
    intr = CameraIntrinsics.from_fov(321, 241, 75.0)
    ext = CameraExtrinsics.mounted(0.42)
    world = World((Cylinder(0.0, 2.0, 0.2, 1.0),), BIG, Pose2D(0, 0), (0, -5))
    D = render_depth(world, camera_world_pose(Pose2D(0, 0), ext), intr)
    assert D.data[120, 160] == pytest.approx(1.8, abs=1e-12)


def test_render_cylinder_top_cap():
    intr = CameraIntrinsics.from_fov(161, 121, 60.0)
    ext = CameraExtrinsics.mounted(2.0, pitch=math.pi / 2 - 1e-9)
    world = World((Cylinder(0.0, 0.0, 1.0, 0.5),), BIG, Pose2D(0, 0), (5, 5))
    D = render_depth(world, camera_world_pose(Pose2D(0, 0), ext), intr)
    assert D.data[60, 80] == pytest.approx(1.5, abs=1e-6)


def test_render_respects_heading():
    ext = CameraExtrinsics.mounted(0.42)
    intr = CameraIntrinsics.from_fov(321, 241, 75.0)
    world = World((Cylinder(-2.0, 0.0, 0.2, 1.0),), BIG, Pose2D(0, 0), (0, 5))
    # heading +90 deg turns the robot's forward axis to world -x
    D = render_depth(world, camera_world_pose(Pose2D(0, 0, math.pi / 2), ext), intr)
    assert D.data[120, 160] == pytest.approx(1.8, abs=1e-12)


# --- ground truth scan -----------------------------------------------------------


def test_gt_scan_cylinder_ahead():
    cfg = ScanConfig()
    world = World((Cylinder(0.0, 2.0, 0.2, 1.0),), BIG, Pose2D(0, 0), (0, -5))
    s = ground_truth_scan(world, Pose2D(0, 0), cfg)
    assert s.ranges[cfg.bin_index(math.pi / 2)] == pytest.approx(1.8, abs=1e-12)
    # half-angle subtended: asin(0.2 / 2)
    assert s.hit_mask().sum() * cfg.dtheta == pytest.approx(2 * math.asin(0.1), abs=2 * cfg.dtheta)


def test_gt_scan_ignores_obstacles_above_band():
    cfg = ScanConfig(h_min=0.05, h_max=1.0)
    world = World((Box(0.0, 2.0, 1.0, 0.2, 1.5, z_min=1.2),), BIG, Pose2D(0, 0), (0, -5))
    assert not ground_truth_scan(world, Pose2D(0, 0), cfg).hit_mask().any()
    assert ground_truth_scan(world, Pose2D(0, 0), cfg.with_band(0.05, 1.6)).hit_mask().any()


def test_gt_scan_box_sector_minimum():
    cfg = ScanConfig()
    world = World((Box(0.0, 3.0, 2.0, 0.5, 1.0),), BIG, Pose2D(0, 0), (0, -5))
    s = ground_truth_scan(world, Pose2D(0, 0), cfg)
    k = cfg.bin_index(math.pi / 2)
    assert s.ranges[k] == pytest.approx(2.5, abs=1e-12)
    # right of forward, the nearest face point in a sector lies on its upper edge
    j = cfg.bin_index(math.radians(60.2))
    assert s.ranges[j] == pytest.approx(2.5 / math.sin(cfg.edges[j + 1]), abs=1e-12)


def test_render_vs_gt_scan_consistency(rng):
    rig = SIM.cameras[0]
    cfg = default_scan_config(SIM)
    for _ in range(10):
        xyr = zip(rng.uniform(-4, 4, 12), rng.uniform(0.8, 6, 12), rng.uniform(0.1, 0.4, 12))
        cyls = tuple(Cylinder(float(x), float(y), float(r), 1.0) for x, y, r in xyr)
        world = World(cyls, BIG, Pose2D(0, 0), (0, -5))
        D = render_depth(world, camera_world_pose(Pose2D(0, 0), rig.ext), rig.intr, cfg.pixel_stride)
        vis = metric_to_scan(D, rig.intr, rig.ext, cfg)
        exact = ground_truth_scan(world, Pose2D(0, 0), cfg)
        m = vis.hit_mask()
        # a sampled minimum can never undercut the exact sector minimum
        assert np.all(vis.ranges[m] >= exact.ranges[m] - 1e-9)


# --- collisions --------------------------------------------------------------------


def test_collision_cylinder_front_face():
    body = RobotBody(0.2, 0.2, 0.5)
    r = 0.05
    clear = World((Cylinder(0.0, 0.2 + 0.1, r, 1.0),), BIG, Pose2D(0, 0), (0, 5))
    assert not check_collision(clear, Pose2D(0, 0), body)
    hit = World((Cylinder(0.0, 0.2 - 0.1, r, 1.0),), BIG, Pose2D(0, 0), (0, 5))
    assert check_collision(hit, Pose2D(0, 0), body)


def test_collision_tail_swing_at_wall():
    # side wall face at x = 0.25; turning left swings the rear corner outwards
    world = World((Box(0.3, 0.0, 0.05, 2.0, 1.0),), BIG, Pose2D(0, 0), (0, 5))
    long_rear = RobotBody(0.15, 0.45, 0.4)
    short = RobotBody(0.2, 0.2, 0.4)
    assert not check_collision(world, Pose2D(0, 0), long_rear)
    assert check_collision(world, Pose2D(0, 0, 0.25), long_rear)  # corner x = 0.305
    assert not check_collision(world, Pose2D(0, 0, 0.25), short)  # corner x = 0.243


def test_collision_out_of_bounds_and_rect_rect():
    body = RobotBody(0.2, 0.2, 0.4)
    world = World((Box(1.0, 0.0, 0.2, 0.2, 1.0),), (-2, -2, 2, 2), Pose2D(0, 0), (0, 1))
    assert check_collision(world, Pose2D(1.85, -1.0), body)
    assert check_collision(world, Pose2D(0.65, 0.0, math.pi / 4), body)
    assert not check_collision(world, Pose2D(0.45, 0.0, 0.0), body)


def test_generated_start_is_collision_free():
    world = generate_scenario(3, 0.3, SIM.body)
    assert not check_collision(world, world.start, SIM.body)


# --- grid Dijkstra -------------------------------------------------------------------


def test_dijkstra_empty_corridor():
    world = World((), (-1.5, -0.5, 1.5, 10.5), Pose2D(0, 0), (0, 10))
    L = dijkstra_path_length(world, RobotBody(0.2, 0.2, 0.4), 0.05)
    assert abs(L - 10.0) <= 2 * 0.05


def test_dijkstra_wall_gap_detour():
    body = RobotBody(0.1, 0.1, 0.2)
    walls = (Box(-1.5, 5.0, 3.5, 0.1, 1.0), Box(4.0, 5.0, 1.0, 0.1, 1.0))  # 1 m gap at x in [2, 3]
    world = World(walls, (-5, 0, 5, 10), Pose2D(-1.4, 1.0), (-1.4, 9.0))
    r = body.circumscribed_radius
    hand = 2 * math.hypot(3.4 + r, 3.9) + 0.2
    assert dijkstra_path_length(world, body, 0.05) == pytest.approx(hand, rel=0.05)


def test_dijkstra_walled_goal():
    ring = boundary_walls((-1, 4, 1, 6))
    world = World(ring, (-3, -1, 3, 8), Pose2D(0, 0), (0, 5))
    assert dijkstra_path_length(world, RobotBody(0.1, 0.1, 0.2), 0.05) == math.inf


def test_dijkstra_occupied_start():
    world = World((Cylinder(0.0, 0.0, 0.3, 1.0),), (-3, -3, 3, 3), Pose2D(0, 0), (0, 2))
    with pytest.raises(PathPlanningError):
        dijkstra_path_length(world, RobotBody(0.1, 0.1, 0.2), 0.05)


def test_dijkstra_matches_networkx():
    world = generate_scenario(7, 0.4, SIM.body, bounds=(-2, -1, 2, 5), goal=(0.0, 4.0))
    res = 0.1
    occ = occupancy_grid(world, SIM.body.circumscribed_radius, res, SIM.body.h_robot)
    ny, nx_ = occ.shape
    G = nx.Graph()
    for i in range(ny):
        for j in range(nx_):
            if occ[i, j]:
                continue
            for di, dj in ((0, 1), (1, 0), (1, 1), (1, -1)):
                a, b = i + di, j + dj
                if not (0 <= a < ny and 0 <= b < nx_) or occ[a, b]:
                    continue
                if di and dj and (occ[a, j] or occ[i, b]):
                    continue
                G.add_edge((i, j), (a, b), weight=res * (math.sqrt(2) if di and dj else 1.0))
    x0, y0 = world.bounds[:2]
    s = (int((world.start.y - y0) // res), int((world.start.x - x0) // res))
    g = (int((world.goal[1] - y0) // res), int((world.goal[0] - x0) // res))
    want = nx.dijkstra_path_length(G, s, g)
    assert dijkstra_path_length(world, SIM.body, res) == pytest.approx(want, abs=1e-9)
    assert grid_graph(occ, res).nnz == G.number_of_edges()


# --- generator and files ----------------------------------------------------------------


def test_generate_density_zero():
    world = generate_scenario(0, 0.0, SIM.body)
    assert not any(isinstance(o, Cylinder) for o in world.obstacles)
    L = dijkstra_path_length(world, SIM.body, 0.05)
    assert abs(L - world.straight_line_distance) <= 2 * 0.05


def test_generate_deterministic_and_feasible():
    a = generate_scenario(42, 0.3, SIM.body, max_path_ratio=1.3)
    b = generate_scenario(42, 0.3, SIM.body, max_path_ratio=1.3)
    assert a == b
    for seed in range(5):
        w = generate_scenario(seed, 0.3, SIM.body)
        assert math.isfinite(dijkstra_path_length(w, SIM.body, 0.05))
        for o in w.obstacles:
            if isinstance(o, Cylinder):
                assert math.hypot(o.x - w.start.x, o.y - w.start.y) >= 1.0 + o.radius


def test_generate_impossible():
    with pytest.raises(GenerationError):
        generate_scenario(0, 30.0, SIM.body, max_attempts=3)
    with pytest.raises(ValueError):
        generate_scenario(0, -1.0, SIM.body)


def test_scenario_round_trip(tmp_path):
    world = generate_scenario(5, 0.3, SIM.body).with_obstacles([Box(1.0, 5.0, 0.5, 0.2, 1.5, 1.2)])
    p = tmp_path / "w.scn"
    write_scenario(p, world)
    assert read_scenario(p) == world


@pytest.mark.parametrize(
    "text,exc",
    [
        ("bounds 0 0 1\n", FormatError),
        ("blob 1 2\n", FormatError),
        ("bounds 0 0 5 5\nstart 1 1 0\n", FormatError),
        ("bounds 0 0 5 5\nstart 1 1 zero\ngoal 2 2\n", NumericParseError),
        ("bounds 0 0 5 5\nstart 1 1 0\ngoal 2 2\ncyl 3 3 -1 1\n", FormatError),
    ],
)
def test_scenario_errors(tmp_path, text, exc):
    p = tmp_path / "bad.scn"
    p.write_text(text)
    with pytest.raises(exc):
        read_scenario(p)


# --- episodes ------------------------------------------------------------------------


def test_episode_empty_world_kinematic_bound():
    world = World((), DEFAULT_BOUNDS, Pose2D(0, 0), (0, 5))
    res = run_episode(world, EpisodeConfig(SIM, timeout_s=30))
    assert (res.S, res.C, res.O) == (1, 0, 0)
    # 1-D kinematic bound: full-throttle ramp, then cruise until within the goal tolerance
    lim, t, y, v = SIM.limits, 0.0, 0.0, 0.0
    while 5.0 - y > 0.3:
        v = min(lim.v_max, v + lim.a_v_max * 0.1)
        y, t = y + v * 0.1, t + 0.1
    assert res.T_act == pytest.approx(t, abs=0.25)
    assert 9.0 <= res.T_act <= 11.0
    np.testing.assert_allclose(res.trajectory[:, 1], 0.0, atol=1e-9)


def test_episode_walled_goal_times_out():
    ring = boundary_walls((-1.0, 3.0, 1.0, 5.0), thickness=0.2)
    world = World(ring, DEFAULT_BOUNDS, Pose2D(0, 0), (0, 4))
    res = run_episode(world, EpisodeConfig(SIM, timeout_s=12, lidar_ring=True))
    assert (res.S, res.C, res.O) == (0, 0, 1)
    assert res.min_clearance > 0


def test_episode_tiny_timeout():
    world = World((), DEFAULT_BOUNDS, Pose2D(0, 0), (0, 10))
    res = run_episode(world, EpisodeConfig(SIM, timeout_s=0.1))
    assert (res.S, res.C, res.O) == (0, 0, 1)
    assert res.T_act == pytest.approx(0.2)


def test_episode_deterministic():
    world = generate_scenario(1, 0.3, SIM.body, bounds=(-2.5, -1.0, 2.5, 5.0), goal=(0.0, 4.0))
    cfg = EpisodeConfig(SIM, timeout_s=20, lidar_ring=True, seed=9)
    a, b = run_episode(world, cfg), run_episode(world, cfg)
    assert (a.S, a.C, a.O, a.T_act) == (b.S, b.C, b.O, b.T_act)
    np.testing.assert_array_equal(a.trajectory, b.trajectory)


def test_episode_pipeline_error_is_a_failure():
    world = World((), DEFAULT_BOUNDS, Pose2D(0, 0), (0, 5))

    def broken(obs):
        raise RuntimeError("policy crashed")

    res = run_episode(world, EpisodeConfig(SIM), broken)
    assert (res.S, res.C, res.O) == (0, 0, 1) and "policy crashed" in res.error


def test_episode_needs_calibration_for_distorted_depth():
    from crossnav.depth import DisparityDistortion

    world = World((), DEFAULT_BOUNDS, Pose2D(0, 0), (0, 5))
    cfg = EpisodeConfig(SIM, distortion=DisparityDistortion(2.0, 0.1), use_ground_truth_depth=False)
    res = run_episode(world, cfg)
    assert res.O == 1 and "calibration" in res.error


def test_episode_result_flags():
    with pytest.raises(ValueError):
        EpisodeResult(1, 1, 0, 0.0, np.zeros((1, 4)), 0.0)
    with pytest.raises(ValueError):
        EpisodeConfig(SIM, dt=0.0)


def test_episode_config_file(tmp_path):
    p = tmp_path / "ep.cfg"
    p.write_text(
        "timeout_s = 12\nuse_ground_truth_depth = false\n"
        "s1_true = 2.0\ns2_true = 0.1\nnoise_sigma = 0.01\nlidar_ring = true\n"
    )
    cfg = read_episode_config(p, SIM, seed=4)
    assert cfg.timeout_s == 12 and cfg.lidar_ring and not cfg.use_ground_truth_depth
    assert cfg.distortion.s1_true == 2.0 and cfg.distortion.noise_sigma == 0.01 and cfg.seed == 4
