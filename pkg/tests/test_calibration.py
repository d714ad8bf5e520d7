import math
import warnings

import numpy as np
import pytest

from crossnav.calibration import (
    CalibrationSample,
    MarkerObservation,
    MarkerPose,
    apply_scale_correction,
    calibrate,
    calibrate_samples,
    corner_depths,
    estimate_marker_pose,
    marker_object_points,
    read_annotations,
    read_calibration,
    sample_relative_depth,
    solve_ridge,
    write_annotations,
    write_calibration,
)
from crossnav.depth import METRIC, RELATIVE, DepthImage, DisparityDistortion, distort_to_relative
from crossnav.errors import (
    BehindCameraError,
    CalibrationSpreadWarning,
    DegenerateTargetError,
    EmptyCalibrationError,
    IllConditionedError,
    IllConditionedWarning,
    InvalidSampleError,
    NumericParseError,
)
from crossnav.geometry import CameraIntrinsics, project_points, rodrigues, rodrigues_inv, rot_x
from crossnav.sim.markers import FACING, marker_dataset, marker_scene

# Median relative tvec.z error for sigma = 0.5 px corner noise at 2 m, seeds 0..99,
# measured with the forward-projection oracle and frozen here.
PNP_NOISE_MEDIAN_REL_Z = 0.006849405234435002


def _obs(intr, rvec, tvec, size=0.2):
    corners = project_points(intr, marker_object_points(size) @ rodrigues(rvec).T + np.asarray(tvec))
    return MarkerObservation("img", 0, size, corners)


def test_object_points_layout():
    P = marker_object_points(0.2)
    np.testing.assert_array_equal(P[0], [-0.1, 0.1, 0.0])
    assert np.all(P[:, 2] == 0)
    np.testing.assert_array_equal(P.mean(axis=0), [0, 0, 0])


def test_object_points_reject_non_positive():
    with pytest.raises(ValueError):
        marker_object_points(0.0)


def test_pnp_fronto_parallel(intr640):
    pose = estimate_marker_pose(intr640, _obs(intr640, [0, 0, 0], [0, 0, 1.5]))
    np.testing.assert_allclose(pose.rvec, [0, 0, 0], atol=1e-6)
    np.testing.assert_allclose(pose.tvec, [0, 0, 1.5], atol=1e-6)


def test_pnp_rotated_marker(intr640):
    rvec = rodrigues_inv(rot_x(math.radians(30)))
    pose = estimate_marker_pose(intr640, _obs(intr640, rvec, [0.2, -0.1, 2.0]))
    np.testing.assert_allclose(pose.rvec, rvec, atol=1e-6)
    np.testing.assert_allclose(pose.tvec, [0.2, -0.1, 2.0], atol=1e-6)
    assert pose.reprojection_rms < 1e-8


def test_pnp_with_lens_distortion():
    intr = CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480, (-0.15, 0.03, 0.001, -0.0005))
    rvec = rodrigues_inv(rodrigues([0.2, -0.3, 0.1]) @ FACING)
    pose = estimate_marker_pose(intr, _obs(intr, rvec, [0.3, 0.2, 1.2], 0.25))
    np.testing.assert_allclose(rodrigues(pose.rvec), rodrigues(rvec), atol=1e-8)
    np.testing.assert_allclose(pose.tvec, [0.3, 0.2, 1.2], atol=1e-8)
    assert pose.reprojection_rms < 1e-8


def test_pnp_noise_monte_carlo(intr640):
    rvec = rodrigues_inv(rot_x(math.radians(30)) @ FACING)
    errs = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        _, obs = marker_scene(intr640, rvec, [0.2, -0.1, 2.0], 0.2, corner_noise=0.5, rng=rng)
        errs.append(abs(estimate_marker_pose(intr640, obs).tvec[2] - 2.0) / 2.0)
    median = float(np.median(errs))
    assert median < 0.02
    assert median == pytest.approx(PNP_NOISE_MEDIAN_REL_Z, rel=1e-6)


def test_pnp_collinear_corners(intr640):
    corners = np.array([[100.0, 100.0], [200.0, 100.0], [300.0, 100.0], [400.0, 100.0]])
    with pytest.raises(DegenerateTargetError):
        estimate_marker_pose(intr640, MarkerObservation("i", 0, 0.2, corners))


def test_self_intersecting_corners_rejected():
    corners = np.array([[0.0, 0.0], [10.0, 10.0], [10.0, 0.0], [0.0, 10.0]])
    with pytest.raises(DegenerateTargetError):
        MarkerObservation("i", 0, 0.2, corners)


def test_corner_depths_fronto_parallel():
    pose = MarkerPose(np.zeros(3), np.array([0.0, 0.0, 2.0]), 0.0)
    np.testing.assert_allclose(corner_depths(pose, 0.3), [2.0] * 4)


def test_corner_depths_pitched():
    pose = MarkerPose(np.array([-math.pi / 4, 0.0, 0.0]), np.array([0.0, 0.0, 2.0]), 0.0)
    z = corner_depths(pose, 0.2)
    # hand-computed: top corners (y = +0.1) move towards the camera
    d = 0.1 * math.sin(math.pi / 4)
    np.testing.assert_allclose(z, [2 - d, 2 - d, 2 + d, 2 + d], atol=1e-12)
    assert z[0] == pytest.approx(1.9293, abs=1e-4) and z[2] == pytest.approx(2.0707, abs=1e-4)


def test_corner_depths_in_plane_rotation_invariant():
    a = corner_depths(MarkerPose(np.array([0.3, 0, 0]), np.array([0, 0, 2.0]), 0), 0.2)
    # spin about the camera's optical axis, marker centred on it
    R = rodrigues([0, 0, 0.7]) @ rodrigues([0.3, 0, 0])
    b = corner_depths(MarkerPose(rodrigues_inv(R), np.array([0, 0, 2.0]), 0), 0.2)
    np.testing.assert_allclose(a, b, atol=1e-12)
    # pure spin about the optical axis: depths unchanged
    c = corner_depths(MarkerPose(np.array([0, 0, 1.1]), np.array([0, 0, 2.0]), 0), 0.2)
    np.testing.assert_allclose(c, 2.0)


def test_corner_depths_behind_camera():
    with pytest.raises(BehindCameraError):
        corner_depths(MarkerPose(np.zeros(3), np.array([0, 0, -1.0]), 0), 0.2)


def test_sample_constant_and_linear():
    D = DepthImage.full(20, 10, 0.5, RELATIVE)
    assert sample_relative_depth(D, 5.3, 4.7) == (0.5, False)
    ramp = DepthImage(np.tile(np.arange(20.0), (10, 1)), RELATIVE)
    value, flagged = sample_relative_depth(ramp, 10.25, 3.5)
    assert value == pytest.approx(10.25, abs=1e-12) and not flagged


def test_sample_invalid_neighbour_falls_back():
    data = np.array([[1.0, 2.0, 9.0], [3.0, np.nan, 9.0], [9.0, 9.0, 9.0]])
    D = DepthImage(data, RELATIVE)
    # patch at (u0, v0) = (1, 1) is [[nan, 9], [9, 9]]; nearest valid to (1.2, 1.1) is (u=2, v=1)
    data2 = np.array([[5.0] * 4, [5.0, np.nan, 7.0, 5.0], [5.0, 8.0, 6.0, 5.0], [5.0] * 4])
    D2 = DepthImage(data2, RELATIVE)
    value, flagged = sample_relative_depth(D2, 1.2, 1.1)
    assert flagged and value == 7.0
    value, flagged = sample_relative_depth(D2, 1.1, 1.8)
    assert flagged and value == 8.0
    assert D.mask.sum() == 8


def test_sample_all_invalid_and_border():
    D = DepthImage(np.full((6, 6), np.nan), RELATIVE)
    with pytest.raises(InvalidSampleError):
        sample_relative_depth(D, 2.5, 2.5)
    with pytest.raises(InvalidSampleError):
        sample_relative_depth(DepthImage.full(6, 6, 1.0, RELATIVE), 0.5, 2.0)


def test_ridge_identity_mapping():
    d = np.linspace(0.1, 2.0, 10)
    x = solve_ridge(np.column_stack([d, np.ones_like(d)]), d, 0.0).x
    np.testing.assert_allclose(x, [1.0, 0.0], atol=1e-12)


def test_ridge_recovers_line():
    a = np.arange(0.1, 1.95, 0.1)
    x = solve_ridge(np.column_stack([a, np.ones_like(a)]), 2.5 * a + 0.2, 1e-12).x
    np.testing.assert_allclose(x, [2.5, 0.2], atol=1e-9)


def test_ridge_large_lambda_shrinks():
    a = np.linspace(0.1, 2.0, 10)
    A = np.column_stack([a, np.ones_like(a)])
    norms = [np.linalg.norm(solve_ridge(A, 2.5 * a + 0.2, lam).x) for lam in (0, 1, 1e3, 1e9)]
    assert norms == sorted(norms, reverse=True)
    assert norms[-1] < 1e-6


def test_ridge_matches_cramer(rng):
    for _ in range(20):
        A = np.column_stack([rng.uniform(0.1, 3.0, 12), np.ones(12)])
        b = rng.normal(size=12)
        # independent oracle: Cramer's rule on the 2x2 normal equations
        (p, q), (_, r) = A.T @ A
        g, h = A.T @ b
        det = p * r - q * q
        want = np.array([(g * r - q * h) / det, (p * h - q * g) / det])
        np.testing.assert_allclose(solve_ridge(A, b, 0.0).x, want, rtol=0, atol=1e-12)


def test_ridge_singular():
    A = np.column_stack([np.full(5, 0.4), np.ones(5)])
    with pytest.raises(IllConditionedError, match="near and a far"):
        solve_ridge(A, np.ones(5), 0.0)


def test_ridge_argument_errors():
    with pytest.raises(ValueError):
        solve_ridge(np.ones((1, 2)), np.ones(1))
    with pytest.raises(ValueError):
        solve_ridge(np.ones((3, 2)), np.ones(3), -1.0)


def _synthetic_images(intr, s1, s2, depths, rng):
    d = DisparityDistortion(s1, s2)
    out = []
    for i, z in enumerate(depths):
        rvec = rodrigues_inv(rodrigues(rng.uniform(-0.3, 0.3, 3)) @ FACING)
        Z, obs = marker_scene(intr, rvec, [0.05, -0.03, z], 0.3, image_id=f"im{i}", marker_id=i)
        out.append((distort_to_relative(Z, d), [obs]))
    return out


def test_calibrate_end_to_end_exact(intr640, rng):
    images = _synthetic_images(intr640, 2.5, 0.2, [0.5, 1.2, 2.5, 4.0], rng)
    res = calibrate(images, intr640, 1e-8)
    assert res.s1 == pytest.approx(2.5, rel=1e-6)
    assert res.s2 == pytest.approx(0.2, rel=1e-6)
    assert res.sample_count == 16 and res.depth_spread_ratio > 2


def test_calibrate_single_distance_warns(intr640):
    Z, obs = marker_scene(intr640, rodrigues_inv(FACING), [0, 0, 2.0], 0.3)
    rel = distort_to_relative(Z, DisparityDistortion(2.0, 0.1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedWarning)
        with pytest.warns(CalibrationSpreadWarning):
            res = calibrate([(rel, [obs])], intr640, 1e-6)
    assert res.depth_spread_ratio == pytest.approx(1.0)


def test_calibrate_clustered_depths_ill_conditioned():
    # samples at 2.0 m +/- 1 cm: the normal matrix is nearly singular
    samples = [CalibrationSample((1 / z - 0.1) / 2.0, z) for z in np.linspace(1.99, 2.01, 8)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CalibrationSpreadWarning)
        with pytest.warns(IllConditionedWarning):
            res = calibrate_samples(samples, 0.0)
    assert res.ill_conditioned


def test_calibrate_empty():
    with pytest.raises(EmptyCalibrationError):
        calibrate([], None)
    with pytest.raises(EmptyCalibrationError):
        calibrate_samples([])


def test_residual_non_increasing_as_samples_added():
    zs = np.linspace(0.5, 4.0, 12)
    samples = [CalibrationSample((1 / z - 0.2) / 2.5, z) for z in zs]
    prev = math.inf
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for n in range(2, 13):
            r = calibrate_samples(samples[:n], 0.0).residual_rms
            assert r <= prev + 1e-15
            prev = r


def test_apply_scale_correction():
    out = apply_scale_correction(DepthImage.full(4, 3, 0.5, RELATIVE), 1.0, 0.0)
    np.testing.assert_array_equal(out.data, 2.0)
    out = apply_scale_correction(DepthImage.full(1, 1, 0.32, RELATIVE), 2.5, 0.2)
    assert out.data[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert out.kind == METRIC


def test_apply_scale_correction_masks_small_denominator():
    rel = DepthImage(np.array([[0.0, -1.0, 0.4e-6, 1.0, np.nan]]), RELATIVE)
    out = apply_scale_correction(rel, 1.0, 0.0)
    assert out.mask[0].tolist() == [False, False, False, True, False]
    assert np.all(np.isnan(out.data[~out.mask]))


def test_round_trip_property(rng):
    for _ in range(20):
        s1, s2 = rng.uniform(0.5, 5), rng.uniform(-0.5, 0.5)
        zs = rng.uniform(0.5, 4.0, 10)
        zs[:2] = (0.6, 3.5)
        samples = [CalibrationSample((1 / z - s2) / s1, z) for z in zs]
        res = calibrate_samples(samples, 0.0)
        assert res.s1 == pytest.approx(s1, rel=1e-6) and res.s2 == pytest.approx(s2, rel=1e-6)
        Z = DepthImage(zs.reshape(2, 5))
        back = apply_scale_correction(distort_to_relative(Z, DisparityDistortion(s1, s2)), res.s1, res.s2)
        np.testing.assert_allclose(back.data, Z.data, rtol=1e-6)


def test_annotation_and_calibration_files(tmp_path, intr640):
    obs = [_obs(intr640, [0.1, 0, 0], [0, 0, 2.0]), _obs(intr640, [0, 0.1, 0], [0.1, 0, 3.0])]
    p = tmp_path / "markers.txt"
    write_annotations(p, obs)
    back = read_annotations(p)
    assert len(back) == 2
    np.testing.assert_array_equal(back[1].corners, obs[1].corners)
    (tmp_path / "bad.txt").write_text("img 0 0.2 1 2 3 4 5 6 7 x\n")
    with pytest.raises(NumericParseError):
        read_annotations(tmp_path / "bad.txt")
    samples = [CalibrationSample((1 / z - 0.2) / 2.5, z) for z in (0.5, 1.0, 4.0)]
    res = calibrate_samples(samples, 1e-9)
    write_calibration(tmp_path / "c.calib", res)
    s1, s2 = read_calibration(tmp_path / "c.calib")
    assert (s1, s2) == (res.s1, res.s2)


def test_marker_dataset_is_deterministic(intr640):
    a = marker_dataset(intr640, np.random.default_rng(5), n_images=3)
    b = marker_dataset(intr640, np.random.default_rng(5), n_images=3)
    for (Za, oa), (Zb, ob) in zip(a, b):
        np.testing.assert_array_equal(oa.corners, ob.corners)
        np.testing.assert_array_equal(Za.mask, Zb.mask)
