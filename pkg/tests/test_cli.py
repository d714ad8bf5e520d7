import math
import subprocess
import sys

import numpy as np
import pytest

from crossnav.calibration import read_calibration, write_annotations
from crossnav.cli import (
    EXIT_FILE,
    EXIT_FORMAT,
    EXIT_INVALID,
    EXIT_NUMBER,
    EXIT_OK,
    EXIT_USAGE,
    main,
)
from crossnav.depth import METRIC, DepthImage, DisparityDistortion, distort_to_relative, save_pfm
from crossnav.embodiment import PRESETS
from crossnav.geometry import Pose2D, write_camera_file
from crossnav.kvfile import read_kv
from crossnav.scan import read_scan
from crossnav.sim import World, write_scenario
from crossnav.sim.markers import marker_dataset
from crossnav.sim.world import DEFAULT_BOUNDS

SIM = PRESETS["sim"]
RIG = SIM.cameras[0]


@pytest.fixture
def camera_file(tmp_path):
    p = tmp_path / "front.cam"
    write_camera_file(p, RIG.intr, RIG.ext)
    return p


@pytest.fixture
def empty_scenario(tmp_path):
    p = tmp_path / "empty.scn"
    write_scenario(p, World((), DEFAULT_BOUNDS, Pose2D(0, 0), (0, 3)))
    return p


def test_help_exits_zero(capsys):
    assert main(["--help"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("calibrate", "scan", "plan", "simulate", "gen-scenarios", "benchmark", "eval-depth", "vln-step"):
        assert name in out


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "crossnav.cli", "benchmark", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "--suite" in r.stdout


def test_usage_errors(capsys):
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["simulate"]) == EXIT_USAGE


def test_missing_scenario_file(tmp_path, capsys):
    out = tmp_path / "res.txt"
    code = main(["simulate", "--scenario", str(tmp_path / "nope.scn"), "--out", str(out)])
    assert code == EXIT_FILE and not out.exists()
    assert "file error" in capsys.readouterr().err


def test_bad_numeric_flag(capsys):
    assert main(["vln-step", "--conf", "0 0.1 0.9 0.1", "--pose", "0,zero,0"]) == EXIT_NUMBER


def test_format_and_invalid_errors(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("bounds 0 0 1\n")
    assert main(["simulate", "--scenario", str(bad), "--out", str(tmp_path / "r")]) == EXIT_FORMAT
    assert main(["vln-step", "--conf", "0 1.5 0.1 0.1", "--pose", "0,0,0"]) == EXIT_INVALID


def test_vln_step(capsys):
    assert main(["vln-step", "--conf", "0 0.1 0.2 0.9", "--pose", "0,0,0"]) == EXIT_OK
    t, x, y, flag = capsys.readouterr().out.split()
    d, th = 1.27, -math.radians(25)
    assert float(x) == pytest.approx(-d * math.sin(th), abs=1e-6)
    assert float(y) == pytest.approx(d * math.cos(th), abs=1e-6)
    assert flag == "continue"


def test_vln_step_stream_arrival(tmp_path, capsys):
    f = tmp_path / "conf.txt"
    f.write_text("".join(f"{i * 0.1} 0.1 0.95 0.1\n" for i in range(5)))
    assert main(["vln-step", "--conf", str(f), "--pose", "0,0,0"]) == EXIT_OK
    flags = [line.split()[-1] for line in capsys.readouterr().out.splitlines()]
    assert flags == ["continue"] * 4 + ["reached"]


def test_calibrate_end_to_end(tmp_path, camera_file, capsys):
    rng = np.random.default_rng(3)
    dist = DisparityDistortion(2.0, 0.1)
    images = tmp_path / "img"
    images.mkdir()
    obs = []
    for Z, o in marker_dataset(RIG.intr, rng, n_images=6):
        save_pfm(images / f"{o.image_id}.pfm", distort_to_relative(Z, dist))
        obs.append(o)
    ann = tmp_path / "markers.txt"
    write_annotations(ann, obs)
    out = tmp_path / "front.calib"
    code = main(
        [
            "calibrate",
            "--images",
            str(images),
            "--annotations",
            str(ann),
            "--camera",
            str(camera_file),
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    s1, s2 = read_calibration(out)
    # PFM stores float32, which bounds the recoverable precision
    assert s1 == pytest.approx(2.0, rel=1e-5) and s2 == pytest.approx(0.1, rel=1e-4)


def test_scan_and_plan(tmp_path, camera_file, capsys):
    Z = np.full((RIG.intr.height, RIG.intr.width), 2.0)
    depth = tmp_path / "d.pfm"
    save_pfm(depth, DepthImage(Z, METRIC))
    scan_path = tmp_path / "s.scan"
    assert main(["scan", "--depth", str(depth), "--camera", str(camera_file), "--out", str(scan_path)]) == EXIT_OK
    scan = read_scan(scan_path)
    assert scan.hit_mask().any()
    limits = tmp_path / "lim.cfg"
    limits.write_text("v_max = 0.5\nw_max = 1.57\na_v_max = 3\na_w_max = 3\n")
    capsys.readouterr()
    argv = ["plan", "--scan", str(scan_path), "--goal", "0,5", "--body", "0.2,0.2,0.4", "--limits", str(limits)]
    assert main(argv) == EXIT_OK
    v, w = map(float, capsys.readouterr().out.split())
    assert 0.0 <= v <= 0.3 + 1e-12 and abs(w) <= 0.3 + 1e-12


def test_simulate_and_plot(tmp_path, empty_scenario, capsys):
    out, traj, svg = tmp_path / "res.txt", tmp_path / "t.traj", tmp_path / "p.svg"
    argv = [
        "simulate",
        "--scenario",
        str(empty_scenario),
        "--out",
        str(out),
        "--trajectory",
        str(traj),
        "--plot",
        str(svg),
    ]
    assert main(argv) == EXIT_OK
    kv = read_kv(out)
    assert kv.int("S") == 1 and kv.int("C") == 0
    svg2 = tmp_path / "p2.svg"
    assert (
        main(
            [
                "plot",
                "--scenario",
                str(empty_scenario),
                "--trajectory",
                str(traj),
                "--embodiment",
                "sim",
                "--out",
                str(svg2),
            ]
        )
        == EXIT_OK
    )
    assert svg2.read_text().startswith("<?xml")


def test_gen_scenarios_and_benchmark_determinism(tmp_path, capsys):
    suite = tmp_path / "suite"
    assert main(["--seed", "4", "gen-scenarios", "--count", "2", "--density", "0.2", "--out", str(suite)]) == EXIT_OK
    assert sorted(p.name for p in suite.iterdir()) == ["scenario_000.scn", "scenario_001.scn"]
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        argv = ["benchmark", "--suite", str(suite), "--trials", "1", "--out", str(out), "--seed", "4"]
        assert main(argv) == EXIT_OK
        outs.append((out / "results.csv").read_bytes())
        assert (out / "report.md").exists() and any((out / "trajectories").iterdir())
    assert outs[0] == outs[1]


def test_eval_depth(tmp_path, capsys):
    a, b = tmp_path / "a.pfm", tmp_path / "b.pfm"
    save_pfm(a, DepthImage(np.array([[1.0, 2.0], [3.0, 4.0]]), METRIC))
    save_pfm(b, DepthImage(np.array([[1.0, 2.0], [3.0, 6.0]]), METRIC))
    assert main(["eval-depth", "--pred", str(a), "--gt", str(b)]) == EXIT_OK
    out = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert float(out["mae"]) == 0.5 and float(out["rmse"]) == 1.0
