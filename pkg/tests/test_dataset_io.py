import os

import cv2
import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from edgevo.dataset_io import (Frame, TUMSequence, Trajectory, associate_frames, builtin_intrinsics,
                               format_pose_line, load_frame, load_intrinsics, read_file_list,
                               read_trajectory, to_intensity, write_trajectory)
from edgevo.errors import (DatasetError, DecodeError, DimensionMismatch, EmptyInput,
                           IndexOutOfRange, NonMonotonicTimestamps, ParseError)
from edgevo.geometry import CameraIntrinsics, Pose
from edgevo.synthetic import export_tum_sequence

from conftest import random_pose


def stamps(ts):
    return [(t, f"f{t}") for t in ts]


def test_associate_examples():
    pairs = associate_frames(stamps([1.00, 2.00]), stamps([1.01, 2.02]), 0.02)
    assert [(a[0], b[0]) for a, b in pairs] == [(1.00, 1.01), (2.00, 2.02)]
    pairs = associate_frames(stamps([1.0]), stamps([1.0]), 1e-9)
    assert [(a[0], b[0]) for a, b in pairs] == [(1.0, 1.0)]
    assert associate_frames(stamps([1.0]), stamps([1.5]), 0.02) == []
    with pytest.raises(EmptyInput):
        associate_frames([], stamps([1.0]))


def test_associate_prefers_closest_globally():
    # (1.02, 1.015) is the tightest candidate and is taken first; 1.00 is then
    # left with 1.035, which is outside the window
    pairs = associate_frames(stamps([1.00, 1.02]), stamps([1.015, 1.035]), 0.02)
    assert [(a[0], b[0]) for a, b in pairs] == [(1.02, 1.015)]


sorted_times = st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=30,
                        unique=True).map(sorted)


@given(sorted_times, sorted_times, st.floats(0.001, 1.0))
def test_associate_contract(a, b, max_dt):
    pairs = associate_frames(stamps(a), stamps(b), max_dt)
    left = [p[0][0] for p in pairs]
    right = [p[1][0] for p in pairs]
    assert left == sorted(left)
    assert len(set(left)) == len(left) and len(set(right)) == len(right)
    assert all(abs(x - y) <= max_dt + 1e-9 for x, y in zip(left, right))


@given(st.lists(st.floats(0.1, 1.0), min_size=2, max_size=30), st.floats(0.05, 0.3))
def test_associate_symmetric_when_interleaved(gaps, frac):
    # strictly interleaved streams: a_0 < b_0 < a_1 < b_1 < ...
    a = np.cumsum(gaps)
    b = a + frac * np.min(gaps)
    ab = associate_frames(stamps(a), stamps(b), 0.5)
    ba = associate_frames(stamps(b), stamps(a), 0.5)
    assert {(x[0], y[0]) for x, y in ab} == {(y[0], x[0]) for x, y in ba}


def test_read_file_list(tmp_path):
    p = tmp_path / "rgb.txt"
    p.write_text("# header\n2.0 rgb/b.png\n1.0 rgb/a.png  # trailing\n\n")
    assert read_file_list(str(p)) == [(1.0, "rgb/a.png"), (2.0, "rgb/b.png")]
    p.write_text("1.0\n")
    with pytest.raises(ParseError):
        read_file_list(str(p))


def _write_pair(tmp_path, rgb, depth):
    rp, dp = str(tmp_path / "rgb.png"), str(tmp_path / "depth.png")
    cv2.imwrite(rp, rgb[..., ::-1])
    cv2.imwrite(dp, depth)
    return rp, dp


def test_load_frame_depth_and_luma(tmp_path):
    K = CameraIntrinsics(50, 50, 15.5, 11.5, 32, 24)
    rgb = np.zeros((24, 32, 3), np.uint8)
    rgb[..., 0] = 255
    depth = np.zeros((24, 32), np.uint16)
    depth[3, 4] = 5000
    depth[5, 6] = 7500
    f = load_frame(*_write_pair(tmp_path, rgb, depth), K, timestamp=1.5)
    assert f.depth[3, 4] == 1.0 and f.depth[5, 6] == 1.5 and f.depth[0, 0] == 0.0
    assert np.allclose(f.intensity, 0.299)
    assert f.timestamp == 1.5 and f.rgb_path.endswith("rgb.png")


def test_load_frame_dimension_mismatch(tmp_path):
    K = CameraIntrinsics(50, 50, 159.5, 119.5, 320, 240)
    rp, dp = _write_pair(tmp_path, np.zeros((480, 640, 3), np.uint8), np.zeros((480, 640), np.uint16))
    with pytest.raises(DimensionMismatch):
        load_frame(rp, dp, K)
    with pytest.raises(DecodeError):
        load_frame(str(tmp_path / "nope.png"), dp, K)


@given(arrays(np.uint8, (6, 7, 3)), arrays(np.uint16, (6, 7)))
def test_loaded_frames_satisfy_invariants(rgb, depth):
    import tempfile
    import pathlib

    K = CameraIntrinsics(10, 10, 3, 2.5, 7, 6)
    with tempfile.TemporaryDirectory() as d:
        f = load_frame(*_write_pair(pathlib.Path(d), rgb, depth), K)
    assert f.shape == (6, 7) == f.depth.shape
    assert (f.intensity >= 0).all() and (f.intensity <= 1).all()
    assert (f.depth >= 0).all()
    assert np.array_equal(f.depth == 0, depth == 0)
    assert np.allclose(f.intensity, to_intensity(rgb))


def test_frame_validation():
    with pytest.raises(DimensionMismatch):
        Frame(0.0, np.zeros((3, 3)), np.zeros((3, 4)))
    with pytest.raises(ValueError):
        Frame(0.0, np.zeros((3, 3)), -np.ones((3, 3)))
    with pytest.raises(ValueError):
        Frame(float("nan"), np.zeros((3, 3)), np.zeros((3, 3)))


def test_identity_line():
    assert format_pose_line(0.0, Pose.identity()) == "0.000000 0 0 0 0 0 0 1"


def test_trajectory_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    poses = [random_pose(rng) for _ in range(100)]
    ts = np.round(np.cumsum(rng.uniform(0.01, 0.1, 100)) + 1.3e9, 6)
    p = str(tmp_path / "t.txt")
    write_trajectory(Trajectory(ts, poses), p)
    back = read_trajectory(p)
    assert back.timestamps == list(ts)
    assert max(a.distance(b) for a, b in zip(back.poses, poses)) < 1e-9


@pytest.mark.parametrize("line,msg", [
    ("0 1 2 3 0 0 0", "expected 8 fields"),
    ("0 1 2 x 0 0 0 1", "non-numeric"),
    ("0 1 2 nan 0 0 0 1", "non-finite"),
    ("0 1 2 3 0 0 0 0", "zero quaternion"),
])
def test_parse_errors(tmp_path, line, msg):
    p = tmp_path / "t.txt"
    p.write_text("# comment\n0.5 0 0 0 0 0 0 1\n" + line + "\n")
    with pytest.raises(ParseError, match=msg) as info:
        read_trajectory(str(p))
    assert info.value.line == 3


def test_non_monotonic(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("1.0 0 0 0 0 0 0 1\n1.0 0 0 0 0 0 0 1\n")
    with pytest.raises(NonMonotonicTimestamps):
        read_trajectory(str(p))


def test_builtin_intrinsics():
    K = builtin_intrinsics("tum_fr1")
    assert (K.fx, K.fy, K.cx, K.cy, K.width, K.height) == (517.3, 516.5, 318.6, 255.3, 640, 480)
    assert builtin_intrinsics("tum_fr3").fx == 535.4
    with pytest.raises(DatasetError):
        builtin_intrinsics("kitti")


def test_intrinsics_file(tmp_path):
    p = tmp_path / "cam.cfg"
    p.write_text("fx = 500\nfy = 501\ncx = 319\ncy = 239\nwidth = 640\nheight = 480\n")
    K = load_intrinsics(str(p))
    assert K.fy == 501 and K.depth_scale == 5000
    p.write_text("fx = 500\n")
    with pytest.raises(DatasetError):
        load_intrinsics(str(p))


def test_tum_sequence_layout(tmp_path, short_demo):
    root = str(tmp_path / "seq")
    export_tum_sequence(short_demo, root)
    seq = TUMSequence(root, load_intrinsics(os.path.join(root, "intrinsics.cfg")))
    assert len(seq) == len(short_demo.frames)
    f = seq.frame(2)
    assert f.timestamp == pytest.approx(short_demo.frames[2].timestamp, abs=1e-6)
    assert np.allclose(f.depth, short_demo.frames[2].depth, atol=1e-4)
    assert os.path.basename(seq.edge_path(2)) == os.path.basename(seq.rgb_name(2))
    assert os.path.isfile(seq.edge_path(2))
    assert len(seq.groundtruth()) == len(short_demo.frames)
    with pytest.raises(IndexOutOfRange):
        seq.frame(len(seq))
    with pytest.raises(DatasetError):
        TUMSequence(str(tmp_path / "missing"), seq.intrinsics)
