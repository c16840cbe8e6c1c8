"""TUM RGB-D sequence ingestion and TUM-format trajectory files."""
from dataclasses import dataclass, field
from importlib import resources
import math
import os

import cv2
import numpy as np

from .edges import read_gray_image
from .errors import (DatasetError, DecodeError, DimensionMismatch, EmptyInput,
                     IndexOutOfRange, NonMonotonicTimestamps, ParseError)
from .geometry import CameraIntrinsics, Pose

DEFAULT_MAX_DT = 0.02
DEFAULT_DEPTH_SCALE = 5000.0

INTRINSIC_KEYS = ("fx", "fy", "cx", "cy", "width", "height", "depth_scale")


@dataclass(frozen=True, eq=False)
class Frame:
    timestamp: float
    intensity: np.ndarray
    depth: np.ndarray
    intrinsics: CameraIntrinsics = None
    rgb_path: str = ""
    depth_path: str = ""

    def __post_init__(self):
        if not math.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")
        intensity = np.array(self.intensity, dtype=float)
        depth = np.array(self.depth, dtype=float)
        if intensity.ndim != 2 or intensity.shape != depth.shape:
            raise DimensionMismatch(f"intensity {intensity.shape} vs depth {depth.shape}")
        if self.intrinsics is not None and intensity.shape != self.intrinsics.shape:
            raise DimensionMismatch(f"image {intensity.shape} vs intrinsics {self.intrinsics.shape}")
        if np.any(~(depth >= 0)):
            raise ValueError("depth must be >= 0 (0 = invalid)")
        intensity.flags.writeable = False
        depth.flags.writeable = False
        object.__setattr__(self, "intensity", intensity)
        object.__setattr__(self, "depth", depth)

    @property
    def shape(self):
        return self.intensity.shape


class Trajectory:
    """Timestamped poses with strictly increasing timestamps."""

    def __init__(self, timestamps=(), poses=()):
        timestamps = [float(t) for t in timestamps]
        poses = list(poses)
        if len(timestamps) != len(poses):
            raise ValueError("timestamps and poses differ in length")
        for i in range(1, len(timestamps)):
            if not timestamps[i] > timestamps[i - 1]:
                raise NonMonotonicTimestamps(
                    f"timestamp {timestamps[i]!r} at index {i} does not increase")
        self.timestamps = timestamps
        self.poses = poses

    def __len__(self):
        return len(self.poses)

    def __iter__(self):
        return iter(zip(self.timestamps, self.poses))

    def __getitem__(self, i):
        return self.timestamps[i], self.poses[i]

    def positions(self):
        return np.array([p.translation for p in self.poses]).reshape(-1, 3)

    def transformed(self, S):
        """Left-multiply every pose by ``S``."""
        return Trajectory(self.timestamps, [S @ p for p in self.poses])


def _strip_comment(line):
    return line.split("#", 1)[0].strip()


def read_file_list(path):
    """Read a ``timestamp filename`` index (``rgb.txt`` / ``depth.txt``)."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = _strip_comment(raw)
            if not line:
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ParseError("expected 'timestamp filename'", lineno, path)
            try:
                t = float(parts[0])
            except ValueError:
                raise ParseError(f"bad timestamp {parts[0]!r}", lineno, path) from None
            out.append((t, parts[1]))
    out.sort(key=lambda e: e[0])
    return out


def associate_frames(rgb_list, depth_list, max_dt=DEFAULT_MAX_DT):
    """Greedy nearest-timestamp matching of two ``(timestamp, item)`` lists.

    Candidate pairs within ``max_dt`` are taken in order of increasing time
    difference; each entry is used at most once. Output is sorted by the
    first list's timestamp.
    """
    if not rgb_list or not depth_list:
        raise EmptyInput("cannot associate an empty list")
    if not max_dt > 0:
        raise ValueError("max_dt must be positive")
    ta = np.array([e[0] for e in rgb_list])
    tb = np.array([e[0] for e in depth_list])
    # slack so that e.g. 2.02 - 2.00 still counts as within 0.02
    lim = max_dt + 1e-9
    cands = []
    for i, t in enumerate(ta):
        lo = np.searchsorted(tb, t - lim, side="left")
        hi = np.searchsorted(tb, t + lim, side="right")
        for j in range(lo, hi):
            dt = abs(t - tb[j])
            if dt <= lim:
                cands.append((dt, i, j))
    cands.sort()
    used_a, used_b, pairs = set(), set(), []
    for _, i, j in cands:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j))
    pairs.sort()
    return [(rgb_list[i], depth_list[j]) for i, j in pairs]


def load_intrinsics(path):
    """Read camera intrinsics from a flat ``key = value`` file."""
    from .config import parse_kv_file

    values = parse_kv_file(path)
    missing = [k for k in INTRINSIC_KEYS[:-1] if k not in values]
    if missing:
        raise DatasetError(f"{path}: missing intrinsics keys {missing}")
    return CameraIntrinsics(
        fx=float(values["fx"]), fy=float(values["fy"]),
        cx=float(values["cx"]), cy=float(values["cy"]),
        width=int(values["width"]), height=int(values["height"]),
        depth_scale=float(values.get("depth_scale", DEFAULT_DEPTH_SCALE)),
    )


def builtin_intrinsics(name):
    """Packaged calibration: ``tum_fr1``, ``tum_fr2``, ``tum_fr3`` or ``tum_default``."""
    res = resources.files("edgevo") / "configs" / f"{name}.cfg"
    if not res.is_file():
        raise DatasetError(f"no packaged intrinsics named {name!r}")
    with resources.as_file(res) as p:
        return load_intrinsics(p)


def to_intensity(rgb):
    """Luma in [0, 1] from an 8-bit RGB array (channels in R, G, B order)."""
    rgb = np.asarray(rgb, dtype=float)
    return (0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]) / 255.0


def load_frame(rgb_path, depth_path, intrinsics, timestamp=0.0):
    bgr = cv2.imread(str(rgb_path), cv2.IMREAD_UNCHANGED) if os.path.isfile(rgb_path) else None
    if bgr is None:
        raise DecodeError(f"cannot decode RGB image: {rgb_path}")
    if bgr.ndim == 2:
        intensity = bgr.astype(float) / 255.0
    else:
        intensity = to_intensity(bgr[..., 2::-1] if bgr.shape[2] >= 3 else bgr)
    raw = read_gray_image(depth_path)
    if intensity.shape != intrinsics.shape or raw.shape != intrinsics.shape:
        raise DimensionMismatch(
            f"{rgb_path}: images are {intensity.shape[1]}x{intensity.shape[0]} / "
            f"{raw.shape[1]}x{raw.shape[0]}, intrinsics declare {intrinsics.width}x{intrinsics.height}")
    depth = raw.astype(float) / intrinsics.depth_scale
    return Frame(timestamp, intensity, depth, intrinsics, str(rgb_path), str(depth_path))


def format_pose_line(t, pose):
    q = pose.quaternion()
    vals = list(pose.translation) + list(q)
    return f"{t:.6f} " + " ".join(f"{v:.12g}" if v != 0 else "0" for v in vals)


def write_trajectory(traj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t, pose in traj:
            fh.write(format_pose_line(t, pose) + "\n")


def read_trajectory(path):
    stamps, poses = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = _strip_comment(raw.replace(",", " "))
            if not line:
                continue
            parts = line.split()
            if len(parts) != 8:
                raise ParseError(f"expected 8 fields, got {len(parts)}", lineno, path)
            try:
                vals = [float(x) for x in parts]
            except ValueError:
                raise ParseError("non-numeric field", lineno, path) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", lineno, path)
            try:
                poses.append(Pose.from_quaternion(vals[1:4], vals[4:8]))
            except ValueError as exc:
                raise ParseError(str(exc), lineno, path) from None
            stamps.append(vals[0])
    return Trajectory(stamps, poses)


@dataclass
class TUMSequence:
    """Lazy view of a TUM RGB-D sequence directory."""

    root: str
    intrinsics: CameraIntrinsics
    max_dt: float = DEFAULT_MAX_DT
    pairs: list = field(default_factory=list)

    def __post_init__(self):
        if not os.path.isdir(self.root):
            raise DatasetError(f"dataset directory not found: {self.root}")
        for name in ("rgb.txt", "depth.txt"):
            if not os.path.isfile(os.path.join(self.root, name)):
                raise DatasetError(f"missing {name} in {self.root}")
        rgb = read_file_list(os.path.join(self.root, "rgb.txt"))
        depth = read_file_list(os.path.join(self.root, "depth.txt"))
        self.pairs = associate_frames(rgb, depth, self.max_dt)

    def __len__(self):
        return len(self.pairs)

    def rgb_name(self, i):
        return self.pairs[i][0][1]

    def frame(self, i):
        if not 0 <= i < len(self.pairs):
            raise IndexOutOfRange(f"frame {i} outside sequence of {len(self.pairs)} frames")
        (t, rgb), (_, depth) = self.pairs[i]
        return load_frame(os.path.join(self.root, rgb), os.path.join(self.root, depth),
                          self.intrinsics, timestamp=t)

    def __iter__(self):
        for i in range(len(self)):
            yield self.frame(i)

    def edge_path(self, i, edges_dir="edges"):
        return os.path.join(self.root, edges_dir, os.path.basename(self.rgb_name(i)))

    def groundtruth(self):
        path = os.path.join(self.root, "groundtruth.txt")
        if not os.path.isfile(path):
            return None
        return read_trajectory(path)
