"""Synthetic RGB-D sequences with exact ground truth.

A scene is a set of flat parallelogram patches (solid surfaces that occlude
and produce depth) plus 3D line segments (the wireframe that produces
edges). Rendering is exact ray casting; edge pixels receive the depth of
the segment point that lands on them.
"""
from dataclasses import dataclass, field
import math
import os

import cv2
import numpy as np

from .dataset_io import Frame, Trajectory, write_trajectory
from .edges import EdgeMap
from .errors import SceneNotVisible
from .geometry import CameraIntrinsics, Pose, so3_exp

DEMO_INTRINSICS = CameraIntrinsics(525.0, 525.0, 319.5, 239.5, 640, 480, 5000.0)
MIN_EDGE_PIXELS = 200


@dataclass(frozen=True, eq=False)
class Patch:
    """Parallelogram ``origin + s * a + t * b`` for ``s, t`` in [0, 1]."""

    origin: np.ndarray
    a: np.ndarray
    b: np.ndarray
    shade: float = 0.5

    def corners(self):
        o, a, b = (np.asarray(x, float) for x in (self.origin, self.a, self.b))
        return np.array([o, o + a, o + a + b, o + b])

    def outline(self):
        c = self.corners()
        return [(c[i], c[(i + 1) % 4]) for i in range(4)]


@dataclass
class Scene:
    patches: list = field(default_factory=list)
    segments: list = field(default_factory=list)

    def add_patch(self, patch, outline=True):
        self.patches.append(patch)
        if outline:
            self.segments.extend(patch.outline())

    def add_box(self, center, size, shades=(0.75, 0.55, 0.35, 0.65, 0.45, 0.85)):
        c = np.asarray(center, float)
        sx, sy, sz = (np.asarray(size, float) / 2.0)
        ex, ey, ez = np.array([2 * sx, 0, 0]), np.array([0, 2 * sy, 0]), np.array([0, 0, 2 * sz])
        lo = c - [sx, sy, sz]
        faces = [
            Patch(lo, ex, ey), Patch(lo + ez, ex, ey),
            Patch(lo, ex, ez), Patch(lo + ey, ex, ez),
            Patch(lo, ey, ez), Patch(lo + ex, ey, ez),
        ]
        for f, s in zip(faces, shades):
            self.patches.append(Patch(f.origin, f.a, f.b, s))
        corners = [lo + i * ex + j * ey + k * ez for i in (0, 1) for j in (0, 1) for k in (0, 1)]
        for p in range(8):
            for q in range(p + 1, 8):
                if bin(p ^ q).count("1") == 1:
                    self.segments.append((corners[p], corners[q]))

    def add_stripes(self, origin, a, b, spacing, angle=0.0):
        """Parallel lines clipped to the parallelogram, ``spacing`` metres apart.

        ``angle`` (radians) turns the stripe direction away from ``b``
        towards ``a``; the patch is assumed rectangular.
        """
        o, a, b = (np.asarray(x, float) for x in (origin, a, b))
        la, lb = np.linalg.norm(a), np.linalg.norm(b)
        ea, eb = a / la, b / lb
        d = math.sin(angle) * ea + math.cos(angle) * eb       # stripe direction
        nrm = math.cos(angle) * ea - math.sin(angle) * eb     # across stripes
        corners = np.array([[0, 0], [la, 0], [la, lb], [0, lb]], float)
        proj = corners @ np.array([nrm @ ea, nrm @ eb])
        for off in np.arange(proj.min() + spacing / 2, proj.max(), spacing):
            # intersect the line {x : x . n2 = off} (2D patch coords) with the rectangle
            n2 = np.array([nrm @ ea, nrm @ eb])
            d2 = np.array([d @ ea, d @ eb])
            p0 = off * n2
            ts = []
            for k in range(2):
                if abs(d2[k]) > 1e-12:
                    for bound in (0.0, (la, lb)[k]):
                        t = (bound - p0[k]) / d2[k]
                        q = p0 + t * d2
                        if -1e-9 <= q[0] <= la + 1e-9 and -1e-9 <= q[1] <= lb + 1e-9:
                            ts.append(t)
            if len(ts) >= 2:
                q0, q1 = p0 + min(ts) * d2, p0 + max(ts) * d2
                if np.linalg.norm(q1 - q0) > 1e-6:
                    self.segments.append((o + q0[0] * ea + q0[1] * eb,
                                          o + q1[0] * ea + q1[1] * eb))

    def add_rectangle_lines(self, origin, a, b):
        """Outline of a flat rectangle drawn on a surface (edges only)."""
        self.segments.extend(Patch(np.asarray(origin, float), np.asarray(a, float),
                                   np.asarray(b, float)).outline())


def cube_scene():
    """Wireframe cube in front of a textured back wall and a floor.

    World frame: x right, y down, z forward; the cube centre is 2 m ahead.
    """
    scene = Scene()
    scene.add_box((0.0, 0.0, 2.0), (0.5, 0.5, 0.5))
    scene.add_box((-0.75, 0.3, 2.4), (0.3, 0.4, 0.3), shades=(0.3, 0.6, 0.4, 0.7, 0.5, 0.2))
    wall_z = 3.5
    scene.add_patch(Patch(np.array([-4.0, -3.0, wall_z]), np.array([8.0, 0, 0]),
                          np.array([0, 3.8, 0]), 0.9), outline=False)
    scene.add_patch(Patch(np.array([-4.0, 0.8, -1.0]), np.array([8.0, 0, 0]),
                          np.array([0, 0, wall_z + 1.0]), 0.25), outline=False)
    # floor/wall junction plus picture frames on the wall
    scene.segments.append((np.array([-4.0, 0.8, wall_z]), np.array([4.0, 0.8, wall_z])))
    for x0, y0, w, h in ((-1.9, -1.4, 0.9, 0.6), (0.7, -1.2, 1.1, 0.7), (-0.5, -2.2, 1.2, 0.5),
                         (1.0, -0.2, 0.6, 0.6), (-2.4, -0.4, 0.5, 0.9)):
        scene.add_rectangle_lines((x0, y0, wall_z), (w, 0, 0), (0, h, 0))
    return scene


def grid_scene(spacing=0.08):
    """``cube_scene`` with a square line grid painted on the back wall.

    The grid repeats every ``spacing`` metres, which puts many false
    minima within reach of a single-resolution alignment.
    """
    scene = cube_scene()
    o, a, b = np.array([-2.0, -1.5, 3.49]), np.array([4.0, 0, 0]), np.array([0, 3.0, 0])
    scene.add_stripes(o, a, b, spacing, 0.0)
    scene.add_stripes(o, a, b, spacing, math.pi / 2)
    return scene


def look_at(position, target, down=(0.0, 1.0, 0.0)):
    """Camera-to-world pose at ``position`` with the optical axis on ``target``."""
    position = np.asarray(position, float)
    z = np.asarray(target, float) - position
    z /= np.linalg.norm(z)
    x = np.cross(np.asarray(down, float), z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose(np.stack([x, y, z], axis=1), position)


def orbit_path(n=100, radius=2.0, target=(0.0, 0.0, 2.0), arc=0.45, bob=0.05):
    """Camera poses on an arc around ``target``, always looking at it."""
    target = np.asarray(target, float)
    poses = []
    for k in range(n):
        s = k / max(n - 1, 1)
        ang = arc * (s - 0.5)
        pos = target + radius * np.array([math.sin(ang), 0.0, -math.cos(ang)])
        pos[1] += bob * math.sin(2 * math.pi * s)
        poses.append(look_at(pos, target))
    return poses


def linear_path(n, step, start=None, rotation_step=None):
    """Constant per-frame motion: ``step`` metres (camera frame) and optional rotation."""
    pose = start if start is not None else Pose.identity()
    inc = Pose(so3_exp(rotation_step) if rotation_step is not None else np.eye(3), step)
    poses = []
    for _ in range(n):
        poses.append(pose)
        pose = pose @ inc
    return poses


def _ray_grid(K):
    u, v = np.meshgrid(np.arange(K.width, dtype=float), np.arange(K.height, dtype=float))
    return (u - K.cx) / K.fx, (v - K.cy) / K.fy


def render_surfaces(scene, cam_to_world, K):
    """Per-pixel depth (0 where nothing is hit) and shade of the nearest patch."""
    world_to_cam = cam_to_world.inverse()
    rx, ry = _ray_grid(K)
    depth = np.full(rx.shape, np.inf)
    shade = np.zeros(rx.shape)
    R = world_to_cam.rotation
    for p in scene.patches:
        o = world_to_cam.apply(p.origin)
        a, b = R @ np.asarray(p.a, float), R @ np.asarray(p.b, float)
        # solve s*a + t*b - z*d = -o with d = (rx, ry, 1)
        n = np.cross(a, b)
        denom = n[0] * rx + n[1] * ry + n[2]
        bb, ab, aa = b @ b, a @ b, a @ a
        det = aa * bb - ab * ab
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (n @ o) / denom
            # (z * d - o) . a  and  (z * d - o) . b
            Xa = z * (a[0] * rx + a[1] * ry + a[2]) - o @ a
            Xb = z * (b[0] * rx + b[1] * ry + b[2]) - o @ b
            s = (Xa * bb - Xb * ab) / det
            t = (Xb * aa - Xa * ab) / det
        hit = (z > 1e-6) & (s >= 0) & (s <= 1) & (t >= 0) & (t <= 1) & (z < depth)
        depth[hit] = z[hit]
        shade[hit] = p.shade
    depth[~np.isfinite(depth)] = 0.0
    return depth, shade


def render_edges(scene, cam_to_world, K, surface_depth, jitter=0.0, rng=None):
    """Rasterise visible segments; returns (mask, edge depth or 0)."""
    world_to_cam = cam_to_world.inverse()
    h, w = K.height, K.width
    zbuf = np.where(surface_depth > 0, surface_depth, np.inf)
    edge_depth = np.full((h, w), np.inf)
    for p0, p1 in scene.segments:
        c0, c1 = world_to_cam.apply(p0), world_to_cam.apply(p1)
        if c0[2] <= 1e-3 and c1[2] <= 1e-3:
            continue
        # clip to the near plane
        if c0[2] <= 1e-3 or c1[2] <= 1e-3:
            f = (1e-3 - c0[2]) / (c1[2] - c0[2])
            cm = c0 + f * (c1 - c0)
            c0, c1 = (cm, c1) if c0[2] <= 1e-3 else (c0, cm)
        u0 = K.fx * c0[:2] / c0[2]
        u1 = K.fx * c1[:2] / c1[2]
        n = int(min(4 * np.linalg.norm(u1 - u0) + 2, 20000))
        s = np.linspace(0.0, 1.0, n)[:, None]
        pts = c0 + s * (c1 - c0)
        z = pts[:, 2]
        u = K.fx * pts[:, 0] / z + K.cx
        v = K.fy * pts[:, 1] / z + K.cy
        if jitter > 0:
            u = u + rng.normal(0.0, jitter, u.shape)
            v = v + rng.normal(0.0, jitter, v.shape)
        iu, iv = np.rint(u).astype(int), np.rint(v).astype(int)
        ok = (iu >= 0) & (iu < w) & (iv >= 0) & (iv < h)
        iu, iv, z = iu[ok], iv[ok], z[ok]
        visible = z <= zbuf[iv, iu] * 1.01 + 1e-3
        iu, iv, z = iu[visible], iv[visible], z[visible]
        np.minimum.at(edge_depth, (iv, iu), z)
    mask = np.isfinite(edge_depth)
    return mask, np.where(mask, edge_depth, 0.0)


LINE_HALF_WIDTH = 1      # drawn lines are 3 px wide
DEPTH_HALF_WIDTH = 2     # and carry their depth 2 px either side


def _paint_lines(mask, edge_depth, surf_depth, shade):
    # Lines are painted strips: dark in the image, and the band around them
    # takes the nearest line depth so image-gradient edges get a sane depth.
    k = 2 * LINE_HALF_WIDTH + 1
    band = cv2.dilate(mask.astype(np.uint8), np.ones((k, k), np.uint8)) > 0
    intensity = np.where(band, 0.05, shade)
    k = 2 * DEPTH_HALF_WIDTH + 1
    zline = np.where(mask, edge_depth, np.inf).astype(np.float32)
    znear = cv2.erode(zline, np.ones((k, k), np.uint8), borderType=cv2.BORDER_CONSTANT,
                      borderValue=np.inf).astype(float)
    depth = np.where(mask, edge_depth, np.where(np.isfinite(znear), znear, surf_depth))
    return depth, intensity


@dataclass
class SyntheticSequence:
    frames: list
    edges: list
    groundtruth: Trajectory
    intrinsics: CameraIntrinsics


def generate_synthetic_sequence(scene, poses, intrinsics=DEMO_INTRINSICS, fps=30.0,
                                edge_jitter=0.0, seed=0, t0=0.0):
    """Render frames, edge masks and ground truth for camera-to-world ``poses``."""
    rng = np.random.default_rng(seed)
    frames, edges = [], []
    stamps = [t0 + i / fps for i in range(len(poses))]
    for i, pose in enumerate(poses):
        surf_depth, shade = render_surfaces(scene, pose, intrinsics)
        mask, edge_depth = render_edges(scene, pose, intrinsics, surf_depth, edge_jitter, rng)
        if mask.sum() < MIN_EDGE_PIXELS:
            raise SceneNotVisible(f"frame {i}: only {int(mask.sum())} edge pixels visible")
        depth, intensity = _paint_lines(mask, edge_depth, surf_depth, shade)
        frames.append(Frame(stamps[i], intensity, depth, intrinsics))
        edges.append(EdgeMap(mask, "external"))
    return SyntheticSequence(frames, edges, Trajectory(stamps, list(poses)), intrinsics)


def demo_sequence(n=100, **kwargs):
    """The bundled demo: a slow orbit around the cube scene."""
    return generate_synthetic_sequence(cube_scene(), orbit_path(n), **kwargs)


def export_tum_sequence(seq, root):
    """Write a synthetic sequence in TUM layout, plus edge images and intrinsics."""
    K = seq.intrinsics
    for sub in ("rgb", "depth", "edges"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    rgb_lines, depth_lines = [], []
    for frame, em in zip(seq.frames, seq.edges):
        name = f"{frame.timestamp:.6f}.png"
        gray = np.clip(np.rint(frame.intensity * 255.0), 0, 255).astype(np.uint8)
        cv2.imwrite(os.path.join(root, "rgb", name), cv2.merge([gray, gray, gray]))
        raw = np.clip(np.rint(frame.depth * K.depth_scale), 0, 65535).astype(np.uint16)
        cv2.imwrite(os.path.join(root, "depth", name), raw)
        cv2.imwrite(os.path.join(root, "edges", name), em.mask.astype(np.uint8) * 255)
        rgb_lines.append(f"{frame.timestamp:.6f} rgb/{name}")
        depth_lines.append(f"{frame.timestamp:.6f} depth/{name}")
    header = "# synthetic sequence\n# timestamp filename\n"
    with open(os.path.join(root, "rgb.txt"), "w", encoding="utf-8") as fh:
        fh.write(header + "\n".join(rgb_lines) + "\n")
    with open(os.path.join(root, "depth.txt"), "w", encoding="utf-8") as fh:
        fh.write(header + "\n".join(depth_lines) + "\n")
    write_trajectory(seq.groundtruth, os.path.join(root, "groundtruth.txt"))
    with open(os.path.join(root, "intrinsics.cfg"), "w", encoding="utf-8") as fh:
        for key in ("fx", "fy", "cx", "cy", "width", "height", "depth_scale"):
            fh.write(f"{key} = {getattr(K, key)}\n")
