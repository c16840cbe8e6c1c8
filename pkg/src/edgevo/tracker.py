"""Edge-direct frame-to-keyframe tracking.

Keyframe edge pixels (with depth) are lifted to 3D, moved by the current
estimate ``T`` into the current camera, projected, and scored by the
current frame's distance field. ``T = exp(xi)`` maps keyframe-camera
coordinates to current-camera coordinates, so the current camera's world
pose is ``keyframe_pose @ T.inverse()``.
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np

from .errors import (Diverged, EmptyResiduals, NoValidPoints, SingularNormalEquations,
                     TooFewPoints, TrackingError)
from .geometry import Pose, Z_MIN, backproject, se3_exp, se3_log

log = logging.getLogger(__name__)

MIN_LEVEL_POINTS = 50
MIN_SOLVE_POINTS = 6
LAMBDA_MAX = 1e8
LOST_VALID_RATIO = 0.1
_SNAP = 1e-9


@dataclass(frozen=True)
class RobustConfig:
    huber_theta: object = "auto"
    lm_lambda_init: float = 1e-4
    lm_lambda_up: float = 10.0
    lm_lambda_down: float = 0.5
    max_iters_per_level: int = 50
    step_tol: float = 1e-7
    cost_tol: float = 1e-8

    def __post_init__(self):
        if self.huber_theta != "auto" and not float(self.huber_theta) > 0:
            raise ValueError("huber_theta must be 'auto' or positive")
        if not (self.lm_lambda_init > 0 and self.lm_lambda_up > 1 > self.lm_lambda_down > 0):
            raise ValueError("need lm_lambda_init > 0 and lm_lambda_up > 1 > lm_lambda_down > 0")
        if self.max_iters_per_level < 1 or not (self.step_tol > 0 and self.cost_tol > 0):
            raise ValueError("iteration limits and tolerances must be positive")


@dataclass(frozen=True)
class KeyframePolicy:
    period: int = 5
    trans_threshold: float = 0.15
    rot_threshold: float = math.radians(10.0)

    def __post_init__(self):
        if self.period < 1 or not (self.trans_threshold > 0 and self.rot_threshold > 0):
            raise ValueError("keyframe policy values must be positive")


@dataclass(frozen=True, eq=False)
class ResidualReport:
    """Residuals of the in-bounds points and what the Jacobian needs."""

    residuals: np.ndarray
    weights: np.ndarray
    cost: float
    index: np.ndarray       # which keyframe points survived
    points: np.ndarray      # those points in current-camera coordinates
    grad: np.ndarray        # distance-field gradient at their projections
    total: int
    theta: float

    @property
    def valid_count(self):
        return len(self.residuals)

    @property
    def valid_ratio(self):
        return self.valid_count / self.total if self.total else 0.0

    @property
    def mean_residual(self):
        return float(self.residuals.mean()) if len(self.residuals) else math.inf


@dataclass(frozen=True, eq=False)
class KeyframeLevel:
    pixels: np.ndarray
    points: np.ndarray
    intrinsics: object


@dataclass(frozen=True, eq=False)
class Keyframe:
    frame: object
    levels: list
    pose: Pose
    index: int
    edges: object = None


def huber_weights(residuals, theta):
    """1 where ``r <= theta``, else ``theta / r``."""
    r = np.abs(np.asarray(residuals, dtype=float))
    w = np.ones_like(r)
    big = r > theta
    w[big] = theta / r[big]
    return w


def robust_scale(residuals):
    """Huber threshold from the MAD of the residuals, floored at 0.5 px."""
    r = np.asarray(residuals, dtype=float)
    if r.size == 0:
        raise EmptyResiduals("no residuals to scale")
    mad = np.median(np.abs(r - np.median(r)))
    return max(0.5, 1.345 * 1.4826 * mad)


def uniform_subsample(n, cap):
    """Indices ``floor(i * n / cap)`` for ``i < cap`` (all of them if n <= cap)."""
    if n <= cap:
        return np.arange(n)
    return (np.arange(cap) * n) // cap


def sample_keyframe_points(frame, pyramid, max_points=4000, index=0, pose=None,
                           min_points=MIN_LEVEL_POINTS, edges=None):
    """Lift the edge pixels of every pyramid level to 3D keyframe points.

    Pixels without valid depth are skipped. Level ``l`` keeps at most
    ``max_points / 2**l`` points, chosen with a fixed stride.
    """
    levels = []
    for lvl in pyramid:
        ys, xs = np.nonzero(lvl.edges.mask & (lvl.depth > 0))
        cap = max(1, int(max_points) >> lvl.level)
        keep = uniform_subsample(len(xs), cap)
        xs, ys = xs[keep], ys[keep]
        if len(xs) < min_points:
            raise TooFewPoints(f"level {lvl.level}: {len(xs)} edge points with depth "
                               f"(need {min_points})")
        pts = backproject(xs, ys, lvl.depth[ys, xs], lvl.intrinsics)
        levels.append(KeyframeLevel(np.stack([xs, ys], axis=1).astype(float), pts, lvl.intrinsics))
    return Keyframe(frame, levels, pose if pose is not None else Pose.identity(), index, edges)


def _snap(a):
    r = np.rint(a)
    return np.where(np.abs(a - r) < _SNAP, r, a)


def compute_residuals(points, pose, dist_field, K, theta="auto"):
    """Distance-field residuals of keyframe ``points`` moved by ``pose``.

    Points behind the camera or projecting outside the field are dropped.
    ``theta`` is the Huber threshold, or ``"auto"`` for ``robust_scale``.
    """
    pc = pose.apply(points)
    z = pc[:, 2]
    front = z > Z_MIN
    zs = np.where(front, z, 1.0)
    u = _snap(K.fx * pc[:, 0] / zs + K.cx)
    v = _snap(K.fy * pc[:, 1] / zs + K.cy)
    d, g, inb = dist_field.sample(u, v)
    ok = front & inb
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        raise NoValidPoints("no keyframe point projects into the current frame")
    r = d[idx]
    th = robust_scale(r) if theta == "auto" else float(theta)
    w = huber_weights(r, th)
    return ResidualReport(r, w, float(np.sum(w * r * r)), idx, pc[idx], g[idx], len(points), th)


def edge_jacobian(points, grad, K):
    """Rows d r_i / d delta for ``r_i = D(pi(exp(delta) x_i))`` at delta = 0.

    ``points`` are in current-camera coordinates and ``grad`` is the
    distance-field gradient at their projections. Columns follow the twist
    layout (translation, rotation).
    """
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    gu, gv = grad[:, 0], grad[:, 1]
    iz = 1.0 / z
    jt = np.empty((len(z), 3))
    jt[:, 0] = gu * K.fx * iz
    jt[:, 1] = gv * K.fy * iz
    jt[:, 2] = -(gu * K.fx * x + gv * K.fy * y) * iz * iz
    jr = np.cross(points, jt)
    return np.hstack([jt, jr])


@dataclass
class LevelStats:
    level: int = 0
    iterations: int = 0
    accepted: int = 0
    costs: list = field(default_factory=list)
    lam: float = 0.0
    converged: bool = False
    error: str = ""


def lm_solve_level(points, xi0, dist_field, K, config=RobustConfig(), level=0):
    """Iteratively re-weighted Levenberg-Marquardt on one pyramid level.

    The Huber threshold is fixed for the whole level (from the start
    residuals in auto mode), so the weighted cost is a single function of
    the pose and accepted steps never increase it.

    Returns ``(xi, report, stats)``.
    """
    stats = LevelStats(level=level, lam=config.lm_lambda_init)
    T = se3_exp(xi0)
    xi = np.array(xi0, dtype=float)
    rep = compute_residuals(points, T, dist_field, K, config.huber_theta)
    theta = rep.theta
    if rep.valid_count < MIN_SOLVE_POINTS:
        raise SingularNormalEquations(f"{rep.valid_count} valid points, need {MIN_SOLVE_POINTS}")
    cost = rep.cost
    stats.costs.append(cost)
    if cost == 0.0:
        stats.converged = True
        return xi, rep, stats
    lam = config.lm_lambda_init
    for _ in range(config.max_iters_per_level):
        stats.iterations += 1
        J = edge_jacobian(rep.points, rep.grad, K)
        Jw = J * rep.weights[:, None]
        H = Jw.T @ J
        b = Jw.T @ rep.residuals
        diag = np.diag(H)
        if np.min(diag) <= 1e-12 * max(np.max(diag), 1e-300) or np.linalg.cond(H) > 1e14:
            raise SingularNormalEquations("normal equations are rank deficient")
        delta = np.linalg.solve(H + lam * np.diag(diag), -b)
        T_new = se3_exp(delta) @ T
        try:
            new = compute_residuals(points, T_new, dist_field, K, theta)
        except NoValidPoints:
            new = None
        if new is not None and new.valid_count >= MIN_SOLVE_POINTS and new.cost < cost:
            stats.accepted += 1
            rel = (cost - new.cost) / cost
            T, rep, cost = T_new, new, new.cost
            xi = se3_log(T)
            stats.costs.append(cost)
            lam *= config.lm_lambda_down
            if cost == 0.0 or rel < config.cost_tol or np.linalg.norm(delta) < config.step_tol:
                stats.converged = True
                break
        else:
            lam *= config.lm_lambda_up
            if np.linalg.norm(delta) < config.step_tol:
                stats.converged = True
                break
            if lam > LAMBDA_MAX:
                if stats.accepted == 0:
                    raise Diverged(f"no acceptable step on level {level}")
                stats.converged = True
                break
    stats.lam = lam
    return xi, rep, stats


@dataclass
class AlignmentOutcome:
    xi: np.ndarray
    report: ResidualReport = None
    levels: list = field(default_factory=list)
    failed: bool = False


def align_coarse_to_fine(keyframe, pyramid, xi0, config=RobustConfig()):
    """Run ``lm_solve_level`` from the coarsest level to the finest.

    A failing level leaves the estimate unchanged and the next finer level
    continues from it. If every level fails, ``xi0`` is returned with
    ``failed=True``.
    """
    if len(keyframe.levels) != len(pyramid):
        raise ValueError("keyframe and frame pyramids differ in depth")
    xi = np.array(xi0, dtype=float)
    out = AlignmentOutcome(xi)
    ok = 0
    for lvl in reversed(range(len(pyramid))):
        kl, cur = keyframe.levels[lvl], pyramid[lvl]
        try:
            xi, rep, stats = lm_solve_level(kl.points, xi, cur.field, cur.intrinsics, config, lvl)
            out.report = rep
            ok += 1
        except TrackingError as exc:
            stats = LevelStats(level=lvl, error=type(exc).__name__)
            log.debug("level %d failed: %s", lvl, exc)
        out.levels.append(stats)
    out.failed = ok == 0
    out.xi = np.array(xi0, dtype=float) if out.failed else xi
    if out.report is None or out.levels[-1].error:
        # make the final report describe the finest level at the returned pose
        try:
            out.report = compute_residuals(keyframe.levels[0].points, se3_exp(out.xi),
                                           pyramid[0].field, pyramid[0].intrinsics,
                                           config.huber_theta)
        except TrackingError:
            out.report = None
    return out


def keyframe_decision(index, keyframe_index, xi, policy=KeyframePolicy()):
    """Periodic trigger OR motion-amplitude trigger."""
    xi = np.asarray(xi, dtype=float)
    return bool(index - keyframe_index >= policy.period
                or np.linalg.norm(xi[:3]) > policy.trans_threshold
                or np.linalg.norm(xi[3:]) > policy.rot_threshold)
