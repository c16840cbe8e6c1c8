"""Sequence-level visual odometry: edge sources, the tracking loop, and an
estimator front end with the usual ``fit`` / ``get_params`` surface."""
from dataclasses import dataclass, field
import json
import logging
import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corners import CornerAugmenter, CornerConfig
from .dataset_io import Trajectory
from .edges import EdgeMap, detect_edges_canny, load_external_edge_map
from .errors import DatasetError, TooFewPoints, TrackingError
from .geometry import Pose, build_pyramid, se3_exp, se3_log
from .tracker import (KeyframePolicy, RobustConfig, align_coarse_to_fine, keyframe_decision,
                      sample_keyframe_points, LOST_VALID_RATIO)

log = logging.getLogger(__name__)


class CannyEdges(TransformerMixin, BaseEstimator):
    """Frame (or intensity image) -> Canny ``EdgeMap``."""

    def __init__(self, low=50.0, high=150.0, blur_sigma=1.0):
        self.low = low
        self.high = high
        self.blur_sigma = blur_sigma

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        img = getattr(X, "intensity", X)
        return detect_edges_canny(img, self.low, self.high, self.blur_sigma)

    def __call__(self, index, frame):
        return self.transform(frame)


class ExternalEdges:
    """Edge source reading one precomputed edge image per frame index.

    ``paths`` is a list indexed by frame, or a dict ``{index: path}``.
    """

    def __init__(self, paths, threshold=128):
        self.paths = dict(paths) if isinstance(paths, dict) else list(paths)
        self.threshold = threshold

    def __call__(self, index, frame):
        try:
            path = self.paths[index]
        except (IndexError, KeyError):
            raise DatasetError(f"no external edge image for frame {index}") from None
        return load_external_edge_map(path, frame.shape, self.threshold)


class PrecomputedEdges:
    """Edge source over an in-memory list of ``EdgeMap`` objects / masks."""

    def __init__(self, edge_maps):
        self.edge_maps = list(edge_maps)

    def __call__(self, index, frame):
        e = self.edge_maps[index]
        return e if isinstance(e, EdgeMap) else EdgeMap(e, "external")


@dataclass
class FrameDiagnostics:
    frame: int
    timestamp: float
    valid_ratio: float
    cost: float
    iterations: list = field(default_factory=list)
    keyframe: bool = False
    lost: bool = False
    failed_levels: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({
            "frame": self.frame,
            "timestamp": round(self.timestamp, 6),
            "valid_ratio": round(self.valid_ratio, 6),
            "cost": round(self.cost, 9) if math.isfinite(self.cost) else None,
            "iterations": self.iterations,
            "keyframe": self.keyframe,
            "lost": self.lost,
            "failed_levels": self.failed_levels,
        })


def write_diagnostics(records, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


class SequenceTracker:
    """Frame-by-frame tracking state (current keyframe and recent poses)."""

    def __init__(self, edge_source, corner_config=CornerConfig(), use_corners=True,
                 levels=4, max_points=4000, robust=RobustConfig(), policy=KeyframePolicy(),
                 intrinsics=None, initial_pose=None):
        self.edge_source = edge_source
        self.augmenter = CornerAugmenter(**vars(corner_config)) if use_corners else None
        self.levels = levels
        self.max_points = max_points
        self.robust = robust
        self.policy = policy
        self.intrinsics = intrinsics
        self.initial_pose = initial_pose if initial_pose is not None else Pose.identity()
        self.keyframe = None
        self.poses = []
        self.index = 0

    def _prepare(self, frame):
        K = frame.intrinsics if frame.intrinsics is not None else self.intrinsics
        if K is None:
            raise ValueError("frame has no intrinsics and none were given")
        edges = self.edge_source(self.index, frame)
        if self.augmenter is not None:
            edges = self.augmenter.transform(edges)
        return edges, build_pyramid(frame, edges, self.levels, K)

    def _predict(self):
        if not self.poses:
            return self.initial_pose
        if len(self.poses) == 1:
            return self.poses[-1]
        prev, last = self.poses[-2], self.poses[-1]
        return last @ (prev.inverse() @ last)

    def _make_keyframe(self, frame, pyramid, edges, pose):
        return sample_keyframe_points(frame, pyramid, self.max_points, self.index, pose,
                                      edges=edges)

    def process(self, frame):
        """Track one frame; returns ``(world_pose, FrameDiagnostics)``."""
        i = self.index
        predicted = self._predict()
        diag = FrameDiagnostics(i, frame.timestamp, 0.0, math.inf)
        try:
            edges, pyramid = self._prepare(frame)
        except TrackingError as exc:
            log.warning("frame %d: %s", i, exc)
            edges = pyramid = None

        if self.keyframe is None:
            pose = predicted
            if pyramid is not None:
                try:
                    self.keyframe = self._make_keyframe(frame, pyramid, edges, pose)
                    diag.keyframe = True
                    diag.valid_ratio, diag.cost = 1.0, 0.0
                except TooFewPoints as exc:
                    log.warning("frame %d: cannot start tracking: %s", i, exc)
            diag.lost = self.keyframe is None
            return self._finish(pose, diag)

        kf = self.keyframe
        xi0 = se3_log(predicted.inverse() @ kf.pose)
        if pyramid is None:
            failed, xi, report = True, xi0, None
        else:
            res = align_coarse_to_fine(kf, pyramid, xi0, self.robust)
            failed, xi, report = res.failed, res.xi, res.report
            diag.iterations = [s.iterations for s in res.levels]
            diag.failed_levels = [s.level for s in res.levels if s.error]
        if report is not None:
            diag.valid_ratio = report.valid_ratio
            diag.cost = report.cost
        if failed:
            pose = predicted
            diag.lost = diag.valid_ratio < LOST_VALID_RATIO
        else:
            pose = kf.pose @ se3_exp(xi).inverse()

        promote = diag.lost or keyframe_decision(i, kf.index, xi, self.policy)
        if promote and pyramid is not None:
            try:
                self.keyframe = self._make_keyframe(frame, pyramid, edges, pose)
                diag.keyframe = True
            except TooFewPoints as exc:
                log.warning("frame %d: keeping old keyframe: %s", i, exc)
        return self._finish(pose, diag)

    def _finish(self, pose, diag):
        self.poses.append(pose)
        self.index += 1
        return pose, diag


def track_sequence(frames, edge_source, **kwargs):
    """Track a frame stream; returns ``(Trajectory, [FrameDiagnostics])``.

    ``kwargs`` are forwarded to ``SequenceTracker``.
    """
    tracker = SequenceTracker(edge_source, **kwargs)
    stamps, poses, diags = [], [], []
    for frame in frames:
        pose, diag = tracker.process(frame)
        stamps.append(frame.timestamp)
        poses.append(pose)
        diags.append(diag)
    if not poses:
        raise ValueError("need at least one frame")
    return Trajectory(stamps, poses), diags


class EdgeDirectVO(BaseEstimator):
    """Edge-direct RGB-D visual odometry.

    ``fit(frames)`` tracks the sequence and stores ``trajectory_`` and
    ``diagnostics_``. With ``edge_source="external"`` pass ``edges=`` to
    ``fit``: either image paths or ``EdgeMap`` objects, one per frame.
    """

    def __init__(self, edge_source="canny", canny_low=50.0, canny_high=150.0, canny_sigma=1.0,
                 external_threshold=128, use_corners=True, corner_window=5,
                 corner_quality=0.01, prune_window=20, prune_stride=20,
                 max_corners_per_window=5, stamp_radius=3, pyramid_levels=4, max_points=4000,
                 huber_theta="auto", lm_lambda_init=1e-4, lm_lambda_up=10.0,
                 lm_lambda_down=0.5, max_iters=50, step_tol=1e-7, cost_tol=1e-8,
                 keyframe_period=5, keyframe_trans=0.15, keyframe_rot_deg=10.0,
                 intrinsics=None, initial_pose=None):
        self.edge_source = edge_source
        self.canny_low = canny_low
        self.canny_high = canny_high
        self.canny_sigma = canny_sigma
        self.external_threshold = external_threshold
        self.use_corners = use_corners
        self.corner_window = corner_window
        self.corner_quality = corner_quality
        self.prune_window = prune_window
        self.prune_stride = prune_stride
        self.max_corners_per_window = max_corners_per_window
        self.stamp_radius = stamp_radius
        self.pyramid_levels = pyramid_levels
        self.max_points = max_points
        self.huber_theta = huber_theta
        self.lm_lambda_init = lm_lambda_init
        self.lm_lambda_up = lm_lambda_up
        self.lm_lambda_down = lm_lambda_down
        self.max_iters = max_iters
        self.step_tol = step_tol
        self.cost_tol = cost_tol
        self.keyframe_period = keyframe_period
        self.keyframe_trans = keyframe_trans
        self.keyframe_rot_deg = keyframe_rot_deg
        self.intrinsics = intrinsics
        self.initial_pose = initial_pose

    def _edge_source(self, edges):
        if self.edge_source == "canny":
            return CannyEdges(self.canny_low, self.canny_high, self.canny_sigma)
        if self.edge_source == "external":
            if edges is None:
                raise ValueError("edge_source='external' needs edges= in fit")
            edges = list(edges)
            if edges and isinstance(edges[0], (EdgeMap, np.ndarray)):
                return PrecomputedEdges(edges)
            return ExternalEdges(edges, self.external_threshold)
        raise ValueError(f"unknown edge_source {self.edge_source!r}")

    def _tracker_kwargs(self):
        return dict(
            corner_config=CornerConfig(self.corner_window, self.corner_quality,
                                       self.prune_window, self.prune_stride,
                                       self.max_corners_per_window, self.stamp_radius),
            use_corners=self.use_corners,
            levels=self.pyramid_levels,
            max_points=self.max_points,
            robust=RobustConfig(self.huber_theta, self.lm_lambda_init, self.lm_lambda_up,
                                self.lm_lambda_down, self.max_iters, self.step_tol,
                                self.cost_tol),
            policy=KeyframePolicy(self.keyframe_period, self.keyframe_trans,
                                  math.radians(self.keyframe_rot_deg)),
            intrinsics=self.intrinsics,
            initial_pose=self.initial_pose,
        )

    def fit(self, X, y=None, edges=None):
        source = self._edge_source(edges)
        self.trajectory_, self.diagnostics_ = track_sequence(X, source, **self._tracker_kwargs())
        return self

    def predict(self, X=None):
        """The tracked trajectory (re-tracks ``X`` when given)."""
        if X is not None:
            self.fit(X)
        check_is_fitted(self, "trajectory_")
        return self.trajectory_

    def score(self, X, y, edges=None):
        """Negative ATE RMSE (metres) of the trajectory tracked on ``X`` vs ``y``."""
        from .evaluation import ate

        self.fit(X, edges=edges)
        return -ate(y, self.trajectory_).rmse
