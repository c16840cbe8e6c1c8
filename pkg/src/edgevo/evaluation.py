"""Trajectory metrics in the TUM RGB-D protocol: RPE and ATE."""
from dataclasses import dataclass, field
import math

import numpy as np

from .dataset_io import DEFAULT_MAX_DT, Trajectory, associate_frames
from .errors import DegenerateGeometry, EmptyInput, InsufficientSpan, NoMatches
from .geometry import Pose

REPORT_KEYS = ("rmse", "mean", "median", "max", "count")


def rotation_angle(R):
    """Rotation angle in radians, with the cosine clamped to [-1, 1]."""
    c = (np.trace(R) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


def relative_rotation_angle(Ra, Rb):
    """Angle of ``Ra^T Rb`` in radians.

    Same value as ``rotation_angle(Ra.T @ Rb)`` (``|Ra - Rb|_F = 2 sqrt(2)
    sin(angle / 2)``), but exactly 0 for equal inputs and well conditioned
    for small angles, where the arccos form loses half the digits.
    """
    s = np.linalg.norm(np.asarray(Ra) - np.asarray(Rb)) / (2.0 * math.sqrt(2.0))
    return 2.0 * math.asin(min(1.0, s))


@dataclass
class AlignmentResult:
    transform: Pose
    aligned: object = None


@dataclass
class MetricReport:
    """Summary of per-sample translational errors (plus rotational for RPE)."""

    rmse: float
    mean: float
    median: float
    max: float
    count: int
    errors: np.ndarray = field(repr=False, default=None)
    timestamps: np.ndarray = field(repr=False, default=None)
    rot_rmse: float = None
    rot_mean: float = None
    rot_max: float = None
    rot_errors: np.ndarray = field(repr=False, default=None)
    delta: float = None
    unit: str = "m"
    alignment: AlignmentResult = field(repr=False, default=None)

    @classmethod
    def from_errors(cls, errors, **extra):
        e = np.asarray(errors, dtype=float)
        if e.size == 0:
            raise InsufficientSpan("no error samples")
        rep = cls(rmse=float(np.sqrt(np.mean(e * e))), mean=float(e.mean()),
                  median=float(np.median(e)), max=float(e.max()), count=int(e.size),
                  errors=e, **extra)
        if rep.rot_errors is not None:
            r = np.asarray(rep.rot_errors, dtype=float)
            rep.rot_rmse = float(np.sqrt(np.mean(r * r)))
            rep.rot_mean = float(r.mean())
            rep.rot_max = float(r.max())
        return rep

    def lines(self):
        """Fixed-order ``key: value`` lines."""
        out = [f"{k}: {getattr(self, k):.6f}" if k != "count" else f"count: {self.count}"
               for k in REPORT_KEYS]
        if self.rot_rmse is not None:
            out += [f"rot_rmse: {self.rot_rmse:.6f}", f"rot_mean: {self.rot_mean:.6f}",
                    f"rot_max: {self.rot_max:.6f}"]
        if self.delta is not None:
            out.append(f"delta: {self.delta:.6f}")
        return out

    def sample_records(self):
        for i in range(self.count):
            rec = {"t": float(self.timestamps[i]) if self.timestamps is not None else i,
                   "error": float(self.errors[i])}
            if self.rot_errors is not None:
                rec["rot_error"] = float(self.rot_errors[i])
            yield rec


def associate_trajectories(Q, P, max_dt=DEFAULT_MAX_DT):
    """Pair ground-truth and estimated poses by nearest timestamp.

    Returns ``[(t_q, Q_pose, P_pose), ...]`` in ground-truth time order.
    """
    if len(Q) == 0 or len(P) == 0:
        raise NoMatches("empty trajectory")
    try:
        pairs = associate_frames(list(zip(Q.timestamps, Q.poses)),
                                 list(zip(P.timestamps, P.poses)), max_dt)
    except EmptyInput as exc:
        raise NoMatches(str(exc)) from None
    if not pairs:
        raise NoMatches(f"no timestamps agree within {max_dt} s")
    return [(tq, q, p) for (tq, q), (_, p) in pairs]


def umeyama_align(P, Q):
    """Rigid ``S`` (no scale) minimising ``sum ||S p_i - q_i||^2``.

    ``P`` and ``Q`` are ``(N, 3)`` arrays of corresponding positions.
    """
    P = np.asarray(P, dtype=float).reshape(-1, 3)
    Q = np.asarray(Q, dtype=float).reshape(-1, 3)
    if P.shape != Q.shape:
        raise ValueError("point sets differ in shape")
    if len(P) < 3:
        raise DegenerateGeometry(f"need >= 3 point pairs, got {len(P)}")
    if np.array_equal(P, Q) and np.linalg.matrix_rank(P - P.mean(axis=0)) >= 2:
        # nothing to align; the SVD would only add rounding noise
        return AlignmentResult(Pose.identity())
    mp, mq = P.mean(axis=0), Q.mean(axis=0)
    Pc, Qc = P - mp, Q - mq
    sv = np.linalg.svd(Pc, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-12) or sv[0] == 0:
        raise DegenerateGeometry("points are collinear or coincident")
    U, _, Vt = np.linalg.svd(Qc.T @ Pc)
    D = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        D[2, 2] = -1.0
    R = U @ D @ Vt
    return AlignmentResult(Pose(R, mq - R @ mp))


def _pairs(Q, P, max_dt):
    if isinstance(Q, Trajectory):
        return associate_trajectories(Q, P, max_dt)
    return list(Q)


def ate(Q, P, max_dt=DEFAULT_MAX_DT):
    """Absolute trajectory error after rigid alignment of ``P`` onto ``Q``.

    ``Q``/``P`` are trajectories (associated by timestamp), or ``Q`` is an
    already-paired list from ``associate_trajectories`` and ``P`` is ignored.
    """
    pairs = _pairs(Q, P, max_dt)
    qs = [q for _, q, _ in pairs]
    ps = [p for _, _, p in pairs]
    align = umeyama_align([p.translation for p in ps], [q.translation for q in qs])
    S = align.transform
    # |trans(Q^-1 S P)| = |R_q^T (S p - q)| = |S p - q|; the last form is exact for P == Q
    errs = np.array([np.linalg.norm(S.apply(p.translation) - q.translation) for q, p in zip(qs, ps)])
    stamps = np.array([t for t, _, _ in pairs])
    align.aligned = Trajectory(stamps, [S @ p for p in ps])
    rep = MetricReport.from_errors(errs, timestamps=stamps)
    rep.alignment = align
    return rep


def rpe(Q, P, delta=1.0, mode="time", max_dt=DEFAULT_MAX_DT):
    """Relative pose error over a fixed interval.

    ``mode="time"``: ``delta`` seconds; each ``t_i`` is paired with the
    sample nearest ``t_i + delta`` within ``0.1 * delta`` and errors are
    per second (m/s, deg/s). ``mode="frames"``: ``delta`` is an index step
    and errors are per frame.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    pairs = _pairs(Q, P, max_dt)
    t = np.array([p[0] for p in pairs])
    idx_i, idx_j = [], []
    if mode == "time":
        tol = 0.1 * delta
        for i, ti in enumerate(t):
            target = ti + delta
            k = int(np.searchsorted(t, target))
            best = None
            for j in (k - 1, k):
                if i < j < len(t) and abs(t[j] - target) <= tol:
                    if best is None or abs(t[j] - target) < abs(t[best] - target):
                        best = j
            if best is not None:
                idx_i.append(i)
                idx_j.append(best)
        norm = delta
    elif mode == "frames":
        step = int(delta)
        if step < 1 or step != delta:
            raise ValueError("frame delta must be a positive integer")
        idx_i = list(range(len(t) - step))
        idx_j = [i + step for i in idx_i]
        norm = step
    else:
        raise ValueError(f"unknown RPE mode {mode!r}")
    if not idx_i:
        raise InsufficientSpan(f"no pose pairs separated by {delta} ({mode})")
    terr, rerr = [], []
    for i, j in zip(idx_i, idx_j):
        _, qi, pi = pairs[i]
        _, qj, pj = pairs[j]
        dq, dp = qi.inverse() @ qj, pi.inverse() @ pj
        E = dq.inverse() @ dp
        terr.append(np.linalg.norm(E.translation) / norm)
        rerr.append(math.degrees(relative_rotation_angle(dq.rotation, dp.rotation)) / norm)
    unit = "m/s" if mode == "time" else "m/frame"
    return MetricReport.from_errors(terr, rot_errors=np.array(rerr), delta=float(delta),
                                    timestamps=t[idx_i], unit=unit)
