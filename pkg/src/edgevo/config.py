"""Flat ``key = value`` run configuration."""
from dataclasses import dataclass, fields, replace
import math
import os

from .corners import CornerConfig
from .errors import ConfigError, DatasetError
from .tracker import KeyframePolicy, RobustConfig

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_kv_file(path):
    """``key = value`` lines; ``#`` starts a comment. Returns a dict of strings."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            out[key] = value
    return out


@dataclass(frozen=True)
class RunConfig:
    # input
    dataset: str = ""               # empty: the bundled synthetic demo
    camera: str = ""                # packaged name (tum_fr1, ...) or intrinsics file
    depth_scale: float = 5000.0
    max_dt: float = 0.02
    max_frames: int = 0             # 0: all frames
    demo_frames: int = 100
    # edges
    edge_source: str = "canny"
    edges_dir: str = "edges"
    edge_threshold: int = 128
    canny_low: float = 50.0
    canny_high: float = 150.0
    canny_sigma: float = 1.0
    # corners
    use_corners: bool = True
    corner_window: int = 5
    corner_quality: float = 0.01
    prune_window: int = 20
    prune_stride: int = 20
    max_corners_per_window: int = 5
    stamp_radius: int = 3
    # alignment
    pyramid_levels: int = 4
    max_points: int = 4000
    huber_theta: str = "auto"
    lm_lambda_init: float = 1e-4
    lm_lambda_up: float = 10.0
    lm_lambda_down: float = 0.5
    max_iters: int = 50
    step_tol: float = 1e-7
    cost_tol: float = 1e-8
    # keyframes
    keyframe_period: int = 5
    keyframe_trans: float = 0.15
    keyframe_rot_deg: float = 10.0
    # output
    output: str = "trajectory.txt"
    diagnostics: str = "diagnostics.jsonl"
    groundtruth_output: str = "groundtruth.txt"   # synthetic runs only

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, values):
        unknown = sorted(set(values) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kinds = {f.name: f.type for f in fields(cls)}
        parsed = {k: coerce(k, v, kinds[k]) for k, v in values.items()}
        cfg = cls(**parsed)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path=None, overrides=None):
        values = {}
        if path:
            if not os.path.isfile(path):
                raise ConfigError(f"config file not found: {path}")
            values.update(parse_kv_file(path))
        values.update(overrides or {})
        return cls.from_dict(values)

    def with_overrides(self, **kw):
        cfg = replace(self, **kw)
        cfg.validate()
        return cfg

    def validate(self):
        if self.edge_source not in ("canny", "external"):
            raise ConfigError(f"edge_source must be canny or external, got {self.edge_source!r}")
        if not 0 <= self.edge_threshold <= 255:
            raise ConfigError("edge_threshold must be in [0, 255]")
        if not (0 <= self.canny_low < self.canny_high) or self.canny_sigma < 0:
            raise ConfigError("need 0 <= canny_low < canny_high and canny_sigma >= 0")
        if not (self.max_dt > 0 and self.depth_scale > 0):
            raise ConfigError("max_dt and depth_scale must be positive")
        if self.max_frames < 0 or self.demo_frames < 1:
            raise ConfigError("max_frames must be >= 0 and demo_frames >= 1")
        if self.pyramid_levels < 1 or self.max_points < 1:
            raise ConfigError("pyramid_levels and max_points must be >= 1")
        try:
            self.corner_config()
            self.robust_config()
            self.keyframe_policy()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def check_paths(self):
        if self.dataset and not os.path.isdir(self.dataset):
            raise DatasetError(f"dataset directory not found: {self.dataset}")

    def corner_config(self):
        return CornerConfig(self.corner_window, self.corner_quality, self.prune_window,
                            self.prune_stride, self.max_corners_per_window, self.stamp_radius)

    def robust_config(self):
        theta = self.huber_theta if self.huber_theta == "auto" else float(self.huber_theta)
        return RobustConfig(theta, self.lm_lambda_init, self.lm_lambda_up, self.lm_lambda_down,
                            self.max_iters, self.step_tol, self.cost_tol)

    def keyframe_policy(self):
        return KeyframePolicy(self.keyframe_period, self.keyframe_trans,
                              math.radians(self.keyframe_rot_deg))

    def tracker_kwargs(self):
        return dict(corner_config=self.corner_config(), use_corners=self.use_corners,
                    levels=self.pyramid_levels, max_points=self.max_points,
                    robust=self.robust_config(), policy=self.keyframe_policy())


def coerce(key, value, kind):
    if not isinstance(value, str):
        return value
    kind = kind if isinstance(kind, str) else kind.__name__
    try:
        if kind == "bool":
            v = value.lower()
            if v in _TRUE:
                return True
            if v in _FALSE:
                return False
            raise ValueError(value)
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind}") from None
    if key == "huber_theta" and value != "auto":
        try:
            float(value)
        except ValueError:
            raise ConfigError(f"huber_theta must be 'auto' or a number, got {value!r}") from None
    return value
