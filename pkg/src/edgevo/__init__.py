"""Edge-based direct RGB-D visual odometry with corner-augmented edge maps."""
from .config import RunConfig
from .corners import CornerAugmenter, CornerConfig, CornerSet, detect_corners
from .dataset_io import (Frame, TUMSequence, Trajectory, associate_frames, load_frame,
                         read_trajectory, write_trajectory)
from .edges import DistanceField, EdgeMap, detect_edges_canny, distance_transform
from .evaluation import MetricReport, ate, rpe, umeyama_align
from .geometry import CameraIntrinsics, Pose, build_pyramid, se3_exp, se3_log
from .odometry import EdgeDirectVO, track_sequence
from .tracker import KeyframePolicy, RobustConfig, align_coarse_to_fine

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "CornerAugmenter", "CornerConfig", "CornerSet", "detect_corners",
    "Frame", "TUMSequence", "Trajectory", "associate_frames", "load_frame",
    "read_trajectory", "write_trajectory", "DistanceField", "EdgeMap", "detect_edges_canny",
    "distance_transform", "MetricReport", "ate", "rpe", "umeyama_align", "CameraIntrinsics",
    "Pose", "build_pyramid", "se3_exp", "se3_log", "EdgeDirectVO", "track_sequence",
    "KeyframePolicy", "RobustConfig", "align_coarse_to_fine",
]
