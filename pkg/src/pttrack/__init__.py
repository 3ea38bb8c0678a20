"""Vote-and-propose 3D single-object tracker with local vector self-attention."""

__version__ = "0.1.0"

from .attention import PTTConfig, PTTModule, SeedSet
from .config import TrackerConfig, load_config
from .errors import DataError, NumericalError, UsageError
from .geometry import Box3D, RigidMotion, apply_motion, center_error, crop_points, iou3d, iou_bev
from .manifest import RunManifest, read_manifest, write_manifest
from .metrics import OpeCurve, precision_curve, success_curve
from .sampling import ball_query, farthest_point_sample, knn, random_sample
from .synth import Tracklet, gen_tracklet, generate_corpus, load_corpus, load_split
from .tracker import (
    TrackerModel,
    build_training_samples,
    load_checkpoint,
    save_checkpoint,
    track_tracklet,
    tracker_loss,
    train_model,
)

__all__ = [
    "Box3D",
    "DataError",
    "NumericalError",
    "OpeCurve",
    "PTTConfig",
    "PTTModule",
    "RigidMotion",
    "RunManifest",
    "SeedSet",
    "TrackerConfig",
    "TrackerModel",
    "Tracklet",
    "UsageError",
    "apply_motion",
    "ball_query",
    "build_training_samples",
    "center_error",
    "crop_points",
    "farthest_point_sample",
    "gen_tracklet",
    "generate_corpus",
    "iou3d",
    "iou_bev",
    "knn",
    "load_checkpoint",
    "load_config",
    "load_corpus",
    "load_split",
    "precision_curve",
    "random_sample",
    "read_manifest",
    "save_checkpoint",
    "success_curve",
    "track_tracklet",
    "tracker_loss",
    "train_model",
    "write_manifest",
    "__version__",
]
