"""LiDAR pointcloud segmentation and classification."""

from ._lidarseg import (
    CAR,
    CYCLIST,
    IGNORED,
    PEDESTRIAN,
    LidarsegError,
    Model,
    __version__,
    class_name,
    confusion,
    csf_ground_mask,
    dbscan,
    extract_features,
    frame_accuracy,
    label_points,
    labeled_accuracy,
    load_velodyne,
    mean_shift,
    parse_velodyne,
    ransac_plane,
    run_all,
    train,
)

__all__ = [
    "CAR",
    "CYCLIST",
    "IGNORED",
    "PEDESTRIAN",
    "LidarsegError",
    "Model",
    "__version__",
    "class_name",
    "confusion",
    "csf_ground_mask",
    "dbscan",
    "extract_features",
    "frame_accuracy",
    "label_points",
    "labeled_accuracy",
    "load_velodyne",
    "mean_shift",
    "parse_velodyne",
    "ransac_plane",
    "run_all",
    "train",
]
