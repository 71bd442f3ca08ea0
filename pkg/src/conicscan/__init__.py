"""Detection of cylinders, cones and spheres in organized depth frames.

Each scan row is cut into ellipse arcs in a single pass, arcs are chained
across rows, and every chain is classified by how its radius changes along
its center line.
"""
from .chains import ChainConfig, EllipseChain, Line3D, build_components, fit_center_circle, fit_center_line
from .classifier import ClassifierConfig, Primitive, classify, detect_frame, split_chain
from .ellipse_fit import FitError, GeometricEllipse2D, ScatterAccumulator, fit, point_error, to_geometric
from .geometry import (
    CameraIntrinsics,
    DepthFrame,
    Ellipse,
    FrameError,
    default_intrinsics,
    load_frame,
    project_row,
    read_intrinsics,
    save_frame,
    transpose_frame,
)
from .ransac import RansacConfig, iteration_count, ransac_ellipse
from .segmenter import SegmenterConfig, extract_ellipses, extract_frame_ellipses, prefilter
from .synth import SceneSpec, render
from .tracking import KalmanConfig, TrackState, Tracker, associate_and_step, estimate_velocity, predict, update

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics", "DepthFrame", "Ellipse", "FrameError", "default_intrinsics", "load_frame",
    "save_frame", "read_intrinsics", "project_row", "transpose_frame",
    "ScatterAccumulator", "GeometricEllipse2D", "FitError", "fit", "to_geometric", "point_error",
    "SegmenterConfig", "extract_ellipses", "extract_frame_ellipses", "prefilter",
    "ChainConfig", "EllipseChain", "Line3D", "build_components", "fit_center_line", "fit_center_circle",
    "ClassifierConfig", "Primitive", "classify", "split_chain", "detect_frame",
    "KalmanConfig", "TrackState", "Tracker", "predict", "update", "associate_and_step",
    "estimate_velocity",
    "RansacConfig", "iteration_count", "ransac_ellipse",
    "SceneSpec", "render",
]
