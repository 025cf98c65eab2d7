"""Semi-supervised stereo depth estimation by direct optimisation of inverse depth.

The package implements the photometric, left-right consistency, LiDAR and
smoothness losses with hand-written gradients, an Adam optimiser over
multi-scale inverse-depth pyramids, LiDAR projection and occlusion filtering,
synthetic stereo scenes with exact ground truth, and the usual depth metrics.
"""
from .core import CameraRig, SparseDepthMap, build_pyramid
from .diff import fd_check, value_and_grad
from .errors import (
    ConfigError,
    DegenerateInputError,
    DomainError,
    FormatError,
    NumericError,
    ProbeExhaustionError,
    RangeError,
    SemiDepthError,
    ShapeError,
    SizeError,
)
from .evaluation import EvalConfig, Metrics, compute_metrics, garg_crop
from .lidar import PointCloud, occlusion_filter, project_points
from .losses import LossWeights, StereoSample, total_loss
from .photometric import PhotometricParams
from .sampler import WarpDirection, bilinear_sample, warp_horizontal
from .synth import SceneSpec, default_scene_spec, make_scene
from .varopt import AdamConfig, optimize_pair

__version__ = "0.1.0"
