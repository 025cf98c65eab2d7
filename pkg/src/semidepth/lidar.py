"""LiDAR projection, occlusion-artifact filtering and KITTI-style depth containers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import minimum_filter

from .core import SparseDepthMap, as_scalar
from .errors import DomainError, FormatError, RangeError

DEPTH_PNG_SCALE = 256.0


@dataclass
class PointCloud:
    """``(N, 4)`` array of x, y, z, reflectance in the sensor frame (meters)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 4)
        if not np.all(np.isfinite(pts)):
            raise DomainError("point cloud has non-finite coordinates")
        self.points = pts

    def __len__(self):
        return len(self.points)

    @property
    def xyz(self):
        return self.points[:, :3]


def read_pointcloud_bin(data):
    """Parse little-endian float32 ``(x, y, z, reflectance)`` quadruples."""
    if len(data) % 16:
        raise FormatError(f"point cloud byte length {len(data)} is not a multiple of 16")
    pts = np.frombuffer(bytes(data), dtype="<f4").reshape(-1, 4).astype(np.float64)
    if not np.all(np.isfinite(pts)):
        raise FormatError("point cloud contains non-finite values")
    return PointCloud(pts)


def write_pointcloud_bin(cloud):
    return np.asarray(cloud.points, dtype="<f4").tobytes()


def project_points(cloud, rig, origin_offset=(0.0, 0.0, 0.0)):
    """Pinhole-project sensor-frame points into the camera, nearest point per pixel.

    ``origin_offset`` is the sensor origin expressed in the camera frame.
    Points at or behind the image plane and points outside the frame are dropped;
    projections are rounded to the nearest pixel centre.
    """
    xyz = cloud.xyz + np.asarray(origin_offset, dtype=np.float64)
    depth = np.zeros((rig.height, rig.width))
    front = xyz[:, 2] > 0
    xyz = xyz[front]
    u = np.rint(rig.focal_px * xyz[:, 0] / xyz[:, 2] + rig.cx).astype(np.int64)
    v = np.rint(rig.focal_px * xyz[:, 1] / xyz[:, 2] + rig.cy).astype(np.int64)
    inside = (u >= 0) & (u < rig.width) & (v >= 0) & (v < rig.height)
    u, v, z = u[inside], v[inside], xyz[inside, 2]
    # write far-to-near so the nearest point lands last
    order = np.argsort(-z, kind="stable")
    depth[v[order], u[order]] = z[order]
    return SparseDepthMap(depth, depth > 0)


def occlusion_filter(raw, window=7, rel_tol=0.05):
    """Drop points deeper than ``(1 + rel_tol)`` times the nearest point in their window.

    Background returns that leak around a foreground occluder sit next to much
    nearer foreground returns; isolated points are their own minimum and stay.
    """
    if window < 3 or window % 2 == 0:
        raise DomainError("window must be odd and >= 3")
    if rel_tol < 0:
        raise DomainError("rel_tol must be >= 0")
    masked = np.where(raw.mask, raw.depth, np.inf)
    local_min = minimum_filter(masked, size=window, mode="constant", cval=np.inf)
    keep = raw.mask & (raw.depth <= (1.0 + rel_tol) * local_min)
    return SparseDepthMap(np.where(keep, raw.depth, 0.0), keep)


def encode_depth_png(depth_map):
    """Quantise depth to uint16 samples (``round(depth * 256)``, 0 = invalid)."""
    if isinstance(depth_map, SparseDepthMap):
        depth, mask = depth_map.depth, depth_map.mask
    else:
        depth = as_scalar(depth_map, "depth")
        mask = depth > 0
    if np.any(depth[mask] < 0):
        raise RangeError("negative depth cannot be encoded")
    samples = np.rint(np.where(mask, depth, 0.0) * DEPTH_PNG_SCALE)
    if np.any(samples > 65535):
        raise RangeError("depth >= 256 m cannot be encoded in a 16-bit depth PNG")
    samples = samples.astype(np.uint16)
    # sub-quantum depths would otherwise collide with the invalid sentinel
    samples[mask & (samples == 0)] = 1
    return samples


def decode_depth_png(samples):
    s = np.asarray(samples)
    if s.ndim != 2:
        raise FormatError("depth PNG must be single-channel")
    s = s.astype(np.float64)
    return SparseDepthMap(s / DEPTH_PNG_SCALE, s > 0)


