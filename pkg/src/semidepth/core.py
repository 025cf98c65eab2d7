"""Field types, pyramids and finite-difference gradients.

Fields are plain ``numpy`` arrays in float64: images are ``(H, W, C)`` with
``C`` in {1, 3}, scalar fields are ``(H, W)``.  The helpers here validate and
normalise them; everything else in the package builds on these.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError, SizeError

N_SCALES = 4


def as_image(data, name="image"):
    """Return ``data`` as a validated ``(H, W, C)`` float64 image in [0, 1]."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ShapeError(f"{name}: expected (H, W, 1|3) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name}: non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise DomainError(f"{name}: intensities must lie in [0, 1]")
    return arr


def as_scalar(data, name="field"):
    """Return ``data`` as a validated ``(H, W)`` float64 field."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name}: expected (H, W) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name}: non-finite values")
    return arr


def check_same_hw(a, b, what="fields"):
    if a.shape[:2] != b.shape[:2]:
        raise ShapeError(f"{what}: shape mismatch {a.shape[:2]} vs {b.shape[:2]}")


@dataclass(frozen=True)
class CameraRig:
    """Rectified stereo rig. ``lidar_offset`` is the LiDAR origin in the left camera frame."""

    focal_px: float
    baseline_m: float
    width: int
    height: int
    lidar_offset: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.focal_px > 0 and self.baseline_m >= 0):
            raise DomainError("focal_px must be > 0 and baseline_m >= 0")
        if self.width < 1 or self.height < 1:
            raise DomainError("image size must be positive")
        object.__setattr__(self, "lidar_offset", tuple(float(v) for v in self.lidar_offset))
        if len(self.lidar_offset) != 3:
            raise DomainError("lidar_offset must be a 3-vector")

    @property
    def cx(self):
        return (self.width - 1) / 2.0

    @property
    def cy(self):
        return (self.height - 1) / 2.0

    def to_dict(self):
        return {
            "focal_px": self.focal_px,
            "baseline_m": self.baseline_m,
            "width": self.width,
            "height": self.height,
            "lidar_offset": list(self.lidar_offset),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            focal_px=float(d["focal_px"]),
            baseline_m=float(d["baseline_m"]),
            width=int(d["width"]),
            height=int(d["height"]),
            lidar_offset=tuple(d.get("lidar_offset", (0.0, 0.0, 0.0))),
        )


@dataclass
class SparseDepthMap:
    """Depth in meters with a validity mask; ``depth == 0`` wherever the mask is off."""

    depth: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.depth = as_scalar(self.depth, "depth")
        if self.mask is None:
            self.mask = self.depth > 0
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.depth.shape:
            raise ShapeError("depth and mask shapes differ")
        if np.any(self.depth[self.mask] <= 0):
            raise DomainError("masked depth values must be > 0")
        self.depth = np.where(self.mask, self.depth, 0.0)

    @property
    def shape(self):
        return self.depth.shape

    @property
    def count(self):
        return int(self.mask.sum())

    def inverse(self):
        """Inverse depth on the mask, 0 elsewhere."""
        out = np.zeros_like(self.depth)
        out[self.mask] = 1.0 / self.depth[self.mask]
        return out

    @classmethod
    def empty(cls, height, width):
        return cls(np.zeros((height, width)))


def downsample2x(field):
    """Halve a field by 2x2 block means; odd edges average the pixels that exist."""
    arr = np.asarray(field, dtype=np.float64)
    h, w = arr.shape[:2]
    if h < 2 or w < 2:
        raise SizeError(f"cannot downsample a {h}x{w} field")
    ph, pw = h % 2, w % 2
    if ph or pw:
        pad = [(0, ph), (0, pw)] + [(0, 0)] * (arr.ndim - 2)
        arr_p = np.pad(arr, pad)
        ones = np.pad(np.ones((h, w)), [(0, ph), (0, pw)])
    else:
        arr_p, ones = arr, np.ones((h, w))
    hh, ww = arr_p.shape[0] // 2, arr_p.shape[1] // 2
    sums = arr_p.reshape((hh, 2, ww, 2) + arr.shape[2:]).sum(axis=(1, 3))
    counts = ones.reshape(hh, 2, ww, 2).sum(axis=(1, 3))
    if arr.ndim == 3:
        counts = counts[:, :, None]
    return sums / counts


def upsample2x(field, shape):
    """Nearest-neighbour 2x upsampling cropped to ``shape`` (coarse-to-fine init)."""
    arr = np.repeat(np.repeat(np.asarray(field), 2, axis=0), 2, axis=1)
    return arr[: shape[0], : shape[1]].copy()


def pyramid_shapes(height, width, n_scales=N_SCALES):
    shapes = [(height, width)]
    for _ in range(n_scales - 1):
        h, w = shapes[-1]
        shapes.append((math.ceil(h / 2), math.ceil(w / 2)))
    return shapes


def build_pyramid(field, n_scales=N_SCALES):
    """Return ``[level1, ..., levelN]`` with level 1 the input itself."""
    arr = np.asarray(field, dtype=np.float64)
    h, w = arr.shape[:2]
    if n_scales < 1 or any(min(s) < 2 for s in pyramid_shapes(h, w, n_scales)[:-1]):
        raise SizeError(f"{h}x{w} field too small for {n_scales} scales")
    levels = [arr]
    for _ in range(n_scales - 1):
        levels.append(downsample2x(levels[-1]))
    return levels


def grad_x(field):
    """Forward difference along columns; the last column is zero."""
    f = np.asarray(field, dtype=np.float64)
    if f.shape[1] < 2:
        raise SizeError("grad_x needs width >= 2")
    g = np.zeros_like(f)
    g[:, :-1] = f[:, 1:] - f[:, :-1]
    return g


def grad_y(field):
    """Forward difference along rows; the last row is zero."""
    f = np.asarray(field, dtype=np.float64)
    if f.shape[0] < 2:
        raise SizeError("grad_y needs height >= 2")
    g = np.zeros_like(f)
    g[:-1] = f[1:] - f[:-1]
    return g


def grad_x_adjoint(g):
    """Transpose of :func:`grad_x` applied to an upstream gradient."""
    out = np.zeros_like(g)
    out[:, 1:] += g[:, :-1]
    out[:, :-1] -= g[:, :-1]
    return out


def grad_y_adjoint(g):
    out = np.zeros_like(g)
    out[1:] += g[:-1]
    out[:-1] -= g[:-1]
    return out
