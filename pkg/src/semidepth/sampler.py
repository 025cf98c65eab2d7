"""Bilinear sampling and horizontal inverse warping for rectified stereo.

Disparities are non-negative and the correspondence is ``x_left = x_right + d``:
the left view is rebuilt by sampling the right image at ``j - d`` and the right
view by sampling the left image at ``j + d``.  Coordinates are clamped to the
image (edge replication); the derivative is zero wherever clamping is active.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import check_same_hw
from .errors import DomainError, ShapeError, SizeError


class WarpDirection(enum.Enum):
    RECONSTRUCT_LEFT_FROM_RIGHT = "left_from_right"
    RECONSTRUCT_RIGHT_FROM_LEFT = "right_from_left"

    @property
    def sign(self):
        """Sign applied to disparity when forming the sample column."""
        return -1.0 if self is WarpDirection.RECONSTRUCT_LEFT_FROM_RIGHT else 1.0


def bilinear_sample(field, x, y):
    """Sample ``field`` at continuous coordinates ``(x, y)`` (column, row).

    ``x`` and ``y`` may be scalars or arrays of equal shape.  Values outside
    the frame are clamped to the border.  Multi-channel fields return an extra
    trailing channel axis.
    """
    f = np.asarray(field, dtype=np.float64)
    h, w = f.shape[:2]
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1)
    x0 = np.minimum(np.floor(x).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(y).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = x - x0
    ty = y - y0
    if f.ndim == 3:
        tx = tx[..., None]
        ty = ty[..., None]
    top = (1 - tx) * f[y0, x0] + tx * f[y0, x1]
    bottom = (1 - tx) * f[y1, x0] + tx * f[y1, x1]
    return (1 - ty) * top + ty * bottom


@dataclass
class RowSampling:
    """Precomputed interpolation stencil for a horizontal warp.

    For pixel ``(i, j)`` the sample is ``(1 - t) * src[i, x0] + t * src[i, x0 + 1]``.
    ``active`` is False where the coordinate was clamped.
    """

    x0: np.ndarray
    t: np.ndarray
    active: np.ndarray
    coord: np.ndarray
    direction_sign: float

    @property
    def shape(self):
        return self.x0.shape

    def apply(self, source):
        src = np.asarray(source, dtype=np.float64)
        rows = np.arange(self.shape[0])[:, None]
        t = self.t[..., None] if src.ndim == 3 else self.t
        return (1 - t) * src[rows, self.x0] + t * src[rows, self.x0 + 1]

    def slope(self, source):
        """Horizontal interpolation slope of ``source`` at each sample, zero where clamped."""
        src = np.asarray(source, dtype=np.float64)
        rows = np.arange(self.shape[0])[:, None]
        s = src[rows, self.x0 + 1] - src[rows, self.x0]
        mask = self.active[..., None] if src.ndim == 3 else self.active
        return np.where(mask, s, 0.0)

    def adjoint(self, upstream):
        """Scatter an upstream gradient on the samples back onto the source grid."""
        g = np.asarray(upstream, dtype=np.float64)
        h, w = self.shape
        flat0 = (np.arange(h)[:, None] * w + self.x0).ravel()
        if g.ndim == 3:
            out = np.empty_like(g)
            for c in range(g.shape[2]):
                out[:, :, c] = self._scatter(g[:, :, c], flat0, h * w).reshape(h, w)
            return out
        return self._scatter(g, flat0, h * w).reshape(h, w)

    def _scatter(self, g, flat0, n):
        t = self.t.ravel()
        gv = g.ravel()
        return np.bincount(flat0, weights=(1 - t) * gv, minlength=n) + np.bincount(
            flat0 + 1, weights=t * gv, minlength=n
        )


def row_sampling(disparity, direction):
    """Build the stencil sampling column ``j + sign * d[i, j]`` of each row."""
    d = np.asarray(disparity, dtype=np.float64)
    if d.ndim != 2:
        raise ShapeError("disparity must be a 2-D field")
    h, w = d.shape
    if w < 2:
        raise SizeError("horizontal warping needs width >= 2")
    if np.any(d < 0):
        raise DomainError("disparity must be non-negative")
    raw = np.arange(w, dtype=np.float64)[None, :] + direction.sign * d
    active = (raw > 0.0) & (raw < w - 1)
    x = np.clip(raw, 0.0, w - 1)
    x0 = np.minimum(np.floor(x).astype(np.intp), w - 2)
    return RowSampling(x0=x0, t=x - x0, active=active, coord=raw, direction_sign=direction.sign)


def warp_horizontal(source, disparity, direction):
    """Inverse-warp ``source`` along rows by ``disparity`` in the given direction."""
    src = np.asarray(source, dtype=np.float64)
    check_same_hw(src, np.asarray(disparity), "warp_horizontal")
    return row_sampling(disparity, direction).apply(src)


def warp_jacobian_disparity(source, disparity, direction):
    """Per-pixel derivative of :func:`warp_horizontal` w.r.t. the local disparity.

    Multi-channel sources give one derivative per channel.
    """
    src = np.asarray(source, dtype=np.float64)
    check_same_hw(src, np.asarray(disparity), "warp_jacobian_disparity")
    return direction.sign * row_sampling(disparity, direction).slope(src)
