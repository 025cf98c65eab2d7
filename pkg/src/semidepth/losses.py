"""Multi-scale semi-supervised stereo objective.

Per scale ``s`` the loss is::

    L_s = l1 * E_reconstruction + l2 * E_lr + l3 * E_supervised + l4 * E_smooth

and the total is the sum over four scales.  Inverse depth ``rho`` (1/m) is
turned into disparity with ``d = baseline * focal * rho / 2**(s-1)``.  The
supervised term is only evaluated at full resolution.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .core import (
    N_SCALES,
    CameraRig,
    SparseDepthMap,
    as_image,
    as_scalar,
    build_pyramid,
    check_same_hw,
    grad_x,
    grad_y,
)
from .errors import DegenerateInputError, DomainError, ShapeError
from .photometric import PhotometricParams, photometric_loss
from .sampler import WarpDirection, row_sampling

LEFT = WarpDirection.RECONSTRUCT_LEFT_FROM_RIGHT
RIGHT = WarpDirection.RECONSTRUCT_RIGHT_FROM_LEFT


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 150.0
    lambda4: float = 0.1
    photometric: PhotometricParams = field(default_factory=PhotometricParams)

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3, self.lambda4) < 0:
            raise DomainError("loss weights must be >= 0")

    def replace(self, **kw):
        d = {k: getattr(self, k) for k in ("lambda1", "lambda2", "lambda3", "lambda4", "photometric")}
        d.update(kw)
        return LossWeights(**d)

    def to_dict(self):
        d = asdict(self)
        d["photometric"] = self.photometric.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        photo = PhotometricParams(**d.pop("photometric", {}))
        return cls(photometric=photo, **d)


@dataclass
class StereoSample:
    """A rectified stereo pair with optional sparse ground truth for each view."""

    left: np.ndarray
    right: np.ndarray
    rig: CameraRig
    gt_left: Optional[SparseDepthMap] = None
    gt_right: Optional[SparseDepthMap] = None

    def __post_init__(self):
        self.left = as_image(self.left, "left")
        self.right = as_image(self.right, "right")
        if self.left.shape != self.right.shape:
            raise ShapeError("left and right images differ in shape")
        for gt in (self.gt_left, self.gt_right):
            if gt is not None and gt.shape != self.left.shape[:2]:
                raise ShapeError("ground truth shape does not match images")

    @property
    def shape(self):
        return self.left.shape[:2]

    @cached_property
    def left_pyramid(self):
        return build_pyramid(self.left)

    @cached_property
    def right_pyramid(self):
        return build_pyramid(self.right)

    def images_at(self, scale):
        return self.left_pyramid[scale - 1], self.right_pyramid[scale - 1]

    def mirrored(self):
        """Swap the views and flip every field left-right (the symmetric twin sample)."""

        def flip_gt(gt):
            if gt is None:
                return None
            return SparseDepthMap(gt.depth[:, ::-1].copy(), gt.mask[:, ::-1].copy())

        return StereoSample(
            left=self.right[:, ::-1].copy(),
            right=self.left[:, ::-1].copy(),
            rig=self.rig,
            gt_left=flip_gt(self.gt_right),
            gt_right=flip_gt(self.gt_left),
        )


TERMS = ("reconstruction", "lr", "supervised", "smooth")


@dataclass
class ScaleTerms:
    scale: int
    reconstruction: float
    lr: float
    supervised: float
    smooth: float
    total: float

    def to_dict(self):
        return asdict(self)


@dataclass
class LossBreakdown:
    """Unweighted term sums over scales, the weighted per-scale totals and the grand total."""

    reconstruction: float
    lr: float
    supervised: float
    smooth: float
    total: float
    per_scale: list
    scales: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "reconstruction": self.reconstruction,
            "lr": self.lr,
            "supervised": self.supervised,
            "smooth": self.smooth,
            "per_scale": list(self.per_scale),
            "total": self.total,
        }


def disparity_factor(rig, scale):
    return rig.baseline_m * rig.focal_px / 2.0 ** (scale - 1)


def inverse_depth_to_disparity(rho, rig, scale=1):
    """Pixel disparity at pyramid level ``scale`` for inverse depth ``rho``."""
    rho = as_scalar(rho, "rho")
    if scale < 1 or scale > N_SCALES:
        raise DomainError(f"scale must be in 1..{N_SCALES}")
    if np.any(rho < 0):
        raise DomainError("inverse depth must be non-negative")
    return disparity_factor(rig, scale) * rho


def _checked_pair(rho_l, rho_r):
    rho_l = as_scalar(rho_l, "rho_l")
    rho_r = as_scalar(rho_r, "rho_r")
    if rho_l.shape != rho_r.shape:
        raise ShapeError("rho_l and rho_r differ in shape")
    return rho_l, rho_r


def stencils(rho_l, rho_r, rig, scale):
    """Row-sampling stencils for both views: left samples right at j - d_l, right samples left at j + d_r."""
    d_l = inverse_depth_to_disparity(rho_l, rig, scale)
    d_r = inverse_depth_to_disparity(rho_r, rig, scale)
    return row_sampling(d_l, LEFT), row_sampling(d_r, RIGHT)


def e_reconstruction(sample, rho_l, rho_r, weights, scale=1, _stencils=None):
    """Photometric error of both views against their inverse-warped reconstructions."""
    rho_l, rho_r = _checked_pair(rho_l, rho_r)
    img_l, img_r = sample.images_at(scale)
    check_same_hw(img_l, rho_l, "e_reconstruction")
    st_l, st_r = _stencils or stencils(rho_l, rho_r, sample.rig, scale)
    rec_l = st_l.apply(img_r)
    rec_r = st_r.apply(img_l)
    p = weights.photometric
    return photometric_loss(img_l, rec_l, p) + photometric_loss(img_r, rec_r, p)


def lr_residuals(rho_l, rho_r, st_l, st_r):
    return rho_l - st_l.apply(rho_r), rho_r - st_r.apply(rho_l)


def e_lr(rho_l, rho_r, rig, scale=1, _stencils=None):
    """Mean absolute disagreement between each view's inverse depth and the other's, projected."""
    rho_l, rho_r = _checked_pair(rho_l, rho_r)
    st_l, st_r = _stencils or stencils(rho_l, rho_r, rig, scale)
    res_l, res_r = lr_residuals(rho_l, rho_r, st_l, st_r)
    return float((np.abs(res_l) + np.abs(res_r)).sum() / rho_l.size)


def _has_gt(gt):
    return gt is not None and gt.count > 0


def e_supervised(rho_l, rho_r, gt_l, gt_r):
    """Masked mean L1 between inverse depth and ground-truth inverse depth, summed over views."""
    rho_l, rho_r = _checked_pair(rho_l, rho_r)
    if not (_has_gt(gt_l) or _has_gt(gt_r)):
        raise DegenerateInputError("supervised term undefined: no ground truth on either view")
    total = 0.0
    for rho, gt in ((rho_l, gt_l), (rho_r, gt_r)):
        if not _has_gt(gt):
            continue
        if gt.shape != rho.shape:
            raise ShapeError("ground truth shape does not match inverse depth")
        total += float(np.abs(rho[gt.mask] - 1.0 / gt.depth[gt.mask]).sum() / gt.count)
    return total


def edge_weights(image):
    """``exp(-|grad I|)`` along x and y, gradient magnitude averaged over channels."""
    img = np.asarray(image, dtype=np.float64)
    gx = np.abs(np.stack([grad_x(img[:, :, c]) for c in range(img.shape[2])])).mean(axis=0)
    gy = np.abs(np.stack([grad_y(img[:, :, c]) for c in range(img.shape[2])])).mean(axis=0)
    return np.exp(-gx), np.exp(-gy)


def e_smooth(rho, image, _weights=None):
    """Edge-aware L1 smoothness of one view's inverse depth."""
    rho = as_scalar(rho, "rho")
    image = as_image(image)
    check_same_hw(rho, image, "e_smooth")
    wx, wy = _weights or edge_weights(image)
    return float((np.abs(grad_x(rho)) * wx + np.abs(grad_y(rho)) * wy).sum() / rho.size)


def scale_loss(sample, rho_l, rho_r, weights, scale, _reconstruction=None):
    """Weighted loss at one pyramid level, with its unweighted terms."""
    rho_l, rho_r = _checked_pair(rho_l, rho_r)
    img_l, img_r = sample.images_at(scale)
    check_same_hw(img_l, rho_l, f"scale {scale}")
    st = stencils(rho_l, rho_r, sample.rig, scale)
    rec = _reconstruction
    if rec is None:
        rec = e_reconstruction(sample, rho_l, rho_r, weights, scale, _stencils=st)
    lr = e_lr(rho_l, rho_r, sample.rig, scale, _stencils=st)
    sup = 0.0
    if scale == 1 and (_has_gt(sample.gt_left) or _has_gt(sample.gt_right)):
        sup = e_supervised(rho_l, rho_r, sample.gt_left, sample.gt_right)
    smooth = e_smooth(rho_l, img_l) + e_smooth(rho_r, img_r)
    total = (
        weights.lambda1 * rec
        + weights.lambda2 * lr
        + weights.lambda3 * sup
        + weights.lambda4 * smooth
    )
    return ScaleTerms(scale, rec, lr, sup, smooth, total)


def total_loss(sample, rho_pyramid_l, rho_pyramid_r, weights):
    """Sum of :func:`scale_loss` over the four pyramid levels."""
    if len(rho_pyramid_l) != N_SCALES or len(rho_pyramid_r) != N_SCALES:
        raise ShapeError(f"inverse-depth pyramids must have {N_SCALES} levels")
    scales = [
        scale_loss(sample, rho_pyramid_l[s - 1], rho_pyramid_r[s - 1], weights, s)
        for s in range(1, N_SCALES + 1)
    ]
    return LossBreakdown(
        reconstruction=sum(t.reconstruction for t in scales),
        lr=sum(t.lr for t in scales),
        supervised=sum(t.supervised for t in scales),
        smooth=sum(t.smooth for t in scales),
        total=sum(t.total for t in scales),
        per_scale=[t.total for t in scales],
        scales=scales,
    )
