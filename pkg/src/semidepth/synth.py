"""Deterministic synthetic stereo scenes with exact ground truth.

A scene is a stack of textured planar patches described in the left camera:
each patch covers an axis-aligned image region and has inverse depth that is
affine in the image row (fronto-parallel when top and bottom depths agree,
otherwise tilted about the horizontal axis, e.g. a ground plane).  Because
disparity then depends on the row only, the right view of every patch is an
exact per-row shift of its left view, and the nearest patch wins at each pixel.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .core import CameraRig, SparseDepthMap
from .errors import ConfigError
from .lidar import PointCloud
from .sampler import WarpDirection, warp_horizontal

MIN_DEPTH, MAX_DEPTH = 1.0, 80.0


@dataclass(frozen=True)
class Texture:
    contrast: float = 0.8
    mean: float = 0.5
    cells: tuple = (16.0, 8.0, 4.0)
    tint: tuple = (1.0, 1.0, 1.0)

    def to_dict(self):
        return {"contrast": self.contrast, "mean": self.mean, "cells": list(self.cells), "tint": list(self.tint)}


@dataclass(frozen=True)
class Surface:
    """Planar patch over ``[x0, x1) x [y0, y1)`` (left-image pixel coordinates)."""

    region: tuple
    depth_top: float
    depth_bottom: float = None
    texture: Texture = field(default_factory=Texture)

    def __post_init__(self):
        if self.depth_bottom is None:
            object.__setattr__(self, "depth_bottom", self.depth_top)
        object.__setattr__(self, "region", tuple(float(v) for v in self.region))

    def inverse_depth(self, y):
        x0, y0, x1, y1 = self.region
        a, b = 1.0 / self.depth_top, 1.0 / self.depth_bottom
        frac = (np.asarray(y, dtype=np.float64) - y0) / max(y1 - y0, 1e-12)
        return a + (b - a) * frac

    def row_coefficients(self):
        """``(a, b)`` with inverse depth ``a + b * y`` in image rows."""
        x0, y0, x1, y1 = self.region
        slope = (1.0 / self.depth_bottom - 1.0 / self.depth_top) / max(y1 - y0, 1e-12)
        return 1.0 / self.depth_top - slope * y0, slope

    def to_dict(self):
        return {
            "region": list(self.region),
            "depth_top": self.depth_top,
            "depth_bottom": self.depth_bottom,
            "texture": self.texture.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        tex = d.get("texture", {})
        tex = Texture(
            contrast=tex.get("contrast", 0.8),
            mean=tex.get("mean", 0.5),
            cells=tuple(tex.get("cells", (16.0, 8.0, 4.0))),
            tint=tuple(tex.get("tint", (1.0, 1.0, 1.0))),
        )
        return cls(tuple(d["region"]), d["depth_top"], d.get("depth_bottom"), tex)


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    rig: CameraRig
    layout: tuple
    seed: int = 0
    channels: int = 3
    lidar_lines: int = 16
    lidar_columns_per_px: float = 1.0
    gt_coverage: str = "full"

    def validate(self):
        if self.rig.width != self.width or self.rig.height != self.height:
            raise ConfigError("rig image size must match the scene size")
        if self.channels not in (1, 3):
            raise ConfigError("channels must be 1 or 3")
        if not self.layout:
            raise ConfigError("layout must contain at least one surface")
        if self.gt_coverage not in ("full", "bottom_half", "top_half", "none"):
            raise ConfigError(f"unknown gt_coverage {self.gt_coverage!r}")
        if self.lidar_lines < 1:
            raise ConfigError("lidar_lines must be >= 1")
        for s in self.layout:
            x0, y0, x1, y1 = s.region
            if not (x0 < x1 and y0 < y1):
                raise ConfigError(f"empty region {s.region}")
            if x1 <= -0.5 or y1 <= -0.5 or x0 >= self.width - 0.5 or y0 >= self.height - 0.5:
                raise ConfigError(f"region {s.region} lies outside the frame")
            for z in (s.depth_top, s.depth_bottom):
                if not (MIN_DEPTH < z <= MAX_DEPTH):
                    raise ConfigError(f"surface depth {z} outside ({MIN_DEPTH}, {MAX_DEPTH}]")
        return self

    def to_dict(self):
        return {
            "width": self.width,
            "height": self.height,
            "rig": self.rig.to_dict(),
            "layout": [s.to_dict() for s in self.layout],
            "seed": self.seed,
            "channels": self.channels,
            "lidar_lines": self.lidar_lines,
            "lidar_columns_per_px": self.lidar_columns_per_px,
            "gt_coverage": self.gt_coverage,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            width=int(d["width"]),
            height=int(d["height"]),
            rig=CameraRig.from_dict(d["rig"]),
            layout=tuple(Surface.from_dict(s) for s in d["layout"]),
            seed=int(d.get("seed", 0)),
            channels=int(d.get("channels", 3)),
            lidar_lines=int(d.get("lidar_lines", 16)),
            lidar_columns_per_px=float(d.get("lidar_columns_per_px", 1.0)),
            gt_coverage=d.get("gt_coverage", "full"),
        )


def default_rig(width=128, height=64):
    # focal length scales with width (about a 65 degree field of view); the LiDAR
    # sits to the right of and below the left camera
    return CameraRig(
        focal_px=0.78125 * width,
        baseline_m=0.54,
        width=width,
        height=height,
        lidar_offset=(0.5, 0.15, 0.0),
    )


def default_scene_spec(width=128, height=64, seed=0, **overrides):
    """Two boxes standing on a ground plane in front of a far wall."""
    rig = overrides.pop("rig", None) or default_rig(width, height)
    sx, sy = width / 128.0, height / 64.0
    cam_height = 1.65
    f, horizon = rig.focal_px, rig.cy

    def ground_row(z):
        return horizon + f * cam_height / z

    def ground_depth(y):
        return f * cam_height / (y - horizon)

    ground_top = horizon + 0.1 * height
    # full-width surfaces extend past the right edge: the right camera sees further right
    far_right = 1.5 * width
    bottom = height - 0.5
    layout = (
        Surface((-0.5, -0.5, far_right, bottom), 40.0, texture=Texture(0.7, 0.55, (16.0, 8.0, 4.0), (0.9, 1.0, 1.1))),
        Surface(
            (-0.5, ground_top, far_right, bottom),
            ground_depth(ground_top),
            ground_depth(bottom),
            Texture(0.8, 0.45, (12.0, 6.0, 4.0), (1.1, 1.0, 0.85)),
        ),
        Surface((18 * sx, 28 * sy, 40 * sx, ground_row(8.0)), 8.0, texture=Texture(0.9, 0.5, (10.0, 5.0, 4.0), (1.15, 0.9, 0.9))),
        Surface((82 * sx, 31 * sy, 98 * sx, ground_row(14.0)), 14.0, texture=Texture(0.9, 0.5, (10.0, 5.0, 4.0), (0.85, 1.0, 1.2))),
    )
    kw = dict(width=width, height=height, rig=rig, layout=layout, seed=seed, lidar_lines=14)
    kw.update(overrides)
    return SceneSpec(**kw).validate()


def plane_scene_spec(depth, width=64, height=32, seed=0, baseline_m=0.54, texture=None):
    """A single textured fronto-parallel plane filling both views."""
    rig = CameraRig(0.78125 * width, baseline_m, width, height, (0.0, 0.0, 0.0))
    texture = texture or Texture(cells=(24.0, 12.0))
    surf = Surface((-0.5, -0.5, 2.0 * width, height - 0.5), depth, texture=texture)
    return SceneSpec(width, height, rig, (surf,), seed=seed).validate()


# -- procedural texture ------------------------------------------------------

class _ValueNoise:
    """Sum of smoothstep-interpolated random lattices, one per octave.

    A shared luminance lattice carries most of the contrast; a weaker
    per-channel lattice adds colour variation.
    """

    chroma = 0.35

    def __init__(self, rng, texture, extent, channels):
        self.texture = texture
        self.channels = channels
        self.lattices = []
        w, h = extent
        for cell in texture.cells:
            nx = int(np.ceil(w / cell)) + 3
            ny = int(np.ceil(h / cell)) + 3
            lum = rng.random((ny, nx, 1)) - 0.5
            col = rng.random((ny, nx, channels)) - 0.5 if channels > 1 else np.zeros((ny, nx, 1))
            self.lattices.append((cell, lum + self.chroma * col))
        self.weights = np.array([0.5**k for k in range(len(texture.cells))])
        self.weights /= self.weights.sum()

    def __call__(self, u, v):
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        acc = np.zeros(u.shape + (self.channels,))
        for wgt, (cell, lat) in zip(self.weights, self.lattices):
            gx = u / cell + 1.0
            gy = v / cell + 1.0
            ix = np.clip(np.floor(gx).astype(np.intp), 0, lat.shape[1] - 2)
            iy = np.clip(np.floor(gy).astype(np.intp), 0, lat.shape[0] - 2)
            fx = gx - ix
            fy = gy - iy
            sx = (fx * fx * (3 - 2 * fx))[..., None]
            sy = (fy * fy * (3 - 2 * fy))[..., None]
            top = (1 - sx) * lat[iy, ix] + sx * lat[iy, ix + 1]
            bot = (1 - sx) * lat[iy + 1, ix] + sx * lat[iy + 1, ix + 1]
            acc += wgt * ((1 - sy) * top + sy * bot)
        tint = np.asarray(self.texture.tint if self.channels == 3 else (1.0,))
        img = self.texture.mean * tint + 1.6 * self.texture.contrast * acc
        return np.clip(img, 0.0, 1.0)


@dataclass
class SynthScene:
    spec: SceneSpec
    left: np.ndarray
    right: np.ndarray
    true_depth_l: np.ndarray
    true_depth_r: np.ndarray
    surface_l: np.ndarray
    surface_r: np.ndarray
    visible_l: np.ndarray
    visible_r: np.ndarray
    gt_clean: SparseDepthMap
    gt_raw: SparseDepthMap
    artifact_labels: np.ndarray
    gt_clean_r: SparseDepthMap
    gt_raw_r: SparseDepthMap
    artifact_labels_r: np.ndarray
    cloud: PointCloud

    @property
    def rig(self):
        return self.spec.rig

    def true_disparity_l(self):
        return self.rig.baseline_m * self.rig.focal_px / self.true_depth_l

    def true_disparity_r(self):
        return self.rig.baseline_m * self.rig.focal_px / self.true_depth_r

    def textured_l(self, min_contrast=0.05):
        tex = np.array([s.texture.contrast for s in self.spec.layout])
        return tex[self.surface_l] >= min_contrast

    def hashes(self):
        def h(a):
            return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()

        return {
            "left": h(self.left),
            "right": h(self.right),
            "true_depth_l": h(self.true_depth_l),
            "true_depth_r": h(self.true_depth_r),
            "gt_clean": h(self.gt_clean.depth),
            "gt_raw": h(self.gt_raw.depth),
            "artifact_labels": h(self.artifact_labels),
            "cloud": h(self.cloud.points),
        }


def _front_surface(layout, bf, xs, ys, view):
    """Index and inverse depth of the nearest surface covering each (x, y) of a view.

    ``view`` is "left" or "right"; right-view coordinates are shifted to the
    left-image column ``x + d`` of each surface before the coverage test.
    """
    best = np.full(np.shape(xs), -1, dtype=np.intp)
    best_rho = np.full(np.shape(xs), -np.inf)
    for k, s in enumerate(layout):
        rho = s.inverse_depth(ys)
        xl = xs + bf * rho if view == "right" else xs
        x0, y0, x1, y1 = s.region
        cover = (xl >= x0) & (xl < x1) & (ys >= y0) & (ys < y1) & (rho > best_rho)
        best = np.where(cover, k, best)
        best_rho = np.where(cover, rho, best_rho)
    return best, best_rho


def _render(layout, noises, bf, xs, ys, view, channels):
    sid, rho = _front_surface(layout, bf, xs, ys, view)
    if np.any(sid < 0):
        raise ConfigError("layout leaves pixels uncovered; add a background surface")
    img = np.zeros(xs.shape + (channels,))
    for k in range(len(layout)):
        sel = sid == k
        if not np.any(sel):
            continue
        u = xs[sel] + (bf * rho[sel] if view == "right" else 0.0)
        img[sel] = noises[k](u + 0.5, ys[sel] + 0.5)
    return img, sid, rho


def _visibility(layout, bf, sid, rho, xs, ys, view, width):
    """True where the pixel's surface point is seen by the other camera without mixing."""
    d = bf * rho
    xo = xs - d if view == "left" else xs + d
    other = "right" if view == "left" else "left"
    inside = (xo >= 0) & (xo <= width - 1)
    xo_c = np.clip(xo, 0, width - 1)
    lo, _ = _front_surface(layout, bf, np.floor(xo_c), ys, other)
    hi, _ = _front_surface(layout, bf, np.ceil(xo_c), ys, other)
    return inside & (lo == sid) & (hi == sid)


def _lidar_rays(spec, rng):
    rig = spec.rig
    spacing = (spec.height - 1) / (spec.lidar_lines + 1)
    # a fixed sub-row offset keeps scan lines off half-integer rows, where pixel rounding is ambiguous
    rows = spacing * np.arange(1, spec.lidar_lines + 1) + 0.3
    n_cols = int(round(spec.width * spec.lidar_columns_per_px))
    cols = (np.arange(n_cols) + 0.5) / spec.lidar_columns_per_px - 0.5
    yy, xx = np.meshgrid(rows, cols, indexing="ij")
    xx = xx + rng.uniform(-0.25, 0.25, xx.shape) / spec.lidar_columns_per_px
    dirs = np.stack([(xx - rig.cx) / rig.focal_px, (yy - rig.cy) / rig.focal_px, np.ones_like(xx)], axis=-1)
    return dirs.reshape(-1, 3)


def _cast(layout, rig, origin, dirs):
    """First-hit points (camera frame) and surface ids for rays from ``origin``."""
    best_t = np.full(len(dirs), np.inf)
    best_id = np.full(len(dirs), -1, dtype=np.intp)
    for k, s in enumerate(layout):
        a, b = s.row_coefficients()
        # inverse depth a + b*y with y = f*Y/Z + cy  <=>  n . P = 1
        n = np.array([0.0, b * rig.focal_px, a + b * rig.cy])
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (1.0 - n @ origin) / denom
        p = origin + t[:, None] * dirs
        with np.errstate(divide="ignore", invalid="ignore"):
            x = rig.focal_px * p[:, 0] / p[:, 2] + rig.cx
            y = rig.focal_px * p[:, 1] / p[:, 2] + rig.cy
        x0, y0, x1, y1 = s.region
        hit = (t > 0) & (p[:, 2] > 0) & (x >= x0) & (x < x1) & (y >= y0) & (y < y1) & (t < best_t)
        best_t = np.where(hit, t, best_t)
        best_id = np.where(hit, k, best_id)
    ok = best_id >= 0
    pts = origin + best_t[ok, None] * dirs[ok]
    return pts, best_id[ok]


def _lidar_ground_truth(spec, pts_cam, hit_ids, camera_x, sid_view, depth_view):
    """Split projected LiDAR returns into clean and occlusion-artifact pixels for one camera."""
    rig = spec.rig
    rel = pts_cam - np.array([camera_x, 0.0, 0.0])
    h, w = spec.height, spec.width
    u = np.rint(rig.focal_px * rel[:, 0] / rel[:, 2] + rig.cx).astype(np.int64)
    v = np.rint(rig.focal_px * rel[:, 1] / rel[:, 2] + rig.cy).astype(np.int64)
    inside = (rel[:, 2] > 0) & (u >= 0) & (u < w) & (v >= 0) & (v < h)
    u, v, z, ids = u[inside], v[inside], rel[inside, 2], hit_ids[inside]
    cam_id = sid_view[v, u]
    cam_z = depth_view[v, u]
    clean_pt = ids == cam_id
    hidden_pt = (ids != cam_id) & (z > cam_z)
    clean = np.zeros((h, w), dtype=bool)
    clean[v[clean_pt], u[clean_pt]] = True
    art_depth = np.full((h, w), np.inf)
    np.minimum.at(art_depth, (v[hidden_pt], u[hidden_pt]), z[hidden_pt])
    artifacts = np.isfinite(art_depth) & ~clean
    gt_clean = SparseDepthMap(np.where(clean, depth_view, 0.0), clean)
    raw_depth = np.where(clean, depth_view, np.where(artifacts, art_depth, 0.0))
    gt_raw = SparseDepthMap(raw_depth, clean | artifacts)
    return gt_clean, gt_raw, artifacts


def _coverage_mask(spec, shape):
    h, w = shape
    mask = np.ones(shape, dtype=bool)
    if spec.gt_coverage == "bottom_half":
        mask[: h // 2] = False
    elif spec.gt_coverage == "top_half":
        mask[h // 2 :] = False
    elif spec.gt_coverage == "none":
        mask[:] = False
    return mask


def restrict(gt, mask):
    keep = gt.mask & mask
    return SparseDepthMap(np.where(keep, gt.depth, 0.0), keep)


def make_scene(spec):
    """Render both views, exact depths and simulated LiDAR ground truth for ``spec``."""
    spec.validate()
    rig = spec.rig
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    bf = rig.baseline_m * rig.focal_px
    extent = (w + bf + 4 * max(max(s.texture.cells) for s in spec.layout), h + 2)
    noises = [_ValueNoise(rng, s.texture, extent, spec.channels) for s in spec.layout]
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    left, sid_l, rho_l = _render(spec.layout, noises, bf, xs, ys, "left", spec.channels)
    right, sid_r, rho_r = _render(spec.layout, noises, bf, xs, ys, "right", spec.channels)
    depth_l, depth_r = 1.0 / rho_l, 1.0 / rho_r
    vis_l = _visibility(spec.layout, bf, sid_l, rho_l, xs, ys, "left", w)
    vis_r = _visibility(spec.layout, bf, sid_r, rho_r, xs, ys, "right", w)

    origin = np.asarray(rig.lidar_offset, dtype=np.float64)
    pts_cam, hit_ids = _cast(spec.layout, rig, origin, _lidar_rays(spec, rng))
    reflect = rng.random(len(pts_cam))
    cloud = PointCloud(np.column_stack([pts_cam - origin, reflect]))

    cover = _coverage_mask(spec, (h, w))
    clean_l, raw_l, art_l = _lidar_ground_truth(spec, pts_cam, hit_ids, 0.0, sid_l, depth_l)
    clean_r, raw_r, art_r = _lidar_ground_truth(spec, pts_cam, hit_ids, rig.baseline_m, sid_r, depth_r)
    return SynthScene(
        spec=spec,
        left=left,
        right=right,
        true_depth_l=depth_l,
        true_depth_r=depth_r,
        surface_l=sid_l,
        surface_r=sid_r,
        visible_l=vis_l,
        visible_r=vis_r,
        gt_clean=restrict(clean_l, cover),
        gt_raw=restrict(raw_l, cover),
        artifact_labels=art_l & cover,
        gt_clean_r=restrict(clean_r, cover),
        gt_raw_r=restrict(raw_r, cover),
        artifact_labels_r=art_r & cover,
        cloud=cloud,
    )


def reproject_check(scene, mask_occluded=True):
    """Mean L1 between the left view and the right view warped by the true disparity."""
    warped = warp_horizontal(scene.right, scene.true_disparity_l(), WarpDirection.RECONSTRUCT_LEFT_FROM_RIGHT)
    err = np.abs(warped - scene.left).mean(axis=2)
    if mask_occluded:
        err = err[scene.visible_l]
    return float(err.mean()) if err.size else 0.0
