"""Image and depth file formats: 8-bit PNG, PFM, 16-bit depth PNG."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError


def read_png(path):
    """Load an 8-bit PNG as a float image in [0, 1] with shape (H, W, C)."""
    img = Image.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def write_png(path, image):
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    data = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path)


def write_pfm(path, data):
    """Write a float field as little-endian PFM (scale -1.0), bottom row first."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        header = "Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = "PF"
    else:
        raise FormatError(f"PFM supports 1 or 3 channels, got shape {arr.shape}")
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"{header}\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.flipud(arr).astype("<f4").tobytes())


def read_pfm(path):
    """Read a PFM file; returns (H, W) or (H, W, 3) float64."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        header, dims, scale, body = raw.split(b"\n", 3)
        w, h = (int(v) for v in dims.split())
        scale = float(scale)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PFM header") from exc
    if header == b"PF":
        channels = 3
    elif header == b"Pf":
        channels = 1
    else:
        raise FormatError(f"{path}: not a PFM file")
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    if len(body) < 4 * count:
        raise FormatError(f"{path}: truncated PFM payload")
    arr = np.frombuffer(body[: 4 * count], dtype=dtype).astype(np.float64)
    arr = arr.reshape((h, w, channels) if channels == 3 else (h, w))
    return np.flipud(arr).copy()


def read_depth(path):
    """Load a depth map in meters from a 16-bit PNG (/256) or a PFM file."""
    from .lidar import decode_depth_png

    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return read_pfm(path)
    samples = np.asarray(Image.open(path), dtype=np.uint16)
    return decode_depth_png(samples).depth


def write_depth_png(path, depth_map):
    from .lidar import encode_depth_png

    samples = encode_depth_png(depth_map)
    Image.fromarray(samples.astype(np.uint16)).save(path)


