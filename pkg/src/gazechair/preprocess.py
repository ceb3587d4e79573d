"""Image preprocessing: grayscale, 64x64 decimation, histogram
equalization, and per-image zero-center/unit-variance normalization.

Gray images are (H, W) uint8 arrays; normalized images are float64 arrays
of the same layout as their input (2-D for gray, 3-D for RGB).
"""

from __future__ import annotations

import numpy as np

from .corpus import EyeFrame

TARGET_SIZE = (64, 64)  # (height, width)
SIGMA_FLOOR = 1e-6


def to_grayscale(frame) -> np.ndarray:
    """Luma conversion: round(0.299 R + 0.587 G + 0.114 B) per pixel."""
    pixels = frame.pixels if isinstance(frame, EyeFrame) else np.asarray(frame)
    if pixels.ndim == 2:
        return pixels.astype(np.uint8)
    luma = (0.299 * pixels[..., 0].astype(np.float64)
            + 0.587 * pixels[..., 1]
            + 0.114 * pixels[..., 2])
    return np.floor(luma + 0.5).astype(np.uint8)


def _box_weights(src: int, dst: int) -> np.ndarray:
    """Row-normalized overlap weights of dst pixels against src pixels for
    exact area-averaged resampling along one axis."""
    w = np.zeros((dst, src), dtype=np.float64)
    scale = src / dst
    for i in range(dst):
        lo = i * scale
        hi = (i + 1) * scale
        j0 = int(np.floor(lo))
        j1 = min(int(np.ceil(hi)), src)
        for j in range(j0, j1):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / scale


def decimate(frame, target=TARGET_SIZE):
    """Area-averaged resampling to ``target`` (identity when already there).

    Accepts an EyeFrame (returns an EyeFrame) or a bare 2-D/3-D array.
    """
    if isinstance(frame, EyeFrame):
        out = decimate(frame.pixels, target)
        return EyeFrame(pixels=out, eye_side=frame.eye_side,
                        frame_index=frame.frame_index)
    pixels = np.asarray(frame)
    th, tw = target
    h, w = pixels.shape[:2]
    if (h, w) == (th, tw):
        return pixels.copy()
    wy = _box_weights(h, th)
    wx = _box_weights(w, tw)
    img = pixels.astype(np.float64)
    if img.ndim == 2:
        out = wy @ img @ wx.T
    else:
        out = np.einsum("ij,jkc,lk->ilc", wy, img, wx, optimize=True)
    if np.issubdtype(pixels.dtype, np.integer):
        return np.floor(out + 0.5).clip(0, 255).astype(pixels.dtype)
    return out


def hist_equalize(img: np.ndarray) -> np.ndarray:
    """Map intensities toward a uniform distribution:
    h(v) = round((cdf(v) - cdf_min) / (N - cdf_min) * 255).

    A constant image (cdf_min == N) is returned unchanged.
    """
    a = np.asarray(img)
    if a.size == 0:
        raise ValueError("empty image")
    hist = np.bincount(a.astype(np.uint8).ravel(), minlength=256)
    cdf = np.cumsum(hist)
    n = a.size
    cdf_min = int(cdf[np.nonzero(hist)[0][0]])
    if cdf_min == n:
        return a.astype(np.uint8).copy()
    lut = np.floor((cdf - cdf_min) / (n - cdf_min) * 255.0 + 0.5)
    lut = lut.clip(0, 255).astype(np.uint8)
    return lut[a.astype(np.uint8)]


def normalize(img) -> np.ndarray:
    """Zero-center by the per-image scalar mean and divide by the per-image
    population standard deviation (floored at 1e-6, so constant images map
    to all zeros)."""
    if isinstance(img, EyeFrame):
        img = img.pixels
    a = np.asarray(img, dtype=np.float64)
    if a.size == 0:
        raise ValueError("empty image")
    mean = a.mean()
    sigma = a.std()
    return (a - mean) / max(sigma, SIGMA_FLOOR)
