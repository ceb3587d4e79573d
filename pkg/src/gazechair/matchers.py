"""Template-matching gaze estimators.

Three variants: whole-image raw correlation over four class templates,
sliding pupil localization with zero-mean normalized correlation, and
correlation of local-binary-pattern codes. Raw correlation keeps exact
integer arithmetic on 8-bit inputs; normalized correlation is used only
for localization, where a raw score would peak on bright regions instead
of the pupil.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .corpus import GAZE_CLASSES, EyeFrame, GazeClass
from .preprocess import hist_equalize, to_grayscale


@dataclass
class MatchResult:
    gaze: GazeClass | None = None
    location: tuple | None = None  # (x, y) top-left placement, image coords
    score: float = 0.0


def _as_gray(img) -> np.ndarray:
    if isinstance(img, EyeFrame):
        return to_grayscale(img)
    a = np.asarray(img)
    if a.ndim == 3:
        return to_grayscale(a)
    return a


def correlate_at(template: np.ndarray, search: np.ndarray, x: int, y: int) -> float:
    """Raw correlation of ``template`` placed at (x, y) inside ``search``:
    R(x, y) = sum T(x', y') * S(x + x', y + y')."""
    t = np.asarray(template)
    s = np.asarray(search)
    th, tw = t.shape
    sh, sw = s.shape
    if x < 0 or y < 0 or x + tw > sw or y + th > sh:
        raise ValueError(f"placement ({x}, {y}) puts {tw}x{th} template outside {sw}x{sh} image")
    win = s[y:y + th, x:x + tw]
    if np.issubdtype(t.dtype, np.integer) and np.issubdtype(s.dtype, np.integer):
        return int(np.multiply(t.astype(np.int64), win.astype(np.int64)).sum())
    return float((t.astype(np.float64) * win.astype(np.float64)).sum())


class TemplateSet:
    """One whole-image search template per class, equalized at construction
    (pass equalize=False when loading already-equalized files)."""

    def __init__(self, images: dict, equalize: bool = True):
        if set(images) != set(GAZE_CLASSES):
            missing = [g.name for g in GAZE_CLASSES if g not in images]
            raise ValueError(f"template set needs all four classes, missing {missing}")
        self.images = {}
        shape = None
        for g in GAZE_CLASSES:
            img = _as_gray(images[g])
            if shape is None:
                shape = img.shape
            elif img.shape != shape:
                raise ValueError("whole-image templates must share one resolution")
            self.images[g] = hist_equalize(img) if equalize else img.astype(np.uint8)
        self.shape = shape

    def save(self, path) -> None:
        d = Path(path)
        d.mkdir(parents=True, exist_ok=True)
        for g, img in self.images.items():
            Image.fromarray(img, mode="L").save(d / f"{g.dirname}.png")

    @classmethod
    def load(cls, path) -> "TemplateSet":
        d = Path(path)
        images = {}
        for g in GAZE_CLASSES:
            f = d / f"{g.dirname}.png"
            if not f.exists():
                raise FileNotFoundError(f"missing template file: {f}")
            with Image.open(f) as im:
                images[g] = np.asarray(im.convert("L"), dtype=np.uint8)
        return cls(images, equalize=False)


def whole_scores(templates: TemplateSet, frame: np.ndarray) -> np.ndarray:
    """Full-overlap correlation against each class template, canonical order."""
    f = _as_gray(frame)
    if f.shape != templates.shape:
        raise ValueError(f"frame resolution {f.shape} != template resolution {templates.shape}")
    return np.array([correlate_at(templates.images[g], f, 0, 0) for g in GAZE_CLASSES],
                    dtype=np.float64)


def classify_whole(templates: TemplateSet, frame: np.ndarray) -> MatchResult:
    """Pick the class template with the highest full-overlap correlation.

    ``frame`` must already be histogram-equalized and match the template
    resolution. Ties break to the lower class in canonical order.
    """
    scores = whole_scores(templates, frame)
    best = int(np.argmax(scores))
    return MatchResult(gaze=GazeClass(best), score=float(scores[best]))


def locate_pupil(pupil: np.ndarray, frame: np.ndarray) -> MatchResult:
    """Exhaustive sliding search for the pupil patch.

    Scores are zero-mean normalized correlation in [-1, 1]; zero-variance
    windows score 0. Ties break to the smallest y, then smallest x.
    """
    p = _as_gray(pupil).astype(np.float64)
    f = _as_gray(frame).astype(np.float64)
    ph, pw = p.shape
    fh, fw = f.shape
    if ph >= fh or pw >= fw:
        raise ValueError(f"pupil patch {pw}x{ph} must be strictly smaller than frame {fw}x{fh}")
    scores = kernels.zncc_sliding(f, p)
    flat = int(np.argmax(scores))
    y, x = divmod(flat, scores.shape[1])
    return MatchResult(location=(x, y), score=float(scores[y, x]))


def pupil_class(result: MatchResult, frame_width: int, min_score: float = 0.5,
                pupil_width: int = 0, mirror: bool = False) -> GazeClass:
    """Map a localization result to a gaze class.

    Scores below ``min_score`` mean no pupil was found (eye closed);
    otherwise the pupil x-center lands in the left/middle/right third of
    the frame, in image coordinates. ``mirror`` flips left/right for the
    anatomical frame.
    """
    if result.score < min_score:
        return GazeClass.CLOSED
    x_center = result.location[0] + pupil_width / 2.0
    third = frame_width / 3.0
    if x_center < third:
        g = GazeClass.LEFT
    elif x_center < 2.0 * third:
        g = GazeClass.FORWARD
    else:
        g = GazeClass.RIGHT
    if mirror and g in (GazeClass.LEFT, GazeClass.RIGHT):
        g = GazeClass.RIGHT if g == GazeClass.LEFT else GazeClass.LEFT
    return g


def extract_pupil_patch(frame, patch_size: int = 17) -> np.ndarray:
    """Cut a square patch around the darkest-disc centroid of a (forward
    gazing) frame; used to build the pupil template during calibration."""
    g = _as_gray(frame)
    lo, hi = int(g.min()), int(g.max())
    dark = g <= lo + max(2, (hi - lo) // 8)
    ys, xs = np.nonzero(dark)
    cy = int(np.floor(ys.mean() + 0.5))
    cx = int(np.floor(xs.mean() + 0.5))
    half = patch_size // 2
    y0 = min(max(cy - half, 0), g.shape[0] - patch_size)
    x0 = min(max(cx - half, 0), g.shape[1] - patch_size)
    return g[y0:y0 + patch_size, x0:x0 + patch_size].copy()


class PupilTemplate:
    """Single pupil patch for the sliding-localization matcher."""

    def __init__(self, patch: np.ndarray):
        self.patch = _as_gray(patch).astype(np.uint8)

    def save(self, path) -> None:
        d = Path(path)
        d.mkdir(parents=True, exist_ok=True)
        Image.fromarray(self.patch, mode="L").save(d / "pupil.png")

    @classmethod
    def load(cls, path) -> "PupilTemplate":
        f = Path(path) / "pupil.png"
        if not f.exists():
            raise FileNotFoundError(f"missing template file: {f}")
        with Image.open(f) as im:
            return cls(np.asarray(im.convert("L"), dtype=np.uint8))


def lbp_transform(img: np.ndarray) -> np.ndarray:
    """8-neighbor local binary pattern codes, MSB-first clockwise from the
    top-left neighbor; output shrinks by 2 in each axis."""
    g = _as_gray(img)
    if g.shape[0] < 3 or g.shape[1] < 3:
        raise ValueError(f"image {g.shape} too small for 3x3 cells")
    return kernels.lbp_codes(g)


class LbpTemplateSet:
    """Per-class LBP code images computed from raw (non-equalized) gray
    templates; correlation then happens in code space."""

    def __init__(self, images: dict):
        if set(images) != set(GAZE_CLASSES):
            missing = [g.name for g in GAZE_CLASSES if g not in images]
            raise ValueError(f"template set needs all four classes, missing {missing}")
        self.raw = {}
        self.codes = {}
        shape = None
        for g in GAZE_CLASSES:
            img = _as_gray(images[g])
            if shape is None:
                shape = img.shape
            elif img.shape != shape:
                raise ValueError("LBP templates must share one resolution")
            self.raw[g] = img.astype(np.uint8)
            self.codes[g] = lbp_transform(img)
        self.shape = shape

    def save(self, path) -> None:
        d = Path(path)
        d.mkdir(parents=True, exist_ok=True)
        for g, img in self.raw.items():
            Image.fromarray(img, mode="L").save(d / f"{g.dirname}.png")

    @classmethod
    def load(cls, path) -> "LbpTemplateSet":
        d = Path(path)
        images = {}
        for g in GAZE_CLASSES:
            f = d / f"{g.dirname}.png"
            if not f.exists():
                raise FileNotFoundError(f"missing template file: {f}")
            with Image.open(f) as im:
                images[g] = np.asarray(im.convert("L"), dtype=np.uint8)
        return cls(images)


def lbp_scores(templates: LbpTemplateSet, frame: np.ndarray) -> np.ndarray:
    """Correlation of LBP codes against each class template, canonical order."""
    f = _as_gray(frame)
    if f.shape != templates.shape:
        raise ValueError(f"frame resolution {f.shape} != template resolution {templates.shape}")
    codes = lbp_transform(f)
    return np.array([correlate_at(templates.codes[g], codes, 0, 0) for g in GAZE_CLASSES],
                    dtype=np.float64)


def classify_lbp(templates: LbpTemplateSet, frame: np.ndarray) -> MatchResult:
    """Whole-image correlation between LBP codes of frame and templates;
    no histogram equalization anywhere on this path."""
    scores = lbp_scores(templates, frame)
    best = int(np.argmax(scores))
    return MatchResult(gaze=GazeClass(best), score=float(scores[best]))
