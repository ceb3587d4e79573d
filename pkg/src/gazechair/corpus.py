"""Dataset model, synthetic eye-image generator, splitting, and disk layout.

The on-disk corpus layout is ``<user>/<scenario>/<class>/frame_<NNNN>.png``
with lossless 8-bit RGB files and lowercase class directory names
(``right``, ``forward``, ``left``, ``closed``). The layout carries no eye
side, so loaded frames default to the right eye.

The generator renders a sclera ellipse, an iris disc with a darker
concentric pupil displaced horizontally, and an eyelid occlusion band, so
every frame has a ground-truthed pupil position and closure level that
tests can check classifiers against.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image


class GazeClass(enum.IntEnum):
    """Four-way gaze label; the integer value is the canonical order used
    for tie-breaking and confusion-matrix axes."""

    RIGHT = 0
    FORWARD = 1
    LEFT = 2
    CLOSED = 3

    @property
    def dirname(self) -> str:
        return self.name.lower()

    @property
    def wire_name(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_name(cls, name: str) -> "GazeClass":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown gaze class {name!r}") from None


GAZE_CLASSES = tuple(GazeClass)


@dataclass(frozen=True)
class Scenario:
    """Acquisition condition: lighting band plus glasses placement."""

    lighting: str = "indoor"        # indoor | outdoor
    glasses_offset: str = "nominal"  # nominal | shifted

    def __post_init__(self):
        if self.lighting not in ("indoor", "outdoor"):
            raise ValueError(f"unknown lighting {self.lighting!r}")
        if self.glasses_offset not in ("nominal", "shifted"):
            raise ValueError(f"unknown glasses_offset {self.glasses_offset!r}")

    @property
    def dirname(self) -> str:
        return f"{self.lighting}_{self.glasses_offset}"

    @classmethod
    def from_dirname(cls, name: str) -> "Scenario":
        parts = name.split("_")
        if len(parts) != 2:
            raise ValueError(f"unknown scenario directory {name!r}")
        return cls(lighting=parts[0], glasses_offset=parts[1])


ALL_SCENARIOS = tuple(
    Scenario(lighting=l, glasses_offset=g)
    for l in ("indoor", "outdoor")
    for g in ("nominal", "shifted")
)


@dataclass
class EyeFrame:
    """One RGB eye image as it flows through the pipeline."""

    pixels: np.ndarray  # (H, W, 3) uint8
    eye_side: str = "right"
    frame_index: int = 0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixels, got {self.pixels.shape}")
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {self.pixels.dtype}")
        if self.height < 3 or self.width < 3:
            raise ValueError("eye frames must be at least 3x3")
        if self.eye_side not in ("left", "right"):
            raise ValueError(f"eye_side must be 'left' or 'right', got {self.eye_side!r}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class SynthParams:
    """Knobs of the synthetic renderer; validated against the class they
    claim to depict so generated labels are trustworthy."""

    gaze: GazeClass
    pupil_offset_frac: float = 0.0
    eyelid_closure_frac: float = 0.0
    brightness: float = 128.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not -0.4 <= self.pupil_offset_frac <= 0.4:
            raise ValueError("pupil_offset_frac outside [-0.4, 0.4]")
        if not 0.0 <= self.eyelid_closure_frac <= 1.0:
            raise ValueError("eyelid_closure_frac outside [0, 1]")
        if not 0.0 <= self.brightness <= 255.0:
            raise ValueError("brightness outside [0, 255]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        g = self.gaze
        if g == GazeClass.CLOSED and self.eyelid_closure_frac < 0.85:
            raise ValueError("Closed frames need eyelid_closure_frac >= 0.85")
        if g == GazeClass.FORWARD and abs(self.pupil_offset_frac) > 0.08:
            raise ValueError("Forward frames need |pupil_offset_frac| <= 0.08")
        if g == GazeClass.RIGHT and self.pupil_offset_frac < 0.2:
            raise ValueError("Right frames need pupil_offset_frac >= 0.2")
        if g == GazeClass.LEFT and self.pupil_offset_frac > -0.2:
            raise ValueError("Left frames need pupil_offset_frac <= -0.2")


@dataclass(frozen=True)
class EyeStyle:
    """Per-user rendering geometry and tint, plus the glasses shift."""

    eye_rx_frac: float = 0.45
    eye_ry_frac: float = 0.32
    iris_r_frac: float = 0.16
    pupil_r_frac: float = 0.08
    center_dx_frac: float = 0.0
    center_dy_frac: float = 0.0
    skin_tint: tuple = (1.0, 0.82, 0.72)
    iris_tint: tuple = (0.75, 0.85, 1.0)

    @classmethod
    def for_user(cls, user_seed: int) -> "EyeStyle":
        rng = np.random.default_rng(np.uint64(user_seed) ^ np.uint64(0x5EED_57E1))
        return cls(
            eye_rx_frac=rng.uniform(0.42, 0.47),
            eye_ry_frac=rng.uniform(0.28, 0.34),
            iris_r_frac=rng.uniform(0.14, 0.18),
            pupil_r_frac=rng.uniform(0.07, 0.09),
            skin_tint=(1.0, rng.uniform(0.76, 0.88), rng.uniform(0.64, 0.78)),
            iris_tint=(rng.uniform(0.6, 0.9), rng.uniform(0.7, 0.95), 1.0),
        )

    def shifted(self, dx_frac: float = 0.05, dy_frac: float = 0.04) -> "EyeStyle":
        return replace(self, center_dx_frac=self.center_dx_frac + dx_frac,
                       center_dy_frac=self.center_dy_frac + dy_frac)


def synth_eye(params: SynthParams, width: int = 64, height: int = 64,
              style: EyeStyle | None = None, eye_side: str = "right",
              frame_index: int = 0) -> EyeFrame:
    """Render one synthetic eye frame; bit-deterministic for a fixed seed."""
    st = style or EyeStyle()
    w, h = width, height
    cx = (w - 1) / 2.0 + st.center_dx_frac * w
    cy = (h - 1) / 2.0 + st.center_dy_frac * h
    rx = st.eye_rx_frac * w
    ry = st.eye_ry_frac * h
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    bright = params.brightness
    img = np.empty((h, w, 3), dtype=np.float64)
    skin = np.array(st.skin_tint) * bright * 0.80
    img[:] = skin
    eye = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    sclera = np.clip(np.array([1.0, 0.99, 0.97]) * bright * 1.15, 0, 255)
    img[eye] = sclera

    icx = cx + params.pupil_offset_frac * (2.0 * rx)
    d2 = (xx - icx) ** 2 + (yy - cy) ** 2
    iris = eye & (d2 <= (st.iris_r_frac * w) ** 2)
    img[iris] = np.array(st.iris_tint) * bright * 0.45
    pupil = eye & (d2 <= (st.pupil_r_frac * w) ** 2)
    img[pupil] = bright * 0.10

    if params.eyelid_closure_frac > 0:
        lid_edge = (cy - ry) + params.eyelid_closure_frac * (2.0 * ry)
        lid = eye & (yy <= lid_edge)
        img[lid] = skin * 0.92

    if params.noise_sigma > 0:
        rng = np.random.default_rng(params.seed)
        img = img + rng.normal(0.0, params.noise_sigma, size=img.shape)

    pixels = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
    return EyeFrame(pixels=pixels, eye_side=eye_side, frame_index=frame_index)


@dataclass
class LabeledFrame:
    frame: EyeFrame
    label: GazeClass
    scenario: Scenario = field(default_factory=Scenario)


@dataclass
class LabeledDataset:
    """Immutable-by-convention bag of labeled frames for one user."""

    items: list  # of LabeledFrame
    user_id: str = "user"

    def __len__(self) -> int:
        return len(self.items)

    @property
    def scenario_tags(self) -> list:
        seen = []
        for it in self.items:
            if it.scenario not in seen:
                seen.append(it.scenario)
        return seen

    def class_counts(self) -> dict:
        counts = {g: 0 for g in GAZE_CLASSES}
        for it in self.items:
            counts[it.label] += 1
        return counts

    def filter(self, scenario: Scenario | None = None) -> "LabeledDataset":
        items = [it for it in self.items if scenario is None or it.scenario == scenario]
        return LabeledDataset(items=items, user_id=self.user_id)


def sample_params(rng: np.random.Generator, gaze: GazeClass,
                  scenario: Scenario) -> SynthParams:
    """Draw per-frame jitter from class- and scenario-consistent ranges."""
    if gaze == GazeClass.RIGHT:
        offset = rng.uniform(0.20, 0.38)
    elif gaze == GazeClass.LEFT:
        offset = -rng.uniform(0.20, 0.38)
    elif gaze == GazeClass.FORWARD:
        offset = rng.uniform(-0.07, 0.07)
    else:
        offset = rng.uniform(-0.05, 0.05)
    if gaze == GazeClass.CLOSED:
        closure = rng.uniform(0.88, 1.0)
    elif scenario.lighting == "outdoor":
        # squinting against sunlight
        closure = rng.uniform(0.05, 0.28)
    else:
        closure = rng.uniform(0.0, 0.15)
    if scenario.lighting == "outdoor":
        brightness = rng.uniform(170.0, 210.0)
    else:
        brightness = rng.uniform(95.0, 135.0)
    return SynthParams(
        gaze=gaze,
        pupil_offset_frac=float(offset),
        eyelid_closure_frac=float(closure),
        brightness=float(brightness),
        noise_sigma=float(rng.uniform(1.0, 4.0)),
        seed=int(rng.integers(0, 2**63 - 1)),
    )


DEFAULT_CORPUS_SCENARIOS = (
    Scenario("indoor", "nominal"),
    Scenario("outdoor", "nominal"),
)


def generate_user_corpus(user_seed: int, frames_per_class: int,
                         width: int = 64, height: int = 64,
                         scenarios=DEFAULT_CORPUS_SCENARIOS,
                         eye_side: str = "right",
                         user_id: str | None = None) -> LabeledDataset:
    """Synthesize a labeled per-user corpus, spread over the scenarios."""
    if frames_per_class < 1:
        raise ValueError("frames_per_class must be >= 1")
    rng = np.random.default_rng(user_seed)
    style = EyeStyle.for_user(user_seed)
    items = []
    index = 0
    for gaze in GAZE_CLASSES:
        for i in range(frames_per_class):
            scenario = scenarios[i % len(scenarios)]
            params = sample_params(rng, gaze, scenario)
            st = style.shifted() if scenario.glasses_offset == "shifted" else style
            frame = synth_eye(params, width=width, height=height, style=st,
                              eye_side=eye_side, frame_index=index)
            items.append(LabeledFrame(frame=frame, label=gaze, scenario=scenario))
            index += 1
    return LabeledDataset(items=items, user_id=user_id or f"user_{user_seed}")


def split(dataset: LabeledDataset, train_frac: float, seed: int):
    """Stratified train/test split.

    Per class the test share is floor((1-train_frac)*count) but at least 1
    when the class has >= 2 items; singleton classes go entirely to train.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must be in (0, 1)")
    by_class = {g: [] for g in GAZE_CLASSES}
    for i, it in enumerate(dataset.items):
        by_class[it.label].append(i)
    for g, idxs in by_class.items():
        if not idxs:
            raise ValueError(f"cannot stratify: class {g.name} is empty")
    rng = np.random.default_rng(seed)
    test_idx = set()
    for g in GAZE_CLASSES:
        idxs = by_class[g]
        if len(idxs) < 2:
            continue
        n_test = max(1, math.floor((1.0 - train_frac) * len(idxs)))
        picked = rng.permutation(len(idxs))[:n_test]
        test_idx.update(idxs[p] for p in picked)
    train_items = [it for i, it in enumerate(dataset.items) if i not in test_idx]
    test_items = [it for i, it in enumerate(dataset.items) if i in test_idx]
    return (LabeledDataset(items=train_items, user_id=dataset.user_id),
            LabeledDataset(items=test_items, user_id=dataset.user_id))


def save_corpus(dataset: LabeledDataset, path) -> None:
    """Write ``<path>/<user>/<scenario>/<class>/frame_<NNNN>.png``."""
    root = Path(path)
    for it in dataset.items:
        d = root / dataset.user_id / it.scenario.dirname / it.label.dirname
        d.mkdir(parents=True, exist_ok=True)
        Image.fromarray(it.frame.pixels, mode="RGB").save(
            d / f"frame_{it.frame.frame_index:04d}.png"
        )


def _load_user_dir(user_dir: Path) -> LabeledDataset:
    class_names = {g.dirname: g for g in GAZE_CLASSES}
    items = []
    for scen_dir in sorted(p for p in user_dir.iterdir() if p.is_dir()):
        scenario = Scenario.from_dirname(scen_dir.name)
        for class_dir in sorted(p for p in scen_dir.iterdir() if p.is_dir()):
            if class_dir.name not in class_names:
                raise ValueError(f"unknown class directory: {class_dir}")
            label = class_names[class_dir.name]
            for png in sorted(class_dir.glob("*.png")):
                try:
                    with Image.open(png) as im:
                        pixels = np.asarray(im.convert("RGB"), dtype=np.uint8)
                except Exception as exc:
                    raise ValueError(f"corrupt image file: {png}") from exc
                stem = png.stem
                idx = int(stem.split("_")[-1]) if "_" in stem else 0
                items.append(LabeledFrame(
                    frame=EyeFrame(pixels=pixels, frame_index=idx),
                    label=label, scenario=scenario,
                ))
    return LabeledDataset(items=items, user_id=user_dir.name)


def _is_user_dir(path: Path) -> bool:
    for child in path.iterdir():
        if child.is_dir():
            try:
                Scenario.from_dirname(child.name)
                return True
            except ValueError:
                return False
    return False


def load_users(path) -> dict:
    """Load every user corpus under ``path`` (or ``path`` itself if it is a
    single user directory). Returns {user_id: LabeledDataset}."""
    root = Path(path)
    if not root.exists():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    if root.is_dir() and _is_user_dir(root):
        ds = _load_user_dir(root)
        return {ds.user_id: ds}
    users = {}
    for user_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        ds = _load_user_dir(user_dir)
        users[ds.user_id] = ds
    return users


def load_corpus(path) -> LabeledDataset:
    """Load all frames under ``path`` into one dataset (possibly empty)."""
    root = Path(path)
    if not root.exists():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    users = load_users(path)
    items = []
    for user_id in sorted(users):
        items.extend(users[user_id].items)
    user_id = "+".join(sorted(users)) if users else "empty"
    return LabeledDataset(items=items, user_id=user_id)
