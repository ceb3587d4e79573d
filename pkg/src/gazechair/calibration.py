"""Per-user calibration pipeline.

For each of the four scenarios (2 lighting x 2 glasses placements) and
each class: three non-consecutive acquisition attempts of 200 frames give
a 600-frame temporary set contaminated by blinks and response lag. A
random frame per class becomes the matching template; if template matching
over the temporary set scores below the 80% threshold the template is
reselected (up to 3 times), then the whole acquisition repeats. Accepted
sets are cleaned by ranking frames against their class template and
dropping the 100 weakest, leaving exactly 500, which split 400/100 into
train/test. The four scenarios' train sets together feed the CNN.

Simulated user imperfections (blink rate, response lag) are configuration
on the synthetic source so the pipeline is testable without a human; the
source also reports which frames it contaminated, giving tests an oracle.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import (ALL_SCENARIOS, GAZE_CLASSES, EyeFrame, EyeStyle, GazeClass,
                     LabeledDataset, LabeledFrame, Scenario, SynthParams,
                     sample_params, save_corpus, synth_eye)
from .matchers import TemplateSet, classify_whole, correlate_at
from .preprocess import hist_equalize, to_grayscale

FRAMES_PER_ATTEMPT = 200
ATTEMPTS = 3
KEEP_PER_CLASS = 500
TRAIN_PER_CLASS = 400
TEST_PER_CLASS = 100
VET_THRESHOLD = 0.80
MAX_RESELECTS = 3
MAX_REACQUIRES = 3


class Verdict(enum.Enum):
    ACCEPT = "accept"
    RESELECT_TEMPLATE = "reselect_template"
    REACQUIRE = "reacquire"


@dataclass
class Acquisition:
    """600 frames of one class in one scenario with attempt boundaries and
    (when the source knows) which frames it contaminated."""

    frames: list
    attempt_bounds: list  # [(start, end), ...] per attempt
    contaminated: list | None = None  # parallel bools, None when unknown


class SyntheticEyeSource:
    """Frame stream backed by the synthetic renderer.

    blink_rate contaminates frames at random with closed-eye renders (still
    nominally labeled with the commanded class); lag_frames renders the
    first frames of every attempt as the previously commanded class.
    """

    def __init__(self, user_seed: int, blink_rate: float = 0.0,
                 lag_frames: int = 0, width: int = 64, height: int = 64):
        self.user_seed = user_seed
        self.blink_rate = blink_rate
        self.lag_frames = lag_frames
        self.width = width
        self.height = height
        self.style = EyeStyle.for_user(user_seed)
        self._last_class = GazeClass.FORWARD

    def _style_for(self, scenario: Scenario) -> EyeStyle:
        return self.style.shifted() if scenario.glasses_offset == "shifted" else self.style

    def take(self, gaze: GazeClass, scenario: Scenario, attempt_seed: int,
             count: int):
        rng = np.random.default_rng([self.user_seed & 0x7FFFFFFF, attempt_seed])
        st = self._style_for(scenario)
        frames, flags = [], []
        lag_class = self._last_class
        for i in range(count):
            if i < self.lag_frames and lag_class != gaze:
                params = sample_params(rng, lag_class, scenario)
                flags.append(True)
            elif gaze != GazeClass.CLOSED and rng.random() < self.blink_rate:
                base = sample_params(rng, gaze, scenario)
                params = SynthParams(gaze=GazeClass.CLOSED,
                                     eyelid_closure_frac=float(rng.uniform(0.88, 1.0)),
                                     brightness=base.brightness,
                                     noise_sigma=base.noise_sigma, seed=base.seed)
                flags.append(True)
            else:
                params = sample_params(rng, gaze, scenario)
                flags.append(False)
            frames.append(synth_eye(params, width=self.width, height=self.height,
                                    style=st, frame_index=i))
        self._last_class = gaze
        return frames, flags


class DirectoryEyeSource:
    """Frame stream replaying an on-disk corpus; raises when a class's
    frames run out (stream exhaustion)."""

    def __init__(self, dataset: LabeledDataset):
        self.dataset = dataset
        self._cursor = {}

    def take(self, gaze: GazeClass, scenario: Scenario, attempt_seed: int,
             count: int):
        key = (gaze, scenario)
        pool = [it.frame for it in self.dataset.items
                if it.label == gaze and it.scenario == scenario]
        start = self._cursor.get(key, 0)
        if start + count > len(pool):
            raise RuntimeError(
                f"frame stream exhausted for {gaze.name} in {scenario.dirname}: "
                f"need {count} more, have {len(pool) - start}")
        self._cursor[key] = start + count
        return pool[start:start + count], None


def acquire(source, gaze: GazeClass, scenario: Scenario,
            session_rng: np.random.Generator,
            frames_per_attempt: int = FRAMES_PER_ATTEMPT,
            attempts: int = ATTEMPTS) -> Acquisition:
    """Three non-consecutive attempts concatenated with boundaries kept."""
    frames, flags, bounds = [], [], []
    any_flags = False
    for _ in range(attempts):
        attempt_seed = int(session_rng.integers(0, 2**31 - 1))
        got, got_flags = source.take(gaze, scenario, attempt_seed, frames_per_attempt)
        if len(got) < frames_per_attempt:
            raise RuntimeError("frame stream exhausted during acquisition")
        bounds.append((len(frames), len(frames) + len(got)))
        frames.extend(got)
        if got_flags is None:
            flags.extend([False] * len(got))
        else:
            flags.extend(got_flags)
            any_flags = True
    return Acquisition(frames=frames, attempt_bounds=bounds,
                       contaminated=flags if any_flags else None)


def select_template(frames, rng: np.random.Generator):
    """Uniform random template pick; returns (index, frame)."""
    if not frames:
        raise ValueError("cannot select a template from an empty set")
    idx = int(rng.integers(0, len(frames)))
    return idx, frames[idx]


def vet(temp_dataset: dict, templates: TemplateSet):
    """Classify every temporary-set frame against its own label.

    temp_dataset: {GazeClass: [frames]}. Returns (accuracy, accepted).
    """
    correct = 0
    total = 0
    for gaze, frames in temp_dataset.items():
        for frame in frames:
            eq = hist_equalize(to_grayscale(frame))
            result = classify_whole(templates, eq)
            correct += int(result.gaze == gaze)
            total += 1
    acc = correct / total if total else 0.0
    return acc, acc >= VET_THRESHOLD


def clean(frames, template_img: np.ndarray, keep: int = KEEP_PER_CLASS):
    """Keep the ``keep`` frames that correlate best with the class
    template; blinks and lag frames rank at the bottom. Ties keep the
    lower frame index. Returns (retained_indices, retained_frames)."""
    if len(frames) < keep:
        raise ValueError(f"need at least {keep} frames to clean, got {len(frames)}")
    scores = np.empty(len(frames), dtype=np.float64)
    for i, frame in enumerate(frames):
        eq = hist_equalize(to_grayscale(frame))
        scores[i] = correlate_at(template_img, eq, 0, 0)
    order = np.argsort(-scores, kind="stable")[:keep]
    retained = np.sort(order)
    return retained.tolist(), [frames[i] for i in retained]


@dataclass
class ScenarioResult:
    scenario: Scenario
    vet_accuracy: float = 0.0
    verdicts: list = field(default_factory=list)
    template_indices: dict = field(default_factory=dict)
    retained_indices: dict = field(default_factory=dict)
    cleaned: dict = field(default_factory=dict)  # {GazeClass: [frames]}
    reacquires: int = 0


class CalibSession:
    """Runs the full pipeline for one user over the four scenarios."""

    def __init__(self, source, seed: int = 0, scenarios=ALL_SCENARIOS,
                 vet_threshold: float = VET_THRESHOLD,
                 max_reselects: int = MAX_RESELECTS,
                 max_reacquires: int = MAX_REACQUIRES,
                 frames_per_attempt: int = FRAMES_PER_ATTEMPT,
                 attempts: int = ATTEMPTS, keep: int = KEEP_PER_CLASS,
                 train_per_class: int = TRAIN_PER_CLASS,
                 test_per_class: int = TEST_PER_CLASS,
                 user_id: str = "calibrated"):
        self.source = source
        self.rng = np.random.default_rng(seed)
        self.scenarios = scenarios
        self.vet_threshold = vet_threshold
        self.max_reselects = max_reselects
        self.max_reacquires = max_reacquires
        self.frames_per_attempt = frames_per_attempt
        self.attempts = attempts
        self.keep = keep
        self.train_per_class = train_per_class
        self.test_per_class = test_per_class
        self.user_id = user_id
        self.results: list = []
        self.templates: dict = {}

    def _vet_with_retries(self, acquired: dict, result: ScenarioResult):
        """Random template per class, vet, reselect up to the limit.
        Returns the accepted TemplateSet or None (reacquire needed)."""
        chosen = {g: select_template(acquired[g].frames, self.rng) for g in GAZE_CLASSES}
        for _ in range(self.max_reselects + 1):
            templates = TemplateSet({g: chosen[g][1] for g in GAZE_CLASSES})
            acc, _ = vet({g: acquired[g].frames for g in GAZE_CLASSES}, templates)
            result.vet_accuracy = acc
            if acc >= self.vet_threshold:
                result.verdicts.append(Verdict.ACCEPT.value)
                result.template_indices = {g.dirname: chosen[g][0] for g in GAZE_CLASSES}
                return templates
            result.verdicts.append(Verdict.RESELECT_TEMPLATE.value)
            chosen = {g: select_template(acquired[g].frames, self.rng) for g in GAZE_CLASSES}
        result.verdicts.append(Verdict.REACQUIRE.value)
        return None

    def run_scenario(self, scenario: Scenario) -> ScenarioResult:
        result = ScenarioResult(scenario=scenario)
        for round_ in range(self.max_reacquires + 1):
            acquired = {g: acquire(self.source, g, scenario, self.rng,
                                   self.frames_per_attempt, self.attempts)
                        for g in GAZE_CLASSES}
            templates = self._vet_with_retries(acquired, result)
            if templates is not None:
                for g in GAZE_CLASSES:
                    idxs, frames = clean(acquired[g].frames, templates.images[g], self.keep)
                    result.retained_indices[g.dirname] = idxs
                    result.cleaned[g] = frames
                self.templates[scenario] = templates
                return result
            result.reacquires += 1
        raise RuntimeError(
            f"calibration failed for scenario {scenario.dirname}: vetting "
            f"accuracy stayed below {self.vet_threshold} after "
            f"{self.max_reacquires} re-acquisitions")

    def run(self) -> "CalibSession":
        self.results = [self.run_scenario(s) for s in self.scenarios]
        return self

    def finalize(self):
        """Split every cleaned class into train/test; returns
        (train_set, test_set) spanning all scenarios."""
        if len(self.results) != len(self.scenarios):
            raise ValueError("incomplete session: run() all scenarios first")
        train_items, test_items = [], []
        for result in self.results:
            for g in GAZE_CLASSES:
                frames = result.cleaned[g]
                need = self.train_per_class + self.test_per_class
                if len(frames) < need:
                    raise ValueError(f"scenario {result.scenario.dirname} class "
                                     f"{g.name}: {len(frames)} frames < {need}")
                perm = self.rng.permutation(len(frames))
                train_sel = sorted(perm[:self.train_per_class].tolist())
                test_sel = sorted(perm[self.train_per_class:need].tolist())
                for i in train_sel:
                    train_items.append(LabeledFrame(frame=frames[i], label=g,
                                                    scenario=result.scenario))
                for i in test_sel:
                    test_items.append(LabeledFrame(frame=frames[i], label=g,
                                                   scenario=result.scenario))
        return (LabeledDataset(items=train_items, user_id=self.user_id),
                LabeledDataset(items=test_items, user_id=self.user_id))

    def manifest(self) -> dict:
        return {
            "user_id": self.user_id,
            "vet_threshold": self.vet_threshold,
            "scenarios": [
                {
                    "scenario": r.scenario.dirname,
                    "vet_accuracy": r.vet_accuracy,
                    "verdicts": r.verdicts,
                    "reacquires": r.reacquires,
                    "template_indices": r.template_indices,
                    "retained_indices": r.retained_indices,
                }
                for r in self.results
            ],
        }

    def save(self, path) -> None:
        """Persist the cleaned frames in the corpus layout plus a session
        manifest JSON."""
        root = Path(path)
        root.mkdir(parents=True, exist_ok=True)
        items = []
        for result in self.results:
            for g in GAZE_CLASSES:
                for i, frame in enumerate(result.cleaned[g]):
                    reindexed = EyeFrame(pixels=frame.pixels, eye_side=frame.eye_side,
                                         frame_index=i)
                    items.append(LabeledFrame(frame=reindexed, label=g,
                                              scenario=result.scenario))
        save_corpus(LabeledDataset(items=items, user_id=self.user_id), root)
        (root / "session_manifest.json").write_text(
            json.dumps(self.manifest(), indent=2, sort_keys=True))
