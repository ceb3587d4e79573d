"""Uniform ``classify(frame) -> (GazeClass, probs)`` adapters over the four
gaze estimators, plus loading by kind for the CLI/service."""

from __future__ import annotations

import numpy as np

from .cnn import Network, predict
from .corpus import GazeClass
from .matchers import (LbpTemplateSet, PupilTemplate, TemplateSet,
                       lbp_scores, locate_pupil, pupil_class, whole_scores)
from .preprocess import hist_equalize, to_grayscale

CLASSIFIER_KINDS = ("cnn", "whole_template", "pupil_template", "lbp")


def _score_probs(scores: np.ndarray) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    s = np.maximum(s, 0.0)
    total = s.sum()
    if total <= 0:
        return np.full(len(s), 1.0 / len(s))
    return s / total


class CnnClassifier:
    kind = "cnn"

    def __init__(self, net: Network):
        self.net = net

    def classify(self, frame):
        return predict(self.net, frame)


class WholeTemplateClassifier:
    kind = "whole_template"

    def __init__(self, templates: TemplateSet):
        self.templates = templates

    def classify(self, frame):
        eq = hist_equalize(to_grayscale(frame))
        scores = whole_scores(self.templates, eq)
        return GazeClass(int(np.argmax(scores))), _score_probs(scores)


class LbpTemplateClassifier:
    kind = "lbp"

    def __init__(self, templates: LbpTemplateSet):
        self.templates = templates

    def classify(self, frame):
        scores = lbp_scores(self.templates, to_grayscale(frame))
        return GazeClass(int(np.argmax(scores))), _score_probs(scores)


class PupilTemplateClassifier:
    kind = "pupil_template"

    def __init__(self, template: PupilTemplate, min_score: float = 0.5,
                 mirror: bool = False):
        self.template = template
        self.min_score = min_score
        self.mirror = mirror

    def classify(self, frame):
        gray = to_grayscale(frame)
        result = locate_pupil(self.template.patch, gray)
        gaze = pupil_class(result, gray.shape[1], self.min_score,
                           pupil_width=self.template.patch.shape[1],
                           mirror=self.mirror)
        probs = np.zeros(4)
        probs[int(gaze)] = 1.0
        return gaze, probs


def load_classifier(kind: str, path, min_score: float = 0.5,
                    mirror: bool = False):
    """Instantiate a classifier of ``kind`` from its on-disk artifact."""
    if kind == "cnn":
        return CnnClassifier(Network.load(path))
    if kind == "whole_template":
        return WholeTemplateClassifier(TemplateSet.load(path))
    if kind == "lbp":
        return LbpTemplateClassifier(LbpTemplateSet.load(path))
    if kind == "pupil_template":
        return PupilTemplateClassifier(PupilTemplate.load(path),
                                       min_score=min_score, mirror=mirror)
    raise ValueError(f"unknown classifier kind {kind!r}; expected one of {CLASSIFIER_KINDS}")
