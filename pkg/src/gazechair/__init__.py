"""Gaze-driven wheelchair control stack.

Four user-specific gaze classifiers (whole-image, pupil-template, and LBP
correlation matchers plus a compact CNN trained from scratch), a
calibration pipeline with blink rejection, an ultrasonic safety model, and
a dual-eye decision loop driving a simulated 2-D wheelchair.
"""

__version__ = "0.1.0"
