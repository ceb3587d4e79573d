"""Simulation sessions: configuration, event handling, headless replay.

A session owns one control loop plus the sensor array and (a reference
to) the obstacle world. Events drive it one tick per event, so replaying
the same event sequence always produces the identical telemetry stream,
regardless of transport (headless file replay or the websocket service).

Event records (one JSON object per line in script files):
  {"type": "gaze", "left": "Forward", "right": "Forward"}
  {"type": "frames", "left": "<b64 png>", "right": "<b64 png>"}
  {"type": "reset"}
Frame references in scripts may also be file paths prefixed "file:".
"""

from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .classifiers import CLASSIFIER_KINDS, load_classifier
from .control import ChairState, ControlConfig, ControlLoop
from .corpus import EyeFrame, GazeClass
from .safety import SensorArray, World2D, safety_check


@dataclass
class SimSessionConfig:
    world_path: str | None = None
    classifier_kind: str | None = None  # None = class events only
    classifier_path: str | None = None
    input_mode: str = "class_events"  # class_events | frame_stream
    control: ControlConfig = field(default_factory=ControlConfig)
    stop_threshold: float = 1.0
    start_engaged: bool = False
    chair: ChairState = field(default_factory=ChairState)
    min_score: float = 0.5
    mirror: bool = False

    def __post_init__(self):
        if self.input_mode not in ("class_events", "frame_stream"):
            raise ValueError(f"unknown input mode {self.input_mode!r}")
        if self.classifier_kind is not None and self.classifier_kind not in CLASSIFIER_KINDS:
            raise ValueError(f"unknown classifier kind {self.classifier_kind!r}")
        if self.input_mode == "frame_stream" and self.classifier_kind is None:
            raise ValueError("frame_stream input needs a classifier")

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SimSessionConfig":
        control = ControlConfig(**obj.get("control", {}))
        classifier = obj.get("classifier") or {}
        chair = obj.get("chair") or {}
        return cls(
            world_path=obj.get("world"),
            classifier_kind=classifier.get("kind"),
            classifier_path=classifier.get("path"),
            input_mode=obj.get("input_mode", "class_events"),
            control=control,
            stop_threshold=float(obj.get("stop_threshold", 1.0)),
            start_engaged=bool(obj.get("start_engaged", False)),
            chair=ChairState(x=float(chair.get("x", 0.0)),
                             y=float(chair.get("y", 0.0)),
                             heading=float(chair.get("heading", 0.0)),
                             engaged=bool(obj.get("start_engaged", False))),
            min_score=float(classifier.get("min_score", 0.5)),
            mirror=bool(classifier.get("mirror", False)),
        )

    @classmethod
    def load(cls, path) -> "SimSessionConfig":
        return cls.from_json_obj(json.loads(Path(path).read_text()))


def decode_frame(ref: str, eye_side: str) -> EyeFrame:
    """Decode a frame reference: base64 PNG (optionally "b64:"-prefixed) or
    a "file:<path>"."""
    if ref.startswith("file:"):
        with Image.open(ref[5:]) as im:
            pixels = np.asarray(im.convert("RGB"), dtype=np.uint8)
    else:
        if ref.startswith("b64:"):
            ref = ref[4:]
        raw = base64.b64decode(ref)
        with Image.open(io.BytesIO(raw)) as im:
            pixels = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return EyeFrame(pixels=pixels, eye_side=eye_side)


def encode_frame(frame: EyeFrame) -> str:
    buf = io.BytesIO()
    Image.fromarray(frame.pixels, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class WorldRef:
    """Mutable holder so live world edits reach running sessions."""

    def __init__(self, world: World2D | None = None):
        self.world = world or World2D()


class SimSession:
    def __init__(self, config: SimSessionConfig, world_ref: WorldRef | None = None):
        self.config = config
        if world_ref is not None:
            self.world_ref = world_ref
        elif config.world_path:
            self.world_ref = WorldRef(World2D.load(config.world_path))
        else:
            self.world_ref = WorldRef()
        classifier = None
        if config.classifier_kind is not None:
            classifier = load_classifier(config.classifier_kind, config.classifier_path,
                                         min_score=config.min_score, mirror=config.mirror)
        self.array = SensorArray.default(stop_threshold=config.stop_threshold)
        self.loop = ControlLoop(config=config.control, classifier=classifier,
                                chair=config.chair, start_engaged=config.start_engaged)

    def handle_event(self, event: dict) -> dict | None:
        """Apply one event; gaze/frames events advance one tick and return
        its telemetry, reset returns None."""
        kind = event.get("type")
        if kind == "reset":
            self.loop.reset(chair=self.config.chair)
            return None
        if kind == "gaze":
            left = GazeClass.from_name(event["left"])
            right = GazeClass.from_name(event["right"])
        elif kind == "frames":
            left = decode_frame(event["left"], "left")
            right = decode_frame(event["right"], "right")
        else:
            raise ValueError(f"unknown event type {kind!r}")
        state = safety_check(self.array, self.world_ref.world, self.loop.chair)
        return self.loop.tick(left, right, state)


def telemetry_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def run_headless(config_path, script_path, out_path) -> int:
    """Replay a script file event by event, writing telemetry JSONL.
    Returns the number of telemetry records written."""
    config = SimSessionConfig.load(config_path)
    session = SimSession(config)
    count = 0
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(script_path) as fh, out.open("w") as sink:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = session.handle_event(json.loads(line))
            if record is not None:
                sink.write(telemetry_line(record) + "\n")
                count += 1
    return count
