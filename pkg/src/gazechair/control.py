"""Real-time decision loop for the simulated chair.

Per tick: classify both eyes, feed the raw pair to the wink detector
(left eye closed, right open, held K frames toggles engagement; a blink
with both closed resets the run), fuse the two classes (any disagreement
means no action), and collect fused results into non-overlapping 10-frame
windows. A window emits a command when at least 6 of its entries agree on
one class; anything weaker emits Stop. Safety overrides everything: an
emergency stop forces Stop on the very tick it is detected, engaged or
not. The chair turns in place and only ever drives forward.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field, replace

from .corpus import GAZE_CLASSES, GazeClass
from .safety import SafetyState

MAX_SPEED = 5.56  # m/s, 20 km/h


class Command(enum.IntEnum):
    STOP = 0
    FORWARD = 1
    LEFT = 2
    RIGHT = 3

    @property
    def wire_name(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_name(cls, name: str) -> "Command":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown command {name!r}") from None


@dataclass(frozen=True)
class ControlConfig:
    window: int = 10
    majority: int = 6
    wink_frames: int = 15
    cruise_speed: float = 1.0
    turn_rate: float = 0.6  # rad/s
    tick_rate: float = 30.0  # Hz

    def __post_init__(self):
        if not 1 <= self.majority <= self.window:
            raise ValueError("need 1 <= majority <= window")
        if self.wink_frames < 1:
            raise ValueError("wink_frames must be >= 1")
        if not 0 < self.cruise_speed <= MAX_SPEED:
            raise ValueError(f"cruise_speed must be in (0, {MAX_SPEED}]")
        if self.turn_rate <= 0 or self.tick_rate <= 0:
            raise ValueError("turn_rate and tick_rate must be > 0")


@dataclass(frozen=True)
class FusedResult:
    gaze: GazeClass | None = None  # None = the two eyes disagreed

    @property
    def agreed(self) -> bool:
        return self.gaze is not None

    @property
    def wire_name(self) -> str:
        return self.gaze.wire_name if self.agreed else "Disagree"


DISAGREE = FusedResult(gaze=None)


def fuse(left: GazeClass | None, right: GazeClass | None) -> FusedResult:
    """Both eyes must return the same class; otherwise no action."""
    if left is None or right is None or left != right:
        return DISAGREE
    return FusedResult(gaze=left)


class WinkDetector:
    """Left eye closed while the right stays open, held for K consecutive
    frames, toggles once; the wink must end before it can fire again."""

    def __init__(self, wink_frames: int):
        self.wink_frames = wink_frames
        self._run = 0
        self._fired = False

    def push(self, left: GazeClass | None, right: GazeClass | None) -> bool:
        winking = left == GazeClass.CLOSED and right is not None and right != GazeClass.CLOSED
        if not winking:
            self._run = 0
            self._fired = False
            return False
        if self._fired:
            return False
        self._run += 1
        if self._run >= self.wink_frames:
            self._fired = True
            return True
        return False


_CLASS_TO_COMMAND = {
    GazeClass.FORWARD: Command.FORWARD,
    GazeClass.LEFT: Command.LEFT,
    GazeClass.RIGHT: Command.RIGHT,
    GazeClass.CLOSED: Command.STOP,
}


def aggregate(window, majority: int = 6) -> Command:
    """Majority vote over a window of fused results; anything below the
    majority (including any disagreement-heavy window) is Stop."""
    if not window:
        raise ValueError("empty window")
    counts = Counter(r.gaze for r in window if r.agreed)
    if not counts:
        return Command.STOP
    # most common, ties to the lower canonical class
    best = min(counts, key=lambda g: (-counts[g], int(g)))
    if counts[best] < majority:
        return Command.STOP
    return _CLASS_TO_COMMAND[best]


@dataclass(frozen=True)
class ServoPositions:
    servo_a: float
    servo_b: float


DEFAULT_SERVO_TABLE = {
    Command.STOP: ServoPositions(90.0, 90.0),
    Command.FORWARD: ServoPositions(90.0, 50.0),
    Command.LEFT: ServoPositions(50.0, 90.0),
    Command.RIGHT: ServoPositions(130.0, 90.0),
}


def command_to_servo(cmd: Command, table=None) -> ServoPositions:
    table = table or DEFAULT_SERVO_TABLE
    if len({table[c] for c in Command}) != len(Command):
        raise ValueError("servo table must be a bijection over the commands")
    return table[cmd]


def servo_to_command(pos: ServoPositions, table=None) -> Command:
    table = table or DEFAULT_SERVO_TABLE
    for cmd, p in table.items():
        if p == pos:
            return cmd
    raise ValueError(f"no command maps to {pos}")


@dataclass(frozen=True)
class ChairState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    speed: float = 0.0
    engaged: bool = False

    def __post_init__(self):
        if not 0.0 <= self.speed <= MAX_SPEED:
            raise ValueError(f"speed outside [0, {MAX_SPEED}]")


def step_kinematics(state: ChairState, cmd: Command, dt: float,
                    config: ControlConfig | None = None) -> ChairState:
    """Turn-in-place steering: Forward advances along the heading, Left /
    Right rotate without translation, Stop freezes the pose."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    config = config or ControlConfig()
    if cmd == Command.STOP:
        return replace(state, speed=0.0)
    if cmd == Command.FORWARD:
        v = min(config.cruise_speed, MAX_SPEED)
        return replace(state,
                       x=state.x + v * math.cos(state.heading) * dt,
                       y=state.y + v * math.sin(state.heading) * dt,
                       speed=v)
    sign = 1.0 if cmd == Command.LEFT else -1.0
    return replace(state, heading=state.heading + sign * config.turn_rate * dt,
                   speed=0.0)


def _eye_telemetry(gaze: GazeClass | None, probs) -> dict:
    return {
        "class": gaze.wire_name if gaze is not None else None,
        "probs": [float(p) for p in probs],
    }


class ControlLoop:
    """Stateful tick driver tying classification, fusion, wink toggling,
    windows, safety, and kinematics together."""

    def __init__(self, config: ControlConfig | None = None,
                 classifier=None, chair: ChairState | None = None,
                 start_engaged: bool = False):
        self.config = config or ControlConfig()
        self.classifier = classifier
        self.chair = chair or ChairState(engaged=start_engaged)
        if start_engaged and not self.chair.engaged:
            self.chair = replace(self.chair, engaged=True)
        self.wink = WinkDetector(self.config.wink_frames)
        self.window: list = []
        self.current_command = Command.STOP
        self.tick_index = 0

    def reset(self, chair: ChairState | None = None) -> None:
        self.chair = chair or ChairState()
        self.wink = WinkDetector(self.config.wink_frames)
        self.window = []
        self.current_command = Command.STOP
        self.tick_index = 0

    def _resolve(self, eye_input):
        """Eye input may be a frame (classified here), an already-known
        class, or a (class, probs) pair. A classifier failure counts the
        frame as unusable (the fused result becomes Disagree)."""
        uniform = [0.25, 0.25, 0.25, 0.25]
        if eye_input is None:
            return None, uniform
        if isinstance(eye_input, GazeClass):
            probs = [0.0] * 4
            probs[int(eye_input)] = 1.0
            return eye_input, probs
        if isinstance(eye_input, tuple) and len(eye_input) == 2:
            gaze, probs = eye_input
            return gaze, [float(p) for p in probs]
        if self.classifier is None:
            raise ValueError("frame input needs a classifier")
        try:
            gaze, probs = self.classifier.classify(eye_input)
            return gaze, [float(p) for p in probs]
        except Exception:
            return None, uniform

    def tick(self, left_input, right_input, safety_state: SafetyState) -> dict:
        """Advance one frame pair; returns the telemetry record."""
        self.tick_index += 1
        left_class, left_probs = self._resolve(left_input)
        right_class, right_probs = self._resolve(right_input)

        if self.wink.push(left_class, right_class):
            self.chair = replace(self.chair, engaged=not self.chair.engaged)

        fused = fuse(left_class, right_class)
        if self.chair.engaged:
            self.window.append(fused)
            if len(self.window) >= self.config.window:
                self.current_command = aggregate(self.window, self.config.majority)
                self.window = []
        else:
            self.window = []
            self.current_command = Command.STOP
        if safety_state.emergency:
            self.current_command = Command.STOP

        dt = 1.0 / self.config.tick_rate
        self.chair = step_kinematics(self.chair, self.current_command, dt, self.config)

        return {
            "tick": self.tick_index,
            "left": _eye_telemetry(left_class, left_probs),
            "right": _eye_telemetry(right_class, right_probs),
            "fused": fused.wire_name,
            "command": self.current_command.wire_name,
            "engaged": self.chair.engaged,
            "min_distance_m": (None if safety_state.min_distance is None
                               else float(safety_state.min_distance)),
            "pose": {"x": self.chair.x, "y": self.chair.y, "heading": self.chair.heading},
        }
