"""Ultrasonic time-of-flight safety model.

Distance = travel_time / 2 * 340 m/s; the motion-induced measurement error
is bounded by system delay * chair speed. Five sensors ride the chair
front: three level outward sensors spanning a 43-degree detection angle
with a band about 1 m wide at 1 m range, and two downward-slanted sensors
interleaved between them that pick up low-profile obstacles the level
beams pass over. Any converted distance at or below the stop threshold
(1 m default) triggers an emergency stop.

Chair frame: +x along the heading, +y to the chair's left; yaws are
counterclockwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

SPEED_OF_SOUND = 340.0  # m/s


def echo_to_distance(travel_time: float, speed: float = SPEED_OF_SOUND) -> float:
    """Eq.-style time-of-flight conversion; the wave travels the distance
    twice, so the time is halved."""
    if travel_time < 0:
        raise ValueError("travel time must be >= 0")
    return travel_time / 2.0 * speed


def distance_to_echo(distance: float, speed: float = SPEED_OF_SOUND) -> float:
    if distance < 0:
        raise ValueError("distance must be >= 0")
    return 2.0 * distance / speed


def error_bound(total_delay: float, chair_speed: float) -> float:
    """Worst-case distance inaccuracy from system delay while moving."""
    if total_delay < 0 or chair_speed < 0:
        raise ValueError("delay and speed must be >= 0")
    return total_delay * chair_speed


@dataclass(frozen=True)
class UltrasonicSensor:
    mount_offset: tuple = (0.35, 0.0)  # (x, y) meters in chair frame
    yaw: float = 0.0                   # radians in chair frame
    pitch: str = "level"               # level | slanted_down
    beam_half_angle: float = math.radians(43.0 / 3.0)
    max_range: float = 4.0

    def __post_init__(self):
        if self.beam_half_angle <= 0:
            raise ValueError("beam_half_angle must be > 0")
        if self.max_range <= 0:
            raise ValueError("max_range must be > 0")
        if self.pitch not in ("level", "slanted_down"):
            raise ValueError(f"unknown pitch {self.pitch!r}")


@dataclass(frozen=True)
class SensorArray:
    sensors: tuple
    stop_threshold: float = 1.0
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        if len(self.sensors) != 5:
            raise ValueError("the array carries exactly 5 sensors")
        if self.stop_threshold <= 0:
            raise ValueError("stop_threshold must be > 0")

    @classmethod
    def default(cls, stop_threshold: float = 1.0) -> "SensorArray":
        """Paper-matching geometry: the three level sensors' outer cone
        edges span 43 degrees total and their union covers a >= 1 m wide
        band at 1 m range with no coverage gaps (<= 8 cm allowed)."""
        half = math.radians(43.0 / 3.0)
        yaw_out = math.radians(43.0 / 6.0)
        d = 0.12
        front = 0.35
        level = [
            UltrasonicSensor((front, -d), -yaw_out, "level", half),
            UltrasonicSensor((front, 0.0), 0.0, "level", half),
            UltrasonicSensor((front, d), yaw_out, "level", half),
        ]
        slanted = [
            UltrasonicSensor((front, -d / 2), -yaw_out / 2, "slanted_down", half),
            UltrasonicSensor((front, d / 2), yaw_out / 2, "slanted_down", half),
        ]
        return cls(sensors=(level[0], slanted[0], level[1], slanted[1], level[2]),
                   stop_threshold=stop_threshold)


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float
    low_profile: bool = False

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("circle radius must be > 0")


@dataclass(frozen=True)
class Segment:
    p1: tuple
    p2: tuple
    low_profile: bool = False


@dataclass
class World2D:
    obstacles: list = field(default_factory=list)

    def to_json_obj(self) -> dict:
        items = []
        for ob in self.obstacles:
            if isinstance(ob, Circle):
                items.append({"type": "circle",
                              "center": [float(ob.center[0]), float(ob.center[1])],
                              "radius": float(ob.radius),
                              "low_profile": bool(ob.low_profile)})
            else:
                items.append({"type": "segment",
                              "endpoints": [[float(ob.p1[0]), float(ob.p1[1])],
                                            [float(ob.p2[0]), float(ob.p2[1])]],
                              "low_profile": bool(ob.low_profile)})
        return {"obstacles": items}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "World2D":
        obstacles = []
        for item in obj.get("obstacles", []):
            kind = item.get("type")
            low = bool(item.get("low_profile", False))
            if kind == "circle":
                obstacles.append(Circle(center=tuple(item["center"]),
                                        radius=float(item["radius"]),
                                        low_profile=low))
            elif kind == "segment":
                e = item["endpoints"]
                obstacles.append(Segment(p1=tuple(e[0]), p2=tuple(e[1]),
                                         low_profile=low))
            else:
                raise ValueError(f"unknown obstacle type {kind!r}")
        return cls(obstacles=obstacles)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_obj(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "World2D":
        return cls.from_json_obj(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class EchoResult:
    travel_time: float | None  # None = timeout (nothing in cone/range)

    @property
    def timed_out(self) -> bool:
        return self.travel_time is None


TIMEOUT = EchoResult(travel_time=None)


def _wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _pose_xyh(pose):
    if isinstance(pose, (tuple, list)):
        return float(pose[0]), float(pose[1]), float(pose[2])
    return float(pose.x), float(pose.y), float(pose.heading)


def _ray_circle(px, py, ux, uy, cx, cy, r):
    """Smallest t >= 0 with |p + t u - c| = r, or None."""
    ox, oy = px - cx, py - cy
    b = 2.0 * (ox * ux + oy * uy)
    c = ox * ox + oy * oy - r * r
    disc = b * b - 4.0 * c
    if disc < 0:
        return None
    s = math.sqrt(disc)
    t1 = (-b - s) / 2.0
    t2 = (-b + s) / 2.0
    if t1 >= 0:
        return t1
    if t2 >= 0:
        return t2
    return None


def _ray_segment(px, py, ux, uy, ax, ay, bx, by):
    """Smallest t >= 0 where the ray meets segment AB, or None."""
    rx, ry = bx - ax, by - ay
    denom = ux * ry - uy * rx
    if abs(denom) < 1e-15:
        return None
    t = ((ax - px) * ry - (ay - py) * rx) / denom
    s = ((ax - px) * uy - (ay - py) * ux) / -denom
    if t >= 0 and 0.0 <= s <= 1.0:
        return t
    return None


def _min_circle_distance(px, py, direction, half, circle: Circle):
    cx, cy = circle.center
    vx, vy = cx - px, cy - py
    dist_c = math.hypot(vx, vy)
    if dist_c <= circle.radius:
        return 0.0
    best = None
    rel = _wrap(math.atan2(vy, vx) - direction)
    if abs(rel) <= half:
        best = dist_c - circle.radius
    for edge in (direction - half, direction + half):
        t = _ray_circle(px, py, math.cos(edge), math.sin(edge), cx, cy, circle.radius)
        if t is not None and (best is None or t < best):
            best = t
    return best


def _min_segment_distance(px, py, direction, half, seg: Segment):
    ax, ay = seg.p1
    bx, by = seg.p2
    best = None

    def consider(x, y):
        nonlocal best
        d = math.hypot(x - px, y - py)
        if d < 1e-12:
            best = 0.0
            return
        rel = _wrap(math.atan2(y - py, x - px) - direction)
        if abs(rel) <= half and (best is None or d < best):
            best = d

    rx, ry = bx - ax, by - ay
    seg_len2 = rx * rx + ry * ry
    if seg_len2 > 0:
        u = ((px - ax) * rx + (py - ay) * ry) / seg_len2
        if 0.0 <= u <= 1.0:
            consider(ax + u * rx, ay + u * ry)
    consider(ax, ay)
    consider(bx, by)
    for edge in (direction - half, direction + half):
        t = _ray_segment(px, py, math.cos(edge), math.sin(edge), ax, ay, bx, by)
        if t is not None and (best is None or t < best):
            best = t
    return best


def _sensor_sees(sensor: UltrasonicSensor, obstacle) -> bool:
    low = getattr(obstacle, "low_profile", False)
    if sensor.pitch == "slanted_down":
        return low
    return not low


def ping(world: World2D, sensor: UltrasonicSensor, chair_pose,
         speed: float = SPEED_OF_SOUND) -> EchoResult:
    """Nearest in-cone obstacle within range -> echo travel time; else
    timeout. Slanted-down sensors see only low-profile obstacles, level
    sensors only regular ones."""
    x, y, heading = _pose_xyh(chair_pose)
    ox, oy = sensor.mount_offset
    px = x + ox * math.cos(heading) - oy * math.sin(heading)
    py = y + ox * math.sin(heading) + oy * math.cos(heading)
    direction = heading + sensor.yaw
    best = None
    for ob in world.obstacles:
        if not _sensor_sees(sensor, ob):
            continue
        if isinstance(ob, Circle):
            d = _min_circle_distance(px, py, direction, sensor.beam_half_angle, ob)
        else:
            d = _min_segment_distance(px, py, direction, sensor.beam_half_angle, ob)
        if d is not None and (best is None or d < best):
            best = d
    if best is None or best > sensor.max_range:
        return TIMEOUT
    return EchoResult(travel_time=distance_to_echo(best, speed))


@dataclass(frozen=True)
class SafetyState:
    emergency: bool
    min_distance: float | None = None

    @classmethod
    def clear(cls, min_distance: float | None = None) -> "SafetyState":
        return cls(emergency=False, min_distance=min_distance)

    @classmethod
    def emergency_stop(cls, min_distance: float) -> "SafetyState":
        return cls(emergency=True, min_distance=min_distance)


def safety_check(array: SensorArray, world: World2D, chair_pose) -> SafetyState:
    """Ping all sensors; a minimum distance at or below the stop threshold
    (inclusive: fail-safe) means emergency stop."""
    min_d = None
    for sensor in array.sensors:
        echo = ping(world, sensor, chair_pose, array.speed_of_sound)
        if echo.timed_out:
            continue
        d = echo_to_distance(echo.travel_time, array.speed_of_sound)
        if min_d is None or d < min_d:
            min_d = d
    if min_d is not None and min_d <= array.stop_threshold:
        return SafetyState.emergency_stop(min_d)
    return SafetyState.clear(min_d)
