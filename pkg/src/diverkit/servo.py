"""Visual-servoing follow controller and a toy kinematic robot.

Four PID loops turn bounding-box error into normalized commands: yaw from the
horizontal center offset, pitch and vertical speed both from the vertical
offset, and forward speed from the gap between the observed and target box
area fraction (box size stands in for distance). Roll is out of scope; a real
vehicle's autopilot owns it.

On a missed detection the last command is held but decays by 0.8 per frame so
a lost target cannot drive the robot forever.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .core import BoundingBox, ValidationError

MISS_DECAY = 0.8
PITCH_LIMIT = math.pi / 3.0


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    integral_clamp: float = 2.0
    output_clamp: float = 1.0

    def __post_init__(self):
        if self.integral_clamp <= 0 or self.output_clamp <= 0:
            raise ValidationError("PID clamps must be positive")


class Pid:
    """One PID loop with anti-windup integral clamping and output clamping."""

    def __init__(self, gains: PidGains):
        self.gains = gains
        self.integral = 0.0
        self.prev_error: float | None = None

    def reset(self) -> None:
        self.integral = 0.0
        self.prev_error = None

    def step(self, error: float, dt: float) -> float:
        if dt <= 0:
            raise ValidationError("dt must be positive")
        g = self.gains
        self.integral = min(max(self.integral + error * dt, -g.integral_clamp), g.integral_clamp)
        derivative = 0.0 if self.prev_error is None else (error - self.prev_error) / dt
        self.prev_error = error
        out = g.kp * error + g.ki * self.integral + g.kd * derivative
        return min(max(out, -g.output_clamp), g.output_clamp)


@dataclass(frozen=True)
class ServoCommand:
    """Normalized command; every channel lies in [-1, 1]."""

    yaw_rate: float = 0.0
    pitch_rate: float = 0.0
    forward_speed: float = 0.0
    vertical_speed: float = 0.0

    def __post_init__(self):
        for name in ("yaw_rate", "pitch_rate", "forward_speed", "vertical_speed"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise ValidationError(f"{name}={v} outside [-1, 1]")

    def decayed(self, factor: float = MISS_DECAY) -> "ServoCommand":
        return ServoCommand(
            self.yaw_rate * factor,
            self.pitch_rate * factor,
            self.forward_speed * factor,
            self.vertical_speed * factor,
        )

    def magnitude(self) -> float:
        return max(
            abs(self.yaw_rate),
            abs(self.pitch_rate),
            abs(self.forward_speed),
            abs(self.vertical_speed),
        )


@dataclass(frozen=True)
class RobotState:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0
    pitch: float = 0.0
    time: float = 0.0


@dataclass
class ServoConfig:
    yaw: PidGains = field(default_factory=lambda: PidGains(kp=0.8, ki=0.05, kd=0.1))
    pitch: PidGains = field(default_factory=lambda: PidGains(kp=0.8, ki=0.05, kd=0.1))
    vertical: PidGains = field(default_factory=lambda: PidGains(kp=0.3))
    forward: PidGains = field(default_factory=lambda: PidGains(kp=1.5, ki=0.1))
    target_area_fraction: float = 0.08
    v_max: float = 1.5  # m/s
    omega_max: float = math.pi / 4.0  # rad/s

    def __post_init__(self):
        if not 0.0 < self.target_area_fraction < 1.0:
            raise ValidationError("target_area_fraction must lie in (0, 1)")
        if self.v_max <= 0 or self.omega_max <= 0:
            raise ValidationError("speed scales must be positive")

    def to_dict(self) -> dict:
        def gains(g: PidGains) -> dict:
            return {"kp": g.kp, "ki": g.ki, "kd": g.kd}

        return {
            "yaw": gains(self.yaw),
            "pitch": gains(self.pitch),
            "vertical": gains(self.vertical),
            "forward": gains(self.forward),
            "target_area_fraction": self.target_area_fraction,
            "v_max": self.v_max,
            "omega_max": self.omega_max,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ServoConfig":
        kwargs = {}
        try:
            for channel in ("yaw", "pitch", "vertical", "forward"):
                if channel in raw:
                    kwargs[channel] = PidGains(**raw[channel])
            for scalar in ("target_area_fraction", "v_max", "omega_max"):
                if scalar in raw:
                    kwargs[scalar] = float(raw[scalar])
        except TypeError as exc:
            raise ValidationError(f"bad gains file: {exc}") from exc
        return cls(**kwargs)


def load_gains(path: str | Path | None = None) -> ServoConfig:
    """Load a gains file; without a path, the packaged default."""
    if path is None:
        text = resources.files("diverkit").joinpath("data", "gains.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"gains file is not valid JSON: {exc}") from exc
    return ServoConfig.from_dict(raw)


class PidBank:
    """The four controllers plus the config they came from."""

    def __init__(self, config: ServoConfig | None = None):
        self.config = config or ServoConfig()
        self.yaw = Pid(self.config.yaw)
        self.pitch = Pid(self.config.pitch)
        self.vertical = Pid(self.config.vertical)
        self.forward = Pid(self.config.forward)

    def reset(self) -> None:
        for pid in (self.yaw, self.pitch, self.vertical, self.forward):
            pid.reset()


def bbox_error(
    bbox: BoundingBox, frame_w: int, frame_h: int, target_area_fraction: float
) -> tuple[float, float, float]:
    """(ex, ey, ea): center offsets normalized to half-frame, plus the area gap."""
    ex = (bbox.cx - frame_w / 2.0) / (frame_w / 2.0)
    ey = (bbox.cy - frame_h / 2.0) / (frame_h / 2.0)
    ea = target_area_fraction - bbox.area / (frame_w * frame_h)
    return ex, ey, ea


def servo_step(
    errors: tuple[float, float, float], bank: PidBank, dt: float
) -> ServoCommand:
    ex, ey, ea = errors
    return ServoCommand(
        yaw_rate=bank.yaw.step(ex, dt),
        pitch_rate=bank.pitch.step(ey, dt),
        forward_speed=bank.forward.step(ea, dt),
        vertical_speed=bank.vertical.step(ey, dt),
    )


def kinematic_step(
    state: RobotState,
    cmd: ServoCommand,
    dt: float,
    v_max: float = 1.0,
    omega_max: float = math.pi / 4.0,
) -> RobotState:
    """Forward-Euler toy kinematics; pitch clamps at +-pi/3."""
    if dt <= 0:
        raise ValidationError("dt must be positive")
    yaw = state.yaw + cmd.yaw_rate * omega_max * dt
    pitch = min(max(state.pitch + cmd.pitch_rate * omega_max * dt, -PITCH_LIMIT), PITCH_LIMIT)
    step = cmd.forward_speed * v_max * dt
    return RobotState(
        x=state.x + step * math.cos(pitch) * math.cos(yaw),
        y=state.y + step * math.cos(pitch) * math.sin(yaw),
        z=state.z + step * math.sin(pitch) + cmd.vertical_speed * v_max * dt,
        yaw=yaw,
        pitch=pitch,
        time=state.time + dt,
    )


# ---------------------------------------------------------------------------
# closed-loop simulation world
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CameraModel:
    frame_w: int = 320
    frame_h: int = 240
    hfov: float = math.pi / 3.0
    vfov: float = math.pi / 4.0


@dataclass
class FollowWorld:
    """A stationary diver watched by the robot's pinhole-ish camera.

    Image x grows with (bearing - yaw) and image y with (elevation - pitch);
    the box area fraction scales with 1/distance^2 and matches
    ``target_area_fraction`` at ``standoff_m``.
    """

    diver: tuple[float, float, float]
    camera: CameraModel = field(default_factory=CameraModel)
    standoff_m: float = 2.0
    target_area_fraction: float = 0.08

    def observe(self, state: RobotState) -> BoundingBox | None:
        dx = self.diver[0] - state.x
        dy = self.diver[1] - state.y
        dz = self.diver[2] - state.z
        horiz = math.hypot(dx, dy)
        dist = math.hypot(horiz, dz)
        if dist < 1e-6:
            return None
        bearing = math.atan2(dy, dx)
        elevation = math.atan2(dz, horiz)
        ex_raw = _wrap_angle(bearing - state.yaw) / (self.camera.hfov / 2.0)
        ey_raw = (elevation - state.pitch) / (self.camera.vfov / 2.0)
        if abs(ex_raw) > 1.0 or abs(ey_raw) > 1.0:
            return None  # target outside the field of view
        area_fraction = self.target_area_fraction * (self.standoff_m / dist) ** 2
        area = area_fraction * self.camera.frame_w * self.camera.frame_h
        side = math.sqrt(max(area, 1e-9))
        return BoundingBox(
            cx=self.camera.frame_w / 2.0 * (1.0 + ex_raw),
            cy=self.camera.frame_h / 2.0 * (1.0 + ey_raw),
            w=side,
            h=side,
        )


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class FollowLogRow:
    t: float
    state: RobotState
    errors: tuple[float, float, float] | None
    cmd: ServoCommand
    detected: bool

    def to_csv_row(self) -> list:
        ex, ey, ea = self.errors if self.errors is not None else ("", "", "")
        return [
            f"{self.t:.3f}",
            f"{self.state.x:.6f}",
            f"{self.state.y:.6f}",
            f"{self.state.z:.6f}",
            f"{self.state.yaw:.6f}",
            f"{self.state.pitch:.6f}",
            ex if ex == "" else f"{ex:.6f}",
            ey if ey == "" else f"{ey:.6f}",
            ea if ea == "" else f"{ea:.6f}",
            f"{self.cmd.yaw_rate:.6f}",
            f"{self.cmd.pitch_rate:.6f}",
            f"{self.cmd.forward_speed:.6f}",
            f"{self.cmd.vertical_speed:.6f}",
            int(self.detected),
        ]


FOLLOW_LOG_COLUMNS = [
    "t", "x", "y", "z", "yaw", "pitch",
    "ex", "ey", "ea",
    "cmd_yaw", "cmd_pitch", "cmd_fwd", "cmd_vert",
    "detected",
]


def follow_loop(
    detector,
    bank: PidBank,
    duration_s: float,
    fps: float = 10.0,
    frame_w: int = 320,
    frame_h: int = 240,
    initial_state: RobotState | None = None,
) -> list[FollowLogRow]:
    """Closed loop: detect, control, integrate; one log row per frame.

    ``detector(state) -> BoundingBox | None`` supplies the observation (the
    simulation world's truth detector, or a replay of tracker detections).
    """
    cfg = bank.config
    state = initial_state or RobotState()
    dt = 1.0 / fps
    cmd = ServoCommand()
    rows = []
    steps = int(round(duration_s * fps))
    for k in range(steps):
        bbox = detector(state)
        if bbox is not None:
            errors = bbox_error(bbox, frame_w, frame_h, cfg.target_area_fraction)
            cmd = servo_step(errors, bank, dt)
        else:
            errors = None
            cmd = cmd.decayed()
        state = kinematic_step(state, cmd, dt, cfg.v_max, cfg.omega_max)
        rows.append(
            FollowLogRow(
                t=(k + 1) * dt,
                state=state,
                errors=errors,
                cmd=cmd,
                detected=bbox is not None,
            )
        )
    return rows


def make_offset_world(
    offset_x: float,
    offset_y: float,
    config: ServoConfig,
    camera: CameraModel | None = None,
    distance_ratio: float = 1.25,
) -> FollowWorld:
    """World where the diver starts at the given fractional image offsets and
    at ``distance_ratio`` times the standoff distance."""
    camera = camera or CameraModel()
    dist = 2.0 * distance_ratio
    bearing = offset_x * camera.hfov / 2.0
    elevation = offset_y * camera.vfov / 2.0
    horiz = dist * math.cos(elevation)
    return FollowWorld(
        diver=(
            horiz * math.cos(bearing),
            horiz * math.sin(bearing),
            dist * math.sin(elevation),
        ),
        camera=camera,
        standoff_m=2.0,
        target_area_fraction=config.target_area_fraction,
    )


def write_follow_log(path: str | Path, rows: list[FollowLogRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FOLLOW_LOG_COLUMNS)
        for row in rows:
            writer.writerow(row.to_csv_row())
