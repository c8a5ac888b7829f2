"""Benchmark scenes, command profiles, and the strict scene-file format.

Scene parameters the source figures leave unstated (finger placements, push
speeds, peg dimensions, command waypoints) are fixed constants here and are
flagged in each scene's ``reconstructed`` mapping, which serializes with the
scene so downstream comparisons stay honest.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import QuasistaticError
from .geometry import (
    EPS_PENETRATION,
    ConvexPolygon,
    Disk,
    Finger,
    HalfPlane,
    Manipulator,
    Point,
    Pose2,
    Shape,
    contact_candidates,
    rectangle,
)
from .model import EllipsoidLimitSurface, FeedbackModel, GeneralLimitSurface


class SceneFormatError(QuasistaticError):
    """Malformed scene dictionary or file."""


def _check_keys(d: dict, allowed: set[str], context: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise SceneFormatError(f"unknown keys in {context}: {sorted(unknown)}")


# -- command profiles -----------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    v: tuple

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("segment must have t_end > t_start")


class PiecewiseProfile:
    """Piecewise-constant command: contiguous segments starting at t = 0."""

    def __init__(self, segments):
        self.segments = [s if isinstance(s, Segment) else Segment(*s) for s in segments]
        if not self.segments:
            raise ValueError("profile needs at least one segment")
        if abs(self.segments[0].t_start) > 1e-12:
            raise ValueError("first segment must start at t = 0")
        for a, b in zip(self.segments, self.segments[1:]):
            if abs(a.t_end - b.t_start) > 1e-9:
                raise ValueError("segments must be contiguous and non-overlapping")
        m = len(self.segments[0].v)
        if any(len(s.v) != m for s in self.segments):
            raise ValueError("all segments must share the command dimension")
        self.m = m

    @property
    def duration(self) -> float:
        return self.segments[-1].t_end

    def value_at(self, t: float) -> np.ndarray:
        if t < -1e-12 or t > self.duration + 1e-9:
            raise ValueError(f"t={t} outside profile span [0, {self.duration}]")
        for s in self.segments:
            if t < s.t_end - 1e-12:
                return np.array(s.v, dtype=float)
        return np.array(self.segments[-1].v, dtype=float)

    def max_speed(self) -> float:
        return max(max(abs(x) for x in s.v) for s in self.segments)

    def to_dict(self) -> dict:
        return {"type": "piecewise",
                "segments": [{"t_start": s.t_start, "t_end": s.t_end,
                              "v": list(s.v)} for s in self.segments]}


class SemicircleProfile:
    """Push direction rotating half a turn over the duration, same for all fingers.

    Linear finger coordinates receive speed * (cos, sin)(pi t / duration + phase);
    rotational coordinates receive zero.
    """

    def __init__(self, speed: float, duration: float, dofs, phase: float = 0.0):
        if speed <= 0 or duration <= 0:
            raise ValueError("speed and duration must be positive")
        self.speed = float(speed)
        self.duration = float(duration)
        self.phase = float(phase)
        self.dofs = tuple(dofs)
        if any(d not in ("xy", "xyt") for d in self.dofs):
            raise ValueError("dofs entries must be 'xy' or 'xyt'")
        self.m = sum(2 if d == "xy" else 3 for d in self.dofs)

    def value_at(self, t: float) -> np.ndarray:
        if t < -1e-12 or t > self.duration + 1e-9:
            raise ValueError(f"t={t} outside profile span [0, {self.duration}]")
        ang = math.pi * t / self.duration + self.phase
        planar = self.speed * np.array([math.cos(ang), math.sin(ang)])
        out = []
        for d in self.dofs:
            out.extend(planar)
            if d == "xyt":
                out.append(0.0)
        return np.array(out)

    def max_speed(self) -> float:
        return self.speed

    def to_dict(self) -> dict:
        return {"type": "semicircle", "speed": self.speed,
                "duration": self.duration, "phase": self.phase}


CommandProfile = PiecewiseProfile | SemicircleProfile


def profile_from_dict(d: dict, dofs) -> CommandProfile:
    _check_keys(d, {"type", "segments", "speed", "duration", "phase"}, "commands")
    kind = d.get("type")
    if kind == "piecewise":
        segs = []
        for s in d["segments"]:
            _check_keys(s, {"t_start", "t_end", "v"}, "commands.segments[]")
            segs.append(Segment(float(s["t_start"]), float(s["t_end"]),
                                tuple(float(x) for x in s["v"])))
        return PiecewiseProfile(segs)
    if kind == "semicircle":
        return SemicircleProfile(float(d["speed"]), float(d["duration"]),
                                 dofs, float(d.get("phase", 0.0)))
    raise SceneFormatError(f"unknown command profile type: {kind!r}")


# -- scene ----------------------------------------------------------------------

@dataclass(frozen=True)
class SimDefaults:
    h: float
    duration: float
    activation: float | None = None


@dataclass
class Scene:
    """Complete problem description: bodies, materials, feedback, commands."""

    name: str
    object_shape: Shape
    object_pose: Pose2
    limit_surface: EllipsoidLimitSurface | GeneralLimitSurface
    manipulator: Manipulator
    feedback: FeedbackModel
    statics: list[tuple[Shape, Pose2]]
    mu_fingers: list[float]
    mu_statics: list[float]
    commands: CommandProfile
    sim: SimDefaults
    reconstructed: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.manipulator.m

    def validate(self, eps_pen: float = EPS_PENETRATION) -> None:
        if self.feedback.m != self.m:
            raise ValueError(f"feedback dimension {self.feedback.m} != m={self.m}")
        if len(self.mu_fingers) != len(self.manipulator.fingers):
            raise ValueError("one friction coefficient per finger required")
        if len(self.mu_statics) != len(self.statics):
            raise ValueError("one friction coefficient per static body required")
        if any(mu < 0 for mu in self.mu_fingers + self.mu_statics):
            raise ValueError("friction coefficients must be nonnegative")
        if self.commands.m != self.m:
            raise ValueError("command profile dimension mismatch")
        cs = contact_candidates(self.object_shape, self.object_pose,
                                self.manipulator, self.manipulator.initial_config(),
                                self.statics, self.mu_fingers, self.mu_statics,
                                float("inf"))
        if cs.k and float(cs.gaps.min()) < -eps_pen:
            raise ValueError(
                f"initial configuration penetrates by {-float(cs.gaps.min()):.3e} m")

    def with_c(self, c: float) -> "Scene":
        out = Scene(**{**self.__dict__, "feedback": self.feedback.with_c(c)})
        return out


# -- serialization ---------------------------------------------------------------

def _shape_to_dict(shape: Shape) -> dict:
    if isinstance(shape, Disk):
        return {"type": "disk", "radius": shape.radius}
    if isinstance(shape, ConvexPolygon):
        return {"type": "polygon", "vertices": shape.vertices.tolist()}
    if isinstance(shape, Point):
        return {"type": "point"}
    if isinstance(shape, HalfPlane):
        return {"type": "half_plane", "normal": list(shape.normal),
                "offset": shape.offset}
    raise SceneFormatError(f"unserializable shape {type(shape).__name__}")


def _shape_from_dict(d: dict) -> Shape:
    _check_keys(d, {"type", "radius", "vertices", "normal", "offset"}, "shape")
    kind = d.get("type")
    if kind == "disk":
        return Disk(float(d["radius"]))
    if kind == "polygon":
        return ConvexPolygon(d["vertices"])
    if kind == "point":
        return Point()
    if kind == "half_plane":
        return HalfPlane(tuple(d["normal"]), float(d["offset"]))
    raise SceneFormatError(f"unknown shape type: {kind!r}")


_TOP_KEYS = {"name", "object", "manipulator", "statics", "friction", "feedback",
             "limit_surface", "commands", "sim", "reconstructed"}


def scene_to_dict(scene: Scene) -> dict:
    if not isinstance(scene.limit_surface, EllipsoidLimitSurface):
        raise SceneFormatError("only ellipsoid limit surfaces serialize to scene files")
    return {
        "name": scene.name,
        "object": {"shape": _shape_to_dict(scene.object_shape),
                   "pose": list(scene.object_pose.as_array())},
        "manipulator": {"fingers": [
            {"shape": _shape_to_dict(f.shape), "pose": list(f.pose.as_array()),
             "dofs": f.dofs} for f in scene.manipulator.fingers]},
        "statics": [{"shape": _shape_to_dict(s), "pose": list(p.as_array())}
                    for s, p in scene.statics],
        "friction": {"fingers": list(scene.mu_fingers),
                     "statics": list(scene.mu_statics)},
        "feedback": {"B": scene.feedback.B.tolist(), "c": scene.feedback.c},
        "limit_surface": {"type": "ellipsoid",
                          "A_tilde": scene.limit_surface.A_tilde.tolist()},
        "commands": scene.commands.to_dict(),
        "sim": ({"h": scene.sim.h, "duration": scene.sim.duration}
                | ({"activation": scene.sim.activation}
                   if scene.sim.activation is not None else {})),
        "reconstructed": dict(scene.reconstructed),
    }


def scene_from_dict(d: dict) -> Scene:
    _check_keys(d, _TOP_KEYS, "scene")
    for key in ("object", "manipulator", "friction", "feedback",
                "limit_surface", "commands", "sim"):
        if key not in d:
            raise SceneFormatError(f"scene is missing required key {key!r}")
    obj = d["object"]
    _check_keys(obj, {"shape", "pose"}, "object")
    manip_d = d["manipulator"]
    _check_keys(manip_d, {"fingers"}, "manipulator")
    fingers = []
    for f in manip_d["fingers"]:
        _check_keys(f, {"shape", "pose", "dofs"}, "manipulator.fingers[]")
        fingers.append(Finger(_shape_from_dict(f["shape"]),
                              Pose2.from_array(f["pose"]),
                              f.get("dofs", "xy")))
    manipulator = Manipulator(fingers)
    statics = []
    for s in d.get("statics", []):
        _check_keys(s, {"shape", "pose"}, "statics[]")
        statics.append((_shape_from_dict(s["shape"]), Pose2.from_array(s["pose"])))
    fr = d["friction"]
    _check_keys(fr, {"fingers", "statics"}, "friction")
    fb_d = d["feedback"]
    _check_keys(fb_d, {"B", "c"}, "feedback")
    B = np.eye(manipulator.m) if fb_d["B"] == "identity" else np.asarray(fb_d["B"], dtype=float)
    feedback = FeedbackModel(B, float(fb_d["c"]))
    ls_d = d["limit_surface"]
    _check_keys(ls_d, {"type", "A_tilde"}, "limit_surface")
    if ls_d.get("type") != "ellipsoid":
        raise SceneFormatError("limit_surface.type must be 'ellipsoid'")
    A_tilde = np.eye(3) if ls_d["A_tilde"] == "identity" \
        else np.asarray(ls_d["A_tilde"], dtype=float)
    sim_d = d["sim"]
    _check_keys(sim_d, {"h", "duration", "activation"}, "sim")
    sim = SimDefaults(float(sim_d["h"]), float(sim_d["duration"]),
                      float(sim_d["activation"]) if "activation" in sim_d else None)
    dofs = [f.dofs for f in fingers]
    scene = Scene(
        name=str(d.get("name", "unnamed")),
        object_shape=_shape_from_dict(obj["shape"]),
        object_pose=Pose2.from_array(obj["pose"]),
        limit_surface=EllipsoidLimitSurface(A_tilde),
        manipulator=manipulator,
        feedback=feedback,
        statics=statics,
        mu_fingers=[float(x) for x in fr["fingers"]],
        mu_statics=[float(x) for x in fr["statics"]],
        commands=profile_from_dict(d["commands"], dofs),
        sim=sim,
        reconstructed=dict(d.get("reconstructed", {})),
    )
    scene.validate()
    return scene


def scene_to_json(scene: Scene) -> str:
    """Canonical serialization: sorted keys, no whitespace."""
    return json.dumps(scene_to_dict(scene), sort_keys=True,
                      separators=(",", ":"))


def scene_from_json(text: str) -> Scene:
    return scene_from_dict(json.loads(text))


def scene_hash(scene: Scene) -> str:
    return hashlib.sha256(scene_to_json(scene).encode("utf-8")).hexdigest()


def load_scene_file(path) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_json(fh.read())


def save_scene_file(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scene_to_json(scene) + "\n")


# -- builtin scenes ---------------------------------------------------------------

PUSH_SPEED = 0.1          # m/s; source figures do not state push speeds
FINGER_HALF_ANGLE = math.pi / 6   # disk-push finger spread about the push axis


def _disk_push_base(name: str, c: float) -> dict:
    """Disk of radius 1 pushed by two point fingers resting on its left side."""
    angles = (math.pi - FINGER_HALF_ANGLE, math.pi + FINGER_HALF_ANGLE)
    fingers = [Finger(Point(), Pose2(math.cos(a), math.sin(a))) for a in angles]
    return dict(
        name=name,
        object_shape=Disk(1.0),
        object_pose=Pose2(),
        limit_surface=EllipsoidLimitSurface(np.eye(3)),
        manipulator=Manipulator(fingers),
        feedback=FeedbackModel.identity(4, c),
        statics=[],
        mu_fingers=[1.0, 1.0],
        mu_statics=[],
        sim=SimDefaults(h=0.025, duration=10.0),
        reconstructed={
            "finger_angles_rad": list(angles),
            "push_speed_mps": PUSH_SPEED,
            "default_c": c,
        },
    )


def two_finger_disk_symmetric(c: float = 0.01) -> Scene:
    base = _disk_push_base("two_finger_disk_symmetric", c)
    v = (PUSH_SPEED, 0.0, PUSH_SPEED, 0.0)
    base["commands"] = PiecewiseProfile([Segment(0.0, 10.0, v)])
    return Scene(**base)


def two_finger_disk_asymmetric(c: float = 0.01) -> Scene:
    base = _disk_push_base("two_finger_disk_asymmetric", c)
    v = (1.2 * PUSH_SPEED, 0.0, 0.8 * PUSH_SPEED, 0.0)
    base["commands"] = PiecewiseProfile([Segment(0.0, 10.0, v)])
    base["reconstructed"]["speed_split"] = [1.2, 0.8]
    return Scene(**base)


def two_finger_disk_semicircle(c: float = 0.01) -> Scene:
    base = _disk_push_base("two_finger_disk_semicircle", c)
    base["commands"] = SemicircleProfile(PUSH_SPEED, 10.0, ("xy", "xy"))
    return Scene(**base)


def disk_wall_roll(c: float = 0.01) -> Scene:
    """Disk pushed down-right into a wall at y = 0, then along it."""
    base = _disk_push_base("disk_wall_roll", c)
    center = np.array([0.0, 1.2])
    angles = (2.0 * math.pi / 3.0, math.pi / 2.0)
    fingers = [Finger(Point(), Pose2(*(center + np.array([math.cos(a), math.sin(a)]))))
               for a in angles]
    base["object_pose"] = Pose2(0.0, 1.2)
    base["manipulator"] = Manipulator(fingers)
    base["statics"] = [(HalfPlane((0.0, 1.0), 0.0), Pose2())]
    base["mu_statics"] = [1.0]
    v = (0.08, -0.05, 0.08, -0.05)
    base["commands"] = PiecewiseProfile([Segment(0.0, 10.0, v)])
    base["reconstructed"].update({
        "finger_angles_rad": list(angles),
        "command_mps": list(v[:2]),
        "initial_wall_gap_m": 0.2,
    })
    return Scene(**base)


def four_finger_pinch(c: float = 0.01) -> Scene:
    """Square squeezed at all four face midpoints with unit inward commands."""
    fingers = [Finger(Disk(0.05), Pose2(0.25, 0.0)),
               Finger(Disk(0.05), Pose2(0.0, 0.25)),
               Finger(Disk(0.05), Pose2(-0.25, 0.0)),
               Finger(Disk(0.05), Pose2(0.0, -0.25))]
    v = (-1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 1.0)
    return Scene(
        name="four_finger_pinch",
        object_shape=rectangle(0.4, 0.4),
        object_pose=Pose2(),
        limit_surface=EllipsoidLimitSurface(np.eye(3)),
        manipulator=Manipulator(fingers),
        feedback=FeedbackModel.identity(8, c),
        statics=[],
        mu_fingers=[1.0] * 4,
        mu_statics=[],
        commands=PiecewiseProfile([Segment(0.0, 10.0, v)]),
        sim=SimDefaults(h=0.025, duration=10.0),
        reconstructed={"finger_radius_m": 0.05, "command_speed_mps": 1.0,
                       "default_c": c},
    )


def square_pinch(c: float = 0.01) -> Scene:
    """Pinch with per-finger gains chosen to drift the square up and spin it."""
    scene = four_finger_pinch(c)
    gains = [1.0, 1.0, 2.0, 2.0, 1.5, 1.5, 0.5, 0.5]
    return Scene(**{**scene.__dict__,
                    "name": "square_pinch",
                    "feedback": FeedbackModel(np.diag(gains), c),
                    "reconstructed": {**scene.reconstructed,
                                      "per_finger_gains": gains,
                                      "object_mass_kg_unused": 0.01}})


# peg-in-hole reconstruction constants
PEG_W, PEG_H = 0.2, 0.6
SLOT_TOL = 1.01            # slot width = 1.01 * peg width
SLOT_DEPTH = 0.3
GRIP_HEIGHT = 0.25         # grip point above the peg centroid
FINGER_TRI = ConvexPolygon([[0.12, 0.0], [-0.06, 0.06], [-0.06, -0.06]])


def peg_in_hole(c: float = 0.01) -> Scene:
    """Rectangular peg, two triangular fingers, slot with 1% width tolerance.

    Hand-designed script: grasp; descend off-center so the peg catches and
    jams on the right slot corner; drag left along the corner (a differential
    vertical command steadies the tilt); enter the slot mouth tilted; press
    down so the walls align the peg onto the slot floor.
    """
    half_slot = SLOT_TOL * PEG_W / 2.0
    block = rectangle(1.0, SLOT_DEPTH)
    left_block = (block, Pose2(-(half_slot + 0.5), -SLOT_DEPTH / 2.0))
    right_block = (block, Pose2(half_slot + 0.5, -SLOT_DEPTH / 2.0))
    floor = (HalfPlane((0.0, 1.0), -SLOT_DEPTH), Pose2())

    peg_x0, peg_y0 = 0.05, 0.45
    grip_y = peg_y0 + GRIP_HEIGHT
    gap0 = 0.02
    left_finger = Finger(FINGER_TRI,
                         Pose2(peg_x0 - PEG_W / 2.0 - 0.12 - gap0, grip_y, 0.0),
                         dofs="xyt")
    right_finger = Finger(FINGER_TRI,
                          Pose2(peg_x0 + PEG_W / 2.0 + 0.12 + gap0, grip_y, math.pi),
                          dofs="xyt")

    segments = [
        # grasp
        Segment(0.0, 1.0, (0.03, 0.0, 0.0, -0.03, 0.0, 0.0)),
        # descend: catch the right slot corner
        Segment(1.0, 2.6, (0.01, -0.10, 0.0, -0.01, -0.10, 0.0)),
        # jam on the corner and drag left along it
        Segment(2.6, 5.0, (-0.025, 0.0, 0.0, -0.035, -0.03, 0.0)),
        # twist into the slot mouth
        Segment(5.0, 7.1, (0.005, -0.01, 0.0, -0.005, -0.04, 0.0)),
        # press in; the walls align the peg
        Segment(7.1, 15.5, (0.005, -0.045, 0.0, -0.005, -0.045, 0.0)),
        # hold
        Segment(15.5, 16.0, (0.01, 0.0, 0.0, -0.01, 0.0, 0.0)),
    ]
    return Scene(
        name="peg_in_hole",
        object_shape=rectangle(PEG_W, PEG_H),
        object_pose=Pose2(peg_x0, peg_y0),
        limit_surface=EllipsoidLimitSurface(np.eye(3)),
        manipulator=Manipulator([left_finger, right_finger]),
        feedback=FeedbackModel.identity(6, c),
        statics=[left_block, right_block, floor],
        mu_fingers=[1.0, 1.0],
        mu_statics=[0.3, 0.3, 0.3],
        commands=PiecewiseProfile(segments),
        sim=SimDefaults(h=0.05, duration=16.0, activation=0.03),
        reconstructed={
            "peg_size_m": [PEG_W, PEG_H],
            "slot_width_m": 2.0 * half_slot,
            "slot_depth_m": SLOT_DEPTH,
            "finger_triangle_m": FINGER_TRI.vertices.tolist(),
            "grip_height_m": GRIP_HEIGHT,
            "command_waypoints": "hand-designed grasp/jam/twist/insert script",
            "friction_statics": 0.3,
        },
    )


SCENE_BUILDERS = {
    "two_finger_disk_symmetric": two_finger_disk_symmetric,
    "two_finger_disk_asymmetric": two_finger_disk_asymmetric,
    "two_finger_disk_semicircle": two_finger_disk_semicircle,
    "disk_wall_roll": disk_wall_roll,
    "four_finger_pinch": four_finger_pinch,
    "peg_in_hole": peg_in_hole,
    "square_pinch": square_pinch,
}


def builtin_scene(name: str) -> Scene:
    """Fully specified benchmark scene; raises KeyError-like on unknown names."""
    try:
        builder = SCENE_BUILDERS[name]
    except KeyError:
        raise SceneFormatError(
            f"unknown scene {name!r}; available: {sorted(SCENE_BUILDERS)}") from None
    scene = builder()
    scene.validate()
    return scene
