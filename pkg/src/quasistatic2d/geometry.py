"""Planar rigid-body geometry: shapes, poses, gap functions, contact frames.

Conventions used throughout:

* A body's pose origin is its wrench reference point (center of the support
  pressure distribution for the object, rotation center for a finger).
  Builders construct polygons with the centroid at the body origin.
* ``signed_distance_pair(A, B)`` returns the gap (negative = penetration
  depth) plus witness points on each boundary and the unit separation
  direction: the gap grows when B moves along it.  For separated pairs it
  points from A's witness toward B's witness.  Swapping the bodies preserves
  the gap and negates the direction.
* Contact frames store the normal pointing *into the object* (the direction
  the object must move to open the gap) and the tangent obtained by rotating
  that normal 90 degrees counterclockwise.  Each contact's tangential motion
  is split into +t and -t rows so tangential forces can be kept nonnegative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import GeometryError

# Penetration allowed before a configuration counts as infeasible at assembly.
EPS_PENETRATION = 1e-6

# Two boundary features closer than this are treated as touching; the contact
# direction then comes from the feature geometry instead of the witness gap.
_TOUCH_EPS = 1e-9

# Angular tolerance for classifying two polygon faces as a face-face contact.
_PARALLEL_EPS = 1e-6


def rot2(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def perp(v) -> np.ndarray:
    """90-degree counterclockwise rotation."""
    return np.array([-v[1], v[0]])


@dataclass(frozen=True)
class Pose2:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError("pose entries must be finite")

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def rotation(self) -> np.ndarray:
        return rot2(self.theta)

    def transform(self, p_body) -> np.ndarray:
        return self.rotation() @ np.asarray(p_body, dtype=float) + self.xy

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @staticmethod
    def from_array(a) -> "Pose2":
        a = np.asarray(a, dtype=float)
        return Pose2(float(a[0]), float(a[1]), float(a[2]))


def body_twist_transform(theta: float) -> np.ndarray:
    """Map body-axis velocity (vx_b, vy_b, omega) to world velocity."""
    if not math.isfinite(theta):
        raise ValueError("theta must be finite")
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# -- shapes -------------------------------------------------------------------

@dataclass(frozen=True)
class Point:
    pass


@dataclass(frozen=True)
class Disk:
    radius: float

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError("disk radius must be positive and finite")


class ConvexPolygon:
    """Strictly convex polygon, counterclockwise body-frame vertices."""

    __slots__ = ("vertices",)

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("polygon needs >= 3 planar vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("polygon vertices must be finite")
        n = v.shape[0]
        scale = float(np.max(np.abs(v))) + 1.0
        for i in range(n):
            e0 = v[(i + 1) % n] - v[i]
            e1 = v[(i + 2) % n] - v[(i + 1) % n]
            if cross2(e0, e1) <= 1e-12 * scale * scale:
                raise ValueError("polygon must be strictly convex and counterclockwise")
        object.__setattr__(self, "vertices", v)
        v.setflags(write=False)

    def __setattr__(self, *args):
        raise AttributeError("ConvexPolygon is immutable")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def world_vertices(self, pose: Pose2) -> np.ndarray:
        return self.vertices @ pose.rotation().T + pose.xy

    def __repr__(self):
        return f"ConvexPolygon({self.n_vertices} vertices)"


@dataclass(frozen=True)
class HalfPlane:
    """Static wall: free space is where normal . x >= offset."""

    normal: tuple[float, float]
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = float(np.linalg.norm(n))
        if not math.isclose(norm, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError("half-plane normal must be a unit vector")
        if not math.isfinite(self.offset):
            raise ValueError("half-plane offset must be finite")
        object.__setattr__(self, "normal", (float(n[0]), float(n[1])))

    @property
    def n(self) -> np.ndarray:
        return np.array(self.normal)


Shape = Point | Disk | ConvexPolygon | HalfPlane


def rectangle(width: float, height: float) -> ConvexPolygon:
    """Axis-aligned rectangle centered on the body origin."""
    hw, hh = width / 2.0, height / 2.0
    return ConvexPolygon([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])


def regular_polygon(n: int, circumradius: float, phase: float = 0.0) -> ConvexPolygon:
    angles = phase + 2.0 * np.pi * np.arange(n) / n
    return ConvexPolygon(np.column_stack([np.cos(angles), np.sin(angles)]) * circumradius)


# -- low-level distance helpers -----------------------------------------------

def _point_segment(p, a, b):
    """Distance from p to segment ab with the closest point."""
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    cp = a + t * ab
    return float(np.linalg.norm(p - cp)), cp


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = cross2(q2 - q1, p1 - q1)
    d2 = cross2(q2 - q1, p2 - q1)
    d3 = cross2(p2 - p1, q1 - p1)
    d4 = cross2(p2 - p1, q2 - p1)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _segment_segment(p1, p2, q1, q2):
    """Closest points between two segments (zero distance if they cross)."""
    if _segments_intersect(p1, p2, q1, q2):
        # intersection point via line-line solve
        r, s = p2 - p1, q2 - q1
        denom = cross2(r, s)
        t = cross2(q1 - p1, s) / denom
        x = p1 + t * r
        return 0.0, x, x
    best = None
    for p, a, b, flip in ((p1, q1, q2, False), (p2, q1, q2, False),
                          (q1, p1, p2, True), (q2, p1, p2, True)):
        d, cp = _point_segment(p, a, b)
        if best is None or d < best[0]:
            best = (d, cp, p) if flip else (d, p, cp)
    return best


def _point_in_polygon(p, verts) -> bool:
    n = verts.shape[0]
    for i in range(n):
        if cross2(verts[(i + 1) % n] - verts[i], p - verts[i]) < 0.0:
            return False
    return True


def _polygon_boundary_closest(p, verts):
    """Closest boundary point to p; returns (distance, point, edge_index, t)."""
    best = None
    n = verts.shape[0]
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        d, cp = _point_segment(p, a, b)
        if best is None or d < best[0]:
            ab = b - a
            denom = float(ab @ ab)
            t = 0.0 if denom == 0.0 else float((cp - a) @ ab / denom)
            best = (d, cp, i, t)
    return best


def _polygon_edge_normal(verts, i) -> np.ndarray:
    """Outward unit normal of edge i (CCW polygon)."""
    a, b = verts[i], verts[(i + 1) % verts.shape[0]]
    e = b - a
    n = np.array([e[1], -e[0]])
    return n / np.linalg.norm(n)


def _polygon_feature_normal(verts, edge_index, t) -> np.ndarray:
    """Outward direction at a boundary point; vertex contacts get the bisector."""
    n_edges = verts.shape[0]
    if t <= 1e-12:
        prev = (edge_index - 1) % n_edges
        n = _polygon_edge_normal(verts, prev) + _polygon_edge_normal(verts, edge_index)
    elif t >= 1.0 - 1e-12:
        nxt = (edge_index + 1) % n_edges
        n = _polygon_edge_normal(verts, edge_index) + _polygon_edge_normal(verts, nxt)
    else:
        return _polygon_edge_normal(verts, edge_index)
    return n / np.linalg.norm(n)


# -- signed distance between shape pairs --------------------------------------

@dataclass(frozen=True)
class DistanceResult:
    """Gap, boundary witness points, and unit separation direction (A to B)."""

    gap: float
    witness_a: np.ndarray
    witness_b: np.ndarray
    normal: np.ndarray

    def flipped(self) -> "DistanceResult":
        return DistanceResult(self.gap, self.witness_b, self.witness_a, -self.normal)


def _disk_point(disk: Disk, pose_a: Pose2, p: np.ndarray) -> DistanceResult:
    c = pose_a.xy
    delta = p - c
    d = float(np.linalg.norm(delta))
    if d < _TOUCH_EPS:
        u = np.array([1.0, 0.0])  # deterministic direction for the measure-zero case
    else:
        u = delta / d
    return DistanceResult(d - disk.radius, c + disk.radius * u, p, u)


def _polygon_point(poly: ConvexPolygon, pose_a: Pose2, p: np.ndarray) -> DistanceResult:
    verts = poly.world_vertices(pose_a)
    d, cp, edge, t = _polygon_boundary_closest(p, verts)
    inside = _point_in_polygon(p, verts)
    if d < _TOUCH_EPS:
        normal = _polygon_feature_normal(verts, edge, t)
        gap = 0.0
    elif inside:
        normal = (cp - p) / d
        gap = -d
    else:
        normal = (p - cp) / d
        gap = d
    return DistanceResult(gap, cp, p, normal)


def _disk_disk(a: Disk, pose_a: Pose2, b: Disk, pose_b: Pose2) -> DistanceResult:
    ca, cb = pose_a.xy, pose_b.xy
    delta = cb - ca
    d = float(np.linalg.norm(delta))
    u = np.array([1.0, 0.0]) if d < _TOUCH_EPS else delta / d
    return DistanceResult(d - a.radius - b.radius,
                          ca + a.radius * u, cb - b.radius * u, u)


def _polygon_disk(poly: ConvexPolygon, pose_a: Pose2, disk: Disk,
                  pose_b: Pose2) -> DistanceResult:
    # The point query's direction is already continuous through the boundary,
    # so the disk case is a radius offset along it.
    center = _polygon_point(poly, pose_a, pose_b.xy)
    normal = center.normal
    gap = center.gap - disk.radius
    witness_b = pose_b.xy - disk.radius * normal
    return DistanceResult(gap, center.witness_a, witness_b, normal)


def _support(verts, direction) -> float:
    return float(np.max(verts @ direction))


def _polygon_polygon(a: ConvexPolygon, pose_a: Pose2, b: ConvexPolygon,
                     pose_b: Pose2) -> DistanceResult:
    va, vb = a.world_vertices(pose_a), b.world_vertices(pose_b)

    # Candidate separating axes: outward face normals of both polygons.
    # sep(axis) is how far B lies beyond A along the axis (positive =
    # separated); the best axis maximizes it.
    best_sep, best_axis, axis_from_a = -np.inf, None, True
    for i in range(va.shape[0]):
        n = _polygon_edge_normal(va, i)
        sep = float(np.min(vb @ n)) - _support(va, n)
        if sep > best_sep:
            best_sep, best_axis, axis_from_a = sep, n, True
    for i in range(vb.shape[0]):
        n = _polygon_edge_normal(vb, i)
        sep = float(np.min(va @ n)) - _support(vb, n)
        if sep > best_sep:
            best_sep, best_axis, axis_from_a = sep, -n, False

    if best_sep > _TOUCH_EPS:
        # Disjoint: exact distance from the closest edge pair.
        best = None
        for i in range(va.shape[0]):
            p1, p2 = va[i], va[(i + 1) % va.shape[0]]
            for j in range(vb.shape[0]):
                q1, q2 = vb[j], vb[(j + 1) % vb.shape[0]]
                d, wa, wb = _segment_segment(p1, p2, q1, q2)
                if best is None or d < best[0]:
                    best = (d, wa, wb)
        d, wa, wb = best
        if d > _TOUCH_EPS:
            normal = (wb - wa) / d
        else:
            normal = best_axis
        return DistanceResult(d, wa, wb, normal)

    # Touching or overlapping: use the minimum-translation axis.  The witness
    # on the penetrating body is its deepest vertex along the axis.
    n = best_axis
    if axis_from_a:
        jb = int(np.argmin(vb @ n))
        wb = vb[jb]
        wa = wb - best_sep * n
    else:
        ja = int(np.argmax(va @ n))
        wa = va[ja]
        wb = wa + best_sep * n
    if abs(best_sep) <= _TOUCH_EPS:
        vertex_a = bool(np.min(np.linalg.norm(va - wa, axis=1)) <= _TOUCH_EPS)
        vertex_b = bool(np.min(np.linalg.norm(vb - wb, axis=1)) <= _TOUCH_EPS)
        if vertex_a and vertex_b:
            # Exact corner-on-corner: no face defines the direction, so use
            # the centroid line (deterministic total rule).
            delta = pose_b.xy - pose_a.xy
            nd = float(np.linalg.norm(delta))
            n = delta / nd if nd > _TOUCH_EPS else np.array([1.0, 0.0])
    return DistanceResult(best_sep, wa, wb, n)


def _shape_halfplane(shape: Shape, pose_a: Pose2, hp: HalfPlane) -> DistanceResult:
    n = hp.n
    if isinstance(shape, Point):
        p = pose_a.xy
        gap = float(n @ p) - hp.offset
        return DistanceResult(gap, p, p - gap * n, -n)
    if isinstance(shape, Disk):
        wa = pose_a.xy - shape.radius * n
        gap = float(n @ pose_a.xy) - hp.offset - shape.radius
        return DistanceResult(gap, wa, wa - gap * n, -n)
    if isinstance(shape, ConvexPolygon):
        verts = shape.world_vertices(pose_a)
        gaps = verts @ n - hp.offset
        i = int(np.argmin(gaps))
        wa = verts[i]
        return DistanceResult(float(gaps[i]), wa, wa - gaps[i] * n, -n)
    raise GeometryError(f"unsupported pair: {type(shape).__name__} vs HalfPlane")


def signed_distance_pair(shape_a: Shape, pose_a: Pose2, shape_b: Shape,
                         pose_b: Pose2) -> DistanceResult:
    """Signed gap between two shapes (negative = penetration depth).

    Supported pairs: point-disk, point-polygon, disk-disk, disk-polygon,
    polygon-polygon, and half-plane against any non-half-plane shape.
    """
    a, b = shape_a, shape_b
    if isinstance(a, HalfPlane) and not isinstance(b, HalfPlane):
        return _shape_halfplane(b, pose_b, a).flipped()
    if isinstance(b, HalfPlane) and not isinstance(a, HalfPlane):
        return _shape_halfplane(a, pose_a, b)
    if isinstance(a, Disk) and isinstance(b, Point):
        return _disk_point(a, pose_a, pose_b.xy)
    if isinstance(a, Point) and isinstance(b, Disk):
        return _disk_point(b, pose_b, pose_a.xy).flipped()
    if isinstance(a, ConvexPolygon) and isinstance(b, Point):
        return _polygon_point(a, pose_a, pose_b.xy)
    if isinstance(a, Point) and isinstance(b, ConvexPolygon):
        return _polygon_point(b, pose_b, pose_a.xy).flipped()
    if isinstance(a, Disk) and isinstance(b, Disk):
        return _disk_disk(a, pose_a, b, pose_b)
    if isinstance(a, ConvexPolygon) and isinstance(b, Disk):
        return _polygon_disk(a, pose_a, b, pose_b)
    if isinstance(a, Disk) and isinstance(b, ConvexPolygon):
        return _polygon_disk(b, pose_b, a, pose_a).flipped()
    if isinstance(a, ConvexPolygon) and isinstance(b, ConvexPolygon):
        return _polygon_polygon(a, pose_a, b, pose_b)
    raise GeometryError(
        f"unsupported pair: {type(a).__name__} vs {type(b).__name__}")


# -- manipulator --------------------------------------------------------------

@dataclass(frozen=True)
class Finger:
    """One manipulator body.  dofs: "xy" (orientation fixed) or "xyt"."""

    shape: Shape
    pose: Pose2
    dofs: str = "xy"

    def __post_init__(self):
        if self.dofs not in ("xy", "xyt"):
            raise ValueError("finger dofs must be 'xy' or 'xyt'")
        if isinstance(self.shape, HalfPlane):
            raise ValueError("a finger cannot be a half-plane")

    @property
    def ndof(self) -> int:
        return 2 if self.dofs == "xy" else 3


class Manipulator:
    """Ordered finger collection; flattens finger poses into the config vector."""

    def __init__(self, fingers):
        self.fingers = list(fingers)
        if not self.fingers:
            raise ValueError("manipulator needs at least one finger")
        self.slices: list[slice] = []
        start = 0
        for f in self.fingers:
            self.slices.append(slice(start, start + f.ndof))
            start += f.ndof
        self.m = start

    def initial_config(self) -> np.ndarray:
        q = np.zeros(self.m)
        for f, sl in zip(self.fingers, self.slices):
            q[sl] = f.pose.as_array()[: f.ndof]
        return q

    def poses_at(self, q) -> list[Pose2]:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.m,):
            raise ValueError(f"manipulator config must have length {self.m}")
        poses = []
        for f, sl in zip(self.fingers, self.slices):
            vals = q[sl]
            theta = vals[2] if f.ndof == 3 else f.pose.theta
            poses.append(Pose2(float(vals[0]), float(vals[1]), float(theta)))
        return poses

    def linear_dof_mask(self) -> np.ndarray:
        mask = np.zeros(self.m, dtype=bool)
        for f, sl in zip(self.fingers, self.slices):
            mask[sl.start:sl.start + 2] = True
        return mask


# -- contacts -----------------------------------------------------------------

@dataclass(frozen=True)
class Contact:
    """One active contact pair between the object and a finger or static body.

    ``feature`` records how to re-evaluate the gap at a nearby configuration:
    ("pair",) for an ordinary closest-point pair, ("hp_vertex", i) for polygon
    vertex i against a half-plane, ("face_face", edge_a, edge_b, end) for one
    endpoint of a face-face overlap segment.
    """

    kind: str                  # "finger" | "static"
    other_index: int
    witness_obj: np.ndarray
    witness_other: np.ndarray
    normal_into_obj: np.ndarray
    gap: float
    mu: float
    feature: tuple = ("pair",)


@dataclass
class ContactSet:
    """Active contacts plus (once built) the stacked contact Jacobians."""

    contacts: list[Contact]
    m: int
    N_obj: np.ndarray | None = None   # (k, 3)
    N_manip: np.ndarray | None = None  # (k, m)
    T_obj: np.ndarray | None = None   # (2k, 3)
    T_manip: np.ndarray | None = None  # (2k, m)
    E: np.ndarray | None = None       # (2k, k)
    mu_diag: np.ndarray | None = None  # (k, k)

    @property
    def k(self) -> int:
        return len(self.contacts)

    @property
    def gaps(self) -> np.ndarray:
        return np.array([c.gap for c in self.contacts])

    def object_jacobian(self) -> np.ndarray:
        """Stacked J_O = [N_obj; T_obj], shape (3k, 3)."""
        return np.vstack([self.N_obj, self.T_obj])

    def manipulator_jacobian(self) -> np.ndarray:
        return np.vstack([self.N_manip, self.T_manip])


def _face_face_contacts(kind, index, obj_poly, obj_pose, other_poly, other_pose,
                        mu, result: DistanceResult, activation) -> list[Contact] | None:
    """Two endpoint contacts when the closest features are parallel faces."""
    va = obj_poly.world_vertices(obj_pose)
    vb = other_poly.world_vertices(other_pose)
    sep_dir = result.normal  # from object toward the other body

    edge_a = edge_b = None
    for i in range(va.shape[0]):
        if float(_polygon_edge_normal(va, i) @ sep_dir) > 1.0 - _PARALLEL_EPS:
            edge_a = i
            break
    for j in range(vb.shape[0]):
        if float(_polygon_edge_normal(vb, j) @ -sep_dir) > 1.0 - _PARALLEL_EPS:
            edge_b = j
            break
    if edge_a is None or edge_b is None:
        return None
    contacts = []
    for end in (0, 1):
        c = _eval_face_face(obj_poly, obj_pose, other_poly, other_pose,
                            edge_a, edge_b, end)
        if c is None:
            return None
        wa, wb, n_sep, gap = c
        if gap > activation:
            continue
        contacts.append(Contact(kind, index, wa, wb, -n_sep, gap, mu,
                                feature=("face_face", edge_a, edge_b, end)))
    return contacts if len(contacts) == 2 else None


def _eval_face_face(obj_poly, obj_pose, other_poly, other_pose, edge_a, edge_b, end):
    """Overlap-segment endpoint for a face-face pair; None if degenerate."""
    va = obj_poly.world_vertices(obj_pose)
    vb = other_poly.world_vertices(other_pose)
    n_sep = _polygon_edge_normal(va, edge_a)  # outward from object ~ toward other
    t = perp(n_sep)
    a0, a1 = va[edge_a], va[(edge_a + 1) % va.shape[0]]
    b0, b1 = vb[edge_b], vb[(edge_b + 1) % vb.shape[0]]
    sa = sorted([float(t @ a0), float(t @ a1)])
    sb = sorted([float(t @ b0), float(t @ b1)])
    lo, hi = max(sa[0], sb[0]), min(sa[1], sb[1])
    if hi - lo <= _TOUCH_EPS:
        mid = 0.5 * (lo + hi)
        lo = hi = mid
    s = lo if end == 0 else hi
    wa = _edge_point_at_tangent(a0, a1, t, s)
    wb = _edge_point_at_tangent(b0, b1, t, s)
    gap = float(n_sep @ (wb - wa))
    return wa, wb, n_sep, gap


def _edge_point_at_tangent(a0, a1, t, s):
    e = a1 - a0
    denom = float(t @ e)
    lam = 0.0 if abs(denom) < 1e-15 else (s - float(t @ a0)) / denom
    lam = min(max(lam, 0.0), 1.0)
    return a0 + lam * e


def _pair_contacts(kind, index, obj_shape, obj_pose, other_shape, other_pose,
                   mu, activation) -> list[Contact]:
    """Contacts for one object/other pair, applying the face-face rule."""
    if isinstance(other_shape, HalfPlane) and isinstance(obj_shape, ConvexPolygon):
        verts = obj_shape.world_vertices(obj_pose)
        n = other_shape.n
        out = []
        for i in range(verts.shape[0]):
            gap = float(n @ verts[i]) - other_shape.offset
            if gap <= activation:
                out.append(Contact(kind, index, verts[i], verts[i] - gap * n,
                                   n.copy(), gap, mu, feature=("hp_vertex", i)))
        return out
    result = signed_distance_pair(obj_shape, obj_pose, other_shape, other_pose)
    if result.gap > activation:
        return []
    if isinstance(obj_shape, ConvexPolygon) and isinstance(other_shape, ConvexPolygon):
        ff = _face_face_contacts(kind, index, obj_shape, obj_pose, other_shape,
                                 other_pose, mu, result, activation)
        if ff is not None:
            return ff
    normal_into_obj = -result.normal
    if float(np.linalg.norm(normal_into_obj)) < 0.5:
        raise GeometryError("degenerate contact: zero-length normal")
    return [Contact(kind, index, result.witness_a, result.witness_b,
                    normal_into_obj, result.gap, mu, feature=("pair",))]


def contact_candidates(obj_shape: Shape, obj_pose: Pose2, manipulator: Manipulator,
                       q_manip, statics, mu_fingers, mu_statics,
                       activation: float) -> ContactSet:
    """All object-finger and object-static pairs with gap <= activation.

    ``statics`` is a list of (shape, pose).  Face-face polygon contact emits
    two point contacts at the overlap-segment endpoints; a polygon resting on
    a half-plane emits one contact per vertex within activation distance.
    """
    if activation < 0:
        raise ValueError("activation distance must be nonnegative")
    contacts: list[Contact] = []
    for fi, (finger, pose) in enumerate(zip(manipulator.fingers,
                                            manipulator.poses_at(q_manip))):
        contacts.extend(_pair_contacts("finger", fi, obj_shape, obj_pose,
                                       finger.shape, pose, mu_fingers[fi], activation))
    for si, (shape, pose) in enumerate(statics):
        contacts.extend(_pair_contacts("static", si, obj_shape, obj_pose,
                                       shape, pose, mu_statics[si], activation))
    return ContactSet(contacts=contacts, m=manipulator.m)


def refresh_contact(contact: Contact, obj_shape, obj_pose, other_shape,
                    other_pose) -> Contact:
    """Re-evaluate one frozen contact pair at a nearby configuration."""
    feat = contact.feature
    if feat[0] == "hp_vertex":
        verts = obj_shape.world_vertices(obj_pose)
        v = verts[feat[1]]
        n = other_shape.n
        gap = float(n @ v) - other_shape.offset
        return replace(contact, witness_obj=v, witness_other=v - gap * n, gap=gap)
    if feat[0] == "face_face":
        out = _eval_face_face(obj_shape, obj_pose, other_shape, other_pose,
                              feat[1], feat[2], feat[3])
        wa, wb, n_sep, gap = out
        return replace(contact, witness_obj=wa, witness_other=wb,
                       normal_into_obj=-n_sep, gap=gap)
    result = signed_distance_pair(obj_shape, obj_pose, other_shape, other_pose)
    return replace(contact, witness_obj=result.witness_a,
                   witness_other=result.witness_b,
                   normal_into_obj=-result.normal, gap=result.gap)


def refresh_contacts(contact_set: ContactSet, obj_shape, obj_pose,
                     manipulator: Manipulator, q_manip, statics) -> ContactSet:
    poses = manipulator.poses_at(q_manip)
    refreshed = []
    for c in contact_set.contacts:
        if c.kind == "finger":
            other_shape, other_pose = manipulator.fingers[c.other_index].shape, poses[c.other_index]
        else:
            other_shape, other_pose = statics[c.other_index]
        refreshed.append(refresh_contact(c, obj_shape, obj_pose, other_shape, other_pose))
    return ContactSet(contacts=refreshed, m=contact_set.m)


def contact_jacobians(contact_set: ContactSet, obj_pose: Pose2,
                      manipulator: Manipulator, q_manip) -> ContactSet:
    """Fill the stacked normal/tangential Jacobians for the active contacts.

    Rows satisfy gap_rate = N_obj v_obj + N_manip v_manip (positive when
    separating); tangential rows come in +/- pairs so that both opposing
    slide directions carry nonnegative force variables.
    """
    k = contact_set.k
    m = contact_set.m
    N_obj = np.zeros((k, 3))
    N_manip = np.zeros((k, m))
    T_obj = np.zeros((2 * k, 3))
    T_manip = np.zeros((2 * k, m))
    E = np.zeros((2 * k, k))
    mu = np.zeros(k)
    poses = manipulator.poses_at(q_manip)

    for i, c in enumerate(contact_set.contacts):
        n = c.normal_into_obj
        norm = float(np.linalg.norm(n))
        if abs(norm - 1.0) > 1e-6:
            raise GeometryError(f"degenerate contact normal (|n|={norm:.3e})")
        t = perp(n)
        r_obj = c.witness_obj - obj_pose.xy
        N_obj[i] = [n[0], n[1], cross2(r_obj, n)]
        row_t = np.array([t[0], t[1], cross2(r_obj, t)])
        T_obj[2 * i] = row_t
        T_obj[2 * i + 1] = -row_t
        if c.kind == "finger":
            f = manipulator.fingers[c.other_index]
            sl = manipulator.slices[c.other_index]
            if f.ndof == 2:
                N_manip[i, sl] = -n
                T_manip[2 * i, sl] = -t
            else:
                r_m = c.witness_other - poses[c.other_index].xy
                N_manip[i, sl] = [-n[0], -n[1], -cross2(r_m, n)]
                T_manip[2 * i, sl] = [-t[0], -t[1], -cross2(r_m, t)]
            T_manip[2 * i + 1, sl] = -T_manip[2 * i, sl]
        E[2 * i, i] = 1.0
        E[2 * i + 1, i] = 1.0
        mu[i] = c.mu

    return ContactSet(contacts=contact_set.contacts, m=m, N_obj=N_obj,
                      N_manip=N_manip, T_obj=T_obj, T_manip=T_manip, E=E,
                      mu_diag=np.diag(mu))
