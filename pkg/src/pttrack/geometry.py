"""Oriented 3D boxes, rigid motions, rotated IoU and point crops.

Conventions used throughout the package:

* z is the vertical axis; x/y span the horizontal plane.
* A box of size (w, h, l) centered at ``center`` with yaw ``ry`` extends
  l/2 along its local x axis, w/2 along local y and h/2 along z. ``ry``
  rotates the local frame about z and is normalized to [-pi, pi).
* Point clouds are float arrays of shape (N, 3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

# Footprint intersections below this area (m^2) are treated as empty; shared
# edges of touching boxes would otherwise produce noise-scale polygons.
_AREA_EPS = 1e-12


def wrap_angle(theta: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    return float((theta + np.pi) % TWO_PI - np.pi)


@dataclass
class RigidMotion:
    """Translation plus a yaw increment about the vertical axis."""

    translation: np.ndarray  # (3,)
    dtheta: float = 0.0

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(self.translation)) or not np.isfinite(self.dtheta):
            raise ValueError("rigid motion must be finite")
        self.dtheta = wrap_angle(float(self.dtheta))


@dataclass
class Box3D:
    """Oriented 3D bounding box (x, y, z, w, h, l, ry)."""

    center: np.ndarray  # (3,)
    size: np.ndarray  # (w, h, l)
    ry: float = 0.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        self.size = np.asarray(self.size, dtype=float).reshape(3)
        if not np.all(np.isfinite(self.center)) or not np.all(np.isfinite(self.size)):
            raise ValueError("box must be finite")
        if not np.isfinite(self.ry):
            raise ValueError("box must be finite")
        if np.any(self.size <= 0):
            raise ValueError(f"box size must be positive, got {tuple(self.size)}")
        self.ry = wrap_angle(float(self.ry))

    @property
    def w(self) -> float:
        return float(self.size[0])

    @property
    def h(self) -> float:
        return float(self.size[1])

    @property
    def l(self) -> float:
        return float(self.size[2])

    def volume(self) -> float:
        return float(self.size[0] * self.size[1] * self.size[2])

    def as_seven(self) -> np.ndarray:
        """(x, y, z, w, h, l, ry) row vector."""
        return np.concatenate([self.center, self.size, [self.ry]])

    @staticmethod
    def from_seven(v) -> "Box3D":
        v = np.asarray(v, dtype=float).reshape(7)
        return Box3D(center=v[:3], size=v[3:6], ry=float(v[6]))

    def footprint(self) -> np.ndarray:
        """The four horizontal-plane corners, counter-clockwise, shape (4, 2)."""
        hl, hw = self.l / 2.0, self.w / 2.0
        corners = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        c, s = np.cos(self.ry), np.sin(self.ry)
        rot = np.array([[c, -s], [s, c]])
        return corners @ rot.T + self.center[:2]

    def z_range(self) -> tuple[float, float]:
        half = self.h / 2.0
        return float(self.center[2] - half), float(self.center[2] + half)


def apply_motion(box: Box3D, motion: RigidMotion) -> Box3D:
    """Move a box as part of a whole-scene rigid motion: rotate about the
    vertical axis through the origin, then translate. Size is unchanged.
    Rotating each box about its own center instead would change the boxes'
    relative geometry and break IoU invariance."""
    c, s = np.cos(motion.dtheta), np.sin(motion.dtheta)
    x, y, z = box.center
    center = np.array([c * x - s * y, s * x + c * y, z]) + motion.translation
    return Box3D(
        center=center,
        size=box.size.copy(),
        ry=wrap_angle(box.ry + motion.dtheta),
    )


def center_error(a: Box3D, b: Box3D) -> float:
    """Euclidean distance between box centers."""
    return float(np.linalg.norm(a.center - b.center))


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex CCW ``subject`` by convex CCW ``clip``."""
    output = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        if not output:
            break
        polygon, output = output, []
        ex, ey = bx - ax, by - ay

        def inside(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax) >= 0.0

        s = polygon[-1]
        for e in polygon:
            if inside(e):
                if not inside(s):
                    output.append(_edge_intersection(s, e, (ax, ay), (bx, by)))
                output.append(e)
            elif inside(s):
                output.append(_edge_intersection(s, e, (ax, ay), (bx, by)))
            s = e
    return np.array(output) if output else np.empty((0, 2))


def _edge_intersection(p, q, a, b):
    """Intersection of segment p-q with the infinite line through a-b."""
    r = (q[0] - p[0], q[1] - p[1])
    s = (b[0] - a[0], b[1] - a[1])
    denom = r[0] * s[1] - r[1] * s[0]
    t = ((a[0] - p[0]) * s[1] - (a[1] - p[1]) * s[0]) / denom
    return (p[0] + t * r[0], p[1] + t * r[1])


def _polygon_area(poly: np.ndarray) -> float:
    """Shoelace area of a CCW polygon."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return float(0.5 * np.abs(np.dot(x, np.roll(y, 1)) - np.dot(y, np.roll(x, 1))))


def iou_bev(a: Box3D, b: Box3D) -> float:
    """Rotated-rectangle IoU of the horizontal footprints."""
    inter = _polygon_area(_clip_polygon(a.footprint(), b.footprint()))
    if inter < _AREA_EPS:
        inter = 0.0
    area_a = a.w * a.l
    area_b = b.w * b.l
    union = area_a + area_b - inter
    return inter / union


def iou3d(a: Box3D, b: Box3D) -> float:
    """Volumetric IoU of two oriented boxes.

    Footprint intersection comes from convex polygon clipping; the vertical
    extent overlaps as an interval. Boxes are treated as unoriented solids,
    so ry and ry + pi describe the same box.
    """
    if (
        np.array_equal(a.center, b.center)
        and np.array_equal(a.size, b.size)
        and a.ry == b.ry
        and a.volume() > _AREA_EPS
    ):
        # identical boxes overlap fully by definition; self-clipping roundoff
        # must not push a perfect tracker below IoU 1
        return 1.0
    inter_area = _polygon_area(_clip_polygon(a.footprint(), b.footprint()))
    if inter_area < _AREA_EPS:
        return 0.0
    lo_a, hi_a = a.z_range()
    lo_b, hi_b = b.z_range()
    z_overlap = min(hi_a, hi_b) - max(lo_a, lo_b)
    if z_overlap <= 0.0:
        return 0.0
    inter = inter_area * z_overlap
    union = a.volume() + b.volume() - inter
    return float(inter / union)


def points_to_box_frame(points: np.ndarray, box: Box3D) -> np.ndarray:
    """Express world points in the box frame (center at origin, yaw removed)."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    shifted = points - box.center
    c, s = np.cos(box.ry), np.sin(box.ry)
    out = np.empty_like(shifted)
    out[:, 0] = c * shifted[:, 0] + s * shifted[:, 1]
    out[:, 1] = -s * shifted[:, 0] + c * shifted[:, 1]
    out[:, 2] = shifted[:, 2]
    return out


def points_from_box_frame(points: np.ndarray, box: Box3D) -> np.ndarray:
    """Inverse of :func:`points_to_box_frame`."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    c, s = np.cos(box.ry), np.sin(box.ry)
    out = np.empty_like(points)
    out[:, 0] = c * points[:, 0] - s * points[:, 1]
    out[:, 1] = s * points[:, 0] + c * points[:, 1]
    out[:, 2] = points[:, 2]
    return out + box.center


def box_from_frame(local_center: np.ndarray, local_ry: float, size: np.ndarray, ref: Box3D) -> Box3D:
    """Lift a box expressed in ``ref``'s frame back to world coordinates."""
    center = points_from_box_frame(np.asarray(local_center, dtype=float).reshape(1, 3), ref)[0]
    return Box3D(center=center, size=size, ry=wrap_angle(ref.ry + float(local_ry)))


def crop_points(cloud: np.ndarray, box: Box3D, margin: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Points inside the box enlarged by ``margin`` on each horizontal side.

    Containment is tested in the box's rotated frame; the vertical extent is
    not enlarged. Returns (points, original indices), preserving input order.
    """
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if len(cloud) == 0:
        return cloud.copy(), np.empty(0, dtype=np.int64)
    local = points_to_box_frame(cloud, box)
    mask = (
        (np.abs(local[:, 0]) <= box.l / 2.0 + margin)
        & (np.abs(local[:, 1]) <= box.w / 2.0 + margin)
        & (np.abs(local[:, 2]) <= box.h / 2.0)
    )
    idx = np.nonzero(mask)[0].astype(np.int64)
    return cloud[idx], idx


def footprint_contains(box: Box3D, points: np.ndarray) -> np.ndarray:
    """Boolean mask: horizontal footprint containment only (z ignored)."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    local = points_to_box_frame(points, box)
    return (np.abs(local[:, 0]) <= box.l / 2.0) & (np.abs(local[:, 1]) <= box.w / 2.0)
