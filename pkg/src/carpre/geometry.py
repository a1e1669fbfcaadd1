"""Rigid transforms and plane poses used throughout the pipeline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < 1e-300:
        raise ValueError("cannot normalize a zero vector")
    return np.asarray(v, dtype=float) / n


def angle_between_deg(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between two vectors in degrees, in [0, 180]."""
    c = float(np.clip(np.dot(unit(a), unit(b)), -1.0, 1.0))
    return float(np.degrees(np.arccos(c)))


def acute_angle_deg(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between two lines (sign-insensitive), in [0, 90]."""
    ang = angle_between_deg(a, b)
    return min(ang, 180.0 - ang)


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotation matrix taking unit vector a onto unit vector b."""
    a = unit(a)
    b = unit(b)
    c = float(np.dot(a, b))
    if c > 1.0 - 1e-15:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        # 180 degree flip: rotate about any axis orthogonal to a.
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-8:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis = unit(axis)
        return axis_angle(axis, np.pi)
    axis = np.cross(a, b)
    s = np.linalg.norm(axis)
    vx = skew(axis)
    return np.eye(3) + vx + vx @ vx * ((1.0 - c) / (s * s))


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = unit(axis)
    vx = skew(axis)
    return np.eye(3) + np.sin(angle) * vx + (1.0 - np.cos(angle)) * (vx @ vx)


def orthonormal_tangents(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic in-plane basis (u, v) with u x v = n.

    For n = +z this is the identity frame (u = +x, v = +y).
    """
    n = unit(n)
    helper = np.array([0.0, 1.0, 0.0])
    if abs(n[2]) <= 0.9:
        helper = np.array([0.0, 0.0, 1.0])
    u = unit(np.cross(helper, n))
    v = np.cross(n, u)
    return u, v


@dataclass
class PlanePose:
    """Rigid frame whose x-y plane is a part's sheet plane (z axis = normal)."""

    rotation: np.ndarray      # 3x3, columns are the frame axes in world coords
    translation: np.ndarray   # 3, frame origin in world coords

    @classmethod
    def from_normal_offset(cls, normal: np.ndarray, offset: float,
                           origin_hint: np.ndarray | None = None) -> "PlanePose":
        """Frame for the plane {p : n.p = offset}, origin near origin_hint."""
        n = unit(normal)
        u, v = orthonormal_tangents(n)
        rot = np.column_stack([u, v, n])
        t = n * offset
        if origin_hint is not None:
            h = np.asarray(origin_hint, dtype=float)
            t = h - n * (np.dot(n, h) - offset)
        return cls(rotation=rot, translation=t)

    @property
    def normal(self) -> np.ndarray:
        return self.rotation[:, 2]

    @property
    def offset(self) -> float:
        return float(np.dot(self.normal, self.translation))

    def to_world(self, pts: np.ndarray) -> np.ndarray:
        """Map plane-frame points (Nx2 treated as z=0, or Nx3) to world."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if pts.shape[1] == 2:
            pts = np.column_stack([pts, np.zeros(len(pts))])
        return pts @ self.rotation.T + self.translation

    def to_plane(self, pts: np.ndarray) -> np.ndarray:
        """Map world points (Nx3) into the plane frame."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return (pts - self.translation) @ self.rotation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "PlanePose":
        m = np.asarray(m, dtype=float)
        return cls(rotation=m[:3, :3].copy(), translation=m[:3, 3].copy())

    def copy(self) -> "PlanePose":
        return PlanePose(self.rotation.copy(), self.translation.copy())


def fit_plane(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares plane (normal, offset) through an Nx3 point set."""
    pts = np.asarray(points, dtype=float)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    n = unit(vt[-1])
    return n, float(np.dot(n, centroid))


def line_intersection_2d(p0: np.ndarray, d0: np.ndarray,
                         p1: np.ndarray, d1: np.ndarray) -> np.ndarray | None:
    """Intersection of two 2D lines given as point + direction, or None if parallel."""
    a = np.array([[d0[0], -d1[0]], [d0[1], -d1[1]]], dtype=float)
    det = np.linalg.det(a)
    if abs(det) < 1e-12 * max(1.0, np.abs(a).max()) ** 2:
        return None
    t = np.linalg.solve(a, np.asarray(p1, dtype=float) - np.asarray(p0, dtype=float))
    return np.asarray(p0, dtype=float) + t[0] * np.asarray(d0, dtype=float)


def plane_plane_line(n0: np.ndarray, o0: float, n1: np.ndarray, o1: float
                     ) -> tuple[np.ndarray, np.ndarray] | None:
    """Intersection line (point, direction) of two planes, or None if parallel."""
    d = np.cross(n0, n1)
    nd = np.linalg.norm(d)
    if nd < 1e-9:
        return None
    d = d / nd
    # Solve for a point on both planes, staying orthogonal to d.
    a = np.vstack([n0, n1, d])
    b = np.array([o0, o1, 0.0])
    p = np.linalg.solve(a, b)
    return p, d
