"""Shared data model: cloud, raster regions, parametric cut paths, parts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bezier
from .geometry import PlanePose
from .params import Params, compute_diameter


@dataclass
class OrientedPointCloud:
    points: np.ndarray    # Nx3 float64
    normals: np.ndarray   # Nx3 float64, unit length

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=float)
        self.normals = np.asarray(self.normals, dtype=float)
        if self.points.shape != self.normals.shape or self.points.ndim != 2 \
                or self.points.shape[1] != 3:
            raise ValueError("points and normals must both be Nx3")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def diameter(self) -> float:
        return compute_diameter(self.points)


@dataclass
class RasterRegion:
    """Binary in-plane region on a uniform grid in the part's sheet frame.

    Pixel (row r, col c) covers the plane point origin + (c*scale, r*scale).
    """

    mask: np.ndarray      # HxW bool
    origin: np.ndarray    # 2, plane coords of pixel (0, 0) center
    scale: float          # plane length per pixel

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=bool)
        self.origin = np.asarray(self.origin, dtype=float)

    @property
    def area(self) -> float:
        return float(self.mask.sum()) * self.scale ** 2

    def pixel_to_plane(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return np.stack([self.origin[0] + np.asarray(cols) * self.scale,
                         self.origin[1] + np.asarray(rows) * self.scale], axis=-1)

    def plane_to_pixel(self, pts: np.ndarray) -> np.ndarray:
        """Fractional (row, col) coordinates of Nx2 plane points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        cols = (pts[:, 0] - self.origin[0]) / self.scale
        rows = (pts[:, 1] - self.origin[1]) / self.scale
        return np.stack([rows, cols], axis=-1)

    def contains_plane_points(self, pts: np.ndarray) -> np.ndarray:
        """Mask lookup with nearest-pixel rounding; False outside the grid."""
        rc = np.rint(self.plane_to_pixel(pts)).astype(int)
        h, w = self.mask.shape
        ok = (rc[:, 0] >= 0) & (rc[:, 0] < h) & (rc[:, 1] >= 0) & (rc[:, 1] < w)
        out = np.zeros(len(rc), dtype=bool)
        out[ok] = self.mask[rc[ok, 0], rc[ok, 1]]
        return out

    def copy(self) -> "RasterRegion":
        return RasterRegion(self.mask.copy(), self.origin.copy(), self.scale)


def make_grid(lo: np.ndarray, hi: np.ndarray, max_dim: int,
              margin: float = 0.0) -> tuple[np.ndarray, float, tuple[int, int]]:
    """Grid (origin, scale, (H, W)) covering [lo, hi] plus margin, max(H, W) = max_dim."""
    lo = np.asarray(lo, dtype=float) - margin
    hi = np.asarray(hi, dtype=float) + margin
    extent = np.maximum(hi - lo, 1e-12)
    scale = float(extent.max()) / (max_dim - 1)
    w = int(np.ceil(extent[0] / scale)) + 1
    h = int(np.ceil(extent[1] / scale)) + 1
    return lo, scale, (h, w)


SEG_LINE = 0
SEG_BEZIER_CLAMPED = 1   # right tangent adheres to the precomputed data tangent
SEG_BEZIER_FREE = 2      # right tangent was fit freely


@dataclass
class CurveSegment:
    """One piece of a closed cut path, in plane-frame coordinates."""

    kind: int                 # SEG_LINE or SEG_BEZIER_*
    ctrl: np.ndarray          # 4x2 control points (lines stored degree-elevated)
    bevel_deg: float = 0.0    # side-wall tilt away from the sheet normal
    constraint_id: int = -1   # index of the governing constraint segment, if snapped
    fit_mse: float = 0.0

    def __post_init__(self) -> None:
        self.ctrl = np.asarray(self.ctrl, dtype=float).reshape(4, 2)

    @property
    def start(self) -> np.ndarray:
        return self.ctrl[0]

    @property
    def end(self) -> np.ndarray:
        return self.ctrl[3]

    @property
    def is_line(self) -> bool:
        return self.kind == SEG_LINE

    def sample(self, n: int = 32) -> np.ndarray:
        t = np.linspace(0.0, 1.0, n)
        if self.is_line:
            return np.outer(1.0 - t, self.ctrl[0]) + np.outer(t, self.ctrl[3])
        return bezier.evaluate(self.ctrl, t)

    def copy(self) -> "CurveSegment":
        return CurveSegment(self.kind, self.ctrl.copy(), self.bevel_deg,
                            self.constraint_id, self.fit_mse)


def line_segment(p0, p1, **kw) -> CurveSegment:
    """Build a SEG_LINE segment with degree-elevated control points."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    ctrl = np.array([p0, p0 + (p1 - p0) / 3.0, p0 + 2.0 * (p1 - p0) / 3.0, p1])
    return CurveSegment(kind=SEG_LINE, ctrl=ctrl, **kw)


@dataclass
class Polycurve:
    """Closed loop of G0-connected segments.

    Orientation convention (plane-frame shoelace): outer loops run clockwise,
    holes counterclockwise, so the outward material normal of a unit tangent
    (tx, ty) is always (-ty, tx).
    """

    segments: list[CurveSegment]
    is_hole: bool = False

    def sample(self, per_segment: int = 32) -> np.ndarray:
        pts = [seg.sample(per_segment)[:-1] for seg in self.segments]
        return np.concatenate(pts, axis=0)

    def closure_error(self) -> float:
        worst = 0.0
        for a, b in zip(self.segments, self.segments[1:] + self.segments[:1]):
            worst = max(worst, float(np.linalg.norm(a.end - b.start)))
        return worst

    def copy(self) -> "Polycurve":
        return Polycurve([s.copy() for s in self.segments], self.is_hole)


@dataclass
class ConstraintSegment:
    """A 2D line segment the owning part's cut path must not cross.

    The excluded region is the half-plane on ``outward`` side of the line,
    restricted to points whose projection falls within the segment span.
    """

    p0: np.ndarray            # 2, plane coords
    p1: np.ndarray            # 2
    outward: np.ndarray       # 2, unit normal pointing into the excluded side
    source: str               # "interface" | "corner" | "adjacent-plane" | "ground"
    bevel_deg: float = 0.0
    other_part: int = -1      # part id on the far side, -1 for ground/unowned

    def __post_init__(self) -> None:
        self.p0 = np.asarray(self.p0, dtype=float)
        self.p1 = np.asarray(self.p1, dtype=float)
        self.outward = np.asarray(self.outward, dtype=float)
        n = np.linalg.norm(self.outward)
        if n > 0:
            self.outward = self.outward / n

    @property
    def direction(self) -> np.ndarray:
        d = self.p1 - self.p0
        return d / max(np.linalg.norm(d), 1e-300)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        """Positive on the excluded side of the infinite line."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return (pts - self.p0) @ self.outward

    def within_span(self, pts: np.ndarray, slack: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = self.direction
        t = (pts - self.p0) @ d
        return (t >= -slack) & (t <= self.length + slack)

    def excludes(self, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """True for points beyond the line (by > tol) within the segment span."""
        return (self.signed_distance(pts) > tol) & self.within_span(pts)

    def distance(self, pts: np.ndarray) -> np.ndarray:
        """Unsigned distance to the finite segment."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = self.p1 - self.p0
        L2 = float(d @ d)
        if L2 <= 0:
            return np.linalg.norm(pts - self.p0, axis=1)
        t = np.clip((pts - self.p0) @ d / L2, 0.0, 1.0)
        proj = self.p0 + np.outer(t, d)
        return np.linalg.norm(pts - proj, axis=1)


@dataclass
class Part:
    """A flat part: sheet-plane pose, thickness, and its cut path."""

    id: int
    pose: PlanePose
    thickness: float
    region: RasterRegion                      # raster cut path (always present)
    loops: list[Polycurve] = field(default_factory=list)  # parametric path, once fit
    inlier_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    adjacent_primitives: set[int] = field(default_factory=set)
    opposite_parts: set[int] = field(default_factory=set)
    source_primitives: set[int] = field(default_factory=set)
    constraints: list[ConstraintSegment] = field(default_factory=list)
    is_ground: bool = False

    @property
    def normal(self) -> np.ndarray:
        return self.pose.normal

    @property
    def offset(self) -> float:
        return self.pose.offset

    def copy(self, new_id: int | None = None) -> "Part":
        return Part(
            id=self.id if new_id is None else new_id,
            pose=self.pose.copy(),
            thickness=self.thickness,
            region=self.region.copy(),
            loops=[lp.copy() for lp in self.loops],
            inlier_indices=self.inlier_indices.copy(),
            adjacent_primitives=set(self.adjacent_primitives),
            opposite_parts=set(self.opposite_parts),
            source_primitives=set(self.source_primitives),
            constraints=list(self.constraints),
            is_ground=self.is_ground,
        )


CONN_BUTT = 1     # one part terminates against the other's face
CONN_CORNER = 2   # both terminate; right-angle corner with two configurations


@dataclass
class InterfaceRect:
    """Contact rectangle lying in the host part's sheet plane."""

    pose: PlanePose           # frame of the interface plane
    corners: np.ndarray       # 4x2 in that frame, in order
    host: int                 # part whose face hosts the contact
    guest: int                # part whose cut surface lands on it

    @property
    def corners_world(self) -> np.ndarray:
        return self.pose.to_world(self.corners)

    @property
    def length(self) -> float:
        c = self.corners
        return float(np.linalg.norm(c[1] - c[0]))

    @property
    def width(self) -> float:
        c = self.corners
        return float(np.linalg.norm(c[2] - c[1]))


@dataclass
class Connection:
    part_a: int               # for CONN_BUTT the hosting part
    part_b: int               # for CONN_BUTT the terminating part
    kind: int                 # CONN_BUTT or CONN_CORNER
    host_side_max: bool       # contact on a's offset-max face (else offset-min)
    bevel_deg: float = 0.0
    corner_a_extends: bool = True   # CONN_CORNER: whether part_a reaches the corner
    side_a_max: bool = True   # CONN_CORNER: b pokes out of a's offset-max face
    side_b_max: bool = True   # CONN_CORNER: a pokes out of b's offset-max face
    seam_scores: tuple[float, float] = (0.0, 0.0)
    rects: list[InterfaceRect] = field(default_factory=list)

    def key(self) -> tuple[int, int]:
        return (min(self.part_a, self.part_b), max(self.part_a, self.part_b))


@dataclass
class AssemblyModel:
    parts: list[Part]
    connections: list[Connection] = field(default_factory=list)
    ground_part: Part | None = None
    params: Params | None = None

    def part_by_id(self, pid: int) -> Part:
        for p in self.parts:
            if p.id == pid:
                return p
        if self.ground_part is not None and self.ground_part.id == pid:
            return self.ground_part
        raise KeyError(f"no part with id {pid}")

    def next_id(self) -> int:
        ids = [p.id for p in self.parts]
        if self.ground_part is not None:
            ids.append(self.ground_part.id)
        return max(ids, default=-1) + 1
