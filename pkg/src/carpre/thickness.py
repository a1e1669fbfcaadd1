"""Sheet thickness estimation by plane sweep, and opposite-face matching.

For a candidate face plane the material lies opposite the normal. Sweeping a
band of width delta_d down through the adjacent primitives' points gives a
histogram h(k); the cut walls end where the board ends, so -h' peaks at the
back face. Central differences put that peak exactly on k = d/delta_d for a
fully sampled wall band (one-sided differences straddle it). Peaks are
discounted by exp(-falloff * depth) so the nearest strong drop wins.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cutregion import cut_region
from .geometry import PlanePose
from .model import OrientedPointCloud, RasterRegion
from .params import Params
from .primitives import PLANE, Primitive

log = logging.getLogger(__name__)


@dataclass
class PartCandidate:
    id: int
    pose: PlanePose
    normal: np.ndarray
    offset: float
    region: RasterRegion
    loops_2d: list[np.ndarray]            # boundary polylines in plane coords
    thickness: float
    inliers: np.ndarray                   # cloud indices on the face
    adj_prims: set[int]                   # adjacent primitive ids
    source_prims: set[int]                # primitives folded into this candidate
    opposite: set[int] = field(default_factory=set)  # candidate ids (O set)
    histogram: np.ndarray | None = None   # sweep histogram, for debugging


def sweep_histogram(normal: np.ndarray, offset: float, points: np.ndarray,
                    params: Params) -> np.ndarray:
    """h(k): adjacent points within delta_d/2 of the plane pushed k steps in."""
    dd = params.thickness_step
    kmax = int(np.ceil(params.diameter / dd))
    depth = offset - points @ normal
    idx = np.rint(depth / dd).astype(int)
    ok = (idx >= 0) & (idx <= kmax) & (np.abs(depth - idx * dd) < dd / 2)
    return np.bincount(idx[ok], minlength=kmax + 1).astype(float)


def neg_slope(h: np.ndarray) -> np.ndarray:
    """-h'(k) by central differences; h(-1) replicates h(0), h ends at zero."""
    ext = np.concatenate([[h[0]], h, [0.0, 0.0]])
    return -(ext[2:] - ext[:-2])[: len(h)] / 2.0


def estimate_thickness(normal: np.ndarray, offset: float,
                       adj_points: np.ndarray, params: Params
                       ) -> tuple[float, np.ndarray] | None:
    """Discounted strongest drop of the sweep histogram, or None if flat."""
    if len(adj_points) == 0:
        return None
    h = sweep_histogram(normal, offset, adj_points, params)
    slope = neg_slope(h)
    top = np.abs(slope).max()
    if slope.max() <= 0:
        return None
    dd = params.thickness_step
    ks = np.arange(len(slope))
    left = np.concatenate([[-np.inf], slope[:-1]])
    right = np.concatenate([slope[1:], [-np.inf]])
    is_peak = (slope >= left) & (slope >= right) & (slope > 0.1 * top) & (ks >= 1)
    if not is_peak.any():
        return None
    score = np.where(is_peak, np.exp(-params.thickness_falloff * ks * dd) * slope,
                     -np.inf)
    k = int(np.argmax(score))  # argmax takes the smaller k on ties
    return float(k * dd), h


def build_candidates(cloud: OrientedPointCloud, primitives: list[Primitive],
                     adjacency: dict[int, set[int]], params: Params
                     ) -> list[PartCandidate]:
    """One sheet-part candidate per plane primitive with a usable thickness."""
    out: list[PartCandidate] = []
    for prim in primitives:
        if prim.kind != PLANE:
            continue
        face_pts = cloud.points[prim.inliers]
        pose = PlanePose.from_normal_offset(prim.normal, prim.offset,
                                            origin_hint=face_pts.mean(axis=0))
        pts2d = pose.to_plane(face_pts)[:, :2]
        built = cut_region(pts2d, params)
        if built is None:
            log.info("candidate from primitive %d dropped: empty region", prim.id)
            continue
        region, loops = built
        adj_ids = adjacency.get(prim.id, set())
        if adj_ids:
            adj_points = np.concatenate(
                [cloud.points[p.inliers] for p in primitives if p.id in adj_ids])
        else:
            adj_points = np.empty((0, 3))
        est = estimate_thickness(prim.normal, prim.offset, adj_points, params)
        if est is None:
            log.info("candidate from primitive %d dropped: thickness "
                     "indeterminate", prim.id)
            continue
        d, hist = est
        out.append(PartCandidate(
            id=len(out), pose=pose, normal=np.asarray(prim.normal, dtype=float),
            offset=float(prim.offset), region=region, loops_2d=loops,
            thickness=d, inliers=prim.inliers, adj_prims=set(adj_ids),
            source_prims={prim.id}, histogram=hist))
    return out


def _region_overlaps(a: PartCandidate, b: PartCandidate, cap: int = 4000) -> bool:
    """Do b's cut-path pixels land inside a's region when projected along n_a?"""
    rows, cols = np.nonzero(b.region.mask)
    if len(rows) == 0:
        return False
    if len(rows) > cap:
        step = len(rows) // cap + 1
        rows, cols = rows[::step], cols[::step]
    plane_b = b.region.pixel_to_plane(rows, cols)
    world = b.pose.to_world(np.column_stack(
        [plane_b, np.zeros(len(plane_b))]))
    plane_a = a.pose.to_plane(world)[:, :2]
    return bool(a.region.contains_plane_points(plane_a).any())


def match_opposites(cands: list[PartCandidate], params: Params) -> None:
    """Snap thicknesses to opposite-face plane distances and record O sets."""
    cos_opp = -np.cos(np.radians(params.angle_tol_deg))
    dd = params.thickness_step
    for a in cands:
        dists = {}
        for b in cands:
            if b.id == a.id or np.dot(a.normal, b.normal) > cos_opp:
                continue
            dist = a.offset + b.offset  # separation along n_a for opposed planes
            if dist <= 0:
                continue
            if _region_overlaps(a, b):
                dists[b.id] = dist
        if dists:
            d_opposite = min(dists.values())
            if abs(d_opposite - a.thickness) < dd:
                a.thickness = d_opposite
        a.opposite = {bid for bid, dist in dists.items()
                      if abs(dist - a.thickness) < dd}
