"""Plane and cylinder detection on oriented clouds, plus primitive adjacency.

Greedy best-first extraction: each round scores a batch of minimal-sample
hypotheses on a fixed subsample, refines the winner on its full inlier set,
and removes the inliers. Oriented normals both seed the hypotheses (one
point defines a plane) and gate membership, so the two faces of a thin board
become distinct primitives.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .model import OrientedPointCloud
from .params import Params

log = logging.getLogger(__name__)

PLANE = "plane"
CYLINDER = "cylinder"

_CANDIDATES_PER_ROUND = 400
_SCORE_SUBSAMPLE = 24000
_MAX_PRIMITIVES = 64
_REFINE_ROUNDS = 3


@dataclass
class Primitive:
    id: int
    kind: str
    normal: np.ndarray | None = None       # plane
    offset: float = 0.0                    # plane: normal . p = offset
    axis_point: np.ndarray | None = None   # cylinder
    axis_dir: np.ndarray | None = None
    radius: float = 0.0
    inliers: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def support(self) -> int:
        return len(self.inliers)


def _plane_membership(points, normals, n, o, tau, cos_tol):
    dist_ok = np.abs(points @ n - o) < tau
    normal_ok = normals @ n > cos_tol
    return dist_ok & normal_ok


def _cylinder_membership(points, normals, axis_point, axis_dir, radius, tau,
                         cos_tol):
    rel = points - axis_point
    axial = rel @ axis_dir
    radial = rel - np.outer(axial, axis_dir)
    rdist = np.linalg.norm(radial, axis=1)
    dist_ok = np.abs(rdist - radius) < tau
    with np.errstate(invalid="ignore"):
        rdir = radial / np.maximum(rdist[:, None], 1e-300)
    align = np.einsum("ij,ij->i", normals, rdir)
    normal_ok = np.abs(align) > cos_tol
    return dist_ok & normal_ok


def _fit_plane_oriented(points: np.ndarray, normals: np.ndarray
                        ) -> tuple[np.ndarray, float]:
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid, full_matrices=False)
    n = vt[-1]
    if np.mean(normals @ n) < 0:
        n = -n
    return n, float(np.dot(n, centroid))


def _cylinder_from_pair(p1, n1, p2, n2
                        ) -> tuple[np.ndarray, np.ndarray, float] | None:
    # Axis along n1 x n2; center where the two surface-normal lines meet in
    # the cross-section plane.
    axis = np.cross(n1, n2)
    norm = np.linalg.norm(axis)
    if norm < np.sin(np.radians(10.0)):
        return None
    axis = axis / norm
    u = np.cross(axis, [1.0, 0.0, 0.0])
    if np.linalg.norm(u) < 1e-6:
        u = np.cross(axis, [0.0, 1.0, 0.0])
    u /= np.linalg.norm(u)
    w = np.cross(axis, u)
    basis = np.column_stack([u, w])
    a1, a2 = p1 @ basis, p2 @ basis
    d1, d2 = n1 @ basis, n2 @ basis
    mat = np.column_stack([d1, -d2])
    det = np.linalg.det(mat)
    if abs(det) < 1e-9:
        return None
    t = np.linalg.solve(mat, a2 - a1)
    c2d = a1 + t[0] * d1
    radius = 0.5 * (np.linalg.norm(a1 - c2d) + np.linalg.norm(a2 - c2d))
    axial = 0.5 * (p1 @ axis + p2 @ axis)
    center = c2d[0] * u + c2d[1] * w + axial * axis
    return center, axis, float(radius)


def _fit_cylinder(points: np.ndarray, normals: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray, float] | None:
    # Axis minimizes normal alignment; center/radius from a 2D circle fit.
    cov = normals.T @ normals
    w, v = np.linalg.eigh(cov)
    axis = v[:, 0]
    u = np.cross(axis, [1.0, 0.0, 0.0])
    if np.linalg.norm(u) < 1e-6:
        u = np.cross(axis, [0.0, 1.0, 0.0])
    u /= np.linalg.norm(u)
    w2 = np.cross(axis, u)
    centroid = points.mean(axis=0)
    rel = points - centroid
    x = rel @ u
    y = rel @ w2
    a = np.column_stack([2.0 * x, 2.0 * y, np.ones(len(x))])
    b = x * x + y * y
    try:
        sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    except np.linalg.LinAlgError:
        return None
    cx, cy, c = sol
    r2 = c + cx * cx + cy * cy
    if r2 <= 0:
        return None
    center = centroid + cx * u + cy * w2
    return center, axis, float(np.sqrt(r2))


def detect_primitives(cloud: OrientedPointCloud, params: Params,
                      detect_cylinders: bool = True) -> list[Primitive]:
    points = cloud.points
    normals = cloud.normals
    n_total = len(points)
    min_support = max(int(np.ceil(params.min_support_frac * n_total)), 8)
    tau = params.inlier_tol
    cos_tol = float(np.cos(np.radians(params.normal_tol_deg)))
    rng = np.random.default_rng(np.random.SeedSequence(params.seed).spawn(1)[0])

    remaining = np.arange(n_total)
    out: list[Primitive] = []
    while len(remaining) >= min_support and len(out) < _MAX_PRIMITIVES:
        rp = points[remaining]
        rn = normals[remaining]
        sub = remaining
        if len(remaining) > _SCORE_SUBSAMPLE:
            sub = remaining[rng.choice(len(remaining), _SCORE_SUBSAMPLE,
                                       replace=False)]
        sp = points[sub]
        sn = normals[sub]
        scale = n_total / len(sub)

        best_score = 0
        best = None
        seeds = rng.choice(len(remaining), min(_CANDIDATES_PER_ROUND,
                                               len(remaining)), replace=False)
        # Plane hypotheses: one oriented point each, scored in a single batch.
        hyp_n = rn[seeds]
        hyp_o = np.einsum("ij,ij->i", rp[seeds], hyp_n)
        dist = np.abs(sp @ hyp_n.T - hyp_o[None, :])
        align = sn @ hyp_n.T
        counts = ((dist < tau) & (align > cos_tol)).sum(axis=0)
        k = int(counts.argmax())
        if counts[k] > best_score:
            best_score = counts[k]
            best = (PLANE, hyp_n[k], hyp_o[k])

        if detect_cylinders:
            pairs = rng.choice(len(remaining), size=(60, 2))
            for i, j in pairs:
                if i == j:
                    continue
                hyp = _cylinder_from_pair(rp[i], rn[i], rp[j], rn[j])
                if hyp is None:
                    continue
                center, axis, radius = hyp
                if not (params.diameter * 1e-3 < radius < params.diameter):
                    continue
                member = _cylinder_membership(sp, sn, center, axis, radius,
                                              tau, cos_tol)
                score = int(member.sum())
                if score > best_score:
                    best_score = score
                    best = (CYLINDER, center, axis, radius)

        if best is None or best_score * scale < min_support:
            break

        # Refine the winner on its full membership.
        if best[0] == PLANE:
            n, o = best[1], best[2]
            member = None
            for _ in range(_REFINE_ROUNDS):
                member = _plane_membership(rp, rn, n, o, tau, cos_tol)
                if member.sum() < 3:
                    break
                n, o = _fit_plane_oriented(rp[member], rn[member])
            if member is None or member.sum() < min_support:
                break
            prim = Primitive(id=len(out), kind=PLANE, normal=n, offset=o,
                             inliers=remaining[member])
            # Remove a wider band so noise tails don't respawn as shadow
            # planes; the normal gate keeps nearby perpendicular faces safe.
            member = _plane_membership(rp, rn, n, o, 2.0 * tau, cos_tol)
        else:
            center, axis, radius = best[1], best[2], best[3]
            member = None
            for _ in range(_REFINE_ROUNDS):
                member = _cylinder_membership(rp, rn, center, axis, radius,
                                              tau, cos_tol)
                if member.sum() < 6:
                    break
                fitted = _fit_cylinder(rp[member], rn[member])
                if fitted is None:
                    break
                center, axis, radius = fitted
            if member is None or member.sum() < min_support:
                break
            prim = Primitive(id=len(out), kind=CYLINDER, axis_point=center,
                             axis_dir=axis, radius=radius,
                             inliers=remaining[member])
            member = _cylinder_membership(rp, rn, center, axis, radius,
                                          2.0 * tau, cos_tol)
        out.append(prim)
        remaining = remaining[~member]

    log.info("detected %d primitives (%d points unassigned)",
             len(out), len(remaining))
    return out


def compute_adjacency(primitives: list[Primitive], cloud: OrientedPointCloud,
                      params: Params, cap: int = 6000) -> dict[int, set[int]]:
    """prim id -> ids of primitives whose point sets come within inlier_tol."""
    rng = np.random.default_rng(np.random.SeedSequence(params.seed + 1).spawn(1)[0])
    samples = {}
    trees = {}
    for prim in primitives:
        idx = prim.inliers
        if len(idx) > cap:
            idx = idx[rng.choice(len(idx), cap, replace=False)]
        pts = cloud.points[idx]
        samples[prim.id] = pts
        trees[prim.id] = cKDTree(pts)
    adj: dict[int, set[int]] = {p.id: set() for p in primitives}
    ids = [p.id for p in primitives]
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            d, _ = trees[a].query(samples[b], k=1,
                                  distance_upper_bound=params.inlier_tol)
            if np.isfinite(d).any():
                adj[a].add(b)
                adj[b].add(a)
    return adj
