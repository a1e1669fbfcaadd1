"""Global plane re-alignment and thickness regularization.

Connected parts that meet at nearly a right angle almost always meet at
exactly one in the built object, so their planes are re-fit jointly with
hard orthogonality constraints. Each part contributes its total squared
point-to-plane distance over its front-face inliers (the union of both
faces would bias the offset toward mid-slab); normals are encoded as a
normalized offset in the tangent plane of the current normal, which keeps
unit length by construction and has no polar singularity. The quadratic
form of the objective is precomputed per part (scatter matrix), making
evaluations O(1) in the inlier count.

Thicknesses within the contact tolerance of each other are averaged
(single-linkage: chains merge), reflecting that real boards come in a few
stock thicknesses.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.optimize import minimize

from .geometry import orthonormal_tangents, rotation_between, unit
from .model import AssemblyModel, OrientedPointCloud
from .params import Params

log = logging.getLogger(__name__)

_MAX_ITER = 200
_FRONT_BAND = 2.0   # front-face window, in multiples of the inlier tolerance


def align_planes(model: AssemblyModel, cloud: OrientedPointCloud,
                 params: Params) -> None:
    """Jointly re-fit part planes with exact 90-degree constraints.

    Pairs are constrained when they are connected and their current normals
    are within ``angle_tol_deg`` of orthogonal; connections to the ground
    pseudo-part constrain against the fixed up direction. Poses are updated
    by the minimal rotation between old and new normal, keeping the in-plane
    frame, and translations shift onto the new plane.
    """
    parts = [p for p in model.parts if not p.is_ground]
    if not parts:
        return
    index = {p.id: k for k, p in enumerate(parts)}

    # Per-part quadratic data: E_p = n' A n - 2 o b.n + N o^2. Inliers hold
    # both faces of the slab; fitting the union would pull the offset to
    # mid-slab, so keep only points within a narrow band of the front plane.
    A = np.zeros((len(parts), 3, 3))
    b = np.zeros((len(parts), 3))
    counts = np.zeros(len(parts))
    for k, part in enumerate(parts):
        pts = cloud.points[np.asarray(part.inlier_indices, dtype=int)]
        if len(pts):
            near = np.abs(pts @ part.normal - part.offset) \
                <= _FRONT_BAND * params.inlier_tol
            if near.any():
                pts = pts[near]
        if len(pts) == 0:
            pts = part.pose.translation[None, :]
        A[k] = pts.T @ pts
        b[k] = pts.sum(axis=0)
        counts[k] = len(pts)
    # Scale so the objective is O(1) regardless of cloud size and units.
    norm = 1.0 / (counts.sum() * params.diameter ** 2)

    cos_window = np.sin(np.radians(params.angle_tol_deg))
    pair_ids: list[tuple[int, int]] = []
    ground_ids: list[int] = []
    for conn in model.connections:
        ia = index.get(conn.part_a)
        ib = index.get(conn.part_b)
        if ia is None and ib is None:
            continue
        if ia is None or ib is None:
            k = ib if ia is None else ia
            if abs(parts[k].normal[2]) <= cos_window:
                ground_ids.append(k)
            continue
        dot = abs(float(parts[ia].normal @ parts[ib].normal))
        if dot <= cos_window:
            pair_ids.append((ia, ib))
    pair_ids = sorted(set(pair_ids))
    ground_ids = sorted(set(ground_ids))
    if not pair_ids and not ground_ids:
        log.info("plane alignment: no near-orthogonal connected pairs")
        return

    # Each normal is n(u, v) = unit(n0 + u t1 + v t2) around its own current
    # direction, so the chart is centered where the optimum lives and has no
    # pole anywhere (a spherical-angle chart degenerates near +-z).
    n0 = np.stack([p.normal for p in parts])
    t1 = np.empty_like(n0)
    t2 = np.empty_like(n0)
    for k in range(len(parts)):
        t1[k], t2[k] = orthonormal_tangents(n0[k])

    x0 = np.zeros(3 * len(parts))
    x0[2::3] = [p.offset for p in parts]

    def decode(x):
        uv = x.reshape(-1, 3)
        ns = n0 + uv[:, :1] * t1 + uv[:, 1:2] * t2
        ns /= np.linalg.norm(ns, axis=1, keepdims=True)
        os_ = x[2::3]
        return ns, os_

    def normal_k(x, k):
        v = n0[k] + x[3 * k] * t1[k] + x[3 * k + 1] * t2[k]
        return v / np.linalg.norm(v)

    def objective(x):
        ns, os_ = decode(x)
        e = np.einsum("ki,kij,kj->k", ns, A, ns)
        e -= 2.0 * os_ * np.einsum("ki,ki->k", ns, b)
        e += counts * os_ ** 2
        return float(e.sum()) * norm

    cons = []
    for ia, ib in pair_ids:
        cons.append({
            "type": "eq",
            "fun": (lambda x, ia=ia, ib=ib:
                    normal_k(x, ia) @ normal_k(x, ib)),
        })
    for k in ground_ids:
        cons.append({
            "type": "eq",
            "fun": lambda x, k=k: normal_k(x, k)[2],
        })

    res = minimize(objective, x0, method="SLSQP", constraints=cons,
                   options={"maxiter": _MAX_ITER, "ftol": 1e-14})
    ns, os_ = decode(res.x)
    max_viol = 0.0
    for ia, ib in pair_ids:
        max_viol = max(max_viol, abs(float(ns[ia] @ ns[ib])))
    for k in ground_ids:
        max_viol = max(max_viol, abs(float(ns[k][2])))
    # Judge the result by feasibility and bounded motion, not by the
    # solver's success flag: redundant constraints (e.g. one plane
    # orthogonal to two near anti-parallel walls) make the constraint
    # Jacobian rank-deficient at the optimum and SLSQP then reports
    # failure at a converged point. Constrained pairs start within the
    # angle window of orthogonal, so a sane solution rotates each normal
    # by at most about that window and barely moves the offsets.
    max_rot = max(float(np.arccos(np.clip(ns[k] @ parts[k].normal, -1, 1)))
                  for k in range(len(parts)))
    max_shift = max(abs(os_[k] - parts[k].offset) for k in range(len(parts)))
    if (max_viol > 1e-6
            or max_rot > 2.0 * np.radians(params.angle_tol_deg)
            or max_shift > params.contact_tol):
        log.warning("plane alignment did not converge (%s, violation %.2e); "
                    "keeping initial planes", res.message, max_viol)
        return

    for k, part in enumerate(parts):
        n_new = unit(ns[k])
        rot = rotation_between(part.normal, n_new)
        part.pose.rotation = rot @ part.pose.rotation
        t = part.pose.translation
        part.pose.translation = t + (os_[k] - float(n_new @ t)) * n_new
    log.info("plane alignment: %d pair + %d ground constraints, "
             "objective %.3e -> %.3e", len(pair_ids), len(ground_ids),
             objective(x0), float(res.fun))


def regularize_thicknesses(model: AssemblyModel, params: Params) -> None:
    """Average thicknesses that chain within the contact tolerance."""
    parts = [p for p in model.parts if not p.is_ground]
    if not parts:
        return
    order = np.argsort([p.thickness for p in parts], kind="stable")
    clusters: list[list[int]] = []
    for k in order:
        t = parts[k].thickness
        if clusters and t - parts[clusters[-1][-1]].thickness < params.contact_tol:
            clusters[-1].append(k)
        else:
            clusters.append([k])
    for cluster in clusters:
        if len(cluster) < 2:
            continue
        mean = float(np.mean([parts[k].thickness for k in cluster]))
        for k in cluster:
            parts[k].thickness = mean
    log.info("thickness regularization: %d parts -> %d distinct values",
             len(parts), len(clusters))
