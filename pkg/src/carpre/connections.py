"""Connection inference: contact pairs, type classification, interface
surfaces, constraint segments, adjacent-plane constraints, ground plane.

A butt connection (type 1) means the guest's cut surface lands on one face
of the host sheet; a corner (type 2) means both parts terminate at each
other's planes and exactly one of them extends to the outer corner. The
interface cross-section is taken tau_c inside the guest for robustness, but
rectangles and constraint lines are written on the host's actual face plane
so that snapped cut paths meet the face with no gap.
"""

from __future__ import annotations

import logging

import numpy as np

from .geometry import PlanePose, unit
from .model import (AssemblyModel, CONN_BUTT, CONN_CORNER, Connection,
                    ConstraintSegment, InterfaceRect, OrientedPointCloud,
                    Part, Polycurve, RasterRegion, line_segment)
from .params import Params
from .primitives import PLANE, Primitive
from .solids import PartSolid

log = logging.getLogger(__name__)

GROUND_ID = -1


def _boundary_world(part: Part, per_seg: int = 48) -> np.ndarray:
    """World-space points on both sheet faces along the cut-path boundary."""
    b2 = np.concatenate([lp.sample(per_seg) for lp in part.loops], axis=0)
    pts = []
    for z in (0.0, -part.thickness):
        pts.append(part.pose.to_world(
            np.column_stack([b2, np.full(len(b2), z)])))
    return np.concatenate(pts, axis=0)


def find_connected_pairs(model: AssemblyModel, solids: dict[int, PartSolid],
                         params: Params) -> list[tuple[int, int]]:
    """Unordered part-id pairs whose surfaces come within contact_tol."""
    parts = list(model.parts)
    if model.ground_part is not None:
        parts.append(model.ground_part)
    spacing = params.contact_tol / 3.0
    samples = {p.id: solids[p.id].surface_samples(spacing) for p in parts}
    pairs = []
    for i, a in enumerate(parts):
        for b in parts[i + 1:]:
            d_ab = solids[b.id].boundary_distance(samples[a.id]).min()
            d_ba = solids[a.id].boundary_distance(samples[b.id]).min()
            if min(d_ab, d_ba) < params.contact_tol:
                pairs.append((a.id, b.id))
    return pairs


def _one_sided(host: Part, guest: Part, params: Params
               ) -> tuple[bool, bool]:
    """(exactly one side exceeded, that side is the offset-max face)."""
    n = host.pose.normal
    o_max = float(n @ host.pose.translation)
    o_min = o_max - host.thickness
    z = _boundary_world(guest) @ n
    below = z.min() < o_min - params.contact_tol
    above = z.max() > o_max + params.contact_tol
    return below != above, above


def classify_connection(a: Part, b: Part, params: Params) -> Connection | None:
    """Type 1/2 classification; None for unsupported contact geometry."""
    plane_angle = np.degrees(np.arccos(np.clip(
        abs(float(a.pose.normal @ b.pose.normal)), 0.0, 1.0)))
    if plane_angle < params.angle_tol_deg:
        return None  # parallel sheets: face-on contact, out of scope
    one_ab, side_ab = _one_sided(a, b, params)
    one_ba, side_ba = _one_sided(b, a, params)
    bevel = abs(90.0 - np.degrees(np.arccos(np.clip(
        abs(float(a.pose.normal @ b.pose.normal)), -1.0, 1.0))))
    if one_ab and one_ba:
        if a.id <= b.id:
            side_a, side_b = side_ab, side_ba
            lo, hi = a, b
        else:
            side_a, side_b = side_ba, side_ab
            lo, hi = b, a
        return Connection(part_a=lo.id, part_b=hi.id, kind=CONN_CORNER,
                          host_side_max=False, bevel_deg=0.0,
                          side_a_max=side_a, side_b_max=side_b)
    if one_ab:
        return Connection(part_a=a.id, part_b=b.id, kind=CONN_BUTT,
                          host_side_max=side_ab, bevel_deg=bevel)
    if one_ba:
        return Connection(part_a=b.id, part_b=a.id, kind=CONN_BUTT,
                          host_side_max=side_ba, bevel_deg=bevel)
    return None


def _host_guest(conn: Connection, model: AssemblyModel) -> tuple[Part, Part]:
    if conn.kind == CONN_BUTT or conn.corner_a_extends:
        return model.part_by_id(conn.part_a), model.part_by_id(conn.part_b)
    return model.part_by_id(conn.part_b), model.part_by_id(conn.part_a)


def _contact_face(conn: Connection, host: Part) -> tuple[float, float]:
    """(face offset along host normal, +1/-1 direction toward the guest)."""
    o_top = float(host.pose.normal @ host.pose.translation)
    if conn.kind == CONN_CORNER:
        # Contact happens on the host face the guest pokes out of.
        side_max = (conn.side_a_max if host.id == conn.part_a
                    else conn.side_b_max)
    else:
        side_max = conn.host_side_max
    if side_max:
        return o_top, +1.0
    return o_top - host.thickness, -1.0


def compute_interfaces(conn: Connection, model: AssemblyModel,
                       solids: dict[int, PartSolid], params: Params) -> None:
    """Fill conn.rects and append constraint segments to the guest part
    (plus the corner-line constraint to the extending part for corners)."""
    host, guest = _host_guest(conn, model)
    n_h = host.pose.normal
    n_g = guest.pose.normal
    o_face, toward = _contact_face(conn, host)
    t_dir = unit(np.cross(n_h, n_g))          # rectangles run along this line

    # Frame of the host contact face.
    face_pose = PlanePose.from_normal_offset(
        n_h, o_face, origin_hint=host.pose.translation)
    s_dir = unit(np.cross(n_h, t_dir))        # in-face, across the guest sheet

    # Guest sheet-plane depth is affine on the face: z_g(t, s) = c0 + cs * s.
    origin = face_pose.translation
    o_g = float(n_g @ guest.pose.translation)
    c0 = float(n_g @ origin - o_g)
    cs = float(n_g @ s_dir)
    if abs(cs) < 1e-9:
        log.warning("degenerate interface geometry for %s", conn.key())
        return
    s_outer = -c0 / cs                         # face-plane line on z_g = 0
    s_inner = -(c0 + guest.thickness) / cs     # line on z_g = -d_g

    # Probe the section tau_c inside the guest for the contact extent.
    sec_origin = origin + toward * params.contact_tol * n_h
    s_mid = 0.5 * (s_outer + s_inner)
    ext = _boundary_world(guest) @ t_dir
    t0, t1 = float(ext.min()), float(ext.max())
    step = params.thickness_step / 2.0
    ts = np.arange(t0 - step, t1 + step, step)
    probes = (sec_origin[None, :]
              + np.outer(ts - float(t_dir @ sec_origin), t_dir)
              + s_mid * s_dir)
    inside_guest = solids[guest.id].contains(probes, tol=step / 2.0)
    host_2d = host.pose.to_plane(probes)[:, :2]
    inside_host = host.region.contains_plane_points(host_2d)
    ok = inside_guest & inside_host

    runs = _runs(ts, ok, min_len=params.thickness_step)
    if not runs:
        log.warning("connection %s has an empty interface section", conn.key())
        return

    excl_3d = -toward * n_h                    # into the host material
    outward_g = unit(np.array([excl_3d @ guest.pose.rotation[:, 0],
                               excl_3d @ guest.pose.rotation[:, 1]]))
    t_ref = float(t_dir @ sec_origin)
    for (ta, tb) in runs:
        corners_world = [
            origin + (ta - t_ref) * t_dir + s_outer * s_dir,
            origin + (tb - t_ref) * t_dir + s_outer * s_dir,
            origin + (tb - t_ref) * t_dir + s_inner * s_dir,
            origin + (ta - t_ref) * t_dir + s_inner * s_dir,
        ]
        corners = face_pose.to_plane(np.array(corners_world))[:, :2]
        conn.rects.append(InterfaceRect(pose=face_pose.copy(), corners=corners,
                                        host=host.id, guest=guest.id))
        p0 = guest.pose.to_plane(np.array([corners_world[0]]))[0, :2]
        p1 = guest.pose.to_plane(np.array([corners_world[1]]))[0, :2]
        source = "ground" if host.is_ground else "interface"
        guest.constraints.append(ConstraintSegment(
            p0=p0, p1=p1, outward=outward_g, source=source,
            bevel_deg=conn.bevel_deg, other_part=host.id))

    if conn.kind == CONN_CORNER:
        # The extending part must reach the corner line: its own sheet plane
        # meets the guest's far (exposed) face plane.
        host_pokes_max = (conn.side_b_max if guest.id == conn.part_b
                          else conn.side_a_max)
        if host_pokes_max:
            o_far = o_g - guest.thickness
            excl_corner = -n_g
        else:
            o_far = o_g
            excl_corner = n_g
        top_origin = host.pose.translation
        w_dir = unit(np.cross(n_h, t_dir))
        cg0 = float(n_g @ top_origin) - o_far
        cgs = float(n_g @ w_dir)
        if abs(cgs) < 1e-9:
            return
        w0 = -cg0 / cgs
        anchor = top_origin + w0 * w_dir
        outward_h = unit(np.array([excl_corner @ host.pose.rotation[:, 0],
                                   excl_corner @ host.pose.rotation[:, 1]]))
        t_anchor = float(t_dir @ anchor)
        for (ta, tb) in runs:
            w_a = anchor + (ta - t_anchor) * t_dir
            w_b = anchor + (tb - t_anchor) * t_dir
            q0 = host.pose.to_plane(np.array([w_a]))[0, :2]
            q1 = host.pose.to_plane(np.array([w_b]))[0, :2]
            host.constraints.append(ConstraintSegment(
                p0=q0, p1=q1, outward=outward_h, source="corner",
                bevel_deg=0.0, other_part=guest.id))


def _runs(ts: np.ndarray, ok: np.ndarray, min_len: float
          ) -> list[tuple[float, float]]:
    """Contiguous True intervals of ok over ts, at least min_len long."""
    runs = []
    start = None
    for i, flag in enumerate(ok):
        if flag and start is None:
            start = ts[i]
        elif not flag and start is not None:
            if ts[i - 1] - start >= min_len:
                runs.append((float(start), float(ts[i - 1])))
            start = None
    if start is not None and ts[-1] - start >= min_len:
        runs.append((float(start), float(ts[-1])))
    return runs


def derive_adjacent_plane_constraints(part: Part, primitives: list[Primitive],
                                      cloud: OrientedPointCloud,
                                      exclude_prims: set[int],
                                      params: Params) -> None:
    """Constraint segments from detected side-wall planes of this part."""
    n_p = part.pose.normal
    o_p = float(n_p @ part.pose.translation)
    by_id = {p.id: p for p in primitives}
    for pid in sorted(part.adjacent_primitives):
        prim = by_id.get(pid)
        if prim is None or prim.kind != PLANE or pid in exclude_prims:
            continue
        n_w = prim.normal
        cross = np.cross(n_p, n_w)
        if np.linalg.norm(cross) < np.sin(np.radians(params.angle_tol_deg)):
            continue  # parallel plane, no wall line
        wall_pts = cloud.points[prim.inliers]
        z = wall_pts @ n_p - o_p
        frac_in_slab = np.mean((z > -part.thickness - params.contact_tol)
                               & (z < params.contact_tol))
        if frac_in_slab < 0.6:
            continue  # wall does not skirt this sheet
        # Wall line in the sheet frame.
        u, v = part.pose.rotation[:, 0], part.pose.rotation[:, 1]
        a2 = np.array([n_w @ u, n_w @ v])
        norm = np.linalg.norm(a2)
        if norm < 1e-12:
            continue
        a2 /= norm
        rhs = (prim.offset - float(n_w @ part.pose.translation)) / norm
        # Material must lie on the inner side of the wall line (convexity).
        rows, cols = np.nonzero(part.region.mask)
        pix = part.region.pixel_to_plane(rows, cols)
        sd = pix @ a2 - rhs
        near = np.abs(sd) < 4.0 * params.thickness_step
        if near.sum() < 8:
            continue
        if np.mean(sd[near] < 0.0) < 0.7:
            continue  # wall faces into the material: concave, skip
        d2 = np.array([-a2[1], a2[0]])
        wall_2d = part.pose.to_plane(wall_pts)[:, :2]
        t = wall_2d @ d2
        t0, t1 = float(t.min()), float(t.max())
        base = rhs * a2
        bevel = abs(90.0 - np.degrees(np.arccos(np.clip(
            abs(float(n_p @ n_w)), -1.0, 1.0))))
        part.constraints.append(ConstraintSegment(
            p0=base + t0 * d2, p1=base + t1 * d2, outward=a2,
            source="adjacent-plane", bevel_deg=bevel, other_part=-1))


def make_ground_part(cloud: OrientedPointCloud, params: Params) -> Part:
    """Horizontal pseudo-part through the lowest point, facing up."""
    z_min = float(cloud.points[:, 2].min())
    lo = cloud.points[:, :2].min(axis=0) - params.contact_tol
    hi = cloud.points[:, :2].max(axis=0) + params.contact_tol
    scale = params.diameter / 100.0
    cols = int(np.ceil((hi[0] - lo[0]) / scale)) + 2
    rows = int(np.ceil((hi[1] - lo[1]) / scale)) + 2
    region = RasterRegion(np.ones((rows, cols), dtype=bool), lo, scale)
    pose = PlanePose.from_normal_offset(np.array([0.0, 0.0, 1.0]), z_min,
                                        origin_hint=np.array(
                                            [*((lo + hi) / 2.0), z_min]))
    corners2d = pose.to_plane(np.column_stack(
        [np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], hi[1]],
                   [hi[0], lo[1]]]), np.full(4, z_min)]))[:, :2]
    segs = [line_segment(corners2d[i], corners2d[(i + 1) % 4])
            for i in range(4)]
    loops = [Polycurve(segments=segs)]
    return Part(id=GROUND_ID, pose=pose, thickness=params.diameter / 10.0,
                region=region, loops=loops, is_ground=True)


def build_assembly(model: AssemblyModel, cloud: OrientedPointCloud,
                   primitives: list[Primitive], views, params: Params,
                   score_corner=None) -> None:
    """Derive connections and all constraint segments on the current parts.

    score_corner(conn, model, solids) -> None resolves corner orientation
    using image evidence; when absent, corners keep the deterministic
    default (lower part id extends).
    """
    for part in model.parts:
        part.constraints = []
    model.connections = []
    if model.ground_part is None:
        model.ground_part = make_ground_part(cloud, params)
    solids = {p.id: PartSolid(p) for p in model.parts}
    solids[GROUND_ID] = PartSolid(model.ground_part, use="raster")

    pairs = find_connected_pairs(model, solids, params)
    for (ia, ib) in pairs:
        a, b = model.part_by_id(ia), model.part_by_id(ib)
        if a.is_ground or b.is_ground:
            ground, real = (a, b) if a.is_ground else (b, a)
            conn = classify_connection(ground, real, params)
            if conn is not None and conn.kind == CONN_BUTT \
                    and conn.part_a == GROUND_ID:
                model.connections.append(conn)
            continue
        conn = classify_connection(a, b, params)
        if conn is None:
            log.info("contact pair (%d, %d) is not a type 1/2 connection",
                     ia, ib)
            continue
        model.connections.append(conn)

    for conn in model.connections:
        if conn.kind == CONN_CORNER and score_corner is not None:
            score_corner(conn, model, solids)
        compute_interfaces(conn, model, solids, params)

    connected: dict[int, set[int]] = {p.id: set() for p in model.parts}
    for conn in model.connections:
        for pid, other in ((conn.part_a, conn.part_b),
                           (conn.part_b, conn.part_a)):
            if pid != GROUND_ID and other != GROUND_ID:
                connected.setdefault(pid, set()).add(other)
    for part in model.parts:
        exclude = set(part.source_primitives)
        for other_id in connected.get(part.id, ()):
            exclude |= model.part_by_id(other_id).source_primitives
        derive_adjacent_plane_constraints(part, primitives, cloud, exclude,
                                          params)
