"""Polycurve post-processing: constraint snapping, corner smoothing, and
parallel/orthogonal line alignment.

Operates on the closed chains produced by the boundary fit. Lines that run
along a connection-derived constraint segment are projected exactly onto the
constraint line (and inherit its bevel angle); Bezier neighbors follow the
displaced endpoints with their control legs rotated by the same angle as the
line they touch, preserving the tangent angle at the junction. Shallow
corners are smoothed to G1 by tangent averaging when the control-point
displacement budget (tau_c) permits. Finally, free lines are rotated about
their midpoints onto shared orientation classes (mod 90 degrees), seeded by
constraint directions, so nearly parallel/orthogonal edges become exact.
"""

from __future__ import annotations

import logging

import numpy as np

from .model import ConstraintSegment, CurveSegment, Polycurve, line_segment
from .params import Params

log = logging.getLogger(__name__)

_SNAP_EXACT = 1e-9   # relative to D: node-on-line tolerance after snapping
_PARALLEL_EPS = 1e-9


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 1e-15 else np.array([1.0, 0.0])


def _rot(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _con_dir(con: ConstraintSegment) -> np.ndarray:
    return _unit(con.p1 - con.p0)


def _project_onto(con: ConstraintSegment, p: np.ndarray) -> np.ndarray:
    sd = float(con.signed_distance(p[None])[0])
    return p - sd * con.outward


def _line_line_point(a0, ad, b0, bd) -> np.ndarray | None:
    """Intersection of two infinite lines (point + direction), or None."""
    denom = ad[0] * bd[1] - ad[1] * bd[0]
    if abs(denom) < _PARALLEL_EPS:
        return None
    t = ((b0[0] - a0[0]) * bd[1] - (b0[1] - a0[1]) * bd[0]) / denom
    return a0 + t * ad


def _incoming_tangent(seg: CurveSegment) -> np.ndarray:
    if seg.is_line:
        return _unit(seg.end - seg.start)
    return _unit(seg.ctrl[3] - seg.ctrl[2])


def _outgoing_tangent(seg: CurveSegment) -> np.ndarray:
    if seg.is_line:
        return _unit(seg.end - seg.start)
    return _unit(seg.ctrl[1] - seg.ctrl[0])


def snap_and_smooth(curve: Polycurve, constraints: list[ConstraintSegment],
                    params: Params) -> Polycurve:
    """Project constraint-adjacent lines onto their constraints; smooth
    shallow corners within the tau_c control-displacement budget."""
    out = curve.copy()
    segs = out.segments
    n_seg = len(segs)
    if n_seg == 0:
        return out
    tol = params.contact_tol

    # Nearest constraint per line segment, both endpoints within tau_c.
    snap_idx: dict[int, int] = {}
    for i, seg in enumerate(segs):
        if not seg.is_line or not constraints:
            continue
        d_start = np.array([con.distance(seg.start[None])[0] for con in constraints])
        d_end = np.array([con.distance(seg.end[None])[0] for con in constraints])
        score = np.maximum(d_start, d_end)
        j = int(np.argmin(score))
        if score[j] <= tol:
            snap_idx[i] = j
    snap_to = {i: constraints[j] for i, j in snap_idx.items()}

    # Target node positions. Node i sits between segs[i-1] and segs[i].
    targets = [segs[i].start.copy() for i in range(n_seg)]
    for i in range(n_seg):
        prev_i = (i - 1) % n_seg
        con_prev = snap_to.get(prev_i)
        con_next = snap_to.get(i)
        node = targets[i]
        if con_prev is not None and con_next is not None and con_prev is not con_next:
            hit = _line_line_point(con_prev.p0, _con_dir(con_prev),
                                   con_next.p0, _con_dir(con_next))
            if hit is None:
                hit = _project_onto(con_next, _project_onto(con_prev, node))
            targets[i] = hit
        elif con_prev is not None:
            targets[i] = _project_onto(con_prev, node)
        elif con_next is not None:
            targets[i] = _project_onto(con_next, node)

    # Undo snaps that would collapse a line to a point, then derive each
    # line's rotation angle from its final node targets.
    for i, seg in enumerate(segs):
        if not seg.is_line:
            continue
        if np.linalg.norm(targets[(i + 1) % n_seg] - targets[i]) < 1e-12:
            log.warning("constraint snap degenerates a line segment; skipped")
            targets[i] = segs[i].start.copy()
            targets[(i + 1) % n_seg] = segs[i].end.copy()
            snap_to.pop(i, None)
            snap_idx.pop(i, None)
    rotations = np.zeros(n_seg)
    for i, seg in enumerate(segs):
        if not seg.is_line:
            continue
        old_dir = _unit(seg.end - seg.start)
        new_vec = targets[(i + 1) % n_seg] - targets[i]
        if np.linalg.norm(new_vec) < 1e-12:
            continue
        new_dir = _unit(new_vec)
        rotations[i] = float(np.arctan2(
            old_dir[0] * new_dir[1] - old_dir[1] * new_dir[0],
            old_dir @ new_dir))

    new_segs = []
    for i, seg in enumerate(segs):
        p_start = targets[i]
        p_end = targets[(i + 1) % n_seg]
        if seg.is_line:
            ns = line_segment(p_start, p_end)
            con = snap_to.get(i)
            ns.bevel_deg = con.bevel_deg if con is not None else seg.bevel_deg
            ns.constraint_id = snap_idx.get(i, seg.constraint_id)
            ns.fit_mse = seg.fit_mse
            new_segs.append(ns)
            continue
        ctrl = seg.ctrl.copy()
        left_leg = ctrl[1] - ctrl[0]
        right_leg = ctrl[2] - ctrl[3]
        prev_i = (i - 1) % n_seg
        next_i = (i + 1) % n_seg
        if segs[prev_i].is_line and abs(rotations[prev_i]) > 0:
            left_leg = _rot(rotations[prev_i]) @ left_leg
        if segs[next_i].is_line and abs(rotations[next_i]) > 0:
            right_leg = _rot(rotations[next_i]) @ right_leg
        ctrl[0] = p_start
        ctrl[1] = p_start + left_leg
        ctrl[3] = p_end
        ctrl[2] = p_end + right_leg
        new_segs.append(CurveSegment(kind=seg.kind, ctrl=ctrl,
                                     bevel_deg=seg.bevel_deg,
                                     constraint_id=seg.constraint_id,
                                     fit_mse=seg.fit_mse))

    _smooth_corners(new_segs, params)
    out.segments = new_segs
    return out


def _smooth_corners(segs: list[CurveSegment], params: Params) -> None:
    """Average tangents across corners flatter than alpha_min, in place."""
    n_seg = len(segs)
    alpha_min = np.radians(params.min_corner_angle_deg)
    for i in range(n_seg):
        a = segs[(i - 1) % n_seg]
        b = segs[i]
        t_in = _incoming_tangent(a)
        t_out = _outgoing_tangent(b)
        ang = float(np.arccos(np.clip(t_in @ t_out, -1.0, 1.0)))
        if ang <= 1e-12 or ang >= alpha_min:
            continue
        if a.is_line and b.is_line:
            continue
        if a.is_line:
            t_avg = t_in
        elif b.is_line:
            t_avg = t_out
        else:
            t_avg = _unit(t_in + t_out)
        disp = 0.0
        new_a2 = new_b1 = None
        if not a.is_line:
            leg = np.linalg.norm(a.ctrl[3] - a.ctrl[2])
            new_a2 = a.ctrl[3] - leg * t_avg
            disp += float(np.linalg.norm(new_a2 - a.ctrl[2]))
        if not b.is_line:
            leg = np.linalg.norm(b.ctrl[1] - b.ctrl[0])
            new_b1 = b.ctrl[0] + leg * t_avg
            disp += float(np.linalg.norm(new_b1 - b.ctrl[1]))
        if disp > params.contact_tol:
            continue
        if new_a2 is not None:
            a.ctrl[2] = new_a2
        if new_b1 is not None:
            b.ctrl[1] = new_b1


def _mod90_dist(theta: float, ref: float) -> float:
    d = (theta - ref) % (0.5 * np.pi)
    return min(d, 0.5 * np.pi - d)


def _nearest_class_dir(theta: float, ref: float) -> np.ndarray:
    """Unit direction of the ref-class representative closest to theta."""
    k = np.round((theta - ref) / (0.5 * np.pi))
    ang = ref + k * 0.5 * np.pi
    return np.array([np.cos(ang), np.sin(ang)])


def align_lines(curve: Polycurve, constraints: list[ConstraintSegment],
                params: Params) -> Polycurve:
    """Rotate free lines onto orientation classes (mod 90 degrees) seeded by
    constraint directions; re-join neighbors exactly, preserving closure."""
    out = curve.copy()
    segs = out.segments
    n_seg = len(segs)
    if n_seg < 2:
        return out
    alpha = np.radians(params.angle_tol_deg)
    snap_tol = _SNAP_EXACT * params.diameter

    line_idx = [i for i, s in enumerate(segs) if s.is_line]
    if not line_idx:
        return out
    thetas = {}
    fixed = set()
    for i in line_idx:
        seg = segs[i]
        d = seg.end - seg.start
        if np.linalg.norm(d) < 1e-12:
            fixed.add(i)
            continue
        thetas[i] = float(np.arctan2(d[1], d[0]))
        for con in constraints:
            sd = con.signed_distance(np.array([seg.start, seg.end]))
            if np.all(np.abs(sd) <= max(snap_tol, 1e-12)):
                fixed.add(i)
                break

    seeds = []
    for con in constraints:
        d = _con_dir(con)
        seeds.append(float(np.arctan2(d[1], d[0])))

    # Target class angle per rotatable line.
    target_ref: dict[int, float] = {}
    clustered = []
    for i in line_idx:
        if i in fixed:
            continue
        th = thetas[i]
        if seeds:
            dists = [_mod90_dist(th, s) for s in seeds]
            j = int(np.argmin(dists))
            if dists[j] <= alpha:
                target_ref[i] = seeds[j]
                continue
        clustered.append(i)

    # Remaining free lines cluster mutually (transitive, mod-90 distance).
    remaining = list(clustered)
    while remaining:
        group = [remaining.pop(0)]
        changed = True
        while changed:
            changed = False
            for j in list(remaining):
                if any(_mod90_dist(thetas[j], thetas[g]) <= alpha for g in group):
                    group.append(j)
                    remaining.remove(j)
                    changed = True
        if len(group) < 2:
            continue
        s4 = sum(np.sin(4.0 * thetas[g]) for g in group)
        c4 = sum(np.cos(4.0 * thetas[g]) for g in group)
        ref = float(np.arctan2(s4, c4)) / 4.0
        for g in group:
            target_ref[g] = ref

    # Sequentially rotate each line about its midpoint and re-join neighbors.
    for i in sorted(target_ref):
        seg = segs[i]
        mid = 0.5 * (seg.start + seg.end)
        half = 0.5 * float(np.linalg.norm(seg.end - seg.start))
        old_dir = _unit(seg.end - seg.start)
        u = _nearest_class_dir(thetas[i], target_ref[i])
        if old_dir @ u < 0:
            u = -u
        delta = float(np.arctan2(old_dir[0] * u[1] - old_dir[1] * u[0],
                                 old_dir @ u))
        if abs(delta) < 1e-15:
            continue
        new_start = mid - half * u
        new_end = mid + half * u

        prev_i = (i - 1) % n_seg
        next_i = (i + 1) % n_seg
        updates = []
        ok = True
        for nb_i, nb_at_end in ((prev_i, True), (next_i, False)):
            nb = segs[nb_i]
            old_node = seg.start if nb_at_end else seg.end
            if nb_i == i:
                ok = False
                break
            if nb.is_line:
                nb_dir = _unit(nb.end - nb.start)
                anchor = nb.start if nb_at_end else nb.end
                hit = _line_line_point(anchor, nb_dir, mid, u)
                if hit is None:
                    ok = False
                    break
                node = hit
            else:
                # Foot of the Bezier endpoint on the rotated line.
                perp = np.array([-u[1], u[0]])
                node = old_node - ((old_node - mid) @ perp) * perp
            if np.linalg.norm(node - old_node) > params.contact_tol:
                ok = False
                break
            updates.append((nb_i, nb_at_end, node, delta))
        if not ok:
            log.warning("skipping line alignment that would break closure")
            continue

        for nb_i, nb_at_end, node, dtheta in updates:
            nb = segs[nb_i]
            if nb.is_line:
                if nb_at_end:
                    segs[nb_i] = line_segment(nb.start, node)
                else:
                    segs[nb_i] = line_segment(node, nb.end)
                segs[nb_i].bevel_deg = nb.bevel_deg
                segs[nb_i].constraint_id = nb.constraint_id
                segs[nb_i].fit_mse = nb.fit_mse
            else:
                ctrl = nb.ctrl.copy()
                if nb_at_end:
                    leg = _rot(dtheta) @ (ctrl[2] - ctrl[3])
                    ctrl[3] = node
                    ctrl[2] = node + leg
                else:
                    leg = _rot(dtheta) @ (ctrl[1] - ctrl[0])
                    ctrl[0] = node
                    ctrl[1] = node + leg
                segs[nb_i] = CurveSegment(kind=nb.kind, ctrl=ctrl,
                                          bevel_deg=nb.bevel_deg,
                                          constraint_id=nb.constraint_id,
                                          fit_mse=nb.fit_mse)
            if nb_at_end:
                new_start = node
            else:
                new_end = node
        ns = line_segment(new_start, new_end)
        ns.bevel_deg = seg.bevel_deg
        ns.constraint_id = seg.constraint_id
        ns.fit_mse = seg.fit_mse
        segs[i] = ns
        d_new = ns.end - ns.start
        if np.linalg.norm(d_new) > 1e-12:
            thetas[i] = float(np.arctan2(d_new[1], d_new[0]))

    out.segments = segs
    return out
