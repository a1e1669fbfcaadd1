"""Blueprint export: JSON model, per-part SVG cut paths, OBJ assembly.

All floating point is serialized with 17 significant digits so files are
byte-stable across runs and round-trip float64 exactly.  Geometry is in
meters except SVG coordinates, which are millimeters.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import PlanePose
from .model import (AssemblyModel, Connection, ConstraintSegment, CurveSegment,
                    InterfaceRect, Part, Polycurve)
from .params import Params

log = logging.getLogger(__name__)

BEVEL_LIMIT_DEG = 80.0        # fabricable bevel range for a tilted saw
FORMAT_NAME = "carpre-blueprint"
FORMAT_VERSION = 1


# -- connectors ---------------------------------------------------------------

@dataclass
class Connector:
    """One nail: where it goes in, pointing along the interface normal."""

    part_a: int              # connection pair this nail fastens
    part_b: int
    rect_index: int          # which interface rectangle of that connection
    position: np.ndarray     # world entry point (3,)
    axis: np.ndarray         # unit direction, perpendicular to the interface
    diameter: float          # nail diameter (meters)


def place_connectors(model: AssemblyModel, params: Params | None = None
                     ) -> list[Connector]:
    """Two nails per interface rectangle, one near each end.

    Nails run perpendicular to the interface plane, centered across the
    rectangle width, inset 10% of the rectangle length from each end.
    Rectangles shorter than 4 nail diameters get a single centered nail.
    """
    params = params or model.params
    dia = params.nail_diameter
    connectors = []
    for conn in model.connections:
        for ri, rect in enumerate(conn.rects):
            cw = rect.corners_world
            m0 = 0.5 * (cw[0] + cw[3])
            m1 = 0.5 * (cw[1] + cw[2])
            length = float(np.linalg.norm(m1 - m0))
            axis = rect.pose.normal
            if length < 4.0 * dia:
                log.warning("interface rect %d of %s is short (%.4f m): "
                            "single nail", ri, conn.key(), length)
                fracs = [0.5]
            else:
                fracs = [0.1, 0.9]
            for f in fracs:
                connectors.append(Connector(
                    part_a=conn.part_a, part_b=conn.part_b, rect_index=ri,
                    position=m0 + f * (m1 - m0), axis=axis.copy(),
                    diameter=dia))
    return connectors


# -- deterministic JSON -------------------------------------------------------

def _fmt(value, indent: int) -> str:
    pad = "  " * indent
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not np.isfinite(v):
            raise ValueError("non-finite float in blueprint")
        return format(v, ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        items = [_fmt(v, indent + 1) for v in value]
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in value):
            return "[" + ", ".join(items) + "]"
        inner = ",\n".join("  " * (indent + 1) + s for s in items)
        return "[\n" + inner + "\n" + pad + "]"
    if isinstance(value, dict):
        rows = []
        for key in sorted(value):
            rows.append("  " * (indent + 1) + json.dumps(key) + ": "
                        + _fmt(value[key], indent + 1))
        return "{\n" + ",\n".join(rows) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(value)}")


def dumps_blueprint(doc: dict) -> str:
    return _fmt(doc, 0) + "\n"


# -- model <-> document -------------------------------------------------------

def _pose_to_rows(pose: PlanePose) -> list[float]:
    mat = np.eye(4)
    mat[:3, :3] = pose.rotation
    mat[:3, 3] = pose.translation
    return [float(x) for x in mat.reshape(-1)]


def _pose_from_rows(rows) -> PlanePose:
    mat = np.asarray(rows, dtype=float).reshape(4, 4)
    return PlanePose(rotation=mat[:3, :3].copy(), translation=mat[:3, 3].copy())


def clamp_bevels(model: AssemblyModel) -> int:
    """Clip every bevel angle into the fabricable range; returns clip count."""
    clipped = 0

    def clip(value: float) -> float:
        nonlocal clipped
        if abs(value) > BEVEL_LIMIT_DEG:
            clipped += 1
            return float(np.clip(value, -BEVEL_LIMIT_DEG, BEVEL_LIMIT_DEG))
        return value

    for conn in model.connections:
        conn.bevel_deg = clip(conn.bevel_deg)
    for part in model.parts:
        for con in part.constraints:
            con.bevel_deg = clip(con.bevel_deg)
        for loop in part.loops:
            for seg in loop.segments:
                seg.bevel_deg = clip(seg.bevel_deg)
    if clipped:
        log.warning("clamped %d bevel angles to +/-%g degrees", clipped,
                    BEVEL_LIMIT_DEG)
    return clipped


def model_to_blueprint(model: AssemblyModel, connectors: list[Connector],
                       meta: dict | None = None) -> dict:
    parts = []
    for part in model.parts:
        loops = []
        for loop in part.loops:
            loops.append({
                "is_hole": bool(loop.is_hole),
                "segments": [{
                    "kind": int(seg.kind),
                    "ctrl": seg.ctrl,
                    "bevel_deg": float(seg.bevel_deg),
                    "constraint_id": int(seg.constraint_id),
                } for seg in loop.segments],
            })
        constraints = [{
            "p0": con.p0, "p1": con.p1, "outward": con.outward,
            "source": con.source, "bevel_deg": float(con.bevel_deg),
            "other_part": int(con.other_part),
        } for con in part.constraints]
        parts.append({
            "id": int(part.id),
            "pose": _pose_to_rows(part.pose),
            "thickness": float(part.thickness),
            "loops": loops,
            "constraints": constraints,
        })

    connections = []
    for conn in model.connections:
        connections.append({
            "part_a": int(conn.part_a), "part_b": int(conn.part_b),
            "kind": int(conn.kind),
            "host_side_max": bool(conn.host_side_max),
            "bevel_deg": float(conn.bevel_deg),
            "corner_a_extends": bool(conn.corner_a_extends),
            "side_a_max": bool(conn.side_a_max),
            "side_b_max": bool(conn.side_b_max),
            "seam_scores": [float(s) for s in conn.seam_scores],
            "rects": [{
                "pose": _pose_to_rows(r.pose), "corners": r.corners,
                "host": int(r.host), "guest": int(r.guest),
            } for r in conn.rects],
        })

    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "units": "m",
        "params": dataclasses.asdict(model.params) if model.params else None,
        "ground": ({"pose": _pose_to_rows(model.ground_part.pose)}
                   if model.ground_part is not None else None),
        "parts": parts,
        "connections": connections,
        "connectors": [{
            "part_a": int(c.part_a), "part_b": int(c.part_b),
            "rect_index": int(c.rect_index),
            "position": c.position, "axis": c.axis,
            "diameter": float(c.diameter),
        } for c in connectors],
        "meta": meta or {},
    }
    return doc


def load_blueprint(path) -> tuple[AssemblyModel, dict]:
    """Rebuild an AssemblyModel (curve-backed, no raster regions) from disk."""
    with open(path) as f:
        doc = json.load(f)
    parts = []
    for pd in doc["parts"]:
        loops = []
        for ld in pd["loops"]:
            segs = [CurveSegment(kind=int(sd["kind"]),
                                 ctrl=np.asarray(sd["ctrl"], dtype=float),
                                 bevel_deg=float(sd["bevel_deg"]),
                                 constraint_id=int(sd["constraint_id"]))
                    for sd in ld["segments"]]
            loops.append(Polycurve(segments=segs, is_hole=bool(ld["is_hole"])))
        cons = [ConstraintSegment(p0=np.asarray(cd["p0"], dtype=float),
                                  p1=np.asarray(cd["p1"], dtype=float),
                                  outward=np.asarray(cd["outward"], dtype=float),
                                  source=cd["source"],
                                  bevel_deg=float(cd["bevel_deg"]),
                                  other_part=int(cd["other_part"]))
                for cd in pd["constraints"]]
        parts.append(Part(id=int(pd["id"]), pose=_pose_from_rows(pd["pose"]),
                          thickness=float(pd["thickness"]), region=None,
                          loops=loops, constraints=cons))
    connections = []
    for cd in doc["connections"]:
        rects = [InterfaceRect(pose=_pose_from_rows(rd["pose"]),
                               corners=np.asarray(rd["corners"], dtype=float),
                               host=int(rd["host"]), guest=int(rd["guest"]))
                 for rd in cd["rects"]]
        connections.append(Connection(
            part_a=int(cd["part_a"]), part_b=int(cd["part_b"]),
            kind=int(cd["kind"]), host_side_max=bool(cd["host_side_max"]),
            bevel_deg=float(cd["bevel_deg"]),
            corner_a_extends=bool(cd["corner_a_extends"]),
            side_a_max=bool(cd["side_a_max"]), side_b_max=bool(cd["side_b_max"]),
            seam_scores=tuple(cd["seam_scores"]), rects=rects))
    params = Params(**doc["params"]) if doc.get("params") else None
    model = AssemblyModel(parts=parts, connections=connections,
                          ground_part=None, params=params)
    return model, doc


# -- SVG ----------------------------------------------------------------------

def _mm(v: float) -> str:
    return format(float(v) * 1000.0, ".17g")


def _svg_path(loop: Polycurve) -> str:
    cmds = [f"M {_mm(loop.segments[0].start[0])} {_mm(-loop.segments[0].start[1])}"]
    for seg in loop.segments:
        c = seg.ctrl
        if seg.is_line:
            cmds.append(f"L {_mm(c[3, 0])} {_mm(-c[3, 1])}")
        else:
            cmds.append("C " + " ".join(
                f"{_mm(c[i, 0])} {_mm(-c[i, 1])}" for i in (1, 2, 3)))
    cmds.append("Z")
    return " ".join(cmds)


def export_svg(part: Part, path) -> None:
    """Cut path drawing: black outline, bevel edges overdrawn in red/green.

    Red marks edges whose bevel tilts the cut-surface normal into the page,
    green out of the page; circles mark the curve nodes.  The y axis is
    flipped so the drawing shows the part's front face.
    """
    pts = np.concatenate([lp.sample(16) for lp in part.loops], axis=0)
    lo = pts.min(axis=0) - 0.005
    hi = pts.max(axis=0) + 0.005
    x0, y0 = lo[0] * 1000.0, -hi[1] * 1000.0
    w, h = (hi[0] - lo[0]) * 1000.0, (hi[1] - lo[1]) * 1000.0
    rows = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{format(x0, ".17g")} {format(y0, ".17g")} '
        f'{format(w, ".17g")} {format(h, ".17g")}" '
        f'width="{format(w, ".17g")}mm" height="{format(h, ".17g")}mm">',
        f'<!-- part {part.id}: thickness {format(part.thickness * 1000.0, ".3f")} mm, '
        'coordinates in mm -->',
    ]
    for loop in part.loops:
        rows.append(f'<path d="{_svg_path(loop)}" fill="none" '
                    'stroke="black" stroke-width="0.5"/>')
    for loop in part.loops:
        for seg in loop.segments:
            if seg.bevel_deg == 0.0:
                continue
            color = "green" if seg.bevel_deg > 0 else "red"
            c = seg.ctrl
            if seg.is_line:
                rows.append(
                    f'<line x1="{_mm(c[0, 0])}" y1="{_mm(-c[0, 1])}" '
                    f'x2="{_mm(c[3, 0])}" y2="{_mm(-c[3, 1])}" '
                    f'stroke="{color}" stroke-width="1.0">'
                    f'<title>bevel {format(seg.bevel_deg, ".2f")} deg</title></line>')
            else:
                rows.append(f'<path d="{_svg_path(Polycurve([seg]))[:-2]}" '
                            f'fill="none" stroke="{color}" stroke-width="1.0"/>')
    for loop in part.loops:
        for seg in loop.segments:
            rows.append(f'<circle cx="{_mm(seg.start[0])}" '
                        f'cy="{_mm(-seg.start[1])}" r="1.2" fill="none" '
                        'stroke="blue" stroke-width="0.3"/>')
    rows.append("</svg>")
    Path(path).write_text("\n".join(rows) + "\n")


# -- OBJ ----------------------------------------------------------------------

def _sample_ring(loop: Polycurve, bezier_pts: int = 24
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Ring vertices plus each vertex's bevel angle (from its segment)."""
    pts, bevels = [], []
    for seg in loop.segments:
        chunk = seg.ctrl[[0], :] if seg.is_line \
            else seg.sample(bezier_pts + 1)[:-1]
        pts.append(chunk)
        bevels.extend([seg.bevel_deg] * len(chunk))
    return np.concatenate(pts, axis=0), np.asarray(bevels)


def _ring_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(p, q, a, b) -> np.ndarray:
    """Proper intersection test of segment p-q against segment arrays a-b."""
    def side(o, d, x):
        return (d[0] - o[0]) * (x[..., 1] - o[1]) - (d[1] - o[1]) * (x[..., 0] - o[0])
    d1 = side(p, q, a)
    d2 = side(p, q, b)
    d3 = (b[:, 0] - a[:, 0]) * (p[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (p[0] - a[:, 0])
    d4 = (b[:, 0] - a[:, 0]) * (q[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (q[0] - a[:, 0])
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def _bridge_holes(rings: list[np.ndarray]) -> list[int]:
    """Merge hole rings into the outer ring via mutually visible bridges.

    Input: ring point arrays, outer first (CCW), holes after (CW).  Output is
    one index ring into the concatenated vertex array; bridge vertices appear
    twice so downstream welding restores watertight topology.
    """
    offsets = np.cumsum([0] + [len(r) for r in rings])
    allpts = np.concatenate(rings, axis=0)
    merged = list(range(len(rings[0])))
    holes = sorted(range(1, len(rings)),
                   key=lambda h: -float(rings[h][:, 0].max()))
    for h in holes:
        ring = rings[h]
        k = int(np.argmax(ring[:, 0]))
        hidx = offsets[h] + k
        hp = allpts[hidx]
        # All current edges (merged ring plus not-yet-bridged holes) block.
        edge_a, edge_b = [], []
        for chain in [merged] + [list(range(offsets[g], offsets[g + 1]))
                                 for g in holes if g != h]:
            arr = allpts[np.asarray(chain)]
            edge_a.append(arr)
            edge_b.append(np.roll(arr, -1, axis=0))
        ea = np.concatenate(edge_a, axis=0)
        eb = np.concatenate(edge_b, axis=0)
        best, best_d = -1, np.inf
        for pos, vidx in enumerate(merged):
            vp = allpts[vidx]
            d = float(np.hypot(*(vp - hp)))
            if d >= best_d:
                continue
            if np.any(_segments_cross(hp, vp, ea, eb)):
                continue
            best, best_d = pos, d
        if best < 0:
            log.warning("hole bridging failed, hole dropped from OBJ faces")
            continue
        # Outer runs CCW, holes CW, so splicing the hole in stored order
        # keeps the merged polygon simple and CCW; both bridge endpoints
        # are duplicated on purpose.
        hole_cycle = [offsets[h] + (k + j) % len(ring) for j in range(len(ring))]
        merged = (merged[:best + 1] + hole_cycle
                  + [hidx, merged[best]] + merged[best + 1:])
    return merged


def _ear_clip(pts: np.ndarray, ring: list[int]) -> list[tuple[int, int, int]]:
    """Triangulate a (bridged) simple polygon given as indices into pts."""
    ring = list(ring)
    tris: list[tuple[int, int, int]] = []
    scale = float(np.ptp(pts, axis=0).max()) or 1.0
    eps = 1e-12 * scale * scale

    def cross(i, j, k):
        a, b, c = pts[i], pts[j], pts[k]
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    while len(ring) > 3:
        n = len(ring)
        clipped = False
        for k in range(n):
            i0, i1, i2 = ring[k - 1], ring[k], ring[(k + 1) % n]
            cr = cross(i0, i1, i2)
            if cr <= eps:
                if abs(cr) <= eps and np.allclose(pts[i0], pts[i2]):
                    # Bridge spur (out-and-back): safe to remove silently.
                    del ring[k]
                    clipped = True
                    break
                continue
            a, b, c = pts[i0], pts[i1], pts[i2]
            others = np.asarray([j for j in ring if j not in (i0, i1, i2)])
            if len(others):
                p = pts[others]
                s1 = (b[0] - a[0]) * (p[:, 1] - a[1]) - (b[1] - a[1]) * (p[:, 0] - a[0])
                s2 = (c[0] - b[0]) * (p[:, 1] - b[1]) - (c[1] - b[1]) * (p[:, 0] - b[0])
                s3 = (a[0] - c[0]) * (p[:, 1] - c[1]) - (a[1] - c[1]) * (p[:, 0] - c[0])
                inside = (s1 > -eps) & (s2 > -eps) & (s3 > -eps)
                corner = (np.isclose(p, a).all(axis=1)
                          | np.isclose(p, b).all(axis=1)
                          | np.isclose(p, c).all(axis=1))
                if np.any(inside & ~corner):
                    continue
            tris.append((i0, i1, i2))
            del ring[k]
            clipped = True
            break
        if not clipped:
            # Numerical stalemate: clip the widest convex corner to progress.
            k = max(range(len(ring)),
                    key=lambda k: cross(ring[k - 1], ring[k],
                                        ring[(k + 1) % len(ring)]))
            if cross(ring[k - 1], ring[k], ring[(k + 1) % len(ring)]) > eps:
                tris.append((ring[k - 1], ring[k], ring[(k + 1) % len(ring)]))
            del ring[k]
    if len(ring) == 3 and cross(*ring) > eps:
        tris.append(tuple(ring))
    return tris


def part_mesh(part: Part, bezier_pts: int = 24
              ) -> tuple[np.ndarray, np.ndarray]:
    """Closed triangle mesh (world coords) of the extruded, beveled part."""
    rings2d, ring_bevels = [], []
    for loop in part.loops:
        ring, bevels = _sample_ring(loop, bezier_pts)
        area = _ring_area(ring)
        want_ccw = not loop.is_hole
        if (area > 0) != want_ccw:
            ring = ring[::-1]
            bevels = bevels[::-1]
        rings2d.append(ring)
        ring_bevels.append(bevels)

    d = part.thickness
    verts: list[np.ndarray] = []
    weld: dict[tuple, int] = {}
    tris: list[tuple[int, int, int]] = []

    def add(p3: np.ndarray) -> int:
        key = tuple(np.round(p3, 12))
        idx = weld.get(key)
        if idx is None:
            idx = len(verts)
            verts.append(p3)
            weld[key] = idx
        return idx

    top_ids, bot_ids = [], []
    for ring, bevels in zip(rings2d, ring_bevels):
        n = len(ring)
        tangents = np.roll(ring, -1, axis=0) - np.roll(ring, 1, axis=0)
        norms = np.linalg.norm(tangents, axis=1, keepdims=True)
        tangents = tangents / np.maximum(norms, 1e-300)
        outward = np.column_stack([tangents[:, 1], -tangents[:, 0]])
        offset = d * np.tan(np.radians(bevels))[:, None] * outward
        top3 = part.pose.to_world(ring)
        bot3 = part.pose.to_world(
            np.column_stack([ring + offset, np.full(n, -d)]))
        top_ids.append([add(p) for p in top3])
        bot_ids.append([add(p) for p in bot3])

    # Side walls.
    for tids, bids in zip(top_ids, bot_ids):
        n = len(tids)
        for i in range(n):
            j = (i + 1) % n
            if tids[i] != tids[j]:
                tris.append((tids[i], bids[j], tids[j]))
                tris.append((tids[i], bids[i], bids[j]))

    # Faces: triangulate the top polygon (with holes), reuse for the bottom.
    flat_top = np.concatenate(rings2d, axis=0)
    flat_tid = [i for ids in top_ids for i in ids]
    flat_bid = [i for ids in bot_ids for i in ids]
    bridged = _bridge_holes(rings2d) if len(rings2d) > 1 \
        else list(range(len(rings2d[0])))
    for (a, b, c) in _ear_clip(flat_top, bridged):
        tris.append((flat_tid[a], flat_tid[b], flat_tid[c]))
        tris.append((flat_bid[c], flat_bid[b], flat_bid[a]))

    return np.asarray(verts), np.asarray(tris, dtype=int)


def export_obj(model: AssemblyModel, path, bezier_pts: int = 24) -> None:
    """Wavefront OBJ with one closed solid per part (shared numbering)."""
    rows = ["# fabricable assembly, units: meters"]
    base = 1
    for part in model.parts:
        if part.is_ground or not part.loops:
            continue
        verts, tris = part_mesh(part, bezier_pts)
        rows.append(f"o part_{part.id}")
        for v in verts:
            rows.append("v " + " ".join(format(float(x), ".17g") for x in v))
        for (a, b, c) in tris:
            rows.append(f"f {base + a} {base + b} {base + c}")
        base += len(verts)
    Path(path).write_text("\n".join(rows) + "\n")


# -- bundle -------------------------------------------------------------------

def export_all(model: AssemblyModel, out_dir, meta: dict | None = None,
               connectors: list[Connector] | None = None) -> dict:
    """Write blueprint.json, per-part SVGs, and assembly.obj; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    clamp_bevels(model)
    if connectors is None:
        connectors = place_connectors(model)
    doc = model_to_blueprint(model, connectors, meta=meta)
    paths = {"blueprint": out / "blueprint.json", "obj": out / "assembly.obj"}
    paths["blueprint"].write_text(dumps_blueprint(doc))
    export_obj(model, paths["obj"])
    for part in model.parts:
        if part.is_ground or not part.loops:
            continue
        svg = out / f"part_{part.id:03d}.svg"
        export_svg(part, svg)
        paths[f"svg_{part.id}"] = svg
    return paths
