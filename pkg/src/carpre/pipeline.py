"""End-to-end driver: point cloud + posed views -> fabricable assembly.

Stage order mirrors the fabrication workflow: identify flat parts, connect
them into an assembly, alternate image segmentation with assembly updates
until the connection topology stops changing, regularize poses and
thicknesses, then fit parametric cut paths against the accumulated
constraints.  Every stage is timed so reports can break down the cost.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .boundary import extract_boundary
from .connections import build_assembly
from .curvefit import fit_boundary
from .model import AssemblyModel, OrientedPointCloud, Part
from .params import Params
from .postprocess import align_lines, snap_and_smooth
from .primitives import compute_adjacency, detect_primitives
from .refine import align_planes, regularize_thicknesses
from .seams import UNOBSERVED_SCORE, disambiguate_corner
from .segmentation import segment_parts, update_topology
from .selection import identify_parts
from .thickness import build_candidates, match_opposites

log = logging.getLogger(__name__)

# Assembly <-> segmentation alternation stops once the connection set is
# stable; the cap guards against oscillating borderline contacts.
MAX_TOPOLOGY_ROUNDS = 5


@dataclass
class PipelineReport:
    """Result bundle for one reconstruction run."""

    model: AssemblyModel                 # final assembly (parts + connections)
    timings: dict[str, float] = field(default_factory=dict)  # seconds/stage
    iterations: int = 1                  # assembly<->segmentation rounds used
    degraded: bool = False               # True when images were unusable
    warnings: list[str] = field(default_factory=list)  # operator-facing notes


def _topology_key(model: AssemblyModel) -> frozenset:
    return frozenset((c.key(), c.kind) for c in model.connections)


def _make_corner_scorer(views, params: Params, degraded: bool):
    """Adapter handing corner connections to the seam evidence scorer."""
    if degraded or not views:
        def scorer(conn, model, solids):
            conn.seam_scores = (UNOBSERVED_SCORE, UNOBSERVED_SCORE)
            conn.corner_a_extends = True
        return scorer

    def scorer(conn, model, solids):
        disambiguate_corner(conn, model, views, list(solids.values()), params)
    return scorer


def _fit_part_curves(part: Part, params: Params) -> None:
    """Boundary -> typed curve DP -> constraint snapping -> line alignment."""
    loops = extract_boundary(part.region, part.constraints, params)
    fitted = []
    for bp in loops:
        curve = fit_boundary(bp, params)
        curve = snap_and_smooth(curve, part.constraints, params)
        curve = align_lines(curve, part.constraints, params)
        fitted.append(curve)
    part.loops = fitted


def _retag_constraints(part: Part, params: Params) -> None:
    """Point snapped lines at the current constraint list after a rebuild."""
    for curve in part.loops:
        for seg in curve.segments:
            if not seg.is_line or seg.constraint_id < 0:
                continue
            best_j, best_d = -1, params.contact_tol
            for j, con in enumerate(part.constraints):
                d = max(con.distance(seg.start), con.distance(seg.end))
                if d <= best_d:
                    best_j, best_d = j, d
            seg.constraint_id = best_j
            if best_j >= 0:
                seg.bevel_deg = part.constraints[best_j].bevel_deg


def run_pipeline(cloud: OrientedPointCloud, views, params: Params,
                 use_images: bool = True) -> PipelineReport:
    """Reconstruct a fabricable assembly from a scan.

    views may be empty or None; the pipeline then runs in degraded mode
    (geometry only): segmentation is skipped and corner connections fall
    back to the default configuration with unobserved seam scores.
    """
    report = PipelineReport(model=None)
    views = list(views) if views else []
    degraded = not use_images or not views
    if degraded:
        msg = ("no usable posed images: skipping segmentation, corner "
               "configurations fall back to defaults")
        log.warning(msg)
        report.warnings.append(msg)
    report.degraded = degraded
    scorer = _make_corner_scorer(views, params, degraded)

    t0 = time.perf_counter()
    primitives = detect_primitives(cloud, params)
    adjacency = compute_adjacency(primitives, cloud, params)
    cands = build_candidates(cloud, primitives, adjacency, params)
    match_opposites(cands, params)
    parts = identify_parts(cloud, cands, params)
    model = AssemblyModel(parts=parts, params=params)
    report.timings["identification"] = time.perf_counter() - t0
    log.info("identified %d parts from %d primitives", len(parts),
             len(primitives))

    t0 = time.perf_counter()
    build_assembly(model, cloud, primitives, views, params, score_corner=scorer)
    report.timings["assembly"] = time.perf_counter() - t0
    log.info("initial assembly: %d connections", len(model.connections))

    t_seg = 0.0
    t_asm = report.timings["assembly"]
    rounds = 0
    if not degraded:
        topo = _topology_key(model)
        for rounds in range(1, MAX_TOPOLOGY_ROUNDS + 1):
            t0 = time.perf_counter()
            segment_parts(model, views, params)
            changed = update_topology(model)
            t_seg += time.perf_counter() - t0

            t0 = time.perf_counter()
            build_assembly(model, cloud, primitives, views, params,
                           score_corner=scorer)
            t_asm += time.perf_counter() - t0
            new_topo = _topology_key(model)
            log.info("segmentation round %d: topology %s", rounds,
                     "changed" if new_topo != topo else "stable")
            if new_topo != topo:
                log.debug("topology delta: +%s -%s",
                          sorted(new_topo - topo), sorted(topo - new_topo))
            if new_topo == topo and not changed:
                break
            topo = new_topo
    report.iterations = max(rounds, 1)
    report.timings["segmentation"] = t_seg

    t0 = time.perf_counter()
    align_planes(model, cloud, params)
    regularize_thicknesses(model, params)
    # Poses moved, so contact geometry and constraints must be rebuilt.
    build_assembly(model, cloud, primitives, views, params, score_corner=scorer)
    report.timings["refinement"] = time.perf_counter() - t0
    report.timings["assembly"] = t_asm

    t0 = time.perf_counter()
    for part in model.parts:
        _fit_part_curves(part, params)
    report.timings["curve_fitting"] = time.perf_counter() - t0

    # One more assembly pass so interface rectangles reflect the fitted
    # outlines, then re-point snapped lines at the fresh constraint list.
    t0 = time.perf_counter()
    build_assembly(model, cloud, primitives, views, params, score_corner=scorer)
    for part in model.parts:
        _retag_constraints(part, params)
    report.timings["assembly"] += time.perf_counter() - t0

    report.model = model
    return report
