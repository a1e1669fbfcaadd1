"""Candidate pruning/merging and conflict-free part selection.

Pruning drops sliver candidates whose cut walls dwarf their face area.
Merging folds opposite overlapping faces of one board into a single part.
Selection runs a Metropolis-Hastings chain over candidate subsets: the
energy is the total squared distance from a fixed cloud subsample to the
nearest selected solid (scaled by 1/D), and states where a selected part
overlaps the others by more than half its volume are forbidden.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cutregion import loop_polycurves, region_loops
from .model import OrientedPointCloud, Part, RasterRegion
from .rasterize import rasterize_loops
from .params import Params
from .solids import PartSolid
from .thickness import PartCandidate

log = logging.getLogger(__name__)

_UNCOVERED_COST = 1.0      # squared scaled distance charged when nothing covers
_CONFLICT_VOXELS = 18      # part thickness / voxel for overlap sampling


def _perimeter(loops_2d: list[np.ndarray]) -> float:
    total = 0.0
    for loop in loops_2d:
        d = np.diff(np.vstack([loop, loop[:1]]), axis=0)
        total += float(np.linalg.norm(d, axis=1).sum())
    return total


def prune_candidates(cands: list[PartCandidate], params: Params
                     ) -> list[PartCandidate]:
    """Drop candidates whose cut-surface area exceeds 5x their face area."""
    kept = []
    for c in cands:
        wall_area = _perimeter(c.loops_2d) * c.thickness
        if wall_area > 5.0 * c.region.area:
            log.info("candidate %d pruned: wall area %.3g > 5x face %.3g",
                     c.id, wall_area, c.region.area)
            continue
        kept.append(c)
    ids = {c.id for c in kept}
    for c in kept:
        c.opposite &= ids
    return kept


def _merge_region(a: PartCandidate, b: PartCandidate) -> None:
    """Union b's cut path into a's grid (grown to cover both)."""
    def to_a(poly_b: np.ndarray) -> np.ndarray:
        world = b.pose.to_world(np.column_stack(
            [poly_b, np.zeros(len(poly_b))]))
        return a.pose.to_plane(world)[:, :2]

    loops_b = [to_a(lp) for lp in b.loops_2d]
    all_b = np.concatenate(loops_b, axis=0)
    scale = a.region.scale
    h, w = a.region.mask.shape
    lo = np.minimum(a.region.origin, all_b.min(axis=0) - scale)
    hi = np.maximum(a.region.origin + scale * np.array([w - 1, h - 1]),
                    all_b.max(axis=0) + scale)
    # Keep the new grid aligned with a's pixel centers.
    lo = a.region.origin - np.ceil((a.region.origin - lo) / scale) * scale
    cols = int(np.ceil((hi[0] - lo[0]) / scale)) + 1
    rows = int(np.ceil((hi[1] - lo[1]) / scale)) + 1
    mask = np.zeros((rows, cols), dtype=bool)
    r0 = int(round((a.region.origin[1] - lo[1]) / scale))
    c0 = int(round((a.region.origin[0] - lo[0]) / scale))
    mask[r0:r0 + h, c0:c0 + w] = a.region.mask
    raster_b = rasterize_loops(loops_b, [i > 0 for i in range(len(loops_b))],
                               lo, scale, (rows, cols))
    mask |= raster_b.mask
    a.region = RasterRegion(mask, lo, scale)
    a.loops_2d = region_loops(a.region)
    a.inliers = np.concatenate([a.inliers, b.inliers])
    a.adj_prims |= b.adj_prims
    a.source_prims |= b.source_prims


def merge_opposites(cands: list[PartCandidate]) -> list[PartCandidate]:
    """Fold every candidate's O-set members into it until no O links remain."""
    alive = {c.id: c for c in cands}
    changed = True
    while changed:
        changed = False
        for cid in sorted(alive):
            c = alive.get(cid)
            if c is None:
                continue
            targets = sorted(c.opposite & set(alive) - {cid})
            if not targets:
                continue
            for tid in targets:
                t = alive.pop(tid)
                _merge_region(c, t)
                c.opposite |= t.opposite
            c.opposite -= {cid} | set(targets)
            changed = True
    return [alive[k] for k in sorted(alive)]


def candidate_part(c: PartCandidate, params: Params) -> Part:
    """Part view of a candidate; polyline loops give closed-form distances."""
    loops = loop_polycurves(c.loops_2d)
    return Part(id=c.id, pose=c.pose.copy(), thickness=c.thickness,
                region=c.region, loops=loops, inlier_indices=c.inliers,
                adjacent_primitives=set(c.adj_prims),
                opposite_parts=set(c.opposite),
                source_primitives=set(c.source_prims))


@dataclass
class SelectionResult:
    chosen: list[int]          # candidate ids, best feasible state seen
    energy: float
    trace: list[float]         # best energy after each iteration


def _conflict_tables(solids: list[PartSolid], params: Params
                     ) -> tuple[list[np.ndarray], np.ndarray]:
    """inside[i][j] = bool mask of i's volume samples lying inside solid j."""
    n = len(solids)
    samples = []
    for s in solids:
        vox = max(s.part.thickness / 3.0, params.diameter / 200.0)
        samples.append(s.volume_samples(vox))
    inside = []
    for i in range(n):
        rows = np.zeros((n, len(samples[i])), dtype=bool)
        for j in range(n):
            if j != i:
                rows[j] = solids[j].contains(samples[i], tol=0.0)
        inside.append(rows)
    return inside, np.array([len(s) for s in samples])


def _feasible(state: np.ndarray, inside: list[np.ndarray], limit: float) -> bool:
    ids = np.nonzero(state)[0]
    for i in ids:
        others = ids[ids != i]
        if len(others) == 0:
            continue
        frac = np.any(inside[i][others], axis=0).mean()
        if frac > limit:
            return False
    return True


def select_parts(cands: list[PartCandidate], cloud: OrientedPointCloud,
                 params: Params) -> SelectionResult:
    """MH chain over candidate subsets; returns the best feasible state."""
    n = len(cands)
    if n == 0:
        return SelectionResult(chosen=[], energy=float("inf"), trace=[])
    rng = np.random.default_rng(np.random.SeedSequence(params.seed + 2).spawn(1)[0])

    pts = cloud.points
    if len(pts) > params.select_subsample:
        pick = rng.choice(len(pts), params.select_subsample, replace=False)
        pts = pts[pick]

    solids = [PartSolid(candidate_part(c, params)) for c in cands]
    d2 = np.empty((n, len(pts)))
    for i, s in enumerate(solids):
        d2[i] = (s.boundary_distance(pts) / params.diameter) ** 2
    d2 = np.minimum(d2, _UNCOVERED_COST)

    inside, _ = _conflict_tables(solids, params)
    conflict_pair = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            if i != j:
                frac = inside[i][j].mean()
                if frac > params.max_overlap_frac:
                    conflict_pair[i, j] = conflict_pair[j, i] = True

    def energy(state: np.ndarray) -> float:
        if not state.any():
            return _UNCOVERED_COST * len(pts)
        return float(np.min(d2[state], axis=0).sum())

    state = np.zeros(n, dtype=bool)
    e = energy(state)
    best_state = state.copy()
    best_e = e
    temps = np.geomspace(params.mh_temp_hi, params.mh_temp_lo,
                         params.mh_iterations)
    trace = []
    for t in temps:
        prop = state.copy()
        if rng.random() < 0.5:
            k = int(rng.integers(n))
            prop[k] = ~prop[k]
        else:
            sel = np.nonzero(state)[0]
            unsel = np.nonzero(~state)[0]
            # Replacement: bring in a conflicting outsider, evict one of the
            # selected parts it collides with.
            pool = [u for u in unsel if conflict_pair[u, sel].any()]
            if pool:
                u = pool[int(rng.integers(len(pool)))]
                enemies = sel[conflict_pair[u, sel]]
                out = enemies[int(rng.integers(len(enemies)))]
                prop[out] = False
                prop[u] = True
            else:
                trace.append(best_e)
                continue
        if not _feasible(prop, inside, params.max_overlap_frac):
            trace.append(best_e)
            continue
        e_prop = energy(prop)
        if e_prop <= e or rng.random() < np.exp((e - e_prop) / t):
            state = prop
            e = e_prop
            if e < best_e:
                best_e = e
                best_state = state.copy()
        trace.append(best_e)

    chosen = [cands[i].id for i in np.nonzero(best_state)[0]]
    if not chosen:
        log.warning("part selection returned an empty set")
    return SelectionResult(chosen=chosen, energy=best_e, trace=trace)


def identify_parts(cloud: OrientedPointCloud, cands: list[PartCandidate],
                   params: Params) -> list[Part]:
    """Prune, merge, select, and materialize the chosen candidates as parts."""
    cands = prune_candidates(cands, params)
    cands = merge_opposites(cands)
    result = select_parts(cands, cloud, params)
    chosen = {cid: c for c in cands for cid in [c.id] if cid in set(result.chosen)}
    parts = []
    for new_id, cid in enumerate(sorted(chosen)):
        part = candidate_part(chosen[cid], params)
        part.id = new_id
        parts.append(part)
    log.info("selected %d parts (energy %.4g)", len(parts), result.energy)
    return parts
