"""Reconstruction quality: cloud-to-surface RMSE and ground-truth diffs."""

from __future__ import annotations

import logging

import numpy as np

from .connections import GROUND_ID
from .model import CONN_CORNER, AssemblyModel
from .params import Params
from .solids import PartSolid

log = logging.getLogger(__name__)

# A truth part counts as recovered when this fraction of its surface lies
# within half the contact tolerance of the reconstructed part.
MATCH_COVERAGE = 0.5


def surface_rmse_percent(model: AssemblyModel, points: np.ndarray,
                         params: Params | None = None) -> float:
    """RMSE of point-to-nearest-part-surface distances, as a percent of D."""
    params = params or model.params
    best = np.full(len(points), np.inf)
    for part in model.parts:
        if part.is_ground:
            continue
        best = np.minimum(best, PartSolid(part).boundary_distance(points))
    rmse = float(np.sqrt(np.mean(np.square(best))))
    return 100.0 * rmse / params.diameter


def match_parts(model: AssemblyModel, truth: AssemblyModel,
                params: Params) -> dict[int, int]:
    """Greedy truth-to-model part matching by surface coverage."""
    model_solids = [(p.id, PartSolid(p)) for p in model.parts if not p.is_ground]
    spacing = params.diameter / 100.0
    scores = []
    for tpart in truth.parts:
        samples = PartSolid(tpart).surface_samples(spacing)
        for mid, solid in model_solids:
            cover = float(np.mean(
                solid.boundary_distance(samples) <= params.contact_tol / 2.0))
            if cover >= MATCH_COVERAGE:
                scores.append((cover, tpart.id, mid))
    mapping: dict[int, int] = {}
    used: set[int] = set()
    for cover, tid, mid in sorted(scores, key=lambda s: -s[0]):
        if tid in mapping or mid in used:
            continue
        mapping[tid] = mid
        used.add(mid)
    return mapping


def _corner_extending(conn) -> int:
    return conn.part_a if conn.corner_a_extends else conn.part_b


def compare_to_truth(model: AssemblyModel, truth: AssemblyModel,
                     params: Params) -> dict:
    mapping = match_parts(model, truth, params)
    mapping[GROUND_ID] = GROUND_ID
    matched = [(t, m) for t, m in mapping.items() if t != GROUND_ID]

    thickness_errors = {}
    for tid, mid in matched:
        tpart = truth.part_by_id(tid)
        mpart = model.part_by_id(mid)
        thickness_errors[tid] = abs(tpart.thickness - mpart.thickness)

    # Ground is a pseudo-part the truth generator does not model; its
    # connections are tallied separately rather than counted as extras.
    model_conns = {c.key(): c for c in model.connections
                   if GROUND_ID not in (c.part_a, c.part_b)}
    n_ground = len(model.connections) - len(model_conns)
    missing, extra, misclassified, corner_mismatches = [], [], [], []
    matched_conns = 0
    for tc in truth.connections:
        if tc.part_a not in mapping or tc.part_b not in mapping:
            missing.append([tc.part_a, tc.part_b])
            continue
        ma, mb = mapping[tc.part_a], mapping[tc.part_b]
        key = (min(ma, mb), max(ma, mb))
        mc = model_conns.pop(key, None)
        if mc is None:
            missing.append([tc.part_a, tc.part_b])
            continue
        if mc.kind != tc.kind:
            misclassified.append([tc.part_a, tc.part_b])
            continue
        matched_conns += 1
        if tc.kind == CONN_CORNER:
            if mapping[_corner_extending(tc)] != _corner_extending(mc):
                corner_mismatches.append([tc.part_a, tc.part_b])
    extra = [list(k) for k in model_conns]

    n_model = sum(1 for p in model.parts if not p.is_ground)
    return {
        "part_count_delta": n_model - len(truth.parts),
        "matched_parts": sorted([t, m] for t, m in matched),
        "unmatched_truth_parts": sorted(
            p.id for p in truth.parts if p.id not in mapping),
        "unmatched_model_parts": sorted(
            p.id for p in model.parts
            if not p.is_ground and p.id not in mapping.values()),
        "thickness_errors": thickness_errors,
        "max_thickness_error": max(thickness_errors.values(), default=0.0),
        "connections": {
            "matched": matched_conns,
            "missing": sorted(missing),
            "extra": sorted(extra),
            "misclassified": sorted(misclassified),
            "corner_mismatches": sorted(corner_mismatches),
            "ground": n_ground,
        },
    }


def evaluate(model: AssemblyModel, points: np.ndarray,
             params: Params | None = None,
             truth: AssemblyModel | None = None) -> dict:
    """Full evaluation report; truth section present only when truth given."""
    params = params or model.params
    report = {
        "rmse_percent": surface_rmse_percent(model, points, params),
        "n_parts": sum(1 for p in model.parts if not p.is_ground),
        "n_connections": len(model.connections),
    }
    if truth is not None:
        report["truth"] = compare_to_truth(model, truth, params)
    return report
