"""Typed dynamic-programming fit of closed polycurves to mask boundaries.

A boundary is described by a chain of segments of three types: 0 = straight
line, 1 = cubic Bezier whose incoming end tangent adheres to the precomputed
data tangent, 2 = cubic Bezier with a free end tangent. The chain is chosen
by a DP over candidate nodes: E[j][k] = min over (j', k') of E[j'][k'] +
e(j', j, k', k), where e is the least-squares fit error (sum of squared
distances) of one type-k segment over points j'..j plus a per-type cost.

Transition rules make e a function of node indices and types alone, so the
DP minimum equals exhaustive search over node subsets and type assignments:
  - a segment's outgoing (left) tangent is constrained to the data tangent
    at its start node when the previous segment is a Bezier (types 1, 2),
    and free after a line;
  - a type-2 segment is valid only when its fitted free tangent deviates
    from the data tangent at its end node by more than alpha_min: otherwise
    type 1 represents the same shape and corners stay intentional;
  - ranges whose interior touches a constraint segment must be lines.

The loop starts at the flattest point (locally smoothed curvature minimum);
tangents there are treated as smooth, so the first Bezier's outgoing tangent
is data-constrained and the final segment must arrive tangent-adherent
(type 0 or 1). A start node that artificially bisects a straight run is
removed afterwards by merging collinear closing lines.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import bezier
from .boundary import BoundaryPoints
from .model import (CurveSegment, Polycurve, SEG_BEZIER_CLAMPED,
                    SEG_BEZIER_FREE, SEG_LINE, line_segment)
from .params import Params

log = logging.getLogger(__name__)

MAX_FIT_POINTS = 256
_INF = np.inf
_MERGE_COLLINEAR_DEG = 2.0


@dataclass
class FitCandidates:
    """Boundary reindexed to its start node, plus the DP node set."""
    points: np.ndarray        # (N+1)x2, last point repeats the first
    tangents: np.ndarray      # (N+1)x2
    nodes: np.ndarray         # ascending candidate indices, last == N
    forced_prefix: np.ndarray # N+1, prefix count of constrained points
    mask_width: int
    is_hole: bool


def _smoothed(values: np.ndarray, window: int = 9) -> np.ndarray:
    n = len(values)
    win = min(window, n)
    idx = (np.arange(n)[:, None] + np.arange(win)[None, :] - win // 2) % n
    return values[idx].mean(axis=1)


def prepare_fit(bp: BoundaryPoints, params: Params) -> FitCandidates:
    """Choose the start node and the candidate node set for one boundary."""
    n = len(bp.points)
    start = int(np.argmin(_smoothed(bp.curvature)))
    shift = (np.arange(n + 1) + start) % n
    pts = bp.points[shift]
    tans = bp.tangents[shift]
    constrained = bp.constrained[shift[:-1]]

    k_top = min(params.max_curve_nodes, n)
    cand = set(np.argpartition(-bp.curvature, k_top - 1)[:k_top].tolist())
    cand = {(c - start) % n for c in cand}
    # Entry and exit points of each maximal constrained run.
    flags = constrained.astype(int)
    step = np.diff(np.concatenate([flags[-1:], flags]))
    cand.update(np.nonzero(step == 1)[0].tolist())
    ends = (np.nonzero(step == -1)[0] - 1) % n
    cand.update(ends.tolist())
    cand.discard(0)
    cand.add(n)
    nodes = np.array(sorted(cand), dtype=int)
    prefix = np.concatenate([[0], np.cumsum(constrained)])
    return FitCandidates(points=pts, tangents=tans, nodes=nodes,
                         forced_prefix=prefix, mask_width=bp.mask_width,
                         is_hole=bp.is_hole)


class _RangeFitter:
    """Caches per-range segment fits; line errors are O(1) via prefix sums."""

    def __init__(self, fc: FitCandidates, params: Params):
        self.fc = fc
        self.alpha_min = np.radians(params.min_corner_angle_deg)
        pts = fc.points
        self.s1 = np.concatenate([np.zeros((1, 2)), np.cumsum(pts, axis=0)])
        outer = pts[:, :, None] * pts[:, None, :]
        self.s2 = np.concatenate([np.zeros((1, 2, 2)), np.cumsum(outer, axis=0)])
        self._cache: dict[tuple, tuple[np.ndarray | None, float]] = {}

    def forced_line(self, a: int, b: int) -> bool:
        prefix = self.fc.forced_prefix
        hi = min(b, len(prefix) - 1)
        return bool(prefix[hi] - prefix[a + 1] > 0) if a + 1 < hi else False

    def line_sse(self, a: int, b: int) -> float:
        pts = self.fc.points
        pa, pb = pts[a], pts[b]
        chord = pb - pa
        clen = np.linalg.norm(chord)
        cnt = b - a + 1
        ssum = self.s1[b + 1] - self.s1[a]
        smat = self.s2[b + 1] - self.s2[a]
        m = smat - np.outer(pa, ssum) - np.outer(ssum, pa) + cnt * np.outer(pa, pa)
        if clen < 1e-12:
            return float(np.trace(m))
        nrm = np.array([-chord[1], chord[0]]) / clen
        return max(float(nrm @ m @ nrm), 0.0)

    def segment(self, a: int, b: int, left_constrained: bool, k: int
                ) -> tuple[np.ndarray | None, float]:
        """(control points, SSE) for one typed segment, or (None, inf)."""
        key = (a, b, left_constrained and k != 0, k)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        fc = self.fc
        if k != 0 and self.forced_line(a, b):
            out = (None, _INF)
            self._cache[key] = out
            return out
        if k == 0:
            ctrl = np.array([fc.points[a], fc.points[b]])
            out = (ctrl, self.line_sse(a, b))
            self._cache[key] = out
            return out
        idx = np.arange(a, b + 1)
        if len(idx) > MAX_FIT_POINTS:
            scale = len(idx)
            idx = np.unique(np.rint(np.linspace(a, b, MAX_FIT_POINTS)).astype(int))
            scale = scale / len(idx)
        else:
            scale = 1.0
        left = fc.tangents[a] if left_constrained else None
        right = fc.tangents[b] if k == SEG_BEZIER_CLAMPED else None
        ctrl, sse = bezier.fit_cubic(fc.points[idx], left_dir=left,
                                     right_dir=right)
        sse *= scale
        if k == SEG_BEZIER_FREE:
            _, tan_r = bezier.end_tangents(ctrl)
            dot = float(np.clip(tan_r @ fc.tangents[b], -1.0, 1.0))
            if np.arccos(dot) <= self.alpha_min:
                out = (None, _INF)
                self._cache[key] = out
                return out
        out = (ctrl, sse)
        self._cache[key] = out
        return out


def fit_polycurve(fc: FitCandidates, params: Params) -> Polycurve:
    """Minimal-energy closed typed chain over the candidate nodes."""
    n_total = len(fc.points) - 1
    c1 = (params.curve_cost_numerator * params.diameter
          / max(fc.mask_width, 1)) ** 2
    costs = {SEG_LINE: 0.5 * c1, SEG_BEZIER_CLAMPED: c1, SEG_BEZIER_FREE: c1}
    fitter = _RangeFitter(fc, params)
    nodes = np.concatenate([[0], fc.nodes])
    m_total = len(nodes)
    if m_total < 2:
        log.warning("boundary with no usable candidate nodes; single line")
        return Polycurve(segments=[line_segment(fc.points[0], fc.points[0])],
                         is_hole=fc.is_hole)

    types = (SEG_LINE, SEG_BEZIER_CLAMPED, SEG_BEZIER_FREE)
    energy = np.full((m_total, 3), _INF)
    parent = np.full((m_total, 3, 2), -1, dtype=int)
    # Virtual start state: the flat-start assumption behaves like a preceding
    # type-1 segment (outgoing tangent adheres to the data tangent).
    energy[0][SEG_BEZIER_CLAMPED] = 0.0

    for m in range(1, m_total):
        j = nodes[m]
        for k in types:
            best = _INF
            best_par = (-1, -1)
            ck = costs[k]
            # Nearest predecessors first: their small fit errors tighten the
            # admissible bound early, so most long-range fits are skipped.
            for mp in range(m - 1, -1, -1):
                jp = nodes[mp]
                for kp in types:
                    e_prev = energy[mp][kp]
                    if e_prev + ck >= best:
                        continue
                    _, sse = fitter.segment(jp, j, kp != SEG_LINE, k)
                    total = e_prev + ck + sse
                    if total < best:
                        best = total
                        best_par = (mp, kp)
            energy[m][k] = best
            parent[m][k] = best_par

    # The chain must close tangent-adherently: last type is a line or type 1.
    last = m_total - 1
    if energy[last][SEG_LINE] <= energy[last][SEG_BEZIER_CLAMPED]:
        k = SEG_LINE
    else:
        k = SEG_BEZIER_CLAMPED
    if not np.isfinite(energy[last][k]):
        log.warning("curve DP found no feasible chain; using one line segment")
        return Polycurve(segments=[line_segment(fc.points[0],
                                                fc.points[n_total // 2]),
                                   line_segment(fc.points[n_total // 2],
                                                fc.points[0])],
                         is_hole=fc.is_hole)

    chain = []
    m = last
    while m > 0:
        mp, kp = parent[m][k]
        chain.append((nodes[mp], nodes[m], kp, k))
        m, k = mp, kp
    chain.reverse()

    segments = []
    for jp, j, kp, k in chain:
        ctrl, sse = fitter.segment(jp, j, kp != SEG_LINE, k)
        if k == SEG_LINE:
            seg = line_segment(ctrl[0], ctrl[1])
        else:
            seg = CurveSegment(kind=int(k), ctrl=ctrl)
        seg.fit_mse = float(sse) / max(j - jp, 1)
        segments.append(seg)
    segments = _merge_closing_lines(segments)
    return Polycurve(segments=segments, is_hole=fc.is_hole)


def _merge_closing_lines(segments: list[CurveSegment]) -> list[CurveSegment]:
    """Remove the artificial start node when it bisects a straight run."""
    if len(segments) < 3:
        return segments
    first, last = segments[0], segments[-1]
    if not (first.is_line and last.is_line):
        return segments
    d1 = first.end - first.start
    d2 = last.end - last.start
    n1 = np.linalg.norm(d1)
    n2 = np.linalg.norm(d2)
    if n1 < 1e-12 or n2 < 1e-12:
        return segments
    dot = np.clip(d1 @ d2 / (n1 * n2), -1.0, 1.0)
    if np.degrees(np.arccos(dot)) > _MERGE_COLLINEAR_DEG:
        return segments
    merged = line_segment(last.start, first.end)
    return [merged] + segments[1:-1]


def fit_boundary(bp: BoundaryPoints, params: Params) -> Polycurve:
    fc = prepare_fit(bp, params)
    return fit_polycurve(fc, params)
