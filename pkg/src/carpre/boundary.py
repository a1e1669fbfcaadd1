"""Mask-boundary extraction: ordered pixel loops with tangents and curvature.

Boundaries follow boundary pixel centers (8-connected walk around the
4-connected mask), outer loops clockwise and holes counterclockwise in the
plane frame. Per-point unit tangents and curvatures come from a cubic fit
to a sliding neighborhood, evaluated at the window center; the fits are
batched in closed form (two free control points, endpoints clamped).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import cv2
import numpy as np

from .model import ConstraintSegment, RasterRegion
from .params import Params

log = logging.getLogger(__name__)

TANGENT_WINDOW = 9
MIN_LOOP_POINTS = 8


@dataclass
class BoundaryPoints:
    """One closed mask boundary, ordered, without a duplicated endpoint."""
    points: np.ndarray            # Nx2 plane coords
    tangents: np.ndarray          # Nx2 unit, along traversal
    curvature: np.ndarray         # N, unsigned, plane units
    constrained: np.ndarray       # N bool, within tau_c of a constraint
    governing: np.ndarray         # N int, index into constraints (-1 none)
    mask_width: int               # W in pixels, for the curve-cost formula
    is_hole: bool = False


def _loop_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _window_fit(points: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched cubic fit per sliding window; tangent and curvature at center.

    Endpoints are clamped; the two interior control points solve the normal
    equations in closed form for every window at once.
    """
    n = len(points)
    win = min(window, n if n % 2 == 1 else n - 1)
    half = win // 2
    idx = (np.arange(n)[:, None] + np.arange(-half, half + 1)[None, :]) % n
    nb = points[idx]                                    # n x win x 2
    seg = np.linalg.norm(np.diff(nb, axis=1), axis=2)
    cum = np.concatenate([np.zeros((n, 1)), np.cumsum(seg, axis=1)], axis=1)
    total = np.maximum(cum[:, -1:], 1e-12)
    t = cum / total                                     # n x win
    mt = 1.0 - t
    b0 = mt ** 3
    b1 = 3.0 * mt * mt * t
    b2 = 3.0 * mt * t * t
    b3 = t ** 3
    p0 = nb[:, :1, :]
    p3 = nb[:, -1:, :]
    rhs = nb - b0[:, :, None] * p0 - b3[:, :, None] * p3   # n x win x 2
    # Normal equations for columns [b1 b2].
    a11 = (b1 * b1).sum(axis=1)
    a12 = (b1 * b2).sum(axis=1)
    a22 = (b2 * b2).sum(axis=1)
    r1 = np.einsum("nw,nwd->nd", b1, rhs)
    r2 = np.einsum("nw,nwd->nd", b2, rhs)
    det = a11 * a22 - a12 * a12
    safe = np.abs(det) > 1e-18
    inv_det = np.where(safe, 1.0 / np.where(det == 0, 1.0, det), 0.0)
    p1 = ((a22[:, None] * r1 - a12[:, None] * r2) * inv_det[:, None])
    p2 = ((-a12[:, None] * r1 + a11[:, None] * r2) * inv_det[:, None])
    chord = (p3 - p0)[:, 0, :]
    p1 = np.where(safe[:, None], p1, p0[:, 0, :] + chord / 3.0)
    p2 = np.where(safe[:, None], p2, p3[:, 0, :] - chord / 3.0)

    tc = t[np.arange(n), np.full(n, half)]              # parameter at center
    ctrl = np.stack([p0[:, 0, :], p1, p2, p3[:, 0, :]], axis=1)  # n x 4 x 2
    d = 3.0 * (ctrl[:, 1:, :] - ctrl[:, :-1, :])
    mtc = 1.0 - tc
    w1 = np.stack([mtc * mtc, 2.0 * mtc * tc, tc * tc], axis=1)
    d1 = np.einsum("nk,nkd->nd", w1, d)
    dd = 6.0 * (ctrl[:, 2:, :] - 2.0 * ctrl[:, 1:-1, :] + ctrl[:, :-2, :])
    w2 = np.stack([mtc, tc], axis=1)
    d2 = np.einsum("nk,nkd->nd", w2, dd)
    speed = np.linalg.norm(d1, axis=1)
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    curv = np.abs(cross) / np.maximum(speed ** 3, 1e-30)
    bad = speed < 1e-12
    if bad.any():
        fallback = np.roll(points, -1, axis=0) - np.roll(points, 1, axis=0)
        d1[bad] = fallback[bad]
        speed = np.linalg.norm(d1, axis=1)
    tangents = d1 / np.maximum(speed, 1e-30)[:, None]
    return tangents, curv


def extract_boundary(region: RasterRegion,
                     constraints: list[ConstraintSegment],
                     params: Params) -> list[BoundaryPoints]:
    """Ordered boundary loops of the mask, outer first, then its holes."""
    mask = region.mask.astype(np.uint8)
    contours, hierarchy = cv2.findContours(mask, cv2.RETR_CCOMP,
                                           cv2.CHAIN_APPROX_NONE)
    if not contours:
        return []
    hierarchy = hierarchy[0]
    order = sorted(range(len(contours)),
                   key=lambda i: (hierarchy[i][3] != -1, -len(contours[i])))
    out = []
    width = int(region.mask.shape[1])
    for ci in order:
        cont = contours[ci][:, 0, :]                     # k x (col, row)
        if len(cont) < MIN_LOOP_POINTS:
            log.warning("skipping a %d-point boundary loop", len(cont))
            continue
        pts = np.column_stack([region.origin[0] + cont[:, 0] * region.scale,
                               region.origin[1] + cont[:, 1] * region.scale])
        is_hole = hierarchy[ci][3] != -1
        area = _loop_area(pts)
        # Outer loops clockwise (negative shoelace), holes counterclockwise.
        flip = (area > 0) if not is_hole else (area < 0)
        if flip:
            pts = pts[::-1].copy()
        tangents, curv = _window_fit(pts, TANGENT_WINDOW)
        governing = np.full(len(pts), -1, dtype=int)
        best = np.full(len(pts), np.inf)
        for k, con in enumerate(constraints):
            d = con.distance(pts)
            closer = (d <= params.contact_tol) & (d < best)
            governing[closer] = k
            best[closer] = d[closer]
        out.append(BoundaryPoints(points=pts, tangents=tangents,
                                  curvature=curv,
                                  constrained=governing >= 0,
                                  governing=governing,
                                  mask_width=width, is_hole=is_hole))
    return out
