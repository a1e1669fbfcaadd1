"""Image seam evidence for corner-orientation disambiguation.

A corner joint hides which of the two parts runs through to the outer edge.
Each configuration predicts a seam line on the exposed face (where the
extending part's end grain meets the other part's face); the configuration
whose predicted seam shows stronger image evidence wins. Evidence per view
is the mean gradient magnitude orthogonal to the projected seam plus the
color difference of two flanking rectangles; views that cannot see the seam
are skipped, and a fully unobserved seam scores exactly 0.01.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cameras import CameraView
from .geometry import plane_plane_line, unit
from .model import AssemblyModel, CONN_CORNER, Connection, Part
from .params import Params
from .render import segment_blocked
from .solids import PartSolid

log = logging.getLogger(__name__)

UNOBSERVED_SCORE = 0.01
_MAX_SAMPLES = 400
_FLANK_ACROSS = 6
_FLANK_ALONG = 64


@dataclass
class SeamCandidate:
    p0: np.ndarray                       # 3D endpoints of the seam segment
    p1: np.ndarray
    face_normal: np.ndarray              # outward normal of the exposed face
    connection: tuple[int, int] = (-1, -1)
    label: str = ""                      # configuration tag
    view_scores: dict[int, float] = field(default_factory=dict)
    aggregate: float = UNOBSERVED_SCORE

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))


def _face_offset(part: Part, side_max: bool) -> float:
    o_top = float(part.pose.normal @ part.pose.translation)
    return o_top if side_max else o_top - part.thickness


def _extent_along(part: Part, direction: np.ndarray) -> tuple[float, float]:
    b2 = np.concatenate([lp.sample(48) for lp in part.loops], axis=0)
    pts = part.pose.to_world(np.column_stack([b2, np.zeros(len(b2))]))
    t = pts @ direction
    return float(t.min()), float(t.max())


def corner_seam(conn: Connection, model: AssemblyModel, a_extends: bool
                ) -> SeamCandidate | None:
    """Predicted seam for one corner configuration, or None if degenerate."""
    if a_extends:
        ext = model.part_by_id(conn.part_a)
        other = model.part_by_id(conn.part_b)
        ext_side, other_side = conn.side_a_max, conn.side_b_max
    else:
        ext = model.part_by_id(conn.part_b)
        other = model.part_by_id(conn.part_a)
        ext_side, other_side = conn.side_b_max, conn.side_a_max
    # Seam = extender's contact face (side the other part pokes out of)
    # meeting the other part's far, exposed face.
    o_contact = _face_offset(ext, ext_side)
    far_is_max = not other_side
    o_far = _face_offset(other, far_is_max)
    n_e, n_o = ext.pose.normal, other.pose.normal
    line = plane_plane_line(n_e, o_contact, n_o, o_far)
    if line is None:
        return None
    point, direction = line
    lo_a, hi_a = _extent_along(ext, direction)
    lo_b, hi_b = _extent_along(other, direction)
    lo, hi = max(lo_a, lo_b), min(hi_a, hi_b)
    if hi - lo < 1e-9:
        return None
    t0 = float(point @ direction)
    outward = n_o if far_is_max else -n_o
    return SeamCandidate(p0=point + (lo - t0) * direction,
                         p1=point + (hi - t0) * direction,
                         face_normal=outward, connection=conn.key(),
                         label="a_extends" if a_extends else "b_extends")


def _visible(view: CameraView, pts: np.ndarray, solids: list[PartSolid],
             clearance: float) -> tuple[np.ndarray, np.ndarray]:
    """(uv of samples, mask of in-bounds unoccluded samples)."""
    uv, z = view.project(pts)
    ok = (z > 1e-9) & view.in_bounds(uv)
    if ok.any():
        starts = np.tile(view.center, (int(ok.sum()), 1))
        blocked = segment_blocked(solids, starts, pts[ok], clearance)
        sub = ok.copy()
        sub[np.nonzero(ok)[0][blocked]] = False
        ok = sub
    return uv, ok


def score_seam(seam: SeamCandidate, views: list[CameraView],
               solids: list[PartSolid], params: Params) -> float:
    """Mean per-view seam evidence; 0.01 when no view sees the seam."""
    seam.view_scores = {}
    seam_dir = unit(seam.p1 - seam.p0)
    perp = unit(np.cross(seam.face_normal, seam_dir))
    clearance = params.contact_tol / 2.0
    for vid, view in enumerate(views):
        uv_ends, z_ends = view.project(np.vstack([seam.p0, seam.p1]))
        if (z_ends <= 0).any():
            continue
        n = int(np.clip(np.linalg.norm(uv_ends[1] - uv_ends[0]), 2,
                        _MAX_SAMPLES))
        ts = (np.arange(n) + 0.5) / n
        pts = seam.p0 + np.outer(ts, seam.p1 - seam.p0)
        uv, ok = _visible(view, pts, solids, clearance)
        if ok.mean() < 0.5:
            continue
        # Gradient orthogonal to the projected seam, on grayscale.
        dir2 = unit(uv_ends[1] - uv_ends[0])
        perp2 = np.array([-dir2[1], dir2[0]])
        u = uv[ok]
        gx = (view.sample_image(u + [1.0, 0.0]).mean(axis=1)
              - view.sample_image(u - [1.0, 0.0]).mean(axis=1)) / 2.0
        gy = (view.sample_image(u + [0.0, 1.0]).mean(axis=1)
              - view.sample_image(u - [0.0, 1.0]).mean(axis=1)) / 2.0
        g = float(np.abs(gx * perp2[0] + gy * perp2[1]).mean())

        # Mean-color difference of the two flanking rectangles.
        n_along = min(n, _FLANK_ALONG)
        ta = (np.arange(n_along) + 0.5) / n_along
        base = seam.p0 + np.outer(ta, seam.p1 - seam.p0)
        offs = (np.arange(_FLANK_ACROSS) + 0.5) / _FLANK_ACROSS * params.contact_tol
        means = []
        for sign in (+1.0, -1.0):
            grid = (base[:, None, :]
                    + sign * offs[None, :, None] * perp[None, None, :])
            flat = grid.reshape(-1, 3)
            fuv, fok = _visible(view, flat, solids, clearance)
            if fok.sum() == 0:
                means.append(None)
                continue
            means.append(view.sample_image(fuv[fok]).mean(axis=0))
        if means[0] is None or means[1] is None:
            gbar = 0.0
        else:
            gbar = float(np.linalg.norm(means[0] - means[1]))
        seam.view_scores[vid] = g + gbar
    if not seam.view_scores:
        seam.aggregate = UNOBSERVED_SCORE
    else:
        seam.aggregate = float(np.mean(list(seam.view_scores.values())))
    return seam.aggregate


def disambiguate_corner(conn: Connection, model: AssemblyModel,
                        views: list[CameraView], solids: list[PartSolid],
                        params: Params) -> None:
    """Fix corner orientation by comparing the two predicted seam scores."""
    if conn.kind != CONN_CORNER:
        return
    cand_a = corner_seam(conn, model, a_extends=True)
    cand_b = corner_seam(conn, model, a_extends=False)
    score_a = (score_seam(cand_a, views, solids, params)
               if cand_a is not None else UNOBSERVED_SCORE)
    score_b = (score_seam(cand_b, views, solids, params)
               if cand_b is not None else UNOBSERVED_SCORE)
    conn.seam_scores = (score_a, score_b)
    # Ties keep the deterministic default: the lower-id part extends.
    conn.corner_a_extends = score_a >= score_b
    log.info("corner %s: seam scores a=%.4f b=%.4f -> %s extends",
             conn.key(), score_a, score_b,
             "a" if conn.corner_a_extends else "b")
