"""Image-driven refinement of part cut regions as a binary MRF.

Each part's in-plane mask M is re-estimated on its pixel grid by minimizing

    E(M) = sum_x E_d(x) + lambda * sum_(x,y) |M(x) - M(y)| * w(x, y)

over 4-connected pixel pairs, exactly, via s-t min-cut.

Data term: E_d(x) is the mean negative log-likelihood of pixel x's rectified
colors under the label's per-view mixture models, averaged over the views
that see x; pixels no view sees cost 0 either way. Pixels beyond any
constraint segment cannot take label 1 (a huge finite cost stands in for
infinity so the reduction stays numeric).

Smoothness: w(x, y) = exp(-mean_j ||dI_j||^2 / sigma^2) where the mean runs
over views seeing both pixels (w = 1 when there is none) and color
differences are measured in 0-255 units per channel. Pairs that straddle a
constraint segment get w = 0: the model already knows an edge is there, so
no smoothing should pull the cut across it.

After the first solve the mixtures are retrained on the solved mask and the
energy is minimized once more.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import ndimage

from .appearance import ViewAppearance, fit_part_appearance
from .cameras import CameraView
from .cutregion import loop_polycurves, region_loops
from .maxflow import solve_potts_grid
from .model import AssemblyModel, Part, RasterRegion
from .params import Params
from .rectify import PartViews, select_views
from .render import depth_render
from .solids import PartSolid

log = logging.getLogger(__name__)

FORBIDDEN_COST = 1e9
STRADDLE_TOL_PX = 2.0
MIN_COMPONENT_PIXELS = 4


def data_costs(grid: PartViews, apps: list[ViewAppearance], part: Part
               ) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel label costs (cost of 0, cost of 1) on the part grid."""
    h, w = grid.shape
    n_v = np.zeros((h, w))
    sum_in = np.zeros((h, w))
    sum_out = np.zeros((h, w))
    for app in apps:
        vis = app.rview.visibility
        n_v += vis
        sum_in += np.where(vis, app.log_in, 0.0)
        sum_out += np.where(vis, app.log_out, 0.0)
    seen = n_v > 0
    u1 = np.zeros((h, w))
    u0 = np.zeros((h, w))
    u1[seen] = -sum_in[seen] / n_v[seen]
    u0[seen] = -sum_out[seen] / n_v[seen]

    pts = grid.pixel_plane_points()
    forbidden = np.zeros(len(pts), dtype=bool)
    for con in part.constraints:
        forbidden |= con.excludes(pts)
    u1[forbidden.reshape(h, w)] = FORBIDDEN_COST
    if forbidden.all():
        raise ValueError(f"part {part.id}: every pixel is beyond a "
                         "constraint, segmentation is infeasible")
    return u0, u1


def smoothness_weights(grid: PartViews, apps: list[ViewAppearance],
                       part: Part, params: Params
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Contrast-modulated Potts weights for horizontal and vertical pairs."""
    h, w = grid.shape
    sigma2 = params.contrast_sigma ** 2

    def pair_weight(sl_a, sl_b):
        acc = np.zeros((h, w))[sl_a]
        cnt = np.zeros((h, w))[sl_a]
        for app in apps:
            both = app.rview.visibility[sl_a] & app.rview.visibility[sl_b]
            diff = (app.rview.image[sl_a].astype(float)
                    - app.rview.image[sl_b].astype(float)) * 255.0
            acc += np.where(both, (diff ** 2).sum(axis=-1), 0.0)
            cnt += both
        seen = cnt > 0
        weight = np.ones_like(acc)
        weight[seen] = np.exp(-acc[seen] / (cnt[seen] * sigma2))
        return weight

    w_h = pair_weight(np.s_[:, :-1], np.s_[:, 1:])
    w_v = pair_weight(np.s_[:-1, :], np.s_[1:, :])

    # No smoothing across a known physical edge.
    pts = grid.pixel_plane_points()
    tol = STRADDLE_TOL_PX * grid.scale
    for con in part.constraints:
        sd = con.signed_distance(pts).reshape(h, w)
        near = (np.abs(sd) < tol) & con.within_span(pts, slack=tol).reshape(h, w)
        straddle_h = (near[:, :-1] & near[:, 1:]
                      & (sd[:, :-1] * sd[:, 1:] <= 0.0))
        straddle_v = (near[:-1, :] & near[1:, :]
                      & (sd[:-1, :] * sd[1:, :] <= 0.0))
        w_h[straddle_h] = 0.0
        w_v[straddle_v] = 0.0
    return w_h, w_v


def mask_energy(mask: np.ndarray, u0: np.ndarray, u1: np.ndarray,
                w_h: np.ndarray, w_v: np.ndarray, params: Params) -> float:
    """E(M) for a given labeling, same convention as the solver."""
    m = mask.astype(bool)
    e = float(u1[m].sum() + u0[~m].sum())
    lam = params.smoothness_weight
    e += lam * float(w_h[m[:, :-1] != m[:, 1:]].sum())
    e += lam * float(w_v[m[:-1, :] != m[1:, :]].sum())
    return e


def segment_part(part: Part, views: list[CameraView],
                 depth_maps: dict[str, np.ndarray], params: Params
                 ) -> bool:
    """Re-estimate one part's region from its rectified views.

    Returns True when the region was replaced by a segmented mask, False
    when the part is unobservable (region left untouched).
    """
    grid = select_views(part, views, depth_maps, params)
    if not grid.views:
        return False
    seed = params.seed + 17 * (part.id + 3)
    labs: dict[str, np.ndarray] = {}

    theta = grid.theta
    mask = theta
    energies = []
    for round_idx in range(2):
        apps = fit_part_appearance(grid, mask, params, seed, labs)
        if not apps:
            log.warning("part %d: no usable appearance models; keeping the "
                        "point-derived region", part.id)
            return False
        u0, u1 = data_costs(grid, apps, part)
        w_h, w_v = smoothness_weights(grid, apps, part, params)
        lam = params.smoothness_weight
        solved, energy = solve_potts_grid(u0, u1, lam * w_h, lam * w_v)
        mask = solved.astype(bool)
        energies.append(energy)
        if not mask.any():
            log.warning("part %d: segmentation emptied the mask; keeping the "
                        "point-derived region", part.id)
            return False
    log.info("part %d segmented: %d -> %d px, energy %.1f -> %.1f",
             part.id, int(theta.sum()), int(mask.sum()), *energies)
    _install_mask(part, grid, mask)
    return True


def segment_parts(model: AssemblyModel, views: list[CameraView],
                  params: Params) -> int:
    """Segment every part against the current assembly; returns the count
    of parts whose regions were replaced."""
    usable = [v for v in views if v.image is not None]
    if not usable:
        return 0
    # Raster solids: depth maps feed a tolerance far above the pixel size.
    solids = [PartSolid(p, use="raster") for p in model.parts]
    depth_maps = {v.id: depth_render(solids, v)[0] for v in usable}
    n = 0
    for part in model.parts:
        if segment_part(part, usable, depth_maps, params):
            n += 1
    return n


def _install_mask(part: Part, grid: PartViews, mask: np.ndarray) -> None:
    part.region = RasterRegion(mask, grid.origin, grid.scale)
    part.loops = loop_polycurves(region_loops(part.region))


def update_topology(model: AssemblyModel) -> bool:
    """Split parts whose masks fell apart into 4-connected components.

    The largest component keeps the part id; other components of at least
    MIN_COMPONENT_PIXELS pixels become new parts; smaller crumbs are
    discarded. Returns True when any part changed.
    """
    changed = False
    out: list[Part] = []
    next_free = model.next_id()
    for part in model.parts:
        labels, n_comp = ndimage.label(part.region.mask)
        if n_comp <= 1:
            out.append(part)
            continue
        sizes = np.bincount(labels.ravel())[1:]
        order = np.argsort(sizes)[::-1]
        pieces = []
        for comp in order:
            # Absolute floor plus a relative one: stray slivers along other
            # parts' silhouettes are tiny compared to the main component.
            if (sizes[comp] < MIN_COMPONENT_PIXELS
                    or sizes[comp] < 0.01 * sizes[order[0]]):
                log.warning("part %d: dropping a %d px fragment",
                            part.id, int(sizes[comp]))
                continue
            pieces.append(labels == comp + 1)
        if not pieces:
            log.warning("part %d: all components vanished, keeping as is",
                        part.id)
            out.append(part)
            continue
        # Dropping crumbs alone is not a topology change worth another round.
        changed = changed or len(pieces) > 1
        for k, comp_mask in enumerate(pieces):
            if k == 0:
                piece = part
            else:
                piece = part.copy(new_id=next_free)
                next_free += 1
            region = _cropped_region(part.region, comp_mask)
            piece.region = region
            piece.loops = loop_polycurves(region_loops(region))
            out.append(piece)
        if len(pieces) > 1:
            log.info("part %d split into %d components", part.id, len(pieces))
    model.parts = out
    return changed


def _cropped_region(region: RasterRegion, comp_mask: np.ndarray) -> RasterRegion:
    rows = np.any(comp_mask, axis=1).nonzero()[0]
    cols = np.any(comp_mask, axis=0).nonzero()[0]
    r0, r1 = rows[0], rows[-1] + 1
    c0, c1 = cols[0], cols[-1] + 1
    pad = 2
    sub = np.zeros((r1 - r0 + 2 * pad, c1 - c0 + 2 * pad), dtype=bool)
    sub[pad:-pad, pad:-pad] = comp_mask[r0:r1, c0:c1]
    origin = region.origin + region.scale * np.array([c0 - pad, r0 - pad])
    return RasterRegion(sub, origin, region.scale)
