"""Rectified per-part views: plane-frame color images plus visibility masks.

Each part gets one pixel grid in its sheet frame (longest side capped), and
each camera view is resampled onto that grid by projecting the grid's face
points into the image. Visibility comes from a shared per-view depth map:
a face point is visible when its camera distance does not exceed the first
surface the pixel ray hits, so other parts (and the part's own far side)
occlude naturally. Cameras behind the sheet observe the back face, which
lives at z = -thickness; the mask domain (x, y) is shared by both faces.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cameras import CameraView
from .model import Part, RasterRegion, make_grid
from .params import Params

log = logging.getLogger(__name__)

MAX_VIEWS = 7
MIN_INTERIOR_COVERAGE = 0.5


@dataclass
class RectifiedView:
    view_id: str
    image: np.ndarray        # HxWx3 float32 on the part grid
    visibility: np.ndarray   # HxW bool
    alignment: float         # |cos| of central viewing ray vs part normal
    back_face: bool          # camera observes the z=-thickness face


@dataclass
class PartViews:
    """A part's segmentation grid and the rectified views selected for it."""
    origin: np.ndarray       # 2, plane coords of pixel (0, 0)
    scale: float             # plane length per pixel
    shape: tuple[int, int]
    theta: np.ndarray        # HxW bool, current region resampled on this grid
    views: list[RectifiedView] = field(default_factory=list)

    @property
    def region(self) -> RasterRegion:
        return RasterRegion(self.theta, self.origin, self.scale)

    def pixel_plane_points(self) -> np.ndarray:
        h, w = self.shape
        cols, rows = np.meshgrid(np.arange(w), np.arange(h))
        return np.stack([self.origin[0] + cols.ravel() * self.scale,
                         self.origin[1] + rows.ravel() * self.scale], axis=1)


def build_part_grid(part: Part, params: Params) -> PartViews:
    """Pixel grid over the part's current region, longest side capped."""
    region = part.region
    h, w = region.mask.shape
    lo = region.origin
    hi = region.origin + np.array([(w - 1) * region.scale, (h - 1) * region.scale])
    origin, scale, shape = make_grid(lo, hi, params.grid_max_dim,
                                     margin=params.contact_tol)
    grid = PartViews(origin=origin, scale=scale, shape=shape,
                     theta=np.zeros(shape, dtype=bool))
    pts = grid.pixel_plane_points()
    grid.theta = region.contains_plane_points(pts).reshape(shape)
    return grid


def _central_alignment(view: CameraView, normal: np.ndarray) -> float:
    # Camera forward axis in world coordinates.
    fwd = view.world_to_cam[2, :3]
    return float(abs(fwd @ normal))


def rectify_view(part: Part, grid: PartViews, view: CameraView,
                 depth: np.ndarray, params: Params) -> RectifiedView:
    """Resample one camera view onto the part grid with per-pixel visibility."""
    h, w = grid.shape
    pts2 = grid.pixel_plane_points()
    cam_local = part.pose.to_plane(view.center)[0]
    back = cam_local[2] < -0.5 * part.thickness
    z_face = -part.thickness if back else 0.0
    pts3 = np.column_stack([pts2, np.full(len(pts2), z_face)])
    world = part.pose.to_world(pts3)

    uv, z = view.project(world)
    ok = (z > 1e-9) & view.in_bounds(uv)
    vis = np.zeros(len(pts2), dtype=bool)
    image = np.zeros((len(pts2), 3), dtype=np.float32)
    if ok.any():
        dist = np.linalg.norm(world[ok] - view.center, axis=1)
        rc = np.rint(uv[ok][:, ::-1]).astype(int)
        rc[:, 0] = np.clip(rc[:, 0], 0, view.height - 1)
        rc[:, 1] = np.clip(rc[:, 1], 0, view.width - 1)
        d_first = depth[rc[:, 0], rc[:, 1]]
        tol = 0.5 * params.contact_tol
        vis[ok] = dist <= d_first + tol
        image[ok] = view.sample_image(uv[ok]).astype(np.float32)
    return RectifiedView(view_id=view.id, image=image.reshape(h, w, 3),
                         visibility=vis.reshape(h, w),
                         alignment=_central_alignment(view, part.pose.normal),
                         back_face=bool(back))


def select_views(part: Part, views: list[CameraView],
                 depth_maps: dict[str, np.ndarray], params: Params,
                 max_views: int = MAX_VIEWS) -> PartViews:
    """Rectify all views, keep the best-aligned ones that see the part.

    A view qualifies when it covers at least half of the current interior
    pixels; the top ``max_views`` by central-ray alignment are kept. With no
    qualifying view the part is reported unobservable and no views are kept.
    """
    grid = build_part_grid(part, params)
    interior = grid.theta
    n_interior = max(int(interior.sum()), 1)
    candidates = []
    for view in views:
        if view.image is None:
            continue
        rv = rectify_view(part, grid, view, depth_maps[view.id], params)
        coverage = float((rv.visibility & interior).sum()) / n_interior
        if coverage >= MIN_INTERIOR_COVERAGE:
            candidates.append(rv)
        else:
            log.debug("part %d: view %s covers %.0f%% interior, skipped",
                      part.id, view.id, 100.0 * coverage)
    candidates.sort(key=lambda rv: -rv.alignment)
    grid.views = candidates[:max_views]
    if not grid.views:
        log.warning("part %d is unobservable in all views; keeping the "
                    "point-derived region", part.id)
    return grid
