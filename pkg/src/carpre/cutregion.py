"""Planar cut regions from projected support points.

A Gaussian kernel field is sampled on a regular grid over the plane; the
level set at 1/sqrt(e) bounds the region. The largest closed contour is the
outer boundary, contours nested inside it are holes, everything else
(isolated specks) is dropped. The rasterized region lives on the same grid.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.spatial import cKDTree
from skimage import measure

from .model import Polycurve, RasterRegion, line_segment
from .params import Params
from .rasterize import rasterize_loops

log = logging.getLogger(__name__)


def kernel_field(points_2d: np.ndarray, origin: np.ndarray, scale: float,
                 shape: tuple[int, int], variance: float) -> np.ndarray:
    """Sum of Gaussian kernels evaluated at every grid node."""
    rows, cols = shape
    reach = 5.0 * np.sqrt(variance)
    tree = cKDTree(points_2d)
    xs = origin[0] + scale * np.arange(cols)
    ys = origin[1] + scale * np.arange(rows)
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])
    field = np.zeros(len(nodes))
    hits = tree.query_ball_point(nodes, reach)
    for i, idx in enumerate(hits):
        if not idx:
            continue
        d2 = np.sum((points_2d[idx] - nodes[i]) ** 2, axis=1)
        field[i] = np.exp(-d2 / (2.0 * variance)).sum()
    return field.reshape(rows, cols)


def _contour_area(contour_rc: np.ndarray) -> float:
    y = contour_rc[:, 0]
    x = contour_rc[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _point_in_polygon(pt: np.ndarray, poly: np.ndarray) -> bool:
    x, y = pt
    j = len(poly) - 1
    inside = False
    for i in range(len(poly)):
        yi, xi = poly[i]
        yj, xj = poly[j]
        if (yi > y) != (yj > y) and x < (xj - xi) * (y - yi) / (yj - yi) + xi:
            inside = not inside
        j = i
    return inside


def region_loops(region: RasterRegion) -> list[np.ndarray]:
    """Boundary polylines of a raster mask in plane coords, outer loop first."""
    contours = measure.find_contours(region.mask.astype(float), 0.5)
    closed = [c for c in contours if len(c) >= 4]
    if not closed:
        return []
    areas = [abs(_contour_area(c)) for c in closed]
    order = np.argsort(areas)[::-1]
    out = []
    for rank, ci in enumerate(order):
        c = closed[ci]
        if rank > 0 and not _point_in_polygon(c[0], closed[order[0]]):
            continue
        out.append(np.column_stack([region.origin[0] + region.scale * c[:, 1],
                                    region.origin[1] + region.scale * c[:, 0]]))
    return out


def loop_polycurves(loops_2d: list[np.ndarray]) -> list[Polycurve]:
    """Closed line-segment Polycurves from boundary polylines (outer first)."""
    loops = []
    for i, poly in enumerate(loops_2d):
        pts = np.vstack([poly, poly[:1]])
        segs = [line_segment(pts[j], pts[j + 1]) for j in range(len(pts) - 1)
                if np.linalg.norm(pts[j + 1] - pts[j]) > 1e-12]
        if segs:
            loops.append(Polycurve(segments=segs, is_hole=i > 0))
    return loops


def cut_region(points_2d: np.ndarray, params: Params
               ) -> tuple[RasterRegion, list[np.ndarray]] | None:
    """Region on the plane supported by the points, or None if empty.

    Returns the raster region and the boundary polylines in plane coords
    (outer first, then holes).
    """
    if len(points_2d) == 0:
        return None
    variance = params.region_kernel_variance
    if variance is None:
        variance = params.region_sigma ** 2
    scale = 4.0 * params.region_sigma
    reach = 5.0 * np.sqrt(variance)
    lo = points_2d.min(axis=0) - (reach + 2.0 * scale)
    hi = points_2d.max(axis=0) + (reach + 2.0 * scale)
    cols = int(np.ceil((hi[0] - lo[0]) / scale)) + 1
    rows = int(np.ceil((hi[1] - lo[1]) / scale)) + 1
    field = kernel_field(points_2d, lo, scale, (rows, cols), variance)

    contours = measure.find_contours(field, params.region_isovalue)
    closed = [c for c in contours
              if np.allclose(c[0], c[-1]) and len(c) >= 4]
    if not closed:
        return None
    areas = [abs(_contour_area(c)) for c in closed]
    outer = closed[int(np.argmax(areas))]
    holes = []
    for c in closed:
        if c is outer:
            continue
        if _point_in_polygon(c[0], outer):
            holes.append(c)

    def to_plane(c_rc: np.ndarray) -> np.ndarray:
        return np.column_stack([lo[0] + scale * c_rc[:, 1],
                                lo[1] + scale * c_rc[:, 0]])

    loops = [to_plane(outer)] + [to_plane(h) for h in holes]
    region = rasterize_loops(loops, [False] + [True] * len(holes),
                             lo, scale, (rows, cols))
    return region, loops
