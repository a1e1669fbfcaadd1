"""Solid queries for flat parts: containment, boundary distance, overlap.

A part's solid is its cut region extruded by the thickness along the negative
sheet normal. Beveled side walls are planar skew walls: at depth z below the
sheet plane the wall is displaced outward by z * tan(bevel).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .model import Part, RasterRegion


class PartSolid:
    """Query object for one part's solid; caches 2D distance structures."""

    def __init__(self, part: Part, use: str = "auto"):
        self.part = part
        self.pose = part.pose
        self.d = float(part.thickness)
        if part.loops and use != "raster":
            self._init_polycurve()
        else:
            self._init_raster()
        self._surface_cache: dict[float, np.ndarray] = {}

    # -- 2D machinery ------------------------------------------------------

    def _init_raster(self) -> None:
        self._mode = "raster"
        region = self.part.region
        # Pad with an empty ring so a mask touching the grid edge still has a
        # boundary there. Signed distance in pixels; the zero crossing sits
        # between boundary pixels.
        mask = np.pad(region.mask, 1, constant_values=False)
        dist_in = ndimage.distance_transform_edt(mask)
        dist_out = ndimage.distance_transform_edt(~mask)
        self._sdf_grid = (dist_out - dist_in) * region.scale
        self._region = region

    def _init_polycurve(self) -> None:
        self._mode = "curve"
        seg_a = []
        seg_b = []
        bevel_tan = []
        loops = []
        for loop in self.part.loops:
            ring = []
            for seg in loop.segments:
                n = 2 if seg.is_line else 48
                samples = seg.sample(n)
                ring.append(samples[:-1])
                seg_a.append(samples[:-1])
                seg_b.append(samples[1:])
                bevel_tan.append(np.full(n - 1,
                                         np.tan(np.radians(seg.bevel_deg))))
            loops.append(np.concatenate(ring, axis=0))
        self._seg_a = np.concatenate(seg_a, axis=0)
        self._seg_b = np.concatenate(seg_b, axis=0)
        self._bevel_tan = np.concatenate(bevel_tan)
        self._boundary_pts = self._seg_a
        self._tree = cKDTree(0.5 * (self._seg_a + self._seg_b))
        self._loop_polys = loops
        self._hole_flags = [lp.is_hole for lp in self.part.loops]

    def _sdf2(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Signed in-plane distance to the cut path (negative inside) and
        tan(bevel) of the nearest boundary piece."""
        xy = np.atleast_2d(xy)
        if self._mode == "raster":
            region = self._region
            rc = region.plane_to_pixel(xy) + 1.0  # padded sdf grid offset
            h, w = self._sdf_grid.shape
            rows = np.clip(rc[:, 0], 0.0, h - 1.0)
            cols = np.clip(rc[:, 1], 0.0, w - 1.0)
            sdf = ndimage.map_coordinates(self._sdf_grid, [rows, cols], order=1,
                                          mode="nearest")
            # Outside the grid: add the clamped excess so distances keep growing.
            excess = np.hypot(rc[:, 0] - rows, rc[:, 1] - cols) * region.scale
            return sdf + excess, np.zeros(len(xy))
        # Nearest-segment distance: shortlist by midpoint, then refine exactly.
        k = min(8, len(self._seg_a))
        _, idx = self._tree.query(xy, k=k)
        idx = np.asarray(idx).reshape(len(xy), k)
        a = self._seg_a[idx]              # N x k x 2
        b = self._seg_b[idx]
        ab = b - a
        denom = np.maximum(np.einsum("nkd,nkd->nk", ab, ab), 1e-300)
        t = np.einsum("nkd,nkd->nk", xy[:, None, :] - a, ab) / denom
        t = np.clip(t, 0.0, 1.0)
        proj = a + t[:, :, None] * ab
        d2 = np.einsum("nkd,nkd->nk", xy[:, None, :] - proj, xy[:, None, :] - proj)
        best = d2.argmin(axis=1)
        rows = np.arange(len(xy))
        dist = np.sqrt(d2[rows, best])
        nearest_seg = idx[rows, best]
        inside = self.contains_2d(xy)
        sdf = np.where(inside, -dist, dist)
        return sdf, self._bevel_tan[nearest_seg]

    def contains_2d(self, xy: np.ndarray) -> np.ndarray:
        """In-plane cut-region containment (even-odd over the loops)."""
        xy = np.atleast_2d(xy)
        if self._mode == "raster":
            return self._region.contains_plane_points(xy)
        inside = np.zeros(len(xy), dtype=bool)
        for poly in self._loop_polys:
            inside ^= _points_in_polygon(xy, poly)
        return inside

    # -- 3D queries ---------------------------------------------------------

    def _lateral_and_axial(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        local = self.pose.to_plane(pts)
        z = local[:, 2]
        depth = np.clip(-z, 0.0, self.d)
        sdf, btan = self._sdf2(local[:, :2])
        beta = np.arctan(btan)
        lateral = (sdf - depth * btan) * np.cos(beta)
        axial_out = np.maximum(np.maximum(z, -self.d - z), 0.0)
        self._last_local = local
        return lateral, axial_out

    def contains(self, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
        lateral, axial_out = self._lateral_and_axial(np.atleast_2d(pts))
        return (lateral <= tol) & (axial_out <= tol)

    def boundary_distance(self, pts: np.ndarray) -> np.ndarray:
        """Unsigned distance to the solid's boundary surface (0 on it)."""
        pts = np.atleast_2d(pts)
        lateral, axial_out = self._lateral_and_axial(pts)
        z = self._last_local[:, 2]
        inside = (lateral <= 0.0) & (axial_out <= 0.0)
        outside_dist = np.hypot(np.maximum(lateral, 0.0), axial_out)
        inside_dist = np.minimum(-lateral, np.minimum(-z, z + self.d))
        return np.maximum(np.where(inside, inside_dist, outside_dist), 0.0)

    # -- sampling ------------------------------------------------------------

    def surface_samples(self, spacing: float) -> np.ndarray:
        """World points covering both faces and the side walls."""
        key = round(spacing, 12)
        if key in self._surface_cache:
            return self._surface_cache[key]
        if self._mode == "curve":
            top2d = _polygon_grid_samples(self._loop_polys, self.contains_2d, spacing)
            boundary = self._boundary_pts
        else:
            region = self._region
            step = max(1, int(round(spacing / region.scale)))
            rows, cols = np.nonzero(region.mask)
            keep = (rows % step == 0) & (cols % step == 0)
            top2d = region.pixel_to_plane(rows[keep], cols[keep])
            eroded = ndimage.binary_erosion(region.mask)
            brows, bcols = np.nonzero(region.mask & ~eroded)
            boundary = region.pixel_to_plane(brows, bcols)
        n_depth = max(2, int(np.ceil(self.d / spacing)) + 1)
        depths = np.linspace(0.0, -self.d, n_depth)
        pieces = [np.column_stack([top2d, np.zeros(len(top2d))]),
                  np.column_stack([top2d, np.full(len(top2d), -self.d)])]
        if len(boundary):
            stride = max(1, int(round(spacing / max(self._boundary_step(), 1e-12))))
            bnd = boundary[::stride]
            for z in depths:
                pieces.append(np.column_stack([bnd, np.full(len(bnd), z)]))
        local = np.concatenate(pieces, axis=0)
        world = self.pose.to_world(local)
        self._surface_cache[key] = world
        return world

    def _boundary_step(self) -> float:
        if self._mode == "curve":
            b = self._boundary_pts
            if len(b) < 2:
                return 1e-12
            return float(np.median(np.linalg.norm(np.diff(b, axis=0), axis=1)))
        return self._region.scale

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        """World axis-aligned bounding box of the solid (with bevel margin)."""
        if hasattr(self, "_aabb"):
            return self._aabb
        if self._mode == "curve":
            b2 = self._boundary_pts
            lo2 = b2.min(axis=0)
            hi2 = b2.max(axis=0)
            margin = self.d * float(np.abs(self._bevel_tan).max(initial=0.0))
        else:
            region = self._region
            h, w = region.mask.shape
            lo2 = region.origin - region.scale
            hi2 = region.origin + [w * region.scale, h * region.scale]
            margin = 0.0
        lo2 = lo2 - margin
        hi2 = hi2 + margin
        corners_local = np.array([
            [x, y, z]
            for x in (lo2[0], hi2[0]) for y in (lo2[1], hi2[1])
            for z in (-self.d, 0.0)
        ])
        corners = self.pose.to_world(corners_local)
        self._aabb = (corners.min(axis=0), corners.max(axis=0))
        return self._aabb

    def volume_samples(self, voxel: float) -> np.ndarray:
        """Deterministic voxel-grid points inside the solid (world coords)."""
        if self._mode == "curve":
            b2 = self._boundary_pts
            lo2 = b2.min(axis=0)
            hi2 = b2.max(axis=0)
        else:
            region = self._region
            rows, cols = np.nonzero(region.mask)
            if len(rows) == 0:
                return np.empty((0, 3))
            pts = region.pixel_to_plane(rows, cols)
            lo2 = pts.min(axis=0)
            hi2 = pts.max(axis=0)
        corners_local = np.array([
            [lo2[0], lo2[1], -self.d], [hi2[0], lo2[1], -self.d],
            [lo2[0], hi2[1], -self.d], [hi2[0], hi2[1], -self.d],
            [lo2[0], lo2[1], 0.0], [hi2[0], lo2[1], 0.0],
            [lo2[0], hi2[1], 0.0], [hi2[0], hi2[1], 0.0],
        ])
        corners = self.pose.to_world(corners_local)
        lo = corners.min(axis=0)
        hi = corners.max(axis=0)
        # Anchor the grid on world-space multiples of the voxel size so two
        # solids sample consistent locations regardless of their bboxes.
        axes = [np.arange(np.floor(l / voxel), np.ceil(h / voxel) + 1) * voxel
                for l, h in zip(lo, hi)]
        if min(len(a) for a in axes) == 0:
            return np.empty((0, 3))
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        grid = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
        return grid[self.contains(grid)]

    def line_chords_2d(self, p0: np.ndarray, direction: np.ndarray,
                       step: float) -> list[tuple[float, float]]:
        """Parameter intervals where the 2D line p0 + t*dir crosses the region."""
        p0 = np.asarray(p0, dtype=float)
        direction = np.asarray(direction, dtype=float)
        direction = direction / np.linalg.norm(direction)
        if self._mode == "curve":
            b2 = self._boundary_pts
        else:
            region = self._region
            h, w = region.mask.shape
            b2 = np.array([region.origin,
                           region.origin + [w * region.scale, h * region.scale]])
        t_all = (b2 - p0) @ direction
        t_lo, t_hi = float(t_all.min()) - step, float(t_all.max()) + step
        n = max(int(np.ceil((t_hi - t_lo) / step)), 2)
        ts = np.linspace(t_lo, t_hi, n)
        pts = p0 + np.outer(ts, direction)
        inside = self.contains_2d(pts)
        chords = []
        run_start = None
        for i, flag in enumerate(inside):
            if flag and run_start is None:
                run_start = ts[i]
            elif not flag and run_start is not None:
                chords.append((run_start, ts[i - 1]))
                run_start = None
        if run_start is not None:
            chords.append((run_start, ts[-1]))
        return chords


def _points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Vectorized even-odd rule for one polygon ring."""
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    x0 = poly[:, 0][None, :]
    y0 = poly[:, 1][None, :]
    x1 = np.roll(poly[:, 0], -1)[None, :]
    y1 = np.roll(poly[:, 1], -1)[None, :]
    crosses = ((y0 <= y) & (y1 > y)) | ((y1 <= y) & (y0 > y))
    with np.errstate(divide="ignore", invalid="ignore"):
        x_int = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    hits = crosses & (x_int > x)
    return (hits.sum(axis=1) % 2).astype(bool)


def _polygon_grid_samples(loops, contains_fn, spacing: float) -> np.ndarray:
    all_pts = np.concatenate(loops, axis=0)
    lo = all_pts.min(axis=0)
    hi = all_pts.max(axis=0)
    xs = np.arange(lo[0], hi[0] + spacing, spacing)
    ys = np.arange(lo[1], hi[1] + spacing, spacing)
    gx, gy = np.meshgrid(xs, ys)
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    return grid[contains_fn(grid)]


def volume_overlap_fraction(part: Part | PartSolid, others, voxel: float) -> float:
    """Fraction of the part's sampled volume lying inside any of the others."""
    solid = part if isinstance(part, PartSolid) else PartSolid(part)
    other_solids = [o if isinstance(o, PartSolid) else PartSolid(o) for o in others]
    samples = solid.volume_samples(voxel)
    if len(samples) == 0:
        return 0.0
    covered = np.zeros(len(samples), dtype=bool)
    for other in other_solids:
        remaining = ~covered
        if not remaining.any():
            break
        covered[remaining] = other.contains(samples[remaining])
    return float(covered.mean())
