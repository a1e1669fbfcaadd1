"""Ray casting against part solids: depth maps and occlusion queries.

Solids are thin extruded sheets, so each ray is intersected with the part's
thickness slab first; the short in-slab interval is then sampled and the
entry point refined by bisection on the containment test.
"""

from __future__ import annotations

import numpy as np

from .cameras import CameraView
from .solids import PartSolid

_SLAB_SAMPLES = 24
_BISECT_STEPS = 12


def _slab_interval(solid: PartSolid, origins: np.ndarray, dirs: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Per-ray [t0, t1] where the ray is inside the part's thickness slab."""
    o_local = solid.pose.to_plane(origins)
    d_local = dirs @ solid.pose.rotation
    z0 = o_local[:, 2]
    dz = d_local[:, 2]
    t_lo = np.full(len(z0), np.inf)
    t_hi = np.full(len(z0), -np.inf)
    moving = np.abs(dz) > 1e-14
    za = (-solid.d - z0[moving]) / dz[moving]
    zb = (0.0 - z0[moving]) / dz[moving]
    t_lo[moving] = np.minimum(za, zb)
    t_hi[moving] = np.maximum(za, zb)
    parallel_inside = ~moving & (z0 <= 0.0) & (z0 >= -solid.d)
    t_lo[parallel_inside] = -np.inf
    t_hi[parallel_inside] = np.inf
    return t_lo, t_hi


def _ray_box(origins: np.ndarray, dirs: np.ndarray, box_lo: np.ndarray,
             box_hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-ray parameter interval inside an AABB (lo > hi when missed)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = (box_lo[None, :] - origins) / dirs
        tb = (box_hi[None, :] - origins) / dirs
    near = np.minimum(ta, tb)
    far = np.maximum(ta, tb)
    still = np.abs(dirs) < 1e-300
    inside = (origins >= box_lo[None, :]) & (origins <= box_hi[None, :])
    near[still] = np.where(inside[still], -np.inf, np.inf)
    far[still] = np.where(inside[still], np.inf, -np.inf)
    return np.nanmax(near, axis=1), np.nanmin(far, axis=1)


def _first_hits(solid: PartSolid, origins: np.ndarray, dirs: np.ndarray,
                t_min: np.ndarray, t_max: np.ndarray) -> np.ndarray:
    """First ray parameter where each ray enters the solid, inf if never."""
    n = len(origins)
    t_hit = np.full(n, np.inf)
    t_lo, t_hi = _slab_interval(solid, origins, dirs)
    box_lo, box_hi = solid.aabb()
    b_lo, b_hi = _ray_box(origins, dirs, box_lo, box_hi)
    lo = np.maximum(np.maximum(t_lo, t_min), b_lo)
    hi = np.minimum(np.minimum(t_hi, t_max), b_hi)
    live = lo < hi
    if not live.any():
        return t_hit
    idx = np.nonzero(live)[0]
    lo = lo[idx]
    hi = hi[idx]
    span = hi - lo
    ts = lo[:, None] + np.linspace(0.0, 1.0, _SLAB_SAMPLES)[None, :] * span[:, None]
    pts = origins[idx, None, :] + ts[:, :, None] * dirs[idx, None, :]
    inside = solid.contains(pts.reshape(-1, 3)).reshape(len(idx), _SLAB_SAMPLES)
    any_inside = inside.any(axis=1)
    if not any_inside.any():
        return t_hit
    idx = idx[any_inside]
    inside = inside[any_inside]
    ts = ts[any_inside]
    first = inside.argmax(axis=1)
    t_in = ts[np.arange(len(idx)), first]
    t_out = np.where(first > 0, ts[np.arange(len(idx)), np.maximum(first - 1, 0)],
                     t_in)
    # Bisect between the last outside sample and the first inside one.
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (t_in + t_out)
        pts = origins[idx] + mid[:, None] * dirs[idx]
        mid_in = solid.contains(pts)
        t_in = np.where(mid_in, mid, t_in)
        t_out = np.where(mid_in, t_out, mid)
    t_hit[idx] = t_in
    return t_hit


def cast_rays(solids: list[PartSolid], origins: np.ndarray, dirs: np.ndarray,
              t_min: float | np.ndarray = 1e-9,
              t_max: float | np.ndarray = np.inf
              ) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit parameter and solid index (-1 for misses) per ray."""
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    n = max(len(origins), len(dirs))
    if len(origins) == 1:
        origins = np.broadcast_to(origins, (n, 3))
    if len(dirs) == 1:
        dirs = np.broadcast_to(dirs, (n, 3))
    t_min = np.broadcast_to(np.asarray(t_min, dtype=float), (n,))
    t_max = np.broadcast_to(np.asarray(t_max, dtype=float), (n,))
    best_t = np.full(n, np.inf)
    best_i = np.full(n, -1, dtype=int)
    for i, solid in enumerate(solids):
        t = _first_hits(solid, origins, dirs, t_min, t_max)
        better = t < best_t
        best_t[better] = t[better]
        best_i[better] = i
    return best_t, best_i


def segment_blocked(solids: list[PartSolid], starts: np.ndarray, ends: np.ndarray,
                    clearance: float) -> np.ndarray:
    """True per segment if any solid intrudes between start and end.

    The last `clearance` of world distance before the endpoint is ignored so a
    segment may legitimately terminate on a surface.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    ends = np.atleast_2d(np.asarray(ends, dtype=float))
    dirs = ends - starts
    lengths = np.linalg.norm(dirs, axis=1)
    t_max = np.maximum(1.0 - clearance / np.maximum(lengths, 1e-12), 0.0)
    t, _ = cast_rays(solids, starts, dirs, t_min=1e-6, t_max=t_max)
    return np.isfinite(t)


def view_rays(view: CameraView) -> tuple[np.ndarray, np.ndarray]:
    """Camera center and unit ray directions for every pixel (row-major)."""
    us, vs = np.meshgrid(np.arange(view.width), np.arange(view.height))
    pix = np.column_stack([us.ravel(), vs.ravel(), np.ones(us.size)])
    k_inv = np.linalg.inv(view.K)
    cam_dirs = pix @ k_inv.T
    r = view.world_to_cam[:3, :3]
    world_dirs = cam_dirs @ r
    world_dirs /= np.linalg.norm(world_dirs, axis=1, keepdims=True)
    return view.center, world_dirs


def depth_render(solids: list[PartSolid], view: CameraView
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Z-buffer style render: per-pixel world distance to the nearest solid
    surface along the pixel ray (inf = miss), plus the solid index map."""
    center, dirs = view_rays(view)
    t, idx = cast_rays(solids, center[None, :], dirs)
    shape = (view.height, view.width)
    return t.reshape(shape), idx.reshape(shape)
