"""Polygon-to-mask rasterization on part grids."""

from __future__ import annotations

import cv2
import numpy as np

from .model import RasterRegion


def rasterize_loops(loops_2d: list[np.ndarray], hole_flags: list[bool],
                    origin: np.ndarray, scale: float,
                    shape: tuple[int, int],
                    include_boundary: bool = False) -> RasterRegion:
    """Fill outer loops and carve holes; loop points are plane coordinates.

    With include_boundary the polygon path itself counts as inside (and hole
    rims stay filled), which makes filling a loop traced through boundary
    pixel centers reproduce the source mask exactly.
    """
    mask = np.zeros(shape, dtype=np.uint8)
    origin = np.asarray(origin, dtype=float)

    def to_px(pts: np.ndarray) -> np.ndarray:
        px = (pts - origin) / scale
        return np.rint(px).astype(np.int32)

    outers = [to_px(lp) for lp, h in zip(loops_2d, hole_flags) if not h]
    holes = [to_px(lp) for lp, h in zip(loops_2d, hole_flags) if h]
    if outers:
        cv2.fillPoly(mask, outers, 1)
        if include_boundary:
            cv2.polylines(mask, outers, True, 1)
    if holes:
        if include_boundary:
            carve = np.zeros_like(mask)
            cv2.fillPoly(carve, holes, 1)
            cv2.polylines(carve, holes, True, 0)
            mask[carve.astype(bool)] = 0
        else:
            cv2.fillPoly(mask, holes, 0)
    return RasterRegion(mask=mask.astype(bool), origin=origin, scale=scale)
