"""Per-view foreground/background color models for part segmentation.

Each rectified view gets its own pair of Gaussian mixtures in LAB space,
trained on pixels confidently inside (current region eroded by the contact
tolerance) and confidently outside (complement of the dilated region), both
intersected with the view's visibility mask. Views whose training sets are
empty carry no appearance evidence and are dropped with a warning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.color import rgb2lab
from sklearn.mixture import GaussianMixture

from .params import Params
from .rectify import PartViews, RectifiedView

log = logging.getLogger(__name__)

N_COMPONENTS = 5
MIN_PIXELS_PER_COMPONENT = 15   # 5 x feature dimension
MAX_TRAIN_PIXELS = 20000
GMM_REG_COVAR = 1e-4


@dataclass
class ViewAppearance:
    rview: RectifiedView
    log_in: np.ndarray    # HxW, log density under the inside model (0 if unseen)
    log_out: np.ndarray   # HxW, log density under the outside model


def erode_mask(mask: np.ndarray, radius_px: float) -> np.ndarray:
    """Euclidean erosion: keep pixels farther than radius from the outside."""
    if radius_px <= 0:
        return mask.copy()
    return ndimage.distance_transform_edt(mask) > radius_px


def dilate_mask(mask: np.ndarray, radius_px: float) -> np.ndarray:
    """Euclidean dilation: include pixels within radius of the mask."""
    if radius_px <= 0:
        return mask.copy()
    return ndimage.distance_transform_edt(~mask) <= radius_px


def fit_gmm(samples: np.ndarray, seed: int) -> GaussianMixture | None:
    """Full-covariance mixture; component count shrinks with sparse data."""
    n = len(samples)
    if n == 0:
        return None
    comps = int(min(N_COMPONENTS, max(1, n // MIN_PIXELS_PER_COMPONENT)))
    if comps < N_COMPONENTS:
        log.warning("appearance model trained on %d pixels, reduced to %d "
                    "components", n, comps)
    gmm = GaussianMixture(n_components=comps, covariance_type="full",
                          reg_covar=GMM_REG_COVAR, random_state=seed,
                          max_iter=120, n_init=1)
    gmm.fit(samples)
    return gmm


def fit_part_appearance(grid: PartViews, theta: np.ndarray, params: Params,
                        seed: int, labs: dict[str, np.ndarray] | None = None
                        ) -> list[ViewAppearance]:
    """Train per-view inside/outside models and score every visible pixel."""
    radius_px = params.contact_tol / grid.scale
    inside_core = erode_mask(theta, radius_px)
    outside_core = ~dilate_mask(theta, radius_px)
    rng = np.random.default_rng(seed)
    out: list[ViewAppearance] = []
    for rv in grid.views:
        lab = labs.get(rv.view_id) if labs is not None else None
        if lab is None:
            lab = rgb2lab(rv.image.astype(float))
            if labs is not None:
                labs[rv.view_id] = lab
        vis = rv.visibility
        sets = []
        for core in (inside_core, outside_core):
            px = lab[core & vis]
            if len(px) > MAX_TRAIN_PIXELS:
                px = px[rng.choice(len(px), MAX_TRAIN_PIXELS, replace=False)]
            sets.append(px)
        gmm_in = fit_gmm(sets[0], seed)
        gmm_out = fit_gmm(sets[1], seed)
        if gmm_in is None or gmm_out is None:
            side = "interior" if gmm_in is None else "exterior"
            log.warning("view %s: empty %s training set, dropping its "
                        "appearance evidence", rv.view_id, side)
            continue
        log_in = np.zeros(vis.shape)
        log_out = np.zeros(vis.shape)
        vis_px = lab[vis]
        log_in[vis] = gmm_in.score_samples(vis_px)
        log_out[vis] = gmm_out.score_samples(vis_px)
        out.append(ViewAppearance(rview=rv, log_in=log_in, log_out=log_out))
    return out
