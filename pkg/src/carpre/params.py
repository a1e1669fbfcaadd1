"""Global pipeline parameters, all lengths tied to the input's world scale."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np


def compute_diameter(points: np.ndarray) -> float:
    """Diagonal length of the axis-aligned bounding box of an Nx3 point array."""
    if points.ndim != 2 or points.shape[1] != 3 or len(points) == 0:
        raise ValueError("expected a non-empty Nx3 point array")
    extent = points.max(axis=0) - points.min(axis=0)
    return float(np.linalg.norm(extent))


@dataclass
class Params:
    """Scale-aware knobs shared by every pipeline stage.

    Every length-typed field is proportional to ``diameter`` so that scaling
    the input cloud by s scales all of them by s and leaves dimensionless
    decisions unchanged.
    """

    diameter: float                      # bounding-box diagonal of the cloud
    seed: int = 0                        # master RNG seed for every stochastic stage
    angle_tol_deg: float = 5.0           # orthogonality / parallelism tolerance (degrees)
    inlier_tol: float = 0.0              # primitive inlier distance threshold
    contact_tol: float = 0.0             # part-to-part contact distance threshold
    thickness_step: float = 0.0          # plane-sweep step for thickness estimation
    region_sigma: float = 0.0            # kernel bandwidth for cut-region density
    region_kernel_variance: float | None = None  # override kernel variance (default region_sigma^2)
    region_isovalue: float = float(np.exp(-0.5))  # cut-region level-set value
    thickness_falloff: float = 0.0       # exponential discount rate on sweep depth
    smoothness_weight: float = 50.0      # pairwise weight in the segmentation energy
    contrast_sigma: float = 50.0         # color-contrast scale (0-255 intensity units)
    min_corner_angle_deg: float = 10.0   # below this, adjacent tangents are smoothed
    max_curve_nodes: int = 200           # high-curvature candidate node budget per loop
    min_support_frac: float = 0.005      # minimum primitive support as a cloud fraction
    normal_tol_deg: float = 20.0         # primitive inlier normal deviation bound
    grid_max_dim: int = 512              # raster grid resolution cap per part
    mh_iterations: int = 1000            # part-selection chain length
    mh_temp_hi: float = 10.0             # geometric temperature schedule endpoints
    mh_temp_lo: float = 0.1
    max_overlap_frac: float = 0.5        # solid-overlap fraction that defines a conflict
    select_subsample: int = 20000        # point budget for the selection energy
    curve_cost_numerator: float = 4.0    # curve cost is (this * diameter / mask width)^2
    nail_diameter: float = 0.0           # connector nail diameter (for inset rules)

    def __post_init__(self) -> None:
        if self.diameter <= 0:
            raise ValueError("diameter must be positive")
        if self.inlier_tol == 0.0:
            self.inlier_tol = self.diameter / 300.0
        if self.contact_tol == 0.0:
            self.contact_tol = self.diameter / 30.0
        if self.thickness_step == 0.0:
            self.thickness_step = self.diameter / 100.0
        if self.region_sigma == 0.0:
            self.region_sigma = self.diameter / 400.0
        if self.thickness_falloff == 0.0:
            self.thickness_falloff = 5.0 / self.diameter
        if self.nail_diameter == 0.0:
            self.nail_diameter = self.diameter / 150.0

    _LENGTH_FIELDS = (
        "diameter", "inlier_tol", "contact_tol", "thickness_step", "region_sigma",
        "nail_diameter",
    )

    def scaled(self, s: float) -> "Params":
        """Return a copy with every length field multiplied by s (rates divide)."""
        kwargs = {f.name: getattr(self, f.name) for f in fields(self)}
        for name in self._LENGTH_FIELDS:
            kwargs[name] *= s
        kwargs["thickness_falloff"] /= s
        return Params(**kwargs)

    @classmethod
    def for_cloud(cls, points: np.ndarray, seed: int = 0, **overrides) -> "Params":
        return cls(diameter=compute_diameter(points), seed=seed, **overrides)
