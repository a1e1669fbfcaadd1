"""Synthetic scene generation: ground-truth assemblies, clouds, and renders.

Scenes are described by a JSON-friendly spec listing flat parts (pose,
thickness, outline), their true connections, cloud sampling noise, and a
camera ring. Everything downstream of the seed is deterministic.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bezier
from .cameras import CameraView, look_at
from .geometry import PlanePose, unit
from .model import (AssemblyModel, Connection, CurveSegment, OrientedPointCloud,
                    Part, Polycurve, RasterRegion, line_segment, make_grid,
                    SEG_BEZIER_CLAMPED)
from .params import Params
from .rasterize import rasterize_loops
from .render import depth_render, view_rays
from .solids import PartSolid

log = logging.getLogger(__name__)

DEFAULT_DENSITY = 40.0          # samples per (D/100)^2 of surface area
_CIRCLE_K = 0.5522847498307936  # cubic control offset approximating a circle

_WOOD_BASES = np.array([
    [0.62, 0.44, 0.26],
    [0.52, 0.33, 0.18],
    [0.72, 0.56, 0.36],
    [0.45, 0.28, 0.16],
    [0.67, 0.50, 0.30],
    [0.57, 0.40, 0.24],
    [0.76, 0.62, 0.44],
    [0.40, 0.24, 0.13],
])


@dataclass
class PartSpec:
    name: str
    origin: np.ndarray
    z_axis: np.ndarray
    x_axis: np.ndarray
    thickness: float
    outline: dict
    hidden_faces: tuple[str, ...] = ()

    def pose(self) -> PlanePose:
        z = unit(np.asarray(self.z_axis, dtype=float))
        x = np.asarray(self.x_axis, dtype=float)
        x = unit(x - z * np.dot(x, z))
        y = np.cross(z, x)
        rot = np.column_stack([x, y, z])
        return PlanePose(rotation=rot, translation=np.asarray(self.origin, dtype=float))


@dataclass
class SceneSpec:
    name: str
    seed: int
    parts: list[PartSpec]
    connections: list[dict] = field(default_factory=list)
    density: float = DEFAULT_DENSITY
    jitter_sigma_frac: float = 0.002     # of the scene diameter
    normal_jitter_deg: float = 3.0
    dropout: float = 0.0
    camera_count: int = 12
    camera_radius_frac: float = 2.2      # of the scene diameter
    camera_elevation_deg: float = 35.0
    image_width: int = 480
    image_height: int = 360
    fov_frac: float = 0.72               # object diameter as a fraction of image width

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        parts = []
        for p in data["parts"]:
            frame = p["frame"]
            parts.append(PartSpec(
                name=p["name"],
                origin=np.array(frame["origin"], dtype=float),
                z_axis=np.array(frame["z_axis"], dtype=float),
                x_axis=np.array(frame.get("x_axis", _default_x(frame["z_axis"])),
                                dtype=float),
                thickness=float(p["thickness"]),
                outline=p["outline"],
                hidden_faces=tuple(p.get("hidden_faces", ())),
            ))
        cloud = data.get("cloud", {})
        cams = data.get("cameras", {})
        return cls(
            name=data.get("name", "scene"),
            seed=int(data.get("seed", 0)),
            parts=parts,
            connections=list(data.get("connections", [])),
            density=float(cloud.get("density", DEFAULT_DENSITY)),
            jitter_sigma_frac=float(cloud.get("jitter_sigma_frac", 0.002)),
            normal_jitter_deg=float(cloud.get("normal_jitter_deg", 3.0)),
            dropout=float(cloud.get("dropout", 0.0)),
            camera_count=int(cams.get("count", 12)),
            camera_radius_frac=float(cams.get("radius_frac", 2.2)),
            camera_elevation_deg=float(cams.get("elevation_deg", 35.0)),
            image_width=int(cams.get("width", 480)),
            image_height=int(cams.get("height", 360)),
            fov_frac=float(cams.get("fov_frac", 0.72)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "SceneSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _default_x(z_axis) -> list[float]:
    z = unit(np.asarray(z_axis, dtype=float))
    helper = np.array([1.0, 0.0, 0.0])
    if abs(z[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    x = helper - z * np.dot(helper, z)
    return list(unit(x))


def outline_loops(outline: dict) -> list[Polycurve]:
    """Analytic cut-path loops for an outline spec (outer loop, clockwise)."""
    kind = outline["kind"]
    if kind == "rect":
        w = float(outline["w"])
        h = float(outline["h"])
        cx, cy = outline.get("center", (0.0, 0.0))
        # Clockwise in plane coords (shoelace negative).
        corners = np.array([[cx - w / 2, cy - h / 2], [cx - w / 2, cy + h / 2],
                            [cx + w / 2, cy + h / 2], [cx + w / 2, cy - h / 2]])
        segs = [line_segment(corners[i], corners[(i + 1) % 4]) for i in range(4)]
        return [Polycurve(segments=segs)]
    if kind == "disk":
        r = float(outline["radius"])
        cx, cy = outline.get("center", (0.0, 0.0))
        k = _CIRCLE_K * r
        # Four clockwise quarter arcs.
        quarters = [
            ((r, 0.0), (r, -k), (k, -r), (0.0, -r)),
            ((0.0, -r), (-k, -r), (-r, -k), (-r, 0.0)),
            ((-r, 0.0), (-r, k), (-k, r), (0.0, r)),
            ((0.0, r), (k, r), (r, k), (r, 0.0)),
        ]
        segs = []
        for q in quarters:
            ctrl = np.array(q, dtype=float) + [cx, cy]
            segs.append(CurveSegment(kind=SEG_BEZIER_CLAMPED, ctrl=ctrl))
        return [Polycurve(segments=segs)]
    if kind == "polygon":
        pts = np.array(outline["points"], dtype=float)
        if _shoelace(pts) > 0:
            pts = pts[::-1]
        segs = [line_segment(pts[i], pts[(i + 1) % len(pts)])
                for i in range(len(pts))]
        return [Polycurve(segments=segs)]
    raise ValueError(f"unknown outline kind {kind!r}")


def _shoelace(pts: np.ndarray) -> float:
    x = pts[:, 0]
    y = pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def build_truth_model(spec: SceneSpec, grid_max_dim: int = 512) -> AssemblyModel:
    """Ground-truth parts (analytic loops plus a raster region) and connections."""
    parts = []
    for i, pspec in enumerate(spec.parts):
        loops = outline_loops(pspec.outline)
        boundary = np.concatenate([lp.sample(64) for lp in loops], axis=0)
        lo, scale, shape = make_grid(boundary.min(axis=0), boundary.max(axis=0),
                                     grid_max_dim, margin=2.0 * scale_hint(boundary))
        region = rasterize_loops([lp.sample(256) for lp in loops],
                                 [lp.is_hole for lp in loops], lo, scale, shape)
        parts.append(Part(id=i, pose=pspec.pose(), thickness=pspec.thickness,
                          region=region, loops=loops))
    name_to_id = {p.name: i for i, p in enumerate(spec.parts)}
    connections = []
    for c in spec.connections:
        a = c["a"] if isinstance(c["a"], int) else name_to_id[c["a"]]
        b = c["b"] if isinstance(c["b"], int) else name_to_id[c["b"]]
        connections.append(Connection(
            part_a=a, part_b=b, kind=int(c["kind"]),
            host_side_max=bool(c.get("host_side_max", True)),
            bevel_deg=float(c.get("bevel_deg", 0.0)),
            corner_a_extends=bool(c.get("corner_a_extends", True)),
        ))
    return AssemblyModel(parts=parts, connections=connections)


def scale_hint(boundary: np.ndarray) -> float:
    extent = boundary.max(axis=0) - boundary.min(axis=0)
    return float(extent.max()) / 512.0


def scene_diameter(model: AssemblyModel) -> float:
    pts = []
    for part in model.parts:
        b2 = np.concatenate([lp.sample(64) for lp in part.loops], axis=0)
        for z in (0.0, -part.thickness):
            pts.append(part.pose.to_world(np.column_stack(
                [b2, np.full(len(b2), z)])))
    allp = np.concatenate(pts, axis=0)
    extent = allp.max(axis=0) - allp.min(axis=0)
    return float(np.linalg.norm(extent))


# -- cloud sampling ----------------------------------------------------------


def _loop_polyline(loop: Polycurve, per_seg: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Dense polyline and outward 2D normals along one loop."""
    pts = []
    normals = []
    for seg in loop.segments:
        t = np.linspace(0.0, 1.0, per_seg, endpoint=False)
        if seg.is_line:
            p = np.outer(1.0 - t, seg.ctrl[0]) + np.outer(t, seg.ctrl[3])
            d = np.tile(seg.ctrl[3] - seg.ctrl[0], (per_seg, 1))
        else:
            p = bezier.evaluate(seg.ctrl, t)
            d = bezier.derivative(seg.ctrl, t)
        d = d / np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-300)
        pts.append(p)
        normals.append(np.column_stack([-d[:, 1], d[:, 0]]))
    return np.concatenate(pts, axis=0), np.concatenate(normals, axis=0)


def sample_part_surface(part: Part, density_per_area: float,
                        rng: np.random.Generator,
                        hidden_faces: tuple[str, ...] = ()
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Uniform area samples (points, outward normals) over visible surfaces."""
    solid = PartSolid(part)
    all_b = [_loop_polyline(lp) for lp in part.loops]
    area = abs(sum((-1 if lp.is_hole else 1) *
                   abs(_shoelace(lp.sample(512))) for lp in part.loops))
    pts_out = []
    nrm_out = []

    lo = np.min(np.stack([b[0].min(axis=0) for b in all_b]), axis=0)
    hi = np.max(np.stack([b[0].max(axis=0) for b in all_b]), axis=0)
    span = hi - lo

    for face, z, sign in (("top", 0.0, 1.0), ("bottom", -part.thickness, -1.0)):
        if face in hidden_faces:
            continue
        n_target = int(round(density_per_area * area))
        got = []
        guard = 0
        while sum(len(g) for g in got) < n_target and guard < 200:
            n_draw = max(int((n_target - sum(len(g) for g in got)) * 1.8), 32)
            cand = lo + rng.random((n_draw, 2)) * span
            cand = cand[solid.contains_2d(cand)]
            got.append(cand)
            guard += 1
        face2 = np.concatenate(got, axis=0)[:n_target] if got else np.empty((0, 2))
        local = np.column_stack([face2, np.full(len(face2), z)])
        pts_out.append(part.pose.to_world(local))
        nrm = np.tile(part.pose.normal * sign, (len(face2), 1))
        nrm_out.append(nrm)

    if "walls" not in hidden_faces:
        for poly, outward in all_b:
            seg_len = np.linalg.norm(np.diff(np.vstack([poly, poly[:1]]), axis=0),
                                     axis=1)
            cum = np.concatenate([[0.0], np.cumsum(seg_len)])
            total = cum[-1]
            n_target = int(round(density_per_area * total * part.thickness))
            s = rng.random(n_target) * total
            idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0,
                          len(poly) - 1)
            frac = (s - cum[idx]) / np.maximum(seg_len[idx], 1e-300)
            nxt = (idx + 1) % len(poly)
            xy = poly[idx] + (poly[nxt] - poly[idx]) * frac[:, None]
            z = -rng.random(n_target) * part.thickness
            local = np.column_stack([xy, z])
            pts_out.append(part.pose.to_world(local))
            n2 = outward[idx]
            n3 = np.column_stack([n2, np.zeros(len(n2))]) @ part.pose.rotation.T
            nrm_out.append(n3)

    if not pts_out:
        return np.empty((0, 3)), np.empty((0, 3))
    return np.concatenate(pts_out, axis=0), np.concatenate(nrm_out, axis=0)


def _jitter_normals(normals: np.ndarray, sigma_deg: float,
                    rng: np.random.Generator) -> np.ndarray:
    if sigma_deg <= 0:
        return normals
    sigma = np.radians(sigma_deg)
    noise = rng.normal(0.0, sigma, size=normals.shape)
    noise -= normals * np.sum(noise * normals, axis=1, keepdims=True)
    out = normals + noise
    return out / np.linalg.norm(out, axis=1, keepdims=True)


# -- texturing and rendering --------------------------------------------------


def part_palette(index: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    base = _WOOD_BASES[index % len(_WOOD_BASES)].copy()
    base = np.clip(base + rng.uniform(-0.03, 0.03, size=3), 0.05, 0.95)
    tone = np.clip(base * 0.72, 0.0, 1.0)
    return base, tone


def wood_texture(u: np.ndarray, v: np.ndarray, base: np.ndarray, tone: np.ndarray,
                 grain_scale: float, phase: float) -> np.ndarray:
    """Two-tone procedural grain over plane coordinates."""
    wave = np.sin(u / grain_scale * 2.0 * np.pi + phase
                  + 0.8 * np.sin(v / (grain_scale * 3.1) * 2.0 * np.pi))
    stripes = wave > 0.25
    colors = np.where(stripes[:, None], tone[None, :], base[None, :])
    return colors


def render_views(model: AssemblyModel, spec: SceneSpec, diameter: float,
                 rng: np.random.Generator) -> list[CameraView]:
    # Raster-mode solids: mask lookups make per-pixel ray casting affordable.
    solids = [PartSolid(p, use="raster") for p in model.parts]
    centers = np.concatenate([s.surface_samples(diameter / 40.0)
                              for s in solids], axis=0)
    target = 0.5 * (centers.min(axis=0) + centers.max(axis=0))
    radius = spec.camera_radius_frac * diameter
    f = spec.fov_frac * spec.image_width * radius / diameter
    k = np.array([[f, 0.0, spec.image_width / 2.0],
                  [0.0, f, spec.image_height / 2.0],
                  [0.0, 0.0, 1.0]])
    palettes = []
    grain = []
    for i in range(len(model.parts)):
        palettes.append(part_palette(i, rng))
        grain.append((diameter * rng.uniform(0.02, 0.05),
                      rng.uniform(0.0, 2.0 * np.pi)))
    views = []
    elev = np.radians(spec.camera_elevation_deg)
    for c in range(spec.camera_count):
        az = 2.0 * np.pi * c / spec.camera_count
        eye = target + radius * np.array([np.cos(elev) * np.cos(az),
                                          np.cos(elev) * np.sin(az),
                                          np.sin(elev)])
        view = CameraView(id=f"cam{c:02d}", width=spec.image_width,
                          height=spec.image_height, K=k,
                          world_to_cam=look_at(eye, target))
        t_map, idx_map = depth_render(solids, view)
        img = np.empty((spec.image_height, spec.image_width, 3))
        vv = np.linspace(0.0, 1.0, spec.image_height)[:, None]
        img[:] = (0.78 + 0.07 * vv)[:, :, None]
        center, dirs = view_rays(view)
        hit = np.isfinite(t_map.ravel())
        if hit.any():
            pts = center + t_map.ravel()[hit, None] * dirs[hit]
            ids = idx_map.ravel()[hit]
            colors = np.zeros((hit.sum(), 3))
            for i, part in enumerate(model.parts):
                sel = ids == i
                if not sel.any():
                    continue
                local = part.pose.to_plane(pts[sel])
                base, tone = palettes[i]
                gscale, phase = grain[i]
                colors[sel] = wood_texture(local[:, 0], local[:, 1], base, tone,
                                           gscale, phase)
            flat = img.reshape(-1, 3)
            flat[hit] = colors
            img = flat.reshape(img.shape)
        img += rng.normal(0.0, 0.008, size=img.shape)
        view.image = np.clip(img, 0.0, 1.0)
        views.append(view)
    return views


# -- top level -----------------------------------------------------------------


@dataclass
class SynthResult:
    cloud: OrientedPointCloud
    views: list[CameraView]
    truth: AssemblyModel
    diameter: float


def synth_scene(spec: SceneSpec, render: bool = True) -> SynthResult:
    truth = build_truth_model(spec)
    diameter = scene_diameter(truth)
    root = np.random.SeedSequence(spec.seed)
    cloud_seq, view_seq, noise_seq = root.spawn(3)
    part_seqs = cloud_seq.spawn(len(truth.parts))

    density = spec.density / (diameter / 100.0) ** 2
    sigma = spec.jitter_sigma_frac * diameter
    pts_all = []
    nrm_all = []
    for part, pspec, seq in zip(truth.parts, spec.parts, part_seqs):
        rng = np.random.default_rng(seq)
        pts, nrm = sample_part_surface(part, density, rng, pspec.hidden_faces)
        if spec.dropout > 0 and len(pts):
            keep = rng.random(len(pts)) >= spec.dropout
            pts, nrm = pts[keep], nrm[keep]
        nrm = _jitter_normals(nrm, spec.normal_jitter_deg, rng)
        if sigma > 0 and len(pts):
            pts = pts + rng.normal(0.0, sigma, size=pts.shape)
        pts_all.append(pts)
        nrm_all.append(nrm)
    cloud = OrientedPointCloud(points=np.concatenate(pts_all, axis=0),
                               normals=np.concatenate(nrm_all, axis=0))
    views = []
    if render:
        views = render_views(truth, spec, diameter, np.random.default_rng(view_seq))
    return SynthResult(cloud=cloud, views=views, truth=truth, diameter=diameter)
