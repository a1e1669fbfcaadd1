"""Calibrated views: camera poses, intrinsics, and image I/O."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)


@dataclass
class CameraView:
    id: str
    width: int
    height: int
    K: np.ndarray             # 3x3 intrinsics
    world_to_cam: np.ndarray  # 4x4 rigid transform
    image: np.ndarray | None = None  # HxWx3 float in [0, 1]

    def __post_init__(self) -> None:
        self.K = np.asarray(self.K, dtype=float).reshape(3, 3)
        self.world_to_cam = np.asarray(self.world_to_cam, dtype=float).reshape(4, 4)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        r = self.world_to_cam[:3, :3]
        t = self.world_to_cam[:3, 3]
        return -r.T @ t

    def to_camera(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return pts @ self.world_to_cam[:3, :3].T + self.world_to_cam[:3, 3]

    def project(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coords (Nx2, x right / y down) and camera depths for world points."""
        cam = self.to_camera(pts)
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.K[0, 0] * cam[:, 0] / z + self.K[0, 2]
            v = self.K[1, 1] * cam[:, 1] / z + self.K[1, 2]
        return np.stack([u, v], axis=-1), z

    def in_bounds(self, uv: np.ndarray) -> np.ndarray:
        return ((uv[:, 0] >= 0.0) & (uv[:, 0] <= self.width - 1.0)
                & (uv[:, 1] >= 0.0) & (uv[:, 1] <= self.height - 1.0))

    def sample_image(self, uv: np.ndarray) -> np.ndarray:
        """Bilinear RGB lookup; callers must ensure uv is in bounds."""
        img = self.image
        x = np.clip(uv[:, 0], 0.0, self.width - 1.0)
        y = np.clip(uv[:, 1], 0.0, self.height - 1.0)
        x0 = np.floor(x).astype(int)
        y0 = np.floor(y).astype(int)
        x1 = np.minimum(x0 + 1, self.width - 1)
        y1 = np.minimum(y0 + 1, self.height - 1)
        fx = (x - x0)[:, None]
        fy = (y - y0)[:, None]
        top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
        bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
        return top * (1.0 - fy) + bot * fy


def look_at(center: np.ndarray, target: np.ndarray,
            up: np.ndarray = (0.0, 0.0, 1.0)) -> np.ndarray:
    """world_to_cam matrix for a camera at center looking toward target (+z forward)."""
    center = np.asarray(center, dtype=float)
    fwd = np.asarray(target, dtype=float) - center
    fwd = fwd / np.linalg.norm(fwd)
    up = np.asarray(up, dtype=float)
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(fwd, [1.0, 0.0, 0.0])
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    r = np.vstack([right, down, fwd])
    m = np.eye(4)
    m[:3, :3] = r
    m[:3, 3] = -r @ center
    return m


def save_views(views_dir: str | Path, views: list[CameraView]) -> None:
    views_dir = Path(views_dir)
    views_dir.mkdir(parents=True, exist_ok=True)
    meta = []
    for view in views:
        meta.append({
            "id": view.id,
            "width": view.width,
            "height": view.height,
            "K": [float(x) for x in view.K.reshape(-1)],
            "world_to_cam": [float(x) for x in view.world_to_cam.reshape(-1)],
        })
        if view.image is not None:
            arr = np.clip(np.rint(view.image * 255.0), 0, 255).astype(np.uint8)
            Image.fromarray(arr, mode="RGB").save(views_dir / f"{view.id}.png")
    with open(views_dir / "cameras.json", "w") as fh:
        json.dump(meta, fh, indent=2)


def load_views(views_dir: str | Path, with_images: bool = True) -> list[CameraView]:
    views_dir = Path(views_dir)
    with open(views_dir / "cameras.json") as fh:
        meta = json.load(fh)
    views = []
    for entry in meta:
        image = None
        png = views_dir / f"{entry['id']}.png"
        if with_images:
            if not png.exists():
                raise FileNotFoundError(f"missing image {png}")
            with Image.open(png) as im:
                image = np.asarray(im.convert("RGB"), dtype=float) / 255.0
        view = CameraView(
            id=str(entry["id"]),
            width=int(entry["width"]),
            height=int(entry["height"]),
            K=np.array(entry["K"], dtype=float).reshape(3, 3),
            world_to_cam=np.array(entry["world_to_cam"], dtype=float).reshape(4, 4),
            image=image,
        )
        if image is not None and image.shape[:2] != (view.height, view.width):
            raise ValueError(f"{png}: image size does not match cameras.json")
        views.append(view)
    return views
