"""Minimal PLY reader/writer for oriented point clouds.

Supports ASCII and binary little-endian files whose vertex element carries
x, y, z, nx, ny, nz as 32- or 64-bit floats. Anything else is rejected.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .model import OrientedPointCloud

log = logging.getLogger(__name__)

_FLOAT_TYPES = {
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

_REQUIRED = ("x", "y", "z", "nx", "ny", "nz")


def load_ply(path: str | Path) -> OrientedPointCloud:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise ValueError(f"{path}: not a PLY file")
        fmt = None
        n_vertices = None
        props: list[tuple[str, str]] = []
        in_vertex = False
        while True:
            line = fh.readline()
            if not line:
                raise ValueError(f"{path}: truncated header")
            tokens = line.decode("ascii", errors="replace").strip().split()
            if not tokens:
                continue
            if tokens[0] == "comment":
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
            elif tokens[0] == "element":
                in_vertex = tokens[1] == "vertex"
                if in_vertex:
                    n_vertices = int(tokens[2])
            elif tokens[0] == "property" and in_vertex:
                if tokens[1] == "list":
                    raise ValueError(f"{path}: list properties unsupported on vertices")
                if tokens[1] not in _FLOAT_TYPES:
                    raise ValueError(f"{path}: vertex property {tokens[2]} has "
                                     f"unsupported type {tokens[1]}")
                props.append((tokens[2], _FLOAT_TYPES[tokens[1]]))
            elif tokens[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise ValueError(f"{path}: unsupported format {fmt}")
        if n_vertices is None:
            raise ValueError(f"{path}: no vertex element")
        names = [p[0] for p in props]
        missing = [r for r in _REQUIRED if r not in names]
        if missing:
            raise ValueError(f"{path}: missing vertex properties {missing} "
                             "(normals are required)")

        if fmt == "ascii":
            raw = np.loadtxt(fh, dtype=float, max_rows=n_vertices, ndmin=2)
            if raw.shape != (n_vertices, len(props)):
                raise ValueError(f"{path}: expected {n_vertices} vertices with "
                                 f"{len(props)} properties, got shape {raw.shape}")
            data = {name: raw[:, i] for i, (name, _) in enumerate(props)}
        else:
            dtype = np.dtype([(name, "<" + kind) for name, kind in props])
            buf = fh.read(dtype.itemsize * n_vertices)
            if len(buf) < dtype.itemsize * n_vertices:
                raise ValueError(f"{path}: truncated vertex data")
            rec = np.frombuffer(buf, dtype=dtype, count=n_vertices)
            data = {name: rec[name].astype(float) for name, _ in props}

    points = np.column_stack([data["x"], data["y"], data["z"]])
    normals = np.column_stack([data["nx"], data["ny"], data["nz"]])
    norms = np.linalg.norm(normals, axis=1)
    good = norms > 1e-12
    if not good.all():
        log.warning("%s: dropping %d vertices with zero normals",
                    path, int((~good).sum()))
    points = points[good]
    normals = normals[good] / norms[good][:, None]
    return OrientedPointCloud(points=points, normals=normals)


def save_ply(path: str | Path, cloud: OrientedPointCloud,
             binary: bool = True) -> None:
    path = Path(path)
    n = len(cloud)
    kind = "double"
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {n}",
    ]
    header += [f"property {kind} {name}" for name in _REQUIRED]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        cols = np.column_stack([cloud.points, cloud.normals])
        if binary:
            fh.write(np.ascontiguousarray(cols, dtype="<f8").tobytes())
        else:
            np.savetxt(fh, cols, fmt="%.17g")
