"""Cubic Bezier evaluation and least-squares fitting with tangent constraints.

Fits clamp both endpoints to the data and optionally constrain the end
tangent directions, leaving only the tangent magnitudes free. Parameters
come from chord-length accumulation with one Newton reassignment pass.
"""

from __future__ import annotations

import numpy as np
from numba import njit


def bernstein(t: np.ndarray) -> np.ndarray:
    """Nx4 matrix of cubic Bernstein weights."""
    t = np.asarray(t, dtype=float)
    mt = 1.0 - t
    return np.stack([mt ** 3, 3.0 * mt * mt * t, 3.0 * mt * t * t, t ** 3], axis=-1)


def evaluate(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate a cubic with 4x2 control points at parameters t."""
    return bernstein(t) @ np.asarray(ctrl, dtype=float)


def derivative(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    ctrl = np.asarray(ctrl, dtype=float)
    d = 3.0 * (ctrl[1:] - ctrl[:-1])
    t = np.asarray(t, dtype=float)
    mt = 1.0 - t
    w = np.stack([mt * mt, 2.0 * mt * t, t * t], axis=-1)
    return w @ d


def second_derivative(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    ctrl = np.asarray(ctrl, dtype=float)
    dd = 6.0 * (ctrl[2:] - 2.0 * ctrl[1:-1] + ctrl[:-2])
    t = np.asarray(t, dtype=float)
    w = np.stack([1.0 - t, t], axis=-1)
    return w @ dd


def curvature(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Signed curvature of a planar cubic at parameters t."""
    d1 = derivative(ctrl, t)
    d2 = second_derivative(ctrl, t)
    cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    speed = np.linalg.norm(d1, axis=-1)
    return cross / np.maximum(speed ** 3, 1e-30)


def chord_length_params(points: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        return np.linspace(0.0, 1.0, len(points))
    return cum / total


@njit(cache=True)
def _kernel_solve(points, t, lflag, ldir, rflag, rdir):  # pragma: no cover
    """Normal-equation LS for the two interior control points, endpoints clamped."""
    n = points.shape[0]
    p0 = points[0].copy()
    p3 = points[n - 1].copy()
    chord = np.sqrt((p3[0] - p0[0]) ** 2 + (p3[1] - p0[1]) ** 2)
    fallback = max(chord / 3.0, 1e-12)
    ctrl = np.empty((4, 2))
    ctrl[0] = p0
    ctrl[3] = p3
    ctrl[1, 0] = p0[0] + (p3[0] - p0[0]) / 3.0
    ctrl[1, 1] = p0[1] + (p3[1] - p0[1]) / 3.0
    ctrl[2, 0] = p3[0] - (p3[0] - p0[0]) / 3.0
    ctrl[2, 1] = p3[1] - (p3[1] - p0[1]) / 3.0

    s11 = 0.0
    s12 = 0.0
    s22 = 0.0
    b1u = 0.0
    b2v = 0.0
    b1b2uv = 0.0
    r1x = 0.0
    r1y = 0.0
    r2x = 0.0
    r2y = 0.0
    ru = 0.0
    rv = 0.0
    m13 = 0.0
    m12x = 0.0
    m12y = 0.0
    for i in range(n):
        ti = t[i]
        mt = 1.0 - ti
        b0 = mt * mt * mt
        b1 = 3.0 * mt * mt * ti
        b2 = 3.0 * mt * ti * ti
        b3 = ti * ti * ti
        rx = points[i, 0] - b0 * p0[0] - b3 * p3[0]
        ry = points[i, 1] - b0 * p0[1] - b3 * p3[1]
        if lflag:
            rx -= b1 * p0[0]
            ry -= b1 * p0[1]
        if rflag:
            rx -= b2 * p3[0]
            ry -= b2 * p3[1]
        s11 += b1 * b1
        s12 += b1 * b2
        s22 += b2 * b2
        r1x += b1 * rx
        r1y += b1 * ry
        r2x += b2 * rx
        r2y += b2 * ry
        if lflag:
            ru += b1 * (ldir[0] * rx + ldir[1] * ry)
        if rflag:
            rv -= b2 * (rdir[0] * rx + rdir[1] * ry)
        if lflag and rflag:
            b1b2uv += b1 * b2 * (ldir[0] * rdir[0] + ldir[1] * rdir[1])
        if lflag and not rflag:
            m12x += b1 * b2 * ldir[0]
            m12y += b1 * b2 * ldir[1]
        if rflag and not lflag:
            m12x -= b1 * b2 * rdir[0]
            m12y -= b1 * b2 * rdir[1]

    if not lflag and not rflag:
        det = s11 * s22 - s12 * s12
        tr = s11 + s22
        if det <= 0.0 or tr * tr > 1e12 * det:
            return ctrl
        ctrl[1, 0] = (s22 * r1x - s12 * r2x) / det
        ctrl[1, 1] = (s22 * r1y - s12 * r2y) / det
        ctrl[2, 0] = (s11 * r2x - s12 * r1x) / det
        ctrl[2, 1] = (s11 * r2y - s12 * r1y) / det
        return ctrl

    # Tiny ridge keeps rank-deficient systems (e.g. a single interior point)
    # solvable near their minimum-norm least-squares solution.
    ridge = 1e-12 * max(s11, s22) + 1e-300

    if lflag and rflag:
        a11 = s11 + ridge
        a22 = s22 + ridge
        det = a11 * a22 - b1b2uv * b1b2uv
        if det <= 0.0:
            s1 = fallback
            s2 = fallback
        else:
            s1 = (a22 * ru + b1b2uv * rv) / det
            s2 = (b1b2uv * ru + a11 * rv) / det
        if not np.isfinite(s1) or s1 < 1e-9 * max(chord, 1.0):
            s1 = fallback
        if not np.isfinite(s2) or s2 < 1e-9 * max(chord, 1.0):
            s2 = fallback
        ctrl[1, 0] = p0[0] + s1 * ldir[0]
        ctrl[1, 1] = p0[1] + s1 * ldir[1]
        ctrl[2, 0] = p3[0] - s2 * rdir[0]
        ctrl[2, 1] = p3[1] - s2 * rdir[1]
        return ctrl

    # One scalar leg s along dir d plus one free 2D point: 3x3 normal system
    # [s, qx, qy] with matrix [[sa, m12x, m12y], [m12x, sb, 0], [m12y, 0, sb]].
    if lflag:
        sa = s11 + ridge
        sb = s22 + ridge
        rs = ru
        qx = r2x
        qy = r2y
    else:
        sa = s22 + ridge
        sb = s11 + ridge
        rs = rv
        qx = r1x
        qy = r1y
    denom = sa * sb - m12x * m12x - m12y * m12y
    if denom <= 0.0:
        s = fallback
        px = ctrl[2, 0] if lflag else ctrl[1, 0]
        py = ctrl[2, 1] if lflag else ctrl[1, 1]
    else:
        s = (rs * sb - m12x * qx - m12y * qy) / denom
        px = (qx - m12x * s) / sb
        py = (qy - m12y * s) / sb
    if not np.isfinite(s) or s < 1e-9 * max(chord, 1.0):
        s = fallback
    if lflag:
        ctrl[1, 0] = p0[0] + s * ldir[0]
        ctrl[1, 1] = p0[1] + s * ldir[1]
        ctrl[2, 0] = px
        ctrl[2, 1] = py
    else:
        ctrl[1, 0] = px
        ctrl[1, 1] = py
        ctrl[2, 0] = p3[0] - s * rdir[0]
        ctrl[2, 1] = p3[1] - s * rdir[1]
    return ctrl


@njit(cache=True)
def _kernel_fit(points, lflag, ldir, rflag, rdir):  # pragma: no cover
    """Chord-parameter fit with one Newton reassignment; returns (ctrl, SSE)."""
    n = points.shape[0]
    t = np.empty(n)
    t[0] = 0.0
    for i in range(1, n):
        dx = points[i, 0] - points[i - 1, 0]
        dy = points[i, 1] - points[i - 1, 1]
        t[i] = t[i - 1] + np.sqrt(dx * dx + dy * dy)
    total = t[n - 1]
    if total <= 0.0:
        for i in range(n):
            t[i] = i / (n - 1.0)
    else:
        for i in range(n):
            t[i] = t[i] / total

    ctrl = _kernel_solve(points, t, lflag, ldir, rflag, rdir)

    # One Newton step per parameter toward its foot point.
    t2 = np.empty(n)
    for i in range(n):
        ti = t[i]
        mt = 1.0 - ti
        b0 = mt * mt * mt
        b1 = 3.0 * mt * mt * ti
        b2 = 3.0 * mt * ti * ti
        b3 = ti * ti * ti
        px = b0 * ctrl[0, 0] + b1 * ctrl[1, 0] + b2 * ctrl[2, 0] + b3 * ctrl[3, 0]
        py = b0 * ctrl[0, 1] + b1 * ctrl[1, 1] + b2 * ctrl[2, 1] + b3 * ctrl[3, 1]
        w0 = mt * mt
        w1 = 2.0 * mt * ti
        w2 = ti * ti
        d1x = 3.0 * (w0 * (ctrl[1, 0] - ctrl[0, 0]) + w1 * (ctrl[2, 0] - ctrl[1, 0])
                     + w2 * (ctrl[3, 0] - ctrl[2, 0]))
        d1y = 3.0 * (w0 * (ctrl[1, 1] - ctrl[0, 1]) + w1 * (ctrl[2, 1] - ctrl[1, 1])
                     + w2 * (ctrl[3, 1] - ctrl[2, 1]))
        d2x = 6.0 * (mt * (ctrl[2, 0] - 2.0 * ctrl[1, 0] + ctrl[0, 0])
                     + ti * (ctrl[3, 0] - 2.0 * ctrl[2, 0] + ctrl[1, 0]))
        d2y = 6.0 * (mt * (ctrl[2, 1] - 2.0 * ctrl[1, 1] + ctrl[0, 1])
                     + ti * (ctrl[3, 1] - 2.0 * ctrl[2, 1] + ctrl[1, 1]))
        dfx = px - points[i, 0]
        dfy = py - points[i, 1]
        num = dfx * d1x + dfy * d1y
        den = d1x * d1x + d1y * d1y + dfx * d2x + dfy * d2y
        if abs(den) > 1e-30:
            ti = ti - num / den
        if ti < 0.0:
            ti = 0.0
        elif ti > 1.0:
            ti = 1.0
        t2[i] = ti
    if n >= 2:
        t2[0] = 0.0
        t2[n - 1] = 1.0

    ordered = True
    for i in range(1, n):
        if t2[i] < t2[i - 1]:
            ordered = False
            break
    if ordered:
        ctrl = _kernel_solve(points, t2, lflag, ldir, rflag, rdir)

    sse = 0.0
    for i in range(n):
        ti = t2[i]
        mt = 1.0 - ti
        b0 = mt * mt * mt
        b1 = 3.0 * mt * mt * ti
        b2 = 3.0 * mt * ti * ti
        b3 = ti * ti * ti
        px = b0 * ctrl[0, 0] + b1 * ctrl[1, 0] + b2 * ctrl[2, 0] + b3 * ctrl[3, 0]
        py = b0 * ctrl[0, 1] + b1 * ctrl[1, 1] + b2 * ctrl[2, 1] + b3 * ctrl[3, 1]
        dx = px - points[i, 0]
        dy = py - points[i, 1]
        sse += dx * dx + dy * dy
    return ctrl, sse


_ZERO_DIR = np.zeros(2)


def fit_cubic(points: np.ndarray,
              left_dir: np.ndarray | None = None,
              right_dir: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Fit one cubic to ordered points; returns (4x2 control points, SSE).

    left_dir constrains the outgoing tangent at the first point, right_dir the
    incoming tangent at the last point (both as directions along the curve).
    """
    points = np.ascontiguousarray(points, dtype=float)
    p0 = points[0]
    p3 = points[-1]
    if len(points) < 3:
        third = (p3 - p0) / 3.0
        p1 = p0 + third if left_dir is None else p0 + np.linalg.norm(third) * (
            left_dir / np.linalg.norm(left_dir))
        p2 = p3 - third if right_dir is None else p3 - np.linalg.norm(third) * (
            right_dir / np.linalg.norm(right_dir))
        ctrl = np.array([p0, p1, p2, p3])
        res = evaluate(ctrl, chord_length_params(points)) - points
        return ctrl, float(np.sum(res * res))

    lflag = left_dir is not None
    rflag = right_dir is not None
    ldir = (np.asarray(left_dir, dtype=float) / np.linalg.norm(left_dir)
            if lflag else _ZERO_DIR)
    rdir = (np.asarray(right_dir, dtype=float) / np.linalg.norm(right_dir)
            if rflag else _ZERO_DIR)
    ctrl, sse = _kernel_fit(points, lflag, ldir, rflag, rdir)
    return ctrl, float(sse)


def end_tangents(ctrl: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit tangent directions leaving the first and arriving at the last point."""
    ctrl = np.asarray(ctrl, dtype=float)
    left = ctrl[1] - ctrl[0]
    if np.linalg.norm(left) < 1e-15:
        left = ctrl[3] - ctrl[0]
    right = ctrl[3] - ctrl[2]
    if np.linalg.norm(right) < 1e-15:
        right = ctrl[3] - ctrl[0]
    fallback = np.array([1.0, 0.0])
    if np.linalg.norm(left) < 1e-15:
        left = fallback
    if np.linalg.norm(right) < 1e-15:
        right = fallback
    return left / np.linalg.norm(left), right / np.linalg.norm(right)
