"""Pinhole backprojection and conversions between depth and (normal, distance).

Orientation convention: normals point away from the camera, so N.P >= 0 and
the plane-to-origin distance is never negative.
"""
from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .types import (CameraIntrinsics, DepthMap, DistanceMap, NormalMap, PointCloud,
                    check_same_shape)

DENOM_EPS = 1e-6
DISCONTINUITY_REL = 0.05
# second eigenvalue below this fraction of the largest means collinear support
_DEGENERATE_REL = 1e-12


def backproject(depth: DepthMap, K: CameraIntrinsics, normals: NormalMap | None = None) -> PointCloud:
    """Lift valid pixels to camera-frame points, row-major over valid pixels."""
    K.check_shape(depth.shape, "depth")
    pts = K.rays()[depth.valid] * depth.values[depth.valid][:, None]
    nrm = None
    if normals is not None:
        K.check_shape(normals.shape, "normals")
        keep = normals.valid[depth.valid]
        pts = pts[keep]
        nrm = normals.vectors[depth.valid][keep]
    return PointCloud(pts, normals=nrm)


def project(points: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    u = K.fx * points[:, 0] / points[:, 2] + K.cx
    v = K.fy * points[:, 1] / points[:, 2] + K.cy
    return np.stack([u, v], axis=1)


def depth_from_normal_distance(N: NormalMap, dist: DistanceMap, K: CameraIntrinsics) -> DepthMap:
    check_same_shape(N, dist)
    K.check_shape(N.shape, "normal map")
    denom = np.einsum("hwc,hwc->hw", N.vectors, K.rays())
    ok = N.valid & dist.valid & (np.abs(denom) >= DENOM_EPS)
    depth = np.zeros(N.shape)
    depth[ok] = dist.values[ok] / denom[ok]
    return DepthMap.from_values(depth, ok)


def distance_from_depth_normal(depth: DepthMap, N: NormalMap, K: CameraIntrinsics) -> DistanceMap:
    """D * (N . K^-1 p~). Negative results come from a flipped normal and are
    reported by magnitude; the matching normal is then -N (see orient_normals)."""
    check_same_shape(depth, N)
    K.check_shape(depth.shape, "depth")
    ok = depth.valid & N.valid
    d = depth.values * np.einsum("hwc,hwc->hw", N.vectors, K.rays())
    return DistanceMap(np.where(ok, np.abs(d), 0.0), ok)


def orient_normals(N: NormalMap, depth: DepthMap, K: CameraIntrinsics) -> NormalMap:
    """Flip normals so that N . P >= 0 at each backprojected pixel."""
    check_same_shape(depth, N)
    s = np.einsum("hwc,hwc->hw", N.vectors, K.rays())
    flip = (s < 0) & N.valid
    vec = np.where(flip[..., None], -N.vectors, N.vectors)
    return NormalMap(vec, N.valid)


def fit_plane_normal(points: np.ndarray) -> np.ndarray | None:
    """Least-squares plane normal through ``points`` (k, 3), or None if degenerate."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 3:
        return None
    centered = points - points.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if len(s) < 3 or s[1] ** 2 <= _DEGENERATE_REL * s[0] ** 2:
        return None
    return vt[2]


def _check_window(window: int) -> int:
    if not isinstance(window, (int, np.integer)) or window < 1 or window % 2 == 0:
        raise ParameterError(f"window must be a positive odd integer, got {window!r}")
    return int(window)


def normals_from_depth(depth: DepthMap, K: CameraIntrinsics, window: int = 5,
                       discontinuity: float = DISCONTINUITY_REL) -> NormalMap:
    """Per-pixel least-squares plane fit over a ``window`` x ``window`` patch.

    Window points whose depth differs from the center by more than
    ``discontinuity`` (relative) are dropped. The normal is the smallest
    eigenvector of the centered covariance, oriented so N . P >= 0.
    """
    r = _check_window(window) // 2
    K.check_shape(depth.shape, "depth")
    H, W = depth.shape
    D = depth.values
    P = K.rays() * D[..., None]

    Dp = np.pad(D, r)
    Vp = np.pad(depth.valid, r)
    Pp = np.pad(P, ((r, r), (r, r), (0, 0)))
    masks, pts = [], []
    with np.errstate(divide="ignore", invalid="ignore"):
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                sl = (slice(r + dy, r + dy + H), slice(r + dx, r + dx + W))
                m = Vp[sl] & depth.valid & (np.abs(Dp[sl] - D) <= discontinuity * D)
                masks.append(m)
                pts.append(Pp[sl])
    masks = np.stack(masks)                     # (S, H, W)
    pts = np.stack(pts) * masks[..., None]      # (S, H, W, 3)
    n = masks.sum(axis=0)
    ok = n >= 3
    safe_n = np.maximum(n, 1)[..., None]
    mu = pts.sum(axis=0) / safe_n
    centered = (pts - mu) * masks[..., None]
    cov = np.einsum("shwi,shwj->hwij", centered, centered)

    normals = np.zeros((H * W, 3))
    out_ok = np.zeros(H * W, dtype=bool)
    idx = np.flatnonzero(ok)
    if len(idx):
        evals, evecs = np.linalg.eigh(cov.reshape(-1, 3, 3)[idx])
        good = evals[:, 1] > _DEGENERATE_REL * evals[:, 2]
        nvec = evecs[:, :, 0]
        sign = np.where(np.einsum("ki,ki->k", nvec, P.reshape(-1, 3)[idx]) < 0, -1.0, 1.0)
        normals[idx[good]] = nvec[good] * sign[good, None]
        out_ok[idx[good]] = True
    return NormalMap.from_vectors(normals.reshape(H, W, 3), out_ok.reshape(H, W))
