"""Sparse sampling and piece-wise planar depth completion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import InsufficientDataError, ParameterError
from .geometry import (DISCONTINUITY_REL, _check_window, depth_from_normal_distance,
                       fit_plane_normal)
from .plane_seg import SegmentLabelMap
from .refine import EIGHT_NEIGHBORS, AffinityField, spn_refine
from .rng import Xoshiro256
from .types import (CameraIntrinsics, DepthMap, DistanceMap, NormalMap, UncertaintyMap,
                    check_same_shape)

KNN_FALLBACK = 9


@dataclass(frozen=True, eq=False)
class SparseSamples:
    depth: DepthMap
    normal: NormalMap
    distance: DistanceMap

    def __post_init__(self):
        check_same_shape(self.depth, self.normal, self.distance)
        if np.any(self.normal.valid & ~self.depth.valid) or np.any(self.distance.valid & ~self.depth.valid):
            raise ParameterError("normal/distance samples must sit on depth samples")

    @property
    def sample_count(self) -> int:
        return self.depth.count

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


@dataclass(frozen=True)
class SpnConfig:
    alpha: float = 0.1
    sigma: float = 16.0
    iterations: int = 6
    offsets: tuple[tuple[int, int], ...] = EIGHT_NEIGHBORS

    def __post_init__(self):
        if not 0 <= abs(self.alpha) < 1:
            raise ParameterError("alpha must lie in (-1, 1)")
        if not self.sigma > 0:
            raise ParameterError("sigma must be positive")
        if self.iterations < 0:
            raise ParameterError("iterations must be >= 0")


def sample_locations(valid: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Flat indices of ``n`` valid pixels drawn uniformly without replacement."""
    pool = np.flatnonzero(valid)
    if n < 0 or n > len(pool):
        raise ParameterError(f"cannot sample {n} of {len(pool)} valid pixels")
    return Xoshiro256(seed).partial_shuffle(pool, n)


def sample_sparse(dense_depth: DepthMap, dense_normal: NormalMap, dense_dist: DistanceMap,
                  n: int, seed: int = 0) -> SparseSamples:
    shape = check_same_shape(dense_depth, dense_normal, dense_dist)
    picked = np.zeros(shape[0] * shape[1], bool)
    picked[sample_locations(dense_depth.valid, n, seed)] = True
    picked = picked.reshape(shape)
    return SparseSamples(
        DepthMap(dense_depth.values, picked),
        NormalMap(dense_normal.vectors, picked & dense_normal.valid),
        DistanceMap(dense_dist.values, picked & dense_dist.valid),
    )


def sparse_nd_from_sparse_depth(sparse_depth: DepthMap, K: CameraIntrinsics,
                                window: int = 7) -> tuple[NormalMap, DistanceMap]:
    """Normals and distances at each sample from a local fit over nearby samples.

    The fit uses samples inside the window. When fewer than 3 survive the
    depth-discontinuity filter, or they are collinear, it falls back to the 9
    nearest samples. The filter allows a relative jump of 5% per pixel of
    separation.
    """
    r = _check_window(window) // 2
    K.check_shape(sparse_depth.shape, "sparse depth")
    H, W = sparse_depth.shape
    vs, us = np.nonzero(sparse_depth.valid)
    if len(vs) < 3:
        raise InsufficientDataError(f"need at least 3 depth samples, got {len(vs)}")
    depth = sparse_depth.values[vs, us]
    rays = K.rays()[vs, us]
    pts = rays * depth[:, None]
    tree = cKDTree(np.stack([vs, us], axis=1).astype(np.float64))
    k = min(KNN_FALLBACK, len(vs))

    def _continuous(idx, i):
        # samples are sparse, so the allowed jump grows with pixel separation
        sep = np.maximum(np.hypot(vs[idx] - vs[i], us[idx] - us[i]), 1.0)
        return np.abs(depth[idx] - depth[i]) <= DISCONTINUITY_REL * sep * depth[i]

    normals = np.zeros((H, W, 3))
    dist = np.zeros((H, W))
    ok = np.zeros((H, W), bool)
    for i in range(len(vs)):
        near = np.asarray(tree.query_ball_point([vs[i], us[i]], r=r * np.sqrt(2) + 1e-9), dtype=int)
        near = near[(np.abs(vs[near] - vs[i]) <= r) & (np.abs(us[near] - us[i]) <= r)]
        near = near[_continuous(near, i)]
        n = fit_plane_normal(pts[np.sort(near)]) if len(near) >= 3 else None
        if n is None:
            _, near = tree.query([vs[i], us[i]], k=k)
            near = np.atleast_1d(near)
            n = fit_plane_normal(pts[np.sort(near[_continuous(near, i)])])
        if n is None:
            continue
        if n @ pts[i] < 0:
            n = -n
        normals[vs[i], us[i]] = n
        dist[vs[i], us[i]] = depth[i] * (n @ rays[i])
        ok[vs[i], us[i]] = True
    return NormalMap.from_vectors(normals, ok), DistanceMap.from_values(dist, ok)


def _nearest_sample(pixels: np.ndarray, samples: np.ndarray, chunk: int = 4096) -> int:
    """Index into ``samples`` of the sample closest to any of ``pixels``.

    Both are (k, 2) integer (row, col); samples are in row-major order, so the
    first minimum wins ties."""
    best_d, best_i = None, None
    for s in range(0, len(pixels), chunk):
        p = pixels[s : s + chunk]
        d2 = ((p[:, None, :] - samples[None, :, :]) ** 2).sum(-1)
        per_sample = d2.min(axis=0)
        i = int(np.argmin(per_sample))
        if best_d is None or per_sample[i] < best_d or (per_sample[i] == best_d and i < best_i):
            best_d, best_i = per_sample[i], i
    return best_i


def planar_fill(samples: SparseSamples, labels: SegmentLabelMap) -> tuple[NormalMap, DistanceMap]:
    """Spread sampled plane parameters over their segments.

    Each segment takes the mean of its samples (normals renormalized when more
    than one is averaged). A segment without samples copies the sample nearest
    to it in image space.
    """
    if labels.shape != samples.shape:
        raise ParameterError(f"labels {labels.shape} do not cover samples {samples.shape}")
    have = samples.normal.valid & samples.distance.valid
    if not have.any():
        raise InsufficientDataError("no samples with both a normal and a distance")
    lab = labels.labels
    nseg = labels.num_segments
    H, W = lab.shape

    sel = have & (lab >= 0)
    seg_of = lab[sel]
    counts = np.bincount(seg_of, minlength=nseg)
    nsum = np.stack([np.bincount(seg_of, samples.normal.vectors[sel][:, c], minlength=nseg)
                     for c in range(3)], axis=1)
    dsum = np.bincount(seg_of, samples.distance.values[sel], minlength=nseg)

    seg_n = np.zeros((nseg, 3))
    seg_d = np.zeros(nseg)
    single = counts == 1
    # single samples are copied verbatim
    first = {}
    for idx, s in zip(np.flatnonzero(sel), seg_of):
        first.setdefault(int(s), idx)
    for s in np.flatnonzero(single):
        v, u = divmod(first[int(s)], W)
        seg_n[s] = samples.normal.vectors[v, u]
        seg_d[s] = samples.distance.values[v, u]
    multi = counts > 1
    norms = np.linalg.norm(nsum[multi], axis=1)
    mean_n = nsum[multi] / np.where(norms > 0, norms, 1.0)[:, None]
    for j, s in enumerate(np.flatnonzero(multi)):
        if norms[j] <= 1e-12:
            v, u = divmod(first[int(s)], W)
            mean_n[j] = samples.normal.vectors[v, u]
    seg_n[multi] = mean_n
    seg_d[multi] = dsum[multi] / counts[multi]

    empty = np.flatnonzero(counts == 0)
    if len(empty):
        sample_rc = np.argwhere(have)  # row-major
        for s in empty:
            pix = np.argwhere(lab == s)
            if len(pix) == 0:
                continue
            v, u = sample_rc[_nearest_sample(pix, sample_rc)]
            seg_n[s] = samples.normal.vectors[v, u]
            seg_d[s] = samples.distance.values[v, u]

    ok = lab >= 0
    normals = np.zeros((H, W, 3))
    dist = np.zeros((H, W))
    normals[ok] = seg_n[lab[ok]]
    dist[ok] = seg_d[lab[ok]]
    return NormalMap(normals, ok), DistanceMap(dist, ok)


def sample_distance_uncertainty(sample_mask: np.ndarray, sigma: float) -> UncertaintyMap:
    """1 - exp(-d / sigma), d = Euclidean pixel distance to the nearest sample."""
    if not np.any(sample_mask):
        raise InsufficientDataError("no samples")
    d = ndimage.distance_transform_edt(~np.asarray(sample_mask, bool))
    return UncertaintyMap(-np.expm1(-d / sigma), np.ones(d.shape, bool))


def complete_depth(samples: SparseSamples, labels: SegmentLabelMap, K: CameraIntrinsics,
                   refine_cfg: SpnConfig | None = None) -> DepthMap:
    normal, dist = planar_fill(samples, labels)
    depth = depth_from_normal_distance(normal, dist, K)
    if refine_cfg is None:
        return depth
    aff = AffinityField.uniform(depth.shape, refine_cfg.alpha, refine_cfg.offsets, labels.labels)
    U = sample_distance_uncertainty(samples.normal.valid & samples.distance.valid, refine_cfg.sigma)
    return spn_refine(depth, aff, U, refine_cfg.iterations)


def nearest_fill(samples: SparseSamples) -> tuple[NormalMap, DistanceMap]:
    """Dense (N, D) by copying the nearest sample to every pixel."""
    have = samples.normal.valid & samples.distance.valid
    if not have.any():
        raise InsufficientDataError("no samples with both a normal and a distance")
    _, (iv, iu) = ndimage.distance_transform_edt(~have, return_indices=True)
    return (NormalMap(samples.normal.vectors[iv, iu], np.ones(have.shape, bool)),
            DistanceMap(samples.distance.values[iv, iu], np.ones(have.shape, bool)))
