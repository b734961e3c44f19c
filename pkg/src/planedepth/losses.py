"""Training objectives evaluated as plain scalars.

Normalization follows each formula as written: the plane-consistency and
uncertainty terms are raw sums, the others are means over jointly valid pixels.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, EmptyValidSetError, ParameterError, ShapeError
from .types import (DepthMap, DistanceMap, NormalMap, UncertaintyMap,
                    check_same_shape)

LOG_FLOOR = 1e-6


@dataclass(frozen=True)
class LossWeights:
    depth: float = 1.0
    normal: float = 5.0
    distance: float = 0.25
    uncertainty: float = 1.0
    plane_consistency: float = 0.01
    gamma: float = 0.85
    max_iters: int = 3
    kappa: float = 10.0
    eta: float = 0.85
    b: float = 0.2

    def __post_init__(self):
        lam = (self.depth, self.normal, self.distance, self.uncertainty, self.plane_consistency)
        if not all(math.isfinite(x) for x in lam):
            raise ParameterError("loss weights must be finite")
        if not 0 < self.gamma <= 1:
            raise ParameterError("gamma must lie in (0, 1]")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be >= 1")
        if not self.kappa > 0:
            raise ParameterError("kappa must be positive")
        if not 0 <= self.eta <= 1:
            raise ParameterError("eta must lie in [0, 1]")
        if not self.b > 0:
            raise ParameterError("b must be positive")


@dataclass(frozen=True)
class LossReport:
    depth: float
    normal: float
    distance: float
    uncertainty: float
    plane_consistency: float
    total: float
    valid_count: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _joint(a, b) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a.valid & b.valid


def _require(mask: np.ndarray, what: str) -> int:
    n = int(mask.sum())
    if n == 0:
        raise EmptyValidSetError(f"{what}: no jointly valid pixels")
    return n


def plane_consistency_loss(N: NormalMap, dist: DistanceMap, mask, labels=None) -> float:
    """Sum of absolute forward differences of N (L1 over components) and the
    distance map, counted only between two masked, valid pixels of the same
    segment. ``mask`` may be a boolean grid or a SegmentLabelMap."""
    if hasattr(mask, "planar_mask"):
        labels = mask.labels if labels is None else labels
        mask = mask.planar_mask
    mask = np.asarray(mask, dtype=bool)
    shape = check_same_shape(N, dist)
    if mask.shape != shape or (labels is not None and np.shape(labels) != shape):
        raise ShapeError("mask/labels shape differs from the maps")
    ok = mask & N.valid & dist.valid
    lab = None if labels is None else np.asarray(labels)
    total = 0.0
    for axis in (0, 1):
        lo = [slice(None), slice(None)]
        hi = [slice(None), slice(None)]
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        pair = ok[lo] & ok[hi]
        if lab is not None:
            pair &= lab[lo] == lab[hi]
        dn = np.abs(N.vectors[hi] - N.vectors[lo]).sum(axis=-1)
        dd = np.abs(dist.values[hi] - dist.values[lo])
        total += float(np.sum(dn[pair])) + float(np.sum(dd[pair]))
    return total


def _log_depth(m: DepthMap, sel: np.ndarray) -> np.ndarray:
    v = m.values[sel]
    if np.any(v < LOG_FLOOR):
        raise DomainError(f"depth below {LOG_FLOOR} m on a valid pixel")
    return np.log(v)


def silog_head(pred: DepthMap, gt: DepthMap, kappa: float, eta: float) -> float:
    """kappa * sqrt(mean(g^2) - eta * mean(g)^2), g = log pred - log gt.

    Evaluated as var(g) + (1 - eta) * mean(g)^2, which is the same quantity
    without the cancellation that breaks scale invariance at eta = 1.
    """
    sel = _joint(pred, gt)
    _require(sel, "silog")
    g = _log_depth(pred, sel) - _log_depth(gt, sel)
    mean = g.mean()
    var = np.mean((g - mean) ** 2)
    return kappa * math.sqrt(max(var + (1.0 - eta) * mean * mean, 0.0))


def silog_depth_loss(pred_sequence: Sequence[tuple[DepthMap | None, DepthMap | None]],
                     gt: DepthMap, w: LossWeights = LossWeights(),
                     include_initial: bool = False) -> float:
    """Iteration-decayed two-head SILog loss.

    ``pred_sequence[i]`` holds the (head 1, head 2) predictions of iteration
    t = i + 1, weighted by gamma^(m - t); either head may be None. With
    ``include_initial`` the first entry is the pre-refinement state t = 0.
    """
    offset = 0 if include_initial else 1
    limit = w.max_iters + (1 if include_initial else 0)
    if len(pred_sequence) > limit:
        raise ParameterError(f"sequence of {len(pred_sequence)} exceeds max_iters={w.max_iters}")
    if not pred_sequence:
        raise EmptyValidSetError("silog: empty prediction sequence")
    total = 0.0
    for i, heads in enumerate(pred_sequence):
        t = i + offset
        decay = w.gamma ** (w.max_iters - t)
        for head in heads:
            if head is not None:
                total += decay * silog_head(head, gt, w.kappa, w.eta)
    return total


def l1l2_depth_loss(pred: DepthMap, gt: DepthMap) -> float:
    sel = _joint(pred, gt)
    _require(sel, "l1l2")
    e = pred.values[sel] - gt.values[sel]
    return float(np.mean(np.abs(e) + e * e))


def normal_cosine_loss(N: NormalMap, Ngt: NormalMap) -> float:
    sel = _joint(N, Ngt)
    _require(sel, "normal")
    dots = np.einsum("kc,kc->k", N.vectors[sel], Ngt.vectors[sel])
    return float(np.mean(1.0 - dots))


def distance_l1_loss(dist: DistanceMap, dist_gt: DistanceMap) -> float:
    sel = _joint(dist, dist_gt)
    _require(sel, "distance")
    return float(np.mean(np.abs(dist.values[sel] - dist_gt.values[sel])))


def uncertainty_target(pred: DepthMap, gt: DepthMap, b: float = 0.2) -> UncertaintyMap:
    """1 - exp(-|pred - gt| / b), a Laplace-shaped error encoding in [0, 1)."""
    if not b > 0:
        raise ParameterError("b must be positive")
    sel = _joint(pred, gt)
    u = -np.expm1(-np.abs(pred.values - gt.values) / b)
    return UncertaintyMap(np.where(sel, u, 0.0), sel)


def uncertainty_loss(U1: UncertaintyMap, U2: UncertaintyMap,
                     U1gt: UncertaintyMap, U2gt: UncertaintyMap) -> float:
    s1 = _joint(U1, U1gt)
    s2 = _joint(U2, U2gt)
    if U1.shape != U2.shape:
        raise ShapeError("uncertainty heads differ in shape")
    return (float(np.sum(np.abs(U1.values[s1] - U1gt.values[s1])))
            + float(np.sum(np.abs(U2.values[s2] - U2gt.values[s2]))))


def overall_loss(depth: float, normal: float, distance: float, uncertainty: float,
                 plane_consistency: float, w: LossWeights = LossWeights(),
                 valid_count: int = 0) -> LossReport:
    terms = (depth, normal, distance, uncertainty, plane_consistency)
    if not all(math.isfinite(t) for t in terms):
        raise DomainError("loss terms must be finite")
    if any(t < 0 for t in terms):
        raise DomainError("loss terms must be non-negative")
    lam = (w.depth, w.normal, w.distance, w.uncertainty, w.plane_consistency)
    total = math.fsum(l * t for l, t in zip(lam, terms))
    return LossReport(*map(float, terms), total=total, valid_count=int(valid_count))
