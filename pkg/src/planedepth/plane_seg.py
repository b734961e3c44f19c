"""Online plane detection: geometric dissimilarity + Felzenszwalb graph merging."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .types import DistanceMap, NormalMap, check_same_shape

UNLABELED = -1

# (dy, dx) with the neighbor index strictly greater than the pixel's own
_FORWARD_8 = ((0, 1), (1, 0), (1, 1), (1, -1))


@dataclass(frozen=True, eq=False)
class EdgeWeightGraph:
    a: np.ndarray        # smaller flat pixel index
    b: np.ndarray        # larger flat pixel index
    weight: np.ndarray
    width: int
    height: int
    valid: np.ndarray    # (H, W) pixels that take part in the graph

    def __post_init__(self):
        if not (len(self.a) == len(self.b) == len(self.weight)):
            raise ParameterError("edge arrays differ in length")
        if len(self.a) and not np.all(self.a < self.b):
            raise ParameterError("edges must be stored with a < b")
        w = np.asarray(self.weight)
        if len(w) and (not np.all(np.isfinite(w)) or np.any(w < 0)):
            raise ParameterError("edge weights must be finite and >= 0")

    @property
    def num_edges(self) -> int:
        return len(self.a)

    @classmethod
    def grid(cls, weight_fn, height: int, width: int, valid=None) -> "EdgeWeightGraph":
        """8-connected grid graph with weights ``weight_fn(a, b)`` on flat indices."""
        valid = np.ones((height, width), bool) if valid is None else np.asarray(valid, bool)
        a, b = grid_pairs(height, width, valid)
        return cls(a, b, np.asarray(weight_fn(a, b), dtype=np.float64), width, height, valid)


def grid_pairs(height: int, width: int, valid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All 8-neighbor pairs (a < b) between valid pixels, sorted by (a, b)."""
    idx = np.arange(height * width).reshape(height, width)
    aa, bb = [], []
    for dy, dx in _FORWARD_8:
        x0, x1 = max(0, -dx), width - max(0, dx)
        ys, xs = slice(0, height - dy), slice(x0, x1)
        ys2, xs2 = slice(dy, height), slice(x0 + dx, x1 + dx)
        both = valid[ys, xs] & valid[ys2, xs2]
        aa.append(idx[ys, xs][both])
        bb.append(idx[ys2, xs2][both])
    a = np.concatenate(aa)
    b = np.concatenate(bb)
    order = np.lexsort((b, a))
    return a[order], b[order]


def _minmax(x: np.ndarray) -> np.ndarray:
    if len(x) == 0:
        return x
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def geometric_dissimilarity(N: NormalMap, dist: DistanceMap) -> EdgeWeightGraph:
    """Edge weights = min-max normalized normal gap + min-max normalized distance gap."""
    H, W = check_same_shape(N, dist)
    valid = N.valid & dist.valid
    a, b = grid_pairs(H, W, valid)
    vec = N.vectors.reshape(-1, 3)
    d = dist.values.ravel()
    dis_n = np.linalg.norm(vec[b] - vec[a], axis=1)
    dis_d = np.abs(d[b] - d[a])
    return EdgeWeightGraph(a, b, _minmax(dis_n) + _minmax(dis_d), W, H, valid)


@dataclass(frozen=True, eq=False)
class SegmentLabelMap:
    labels: np.ndarray          # (H, W) int32, UNLABELED where excluded
    segment_areas: np.ndarray   # pixel count per id
    planar_mask: np.ndarray     # (H, W) bool
    min_area: int | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def num_segments(self) -> int:
        return len(self.segment_areas)

    @classmethod
    def from_labels(cls, labels, min_area: int | None = None) -> "SegmentLabelMap":
        """Relabel arbitrary ids (negatives = unlabeled) contiguously in
        first-appearance row-major order."""
        raw = np.asarray(labels)
        flat = raw.ravel()
        keep = flat >= 0
        _, first, inverse = np.unique(flat[keep], return_index=True, return_inverse=True)
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(len(first))
        out = np.full(flat.shape, UNLABELED, dtype=np.int32)
        out[keep] = rank[inverse]
        out = out.reshape(raw.shape)
        areas = np.bincount(out[out >= 0], minlength=len(first)).astype(np.int64)
        seg = cls(out, areas, np.zeros(raw.shape, bool))
        return planar_mask(seg, min_area) if min_area is not None else seg


def felzenszwalb_segment(graph: EdgeWeightGraph, k: float = 1.0, min_size: int = 32) -> SegmentLabelMap:
    """Greedy graph merging (Felzenszwalb & Huttenlocher) on a precomputed graph.

    Edges are visited by (weight, a, b). Two components merge when the edge
    weight is at most min(Int(C) + k / |C|) over both; a second pass joins
    components smaller than ``min_size`` across their lightest edge.
    """
    if not k > 0:
        raise ParameterError("k must be positive")
    if min_size < 1:
        raise ParameterError("min_size must be >= 1")
    n = graph.width * graph.height
    order = np.lexsort((graph.b, graph.a, graph.weight))
    ea = graph.a[order].tolist()
    eb = graph.b[order].tolist()
    ew = graph.weight[order].tolist()

    parent = list(range(n))
    size = [1] * n
    thresh = [float(k)] * n

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def join(x, y):
        if size[x] < size[y]:
            x, y = y, x
        parent[y] = x
        size[x] += size[y]
        return x

    for a, b, w in zip(ea, eb, ew):
        ra, rb = find(a), find(b)
        if ra != rb and w <= thresh[ra] and w <= thresh[rb]:
            r = join(ra, rb)
            thresh[r] = w + k / size[r]

    if min_size > 1:
        for a, b in zip(ea, eb):
            ra, rb = find(a), find(b)
            if ra != rb and (size[ra] < min_size or size[rb] < min_size):
                join(ra, rb)

    roots = np.array([find(i) for i in range(n)]).reshape(graph.height, graph.width)
    roots[~graph.valid] = UNLABELED
    return SegmentLabelMap.from_labels(roots)


def planar_mask(seg: SegmentLabelMap, min_area: int = 200) -> SegmentLabelMap:
    """Mark pixels whose segment area strictly exceeds ``min_area``."""
    if min_area < 1:
        raise ParameterError("min_area must be >= 1")
    big = seg.segment_areas > min_area
    mask = np.zeros(seg.shape, bool)
    lab = seg.labels >= 0
    mask[lab] = big[seg.labels[lab]]
    return SegmentLabelMap(seg.labels, seg.segment_areas, mask, min_area)


def segment_planes(N: NormalMap, dist: DistanceMap, k: float = 1.0, min_size: int = 32,
                   min_area: int = 200) -> SegmentLabelMap:
    graph = geometric_dissimilarity(N, dist)
    return planar_mask(felzenszwalb_segment(graph, k, min_size), min_area)
