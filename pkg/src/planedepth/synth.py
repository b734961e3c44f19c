"""Exact piece-wise planar scenes used as ground truth.

A scene is a list of planes (unit normal, distance) each owning an image
region. Regions are tested in list order and the first match claims a pixel.
Depth follows from the ray-plane intersection; optional Gaussian noise is
added to depth only.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SceneSpecError
from .plane_seg import SegmentLabelMap, planar_mask
from .rng import Xoshiro256
from .types import CameraIntrinsics, DepthMap, DistanceMap, NormalMap


@dataclass(frozen=True)
class Region:
    kind: str                 # "rect" | "halfplane" | "all"
    params: tuple = ()

    def __post_init__(self):
        n = {"rect": 4, "halfplane": 3, "all": 0}.get(self.kind)
        if n is None:
            raise SceneSpecError(f"unknown region kind {self.kind!r}")
        if len(self.params) != n:
            raise SceneSpecError(f"{self.kind} region takes {n} parameters")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    def mask(self, height: int, width: int) -> np.ndarray:
        v, u = np.mgrid[0:height, 0:width]
        if self.kind == "rect":
            u0, v0, u1, v1 = self.params
            return (u >= u0) & (u < u1) & (v >= v0) & (v < v1)
        if self.kind == "halfplane":
            a, b, c = self.params
            return a * u + b * v + c >= 0
        return np.ones((height, width), bool)

    def to_dict(self) -> dict:
        return {self.kind: list(self.params) if self.params else True}

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        if len(d) != 1:
            raise SceneSpecError(f"region must have exactly one key, got {sorted(d)}")
        (kind, val), = d.items()
        return cls(kind, () if kind == "all" else tuple(val))


@dataclass(frozen=True)
class Plane:
    normal: tuple[float, float, float]
    distance: float
    region: Region

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        if n.shape != (3,) or not np.isfinite(norm) or norm == 0:
            raise SceneSpecError(f"bad plane normal {self.normal!r}")
        if not (math.isfinite(self.distance) and self.distance >= 0):
            raise SceneSpecError("plane distance must be finite and >= 0")
        object.__setattr__(self, "normal", tuple(float(x) for x in n / norm))


@dataclass(frozen=True)
class PlanarSceneSpec:
    planes: tuple[Plane, ...]
    K: CameraIntrinsics
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "planes", tuple(self.planes))
        if not self.planes:
            raise SceneSpecError("scene has no planes")
        if not self.noise_sigma >= 0:
            raise SceneSpecError("noise_sigma must be >= 0")

    def to_dict(self) -> dict:
        return {
            "intrinsics": self.K.to_dict(),
            "planes": [{"normal": list(p.normal), "distance": p.distance,
                        "region": p.region.to_dict()} for p in self.planes],
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlanarSceneSpec":
        allowed = {"intrinsics", "planes", "noise_sigma", "seed"}
        if set(d) - allowed:
            raise SceneSpecError(f"unknown scene keys: {sorted(set(d) - allowed)}")
        try:
            planes = [Plane(tuple(p["normal"]), float(p["distance"]), Region.from_dict(p["region"]))
                      for p in d["planes"]]
            K = CameraIntrinsics.from_dict(d["intrinsics"])
        except (KeyError, TypeError) as e:
            raise SceneSpecError(f"malformed scene: {e}") from None
        return cls(tuple(planes), K, float(d.get("noise_sigma", 0.0)), int(d.get("seed", 0)))

    @classmethod
    def load(cls, path) -> "PlanarSceneSpec":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass(frozen=True, eq=False)
class PlanarScene:
    depth: DepthMap
    normal: NormalMap
    distance: DistanceMap
    labels: SegmentLabelMap
    clean_depth: DepthMap

    def __iter__(self):
        return iter((self.depth, self.normal, self.distance, self.labels))


def generate_planar_scene(spec: PlanarSceneSpec, min_area: int = 200) -> PlanarScene:
    K = spec.K
    H, W = K.shape
    rays = K.rays()
    labels = np.full((H, W), -1, dtype=np.int32)
    normals = np.zeros((H, W, 3))
    dist = np.zeros((H, W))
    for i, plane in enumerate(spec.planes):
        region = plane.region.mask(H, W) & (labels < 0)
        if not region.any():
            raise SceneSpecError(f"plane {i} owns no pixels")
        labels[region] = i
        normals[region] = plane.normal
        dist[region] = plane.distance
    if np.any(labels < 0):
        raise SceneSpecError(f"{int(np.sum(labels < 0))} pixels are not covered by any plane")

    denom = np.einsum("hwc,hwc->hw", normals, rays)
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = dist / denom
    for i in range(len(spec.planes)):
        d = depth[labels == i]
        if not (np.all(np.isfinite(d)) and np.all(d > 0)):
            raise SceneSpecError(f"plane {i} gives non-positive or non-finite depth in its region")

    everywhere = np.ones((H, W), bool)
    clean = DepthMap(depth, everywhere)
    noisy = clean
    if spec.noise_sigma > 0:
        noise = Xoshiro256(spec.seed).normals(H * W).reshape(H, W)
        noisy = DepthMap.from_values(depth + spec.noise_sigma * noise)
    areas = np.bincount(labels.ravel(), minlength=len(spec.planes)).astype(np.int64)
    seg = planar_mask(SegmentLabelMap(labels, areas, np.zeros((H, W), bool)), min_area)
    return PlanarScene(noisy, NormalMap(normals, everywhere), DistanceMap(dist, everywhere), seg, clean)


def default_intrinsics(width: int = 128, height: int = 96, focal: float = 100.0) -> CameraIntrinsics:
    return CameraIntrinsics(focal, focal, (width - 1) / 2, (height - 1) / 2, width, height)


def _guillotine(rng: Xoshiro256, width: int, height: int, n: int, min_side: int):
    rects = [(0, 0, width, height)]
    while len(rects) < n:
        rects.sort(key=lambda r: (-(r[2] - r[0]) * (r[3] - r[1]), r))
        u0, v0, u1, v1 = rects.pop(0)
        horizontal = (u1 - u0) >= (v1 - v0)
        lo, hi = (u0, u1) if horizontal else (v0, v1)
        if hi - lo < 2 * min_side:
            raise SceneSpecError("image too small for the requested plane count")
        cut = lo + min_side + rng.below(hi - lo - 2 * min_side + 1)
        if horizontal:
            rects += [(u0, v0, cut, v1), (cut, v0, u1, v1)]
        else:
            rects += [(u0, v0, u1, cut), (u0, cut, u1, v1)]
    return sorted(rects, key=lambda r: (r[1], r[0]))


def random_scene_spec(seed: int, n_planes: int, K: CameraIntrinsics | None = None,
                      max_tilt_deg: float = 35.0, min_gap_deg: float = 10.0,
                      distance_range: tuple[float, float] = (1.0, 4.0),
                      noise_sigma: float = 0.0, min_side: int = 12) -> PlanarSceneSpec:
    """Random rectangle partition with pairwise well-separated plane normals.

    Normals lie within ``max_tilt_deg`` of the optical axis, which keeps depth
    positive as long as that tilt plus the half field of view stays below 90
    degrees.
    """
    K = K or default_intrinsics()
    rng = Xoshiro256(seed)
    rects = _guillotine(rng, K.width, K.height, n_planes, min_side)
    cos_max = math.cos(math.radians(max_tilt_deg))
    cos_gap = math.cos(math.radians(min_gap_deg))
    chosen: list[np.ndarray] = []
    while len(chosen) < n_planes:
        ct = cos_max + (1 - cos_max) * rng.random()
        st = math.sqrt(max(0.0, 1 - ct * ct))
        phi = 2 * math.pi * rng.random()
        n = np.array([st * math.cos(phi), st * math.sin(phi), ct])
        if all(float(n @ m) < cos_gap for m in chosen):
            chosen.append(n)
    lo, hi = distance_range
    planes = tuple(
        Plane(tuple(n), lo + (hi - lo) * rng.random(), Region("rect", r))
        for n, r in zip(chosen, rects))
    return PlanarSceneSpec(planes, K, noise_sigma, seed)
