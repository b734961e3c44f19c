"""Per-pixel map containers and the pinhole camera model.

Every map carries a boolean ``valid`` grid next to its values. Invalid pixels
always store 0, and arrays are frozen after construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError, ShapeError

UNIT_TOL = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ParameterError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ParameterError("image dimensions must be >= 1")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ParameterError("principal point must lie inside the image")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def rays(self) -> np.ndarray:
        """K^-1 p~ for every pixel, shape (H, W, 3); the z component is 1."""
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        out = np.empty((self.height, self.width, 3))
        out[..., 0] = (u - self.cx) / self.fx
        out[..., 1] = (v - self.cy) / self.fy
        out[..., 2] = 1.0
        return out

    def check_shape(self, shape: tuple[int, ...], what: str = "map") -> None:
        if tuple(shape[:2]) != self.shape:
            raise ShapeError(f"{what} has shape {tuple(shape[:2])}, intrinsics expect {self.shape}")

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        keys = {"fx", "fy", "cx", "cy", "width", "height"}
        if set(d) - keys:
            raise ParameterError(f"unknown intrinsics keys: {sorted(set(d) - keys)}")
        missing = keys - set(d)
        if missing:
            raise ParameterError(f"missing intrinsics keys: {sorted(missing)}")
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


@dataclass(frozen=True, eq=False)
class MaskedMap:
    """A scalar grid with a validity mask. Base for the typed maps below."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"expected a 2-D grid, got shape {values.shape}")
        valid = np.array(self.valid, dtype=bool)
        if valid.shape != values.shape:
            raise ShapeError(f"mask shape {valid.shape} != value shape {values.shape}")
        values[~valid] = 0.0
        self._check(values[valid])
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))

    def _check(self, v: np.ndarray) -> None:
        if not np.all(np.isfinite(v)):
            raise DomainError("valid pixels must be finite")

    @classmethod
    def from_values(cls, values, valid=None):
        """Build a map, marking pixels invalid where the value is inadmissible."""
        values = np.asarray(values, dtype=np.float64)
        ok = cls._admissible(values)
        if valid is not None:
            ok &= np.asarray(valid, dtype=bool)
        return cls(np.where(ok, values, 0.0), ok)

    @staticmethod
    def _admissible(values: np.ndarray) -> np.ndarray:
        return np.isfinite(values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def count(self) -> int:
        return int(self.valid.sum())


class DepthMap(MaskedMap):
    def _check(self, v):
        super()._check(v)
        if np.any(v <= 0):
            raise DomainError("valid depth must be positive")

    @staticmethod
    def _admissible(values):
        with np.errstate(invalid="ignore"):
            return np.isfinite(values) & (values > 0)


class DistanceMap(MaskedMap):
    def _check(self, v):
        super()._check(v)
        if np.any(v < 0):
            raise DomainError("valid plane-to-origin distance must be >= 0")

    @staticmethod
    def _admissible(values):
        with np.errstate(invalid="ignore"):
            return np.isfinite(values) & (values >= 0)


class UncertaintyMap(MaskedMap):
    def _check(self, v):
        super()._check(v)
        if np.any((v < 0) | (v > 1)):
            raise DomainError("uncertainty must lie in [0, 1]")

    @staticmethod
    def _admissible(values):
        with np.errstate(invalid="ignore"):
            return np.isfinite(values) & (values >= 0) & (values <= 1)


@dataclass(frozen=True, eq=False)
class NormalMap:
    vectors: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        vec = np.array(self.vectors, dtype=np.float64)
        if vec.ndim != 3 or vec.shape[2] != 3:
            raise ShapeError(f"expected (H, W, 3) normals, got {vec.shape}")
        valid = np.array(self.valid, dtype=bool)
        if valid.shape != vec.shape[:2]:
            raise ShapeError(f"mask shape {valid.shape} != grid shape {vec.shape[:2]}")
        vec[~valid] = 0.0
        norms = np.linalg.norm(vec[valid], axis=-1)
        if not np.all(np.abs(norms - 1.0) <= UNIT_TOL):
            raise DomainError("valid normals must be unit length")
        object.__setattr__(self, "vectors", _frozen(vec))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def from_vectors(cls, vectors, valid=None, min_norm: float = 1e-12) -> "NormalMap":
        """Normalize raw vectors; zero-length or non-finite ones become invalid."""
        vec = np.asarray(vectors, dtype=np.float64)
        with np.errstate(invalid="ignore"):
            n = np.linalg.norm(vec, axis=-1)
            ok = np.isfinite(n) & (n > min_norm)
        if valid is not None:
            ok &= np.asarray(valid, dtype=bool)
        unit = np.zeros_like(vec)
        unit[ok] = vec[ok] / n[ok, None]
        return cls(unit, ok)

    @classmethod
    def constant(cls, normal, shape: tuple[int, int]) -> "NormalMap":
        n = np.asarray(normal, dtype=np.float64)
        return cls.from_vectors(np.broadcast_to(n, (*shape, 3)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape

    @property
    def count(self) -> int:
        return int(self.valid.sum())


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = None
    colors: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(nrm) != len(pts):
                raise ShapeError("normals and points differ in length")
            if len(nrm) and not np.all(np.abs(np.linalg.norm(nrm, axis=1) - 1) <= UNIT_TOL):
                raise DomainError("point normals must be unit length")
            object.__setattr__(self, "normals", nrm)
        if self.colors is not None:
            col = np.asarray(self.colors).reshape(-1, 3)
            if len(col) != len(pts):
                raise ShapeError("colors and points differ in length")
            if np.any((col < 0) | (col > 255)):
                raise DomainError("colors must be 8-bit RGB")
            object.__setattr__(self, "colors", col.astype(np.uint8))

    def __len__(self) -> int:
        return len(self.points)


def check_same_shape(*maps) -> tuple[int, int]:
    shapes = {m.shape for m in maps}
    if len(shapes) != 1:
        raise ShapeError(f"maps disagree in shape: {sorted(shapes)}")
    return shapes.pop()
