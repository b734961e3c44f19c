"""Refinement operators: two-head fusion, ConvGRU updates and spatial propagation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DomainError, ParameterError, ShapeError
from .types import DepthMap, MaskedMap, UncertaintyMap, check_same_shape

EIGHT_NEIGHBORS = ((-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1))
KERNEL = 5


def complementary_map(D1: DepthMap, D2: DepthMap) -> MaskedMap:
    """|D1 - D2| where both heads are valid."""
    check_same_shape(D1, D2)
    ok = D1.valid & D2.valid
    return MaskedMap(np.abs(D1.values - D2.values), ok)


# --------------------------------------------------------------------------- ConvGRU

@dataclass(frozen=True, eq=False)
class SeparableConv:
    """Depthwise 5x5 correlation (zero padded) followed by a 1x1 channel mix."""

    depthwise: np.ndarray   # (C_in, 5, 5)
    pointwise: np.ndarray   # (C_out, C_in)
    bias: np.ndarray        # (C_out,)

    def __post_init__(self):
        dw = np.asarray(self.depthwise, dtype=np.float64)
        pw = np.asarray(self.pointwise, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if dw.ndim != 3 or dw.shape[1:] != (KERNEL, KERNEL):
            raise ShapeError(f"depthwise kernel must be (C, 5, 5), got {dw.shape}")
        if pw.ndim != 2 or pw.shape[1] != dw.shape[0]:
            raise ShapeError(f"pointwise kernel {pw.shape} does not match {dw.shape[0]} inputs")
        if b.shape != (pw.shape[0],):
            raise ShapeError(f"bias {b.shape} does not match {pw.shape[0]} outputs")
        object.__setattr__(self, "depthwise", dw)
        object.__setattr__(self, "pointwise", pw)
        object.__setattr__(self, "bias", b)

    @property
    def in_channels(self) -> int:
        return self.depthwise.shape[0]

    @property
    def out_channels(self) -> int:
        return self.pointwise.shape[0]

    @classmethod
    def zeros(cls, c_in: int, c_out: int) -> "SeparableConv":
        return cls(np.zeros((c_in, KERNEL, KERNEL)), np.zeros((c_out, c_in)), np.zeros(c_out))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[0] != self.in_channels:
            raise ShapeError(f"expected ({self.in_channels}, H, W) input, got {x.shape}")
        _, H, W = x.shape
        r = KERNEL // 2
        xp = np.pad(x, ((0, 0), (r, r), (r, r)))
        y = np.zeros_like(x)
        for a in range(KERNEL):
            for b in range(KERNEL):
                y += self.depthwise[:, a, b, None, None] * xp[:, a : a + H, b : b + W]
        return np.einsum("oc,chw->ohw", self.pointwise, y) + self.bias[:, None, None]


@dataclass(frozen=True, eq=False)
class ConvGruWeights:
    z: SeparableConv
    r: SeparableConv
    h: SeparableConv

    def __post_init__(self):
        if not (self.z.in_channels == self.r.in_channels == self.h.in_channels):
            raise ShapeError("gate input channel counts disagree")
        if not (self.z.out_channels == self.r.out_channels == self.h.out_channels):
            raise ShapeError("gate output channel counts disagree")
        if self.input_channels < 0:
            raise ShapeError("gates must take the hidden state as input")

    @property
    def hidden_channels(self) -> int:
        return self.z.out_channels

    @property
    def input_channels(self) -> int:
        return self.z.in_channels - self.z.out_channels

    @classmethod
    def zeros(cls, hidden: int, inputs: int) -> "ConvGruWeights":
        return cls(*(SeparableConv.zeros(hidden + inputs, hidden) for _ in range(3)))


def convgru_gates(h: np.ndarray, x: np.ndarray, w: ConvGruWeights):
    """(z, r, candidate, new hidden) for one ConvGRU update on channel-first
    grids ``h`` (C_h, H, W) and ``x`` (C_x, H, W)."""
    h = np.asarray(h, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if h.ndim != 3 or x.ndim != 3 or h.shape[1:] != x.shape[1:]:
        raise ShapeError(f"hidden {h.shape} and input {x.shape} must be (C, H, W) on one grid")
    if h.shape[0] != w.hidden_channels or x.shape[0] != w.input_channels:
        raise ShapeError(
            f"weights expect {w.hidden_channels} hidden + {w.input_channels} input channels, "
            f"got {h.shape[0]} + {x.shape[0]}")
    hx = np.concatenate([h, x])
    z = expit(w.z(hx))
    r = expit(w.r(hx))
    h_cand = np.tanh(w.h(np.concatenate([r * h, x])))
    return z, r, h_cand, (1.0 - z) * h + z * h_cand


def convgru_cell(h: np.ndarray, x: np.ndarray, w: ConvGruWeights) -> np.ndarray:
    return convgru_gates(h, x, w)[3]


@dataclass(frozen=True, eq=False)
class RefinerWeights:
    """Everything the iterative two-head update needs besides the maps.

    ``assemble`` maps the five stacked maps (D1, D2, U1, U2, |D1 - D2|) to
    features; context channels (zeros unless supplied) fill the remaining GRU
    inputs; ``delta`` maps the hidden state to (dD1, dD2).
    """

    assemble: SeparableConv
    gru: ConvGruWeights
    delta: SeparableConv

    def __post_init__(self):
        if self.assemble.in_channels != 5:
            raise ShapeError("input assembly must take 5 maps")
        if self.context_channels < 0:
            raise ShapeError("assembled features exceed the GRU input width")
        if self.delta.in_channels != self.gru.hidden_channels or self.delta.out_channels != 2:
            raise ShapeError("delta head must map the hidden state to 2 channels")

    @property
    def context_channels(self) -> int:
        return self.gru.input_channels - self.assemble.out_channels

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, conv in (("assemble", self.assemble), ("gru.z", self.gru.z),
                             ("gru.r", self.gru.r), ("gru.h", self.gru.h), ("delta", self.delta)):
            out[f"{prefix}.depthwise"] = conv.depthwise
            out[f"{prefix}.pointwise"] = conv.pointwise
            out[f"{prefix}.bias"] = conv.bias
        return out

    @classmethod
    def from_tensors(cls, t: dict[str, np.ndarray]) -> "RefinerWeights":
        def conv(prefix):
            try:
                return SeparableConv(t[f"{prefix}.depthwise"], t[f"{prefix}.pointwise"], t[f"{prefix}.bias"])
            except KeyError as e:
                raise ShapeError(f"missing tensor {e.args[0]}") from None
        return cls(conv("assemble"), ConvGruWeights(conv("gru.z"), conv("gru.r"), conv("gru.h")),
                   conv("delta"))


def assemble_input(D1: DepthMap, D2: DepthMap, U1: UncertaintyMap, U2: UncertaintyMap,
                   w: RefinerWeights, context: np.ndarray | None = None) -> np.ndarray:
    H, W = check_same_shape(D1, D2, U1, U2)
    dif = complementary_map(D1, D2)
    stacked = np.stack([D1.values, D2.values, U1.values, U2.values, dif.values])
    feats = w.assemble(stacked)
    if context is None:
        context = np.zeros((w.context_channels, H, W))
    context = np.asarray(context, dtype=np.float64)
    if context.shape != (w.context_channels, H, W):
        raise ShapeError(f"context must be {(w.context_channels, H, W)}, got {context.shape}")
    return np.concatenate([feats, context])


def apply_depth_update(D: DepthMap, delta: np.ndarray) -> DepthMap:
    """D + delta; pixels that leave the positive range become invalid."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != D.shape:
        raise ShapeError(f"update {delta.shape} does not match depth {D.shape}")
    return DepthMap.from_values(D.values + delta, D.valid)


def contrastive_refine(D1: DepthMap, D2: DepthMap, U1: UncertaintyMap, U2: UncertaintyMap,
                       w: RefinerWeights, iterations: int, h0: np.ndarray | None = None,
                       context: np.ndarray | None = None) -> list[tuple[DepthMap, DepthMap]]:
    """Run the ConvGRU update loop; returns (D1, D2) after each iteration."""
    if iterations < 0:
        raise ParameterError("iterations must be >= 0")
    H, W = check_same_shape(D1, D2, U1, U2)
    h = np.zeros((w.gru.hidden_channels, H, W)) if h0 is None else np.tanh(np.asarray(h0, float))
    out = []
    for _ in range(iterations):
        x = assemble_input(D1, D2, U1, U2, w, context)
        h = convgru_cell(h, x, w.gru)
        dd = w.delta(h)
        D1 = apply_depth_update(D1, dd[0])
        D2 = apply_depth_update(D2, dd[1])
        out.append((D1, D2))
    return out


# --------------------------------------------------------------------------- fusion

def fuse_weights(U1: np.ndarray, U2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Confidence weights (1 - Ui) / (2 - U1 - U2).

    The smaller weight is computed by division and the larger as its
    complement, so W1 + W2 == 1 exactly and swapping the inputs swaps the
    outputs bit for bit. Both uncertainties at 1 fall back to 0.5 each.
    """
    U1 = np.asarray(U1, dtype=np.float64)
    U2 = np.asarray(U2, dtype=np.float64)
    if np.any((U1 < 0) | (U1 > 1)) or np.any((U2 < 0) | (U2 > 1)):
        raise DomainError("uncertainty must lie in [0, 1]")
    c1, c2 = 1.0 - U1, 1.0 - U2
    s = c1 + c2
    with np.errstate(invalid="ignore", divide="ignore"):
        small = np.where(s > 0, np.minimum(c1, c2) / s, 0.5)
    large = 1.0 - small
    first_small = c1 <= c2
    W1 = np.where(first_small, small, large)
    W2 = np.where(first_small, large, small)
    tie = c1 == c2
    W1 = np.where(tie, 0.5, W1)
    W2 = np.where(tie, 0.5, W2)
    return W1, W2


def fuse_by_uncertainty(D1: DepthMap, D2: DepthMap, U1: UncertaintyMap,
                        U2: UncertaintyMap) -> tuple[DepthMap, UncertaintyMap]:
    check_same_shape(D1, D2, U1, U2)
    ok = D1.valid & D2.valid & U1.valid & U2.valid
    W1, W2 = fuse_weights(U1.values, U2.values)
    D = W1 * D1.values + W2 * D2.values
    U = np.clip(W1 * U1.values + W2 * U2.values, 0.0, 1.0)
    return DepthMap(np.where(ok, D, 0.0), ok), UncertaintyMap(np.where(ok, U, 0.0), ok)


def average_final(D1: DepthMap, D2: DepthMap) -> DepthMap:
    """Mean of two heads; a pixel valid in only one head keeps that value."""
    check_same_shape(D1, D2)
    both = D1.valid & D2.valid
    out = np.where(both, 0.5 * (D1.values + D2.values), D1.values + D2.values)
    return DepthMap(out, D1.valid | D2.valid)


# --------------------------------------------------------------------------- SPN

@dataclass(frozen=True, eq=False)
class AffinityField:
    offsets: tuple[tuple[int, int], ...]   # (du, dv) = (column shift, row shift)
    weights: np.ndarray                    # (H, W, k), each entry in (-1, 1)

    def __post_init__(self):
        offs = tuple((int(du), int(dv)) for du, dv in self.offsets)
        if any(o == (0, 0) for o in offs):
            raise ParameterError("neighbor offsets must be nonzero")
        if len(set(offs)) != len(offs):
            raise ParameterError("neighbor offsets must be distinct")
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 3 or w.shape[2] != len(offs):
            raise ShapeError(f"weights must be (H, W, {len(offs)}), got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(np.abs(w) >= 1):
            raise DomainError("affinity weights must lie strictly inside (-1, 1)")
        w.flags.writeable = False
        object.__setattr__(self, "offsets", offs)
        object.__setattr__(self, "weights", w)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape[:2]

    @classmethod
    def uniform(cls, shape: tuple[int, int], alpha: float, offsets=EIGHT_NEIGHBORS,
                labels: np.ndarray | None = None) -> "AffinityField":
        """Weight ``alpha`` to every neighbor, or only to same-segment neighbors
        when ``labels`` is given (unlabeled pixels get no neighbors)."""
        H, W = shape
        w = np.full((H, W, len(offsets)), float(alpha))
        if labels is not None:
            labels = np.asarray(labels)
            for k, (du, dv) in enumerate(offsets):
                nb, inside = _shift(labels, du, dv, fill=-1)
                w[..., k] *= inside & (nb == labels) & (labels >= 0)
        return cls(offsets, w)


def fuse_affinity(a1: AffinityField, a2: AffinityField, U1: UncertaintyMap,
                  U2: UncertaintyMap) -> AffinityField:
    """Combine two heads' affinities with the same confidence weights as depth."""
    if a1.offsets != a2.offsets:
        raise ParameterError("affinity fields use different offsets")
    W1, W2 = fuse_weights(U1.values, U2.values)
    return AffinityField(a1.offsets, W1[..., None] * a1.weights + W2[..., None] * a2.weights)


def _shift(a: np.ndarray, du: int, dv: int, fill=0):
    """Value at (v + dv, u + du) for each pixel, plus an in-image mask."""
    H, W = a.shape[:2]
    out = np.full(a.shape, fill, dtype=a.dtype)
    inside = np.zeros((H, W), dtype=bool)
    ys = slice(max(0, -dv), min(H, H - dv))
    xs = slice(max(0, -du), min(W, W - du))
    ys2 = slice(max(0, dv), min(H, H + dv))
    xs2 = slice(max(0, du), min(W, W + du))
    if ys.start < ys.stop and xs.start < xs.stop:
        out[ys, xs] = a[ys2, xs2]
        inside[ys, xs] = True
    return out, inside


def effective_weights(D: DepthMap, aff: AffinityField) -> tuple[np.ndarray, list[np.ndarray]]:
    """Per-offset weights after dropping out-of-image/invalid neighbors and
    rescaling pixels whose absolute weight mass exceeds 1."""
    if aff.shape != D.shape:
        raise ShapeError(f"affinity {aff.shape} does not match depth {D.shape}")
    w = aff.weights.copy()
    neighbors = []
    for k, (du, dv) in enumerate(aff.offsets):
        val, inside = _shift(D.values, du, dv)
        ok, _ = _shift(D.valid, du, dv, fill=False)
        w[..., k] *= inside & ok & D.valid
        neighbors.append(val)
    mass = np.abs(w).sum(axis=-1)
    scale = np.where(mass > 1.0, 1.0 / np.where(mass > 0, mass, 1.0), 1.0)
    return w * scale[..., None], neighbors


def spn_step(D: DepthMap, aff: AffinityField) -> DepthMap:
    """D(p) <- (1 - sum W) D(p) + sum W D(p_nei), written as D + sum W (D_nei - D)
    so that constant maps are reproduced exactly."""
    w, neighbors = effective_weights(D, aff)
    out = D.values.copy()
    for k, nb in enumerate(neighbors):
        out += w[..., k] * (nb - D.values)
    return DepthMap.from_values(out, D.valid)


def modulate_affinity(aff: AffinityField, U: UncertaintyMap) -> AffinityField:
    """Scale each incoming weight by (1 - U) at the neighbor; neighbors with no
    uncertainty estimate are treated as fully uncertain."""
    if U.shape != aff.shape:
        raise ShapeError(f"uncertainty {U.shape} does not match affinity {aff.shape}")
    conf = np.where(U.valid, 1.0 - U.values, 0.0)
    w = aff.weights.copy()
    for k, (du, dv) in enumerate(aff.offsets):
        c, _ = _shift(conf, du, dv)
        w[..., k] *= c
    return AffinityField(aff.offsets, w)


def spn_refine(D: DepthMap, aff: AffinityField, U: UncertaintyMap | None = None,
               iterations: int = 6) -> DepthMap:
    if iterations < 0:
        raise ParameterError("iterations must be >= 0")
    if U is not None:
        aff = modulate_affinity(aff, U)
    for _ in range(iterations):
        D = spn_step(D, aff)
    return D
