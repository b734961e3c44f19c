"""Depth and surface-normal evaluation metrics.

Conventions: the cap interval is (cap_min, cap_max], delta thresholds use a
strict ``<`` on max(p/g, g/p), SILog is reported x100, iRMSE/iMAE are in 1/km
and MAE in mm.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyValidSetError, ParameterError
from .types import DepthMap, NormalMap, check_same_shape

NORMAL_THRESHOLDS_DEG = (11.25, 22.5, 30.0)


@dataclass(frozen=True)
class MetricsReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    log10: float
    silog: float
    irmse: float
    mae: float
    imae: float
    delta1: float
    delta2: float
    delta3: float
    valid_count: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def csv_header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def csv_row(self) -> list:
        return [getattr(self, k) for k in self.csv_header()]


@dataclass(frozen=True)
class NormalMetricsReport:
    mean_angle: float
    pct_11_25: float
    pct_22_5: float
    pct_30: float
    valid_count: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def evaluation_mask(pred: DepthMap, gt: DepthMap, cap_min: float = 0.0,
                    cap_max: float = math.inf) -> np.ndarray:
    if not cap_min < cap_max:
        raise ParameterError("cap_min must be below cap_max")
    check_same_shape(pred, gt)
    g = gt.values
    return pred.valid & gt.valid & (g > cap_min) & (g <= cap_max)


def _depth_metrics_from(p: np.ndarray, g: np.ndarray) -> MetricsReport:
    if len(p) == 0:
        raise EmptyValidSetError("no pixels to evaluate")
    e = p - g
    d = np.log(p) - np.log(g)
    ratio = np.maximum(p / g, g / p)
    inv = 1000.0 / p - 1000.0 / g
    return MetricsReport(
        abs_rel=float(np.mean(np.abs(e) / g)),
        sq_rel=float(np.mean(e * e / g)),
        rmse=float(np.sqrt(np.mean(e * e))),
        rmse_log=float(np.sqrt(np.mean(d * d))),
        log10=float(np.mean(np.abs(np.log10(p) - np.log10(g)))),
        silog=float(100.0 * np.sqrt(max(np.mean(d * d) - np.mean(d) ** 2, 0.0))),
        irmse=float(np.sqrt(np.mean(inv * inv))),
        mae=float(1000.0 * np.mean(np.abs(e))),
        imae=float(np.mean(np.abs(inv))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
        valid_count=int(len(p)),
    )


def depth_metrics(pred: DepthMap, gt: DepthMap, cap_min: float = 0.0,
                  cap_max: float = math.inf) -> MetricsReport:
    sel = evaluation_mask(pred, gt, cap_min, cap_max)
    return _depth_metrics_from(pred.values[sel], gt.values[sel])


def aggregate(pairs: Sequence[tuple[DepthMap, DepthMap]], cap_min: float = 0.0,
              cap_max: float = math.inf, mode: str = "per_image") -> MetricsReport:
    """Dataset-level report: mean of per-image reports, or one pooled evaluation."""
    if not pairs:
        raise EmptyValidSetError("no images to evaluate")
    if mode == "pooled":
        ps, gs = [], []
        for pred, gt in pairs:
            sel = evaluation_mask(pred, gt, cap_min, cap_max)
            ps.append(pred.values[sel])
            gs.append(gt.values[sel])
        return _depth_metrics_from(np.concatenate(ps), np.concatenate(gs))
    if mode != "per_image":
        raise ParameterError(f"unknown aggregation mode {mode!r}")
    return mean_reports([depth_metrics(p, g, cap_min, cap_max) for p, g in pairs])


def mean_reports(reports: Iterable[MetricsReport]) -> MetricsReport:
    reports = list(reports)
    if not reports:
        raise EmptyValidSetError("no reports to average")
    vals = {k: float(np.mean([getattr(r, k) for r in reports]))
            for k in MetricsReport.csv_header() if k != "valid_count"}
    return MetricsReport(**vals, valid_count=sum(r.valid_count for r in reports))


def reports_to_csv(reports: Iterable[MetricsReport], names: Sequence[str] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    reports = list(reports)
    header = MetricsReport.csv_header()
    w.writerow((["name"] if names is not None else []) + header)
    for i, r in enumerate(reports):
        w.writerow(([names[i]] if names is not None else []) + [repr(v) for v in r.csv_row()])
    return buf.getvalue()


def normal_metrics(pred: NormalMap, gt: NormalMap) -> NormalMetricsReport:
    check_same_shape(pred, gt)
    sel = pred.valid & gt.valid
    if not sel.any():
        raise EmptyValidSetError("no pixels to evaluate")
    a, b = pred.vectors[sel], gt.vectors[sel]
    # atan2 stays accurate near 0 and 180 degrees where arccos does not
    ang = np.degrees(np.arctan2(np.linalg.norm(np.cross(a, b), axis=-1), np.einsum("kc,kc->k", a, b)))
    t1, t2, t3 = NORMAL_THRESHOLDS_DEG
    return NormalMetricsReport(
        mean_angle=float(np.mean(ang)),
        pct_11_25=float(np.mean(ang < t1)),
        pct_22_5=float(np.mean(ang < t2)),
        pct_30=float(np.mean(ang < t3)),
        valid_count=int(sel.sum()),
    )
