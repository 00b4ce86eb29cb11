"""Depth-completion error metrics."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, EmptyMaskError, ShapeError

# predictions are clamped to this before inversion
MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class MetricReport:
    rmse: float   # m
    mae: float    # m
    rel: float
    irmse: float  # 1/km
    imae: float   # 1/km
    valid_count: int

    def as_dict(self) -> dict:
        d = asdict(self)
        return {"rmse_m": d["rmse"], "mae_m": d["mae"], "rel": d["rel"],
                "irmse_per_km": d["irmse"], "imae_per_km": d["imae"],
                "valid_count": d["valid_count"]}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(d["rmse_m"], d["mae_m"], d["rel"], d["irmse_per_km"], d["imae_per_km"],
                   int(d["valid_count"]))


def compute_metrics(pred, gt, valid=None) -> MetricReport:
    """RMSE/MAE/REL in depth and iRMSE/iMAE in inverse depth over ``valid``.

    ``valid`` defaults to ``gt > 0``.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} != ground truth {gt.shape}")
    valid = gt > 0 if valid is None else np.asarray(valid).astype(bool)
    if valid.shape != gt.shape:
        raise ShapeError(f"mask {valid.shape} != ground truth {gt.shape}")
    n = int(valid.sum())
    if n == 0:
        raise EmptyMaskError("no valid pixels to evaluate")
    p, g = pred[valid], gt[valid]
    if np.any(g <= 0) or not np.all(np.isfinite(g)):
        raise DomainError("ground truth must be positive and finite at valid pixels")
    if not np.all(np.isfinite(p)):
        raise DomainError("prediction contains non-finite values at valid pixels")
    err = p - g
    inv_err = (1.0 / np.maximum(p, MIN_DEPTH) - 1.0 / g) * 1000.0
    return MetricReport(
        rmse=float(np.sqrt(np.mean(err ** 2))),
        mae=float(np.mean(np.abs(err))),
        rel=float(np.mean(np.abs(err) / g)),
        irmse=float(np.sqrt(np.mean(inv_err ** 2))),
        imae=float(np.mean(np.abs(inv_err))),
        valid_count=n,
    )
