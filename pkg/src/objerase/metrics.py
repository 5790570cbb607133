"""Lightweight evaluation: PSNR and per-run report rows.

Perceptual metrics that need pretrained feature extractors (FID, LPIPS and
friends) stay outside this package; report rows leave room for columns an
external tool may fill in.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError

PEAK_8BIT = 255.0


def psnr(a: np.ndarray, b: np.ndarray, region: Optional[np.ndarray] = None) -> float:
    """Peak signal-to-noise ratio in dB over the region (whole image if None).

    Identical inputs return +inf. ``region`` is a boolean pixel mask; an
    empty region is an error.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise InvalidInputError(f"image shapes differ: {x.shape} vs {y.shape}")
    diff = x - y
    if region is not None:
        sel = np.asarray(region, dtype=bool)
        if sel.shape != x.shape[:2]:
            raise InvalidInputError(f"region shape {sel.shape} != image {x.shape[:2]}")
        if not sel.any():
            raise InvalidInputError("PSNR region is empty")
        diff = diff[sel] if diff.ndim == 2 else diff[sel, :]
    mse = float(np.mean(diff**2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK_8BIT**2 / mse)


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return f"{value:.4f}"


@dataclass
class EvalRow:
    """One ablation cell: a (strategy, reference) pair over a corpus."""

    strategy: str
    reference: str
    images: int
    psnr_full: float
    psnr_background: float
    mask_coverage: float

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "reference": self.reference,
            "images": self.images,
            "psnr_full": _fmt(self.psnr_full),
            "psnr_background": _fmt(self.psnr_background),
            "mask_coverage": f"{self.mask_coverage:.6f}",
        }


@dataclass
class EvalReport:
    rows: list[EvalRow]

    CSV_HEADER = "strategy,reference,images,psnr_full,psnr_background,mask_coverage"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for row in self.rows:
            d = row.to_dict()
            lines.append(
                ",".join(
                    str(d[k])
                    for k in (
                        "strategy",
                        "reference",
                        "images",
                        "psnr_full",
                        "psnr_background",
                        "mask_coverage",
                    )
                )
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"rows": [row.to_dict() for row in self.rows]}, indent=2)


def mask_coverage(mask: np.ndarray) -> float:
    arr = np.asarray(mask, dtype=bool)
    return float(arr.mean())
