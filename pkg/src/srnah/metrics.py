"""Reconstruction metrics and their frequency-band aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NMSE_FLOOR_DB = -300.0


@dataclass
class MetricRecord:
    sample_id: int
    frequency: float
    snr_db: float | None
    ncc: float
    nmse: float
    method: str

    def __post_init__(self):
        if not 0.0 <= self.ncc <= 1.0 + 1e-9:
            raise ValueError(f"ncc {self.ncc} outside [0, 1]")
        if self.frequency < 0:
            raise ValueError("frequency must be non-negative")


def _flat(a, mask=None) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if mask is not None:
        return a[np.asarray(mask).astype(bool)]
    return a.reshape(-1)


def ncc(v_hat, v, mask=None) -> float:
    """``|v_hat . v| / (||v_hat|| ||v||)``, optionally restricted to ``mask``."""
    a, b = _flat(v_hat, mask), _flat(v, mask)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("ncc is undefined for a zero-norm input")
    return float(min(abs(a @ b) / (na * nb), 1.0))


def nmse(v_hat, v, mask=None) -> float:
    """``10 log10(||v_hat - v||^2 / ||v||^2)`` in dB, floored at -300 dB."""
    a, b = _flat(v_hat, mask), _flat(v, mask)
    ref = float(b @ b)
    if ref == 0.0:
        raise ValueError("nmse is undefined for a zero reference")
    err = float((a - b) @ (a - b))
    if err == 0.0:
        return NMSE_FLOOR_DB
    return max(10.0 * math.log10(err / ref), NMSE_FLOOR_DB)


@dataclass
class BandStat:
    method: str
    band: int  # 1-based
    f_lo: float
    f_hi: float
    count: int
    mean: float | None
    std: float | None


def band_aggregate(records, f_min: float = 0.0, f_max: float = 2000.0,
                   n_bands: int = 10, key: str = "ncc") -> list[BandStat]:
    """Mean and population std of ``key`` per method in equal, left-closed frequency bands.

    The last band also takes ``f == f_max``.  Empty bands report ``None``.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    step = (f_max - f_min) / n_bands
    methods = sorted({r.method for r in records})
    out = []
    for method in methods:
        rs = [r for r in records if r.method == method]
        for k in range(n_bands):
            lo, hi = f_min + k * step, f_min + (k + 1) * step
            last = k == n_bands - 1
            vals = [getattr(r, key) for r in rs
                    if lo <= r.frequency < hi or (last and r.frequency == hi)]
            if vals:
                out.append(BandStat(method, k + 1, lo, hi, len(vals), float(np.mean(vals)),
                                    float(np.std(vals))))
            else:
                out.append(BandStat(method, k + 1, lo, hi, 0, None, None))
    return out
