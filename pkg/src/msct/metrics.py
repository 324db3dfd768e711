"""Convergence distances and image-quality scores."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.ndimage import uniform_filter

__all__ = [
    "MetricReport",
    "distance_data",
    "distance_data_arrays",
    "distance_image",
    "psnr",
    "ssim",
    "rmse",
    "report",
    "write_reports",
]

SSIM_WINDOW = 8


def _values(x) -> np.ndarray:
    for attr in ("values", "data"):
        if hasattr(x, attr):
            return np.asarray(getattr(x, attr), dtype=float)
    return np.asarray(x, dtype=float)


def _ratio_sum(refs, ests, what: str) -> float:
    refs, ests = list(refs), list(ests)
    if len(refs) != len(ests):
        raise ValueError(f"{len(refs)} reference {what}s vs {len(ests)} estimates")
    total = 0.0
    for k, (r, e) in enumerate(zip(refs, ests)):
        r = _values(r).ravel()
        e = _values(e).ravel()
        if r.shape != e.shape:
            raise ValueError(f"{what} {k}: shape {r.shape} vs {e.shape}")
        den = float(r @ r)
        if den == 0.0:
            raise ValueError(f"{what} {k} has zero norm")
        diff = r - e
        total += float(diff @ diff) / den
    return total


def distance_data_arrays(p_meas, p_est) -> float:
    return _ratio_sum(p_meas, p_est, "sinogram")


def distance_data(p_meas: Sequence, p_est: Sequence) -> float:
    """Sum over spectra of ||p_k - p_k_est||^2 / ||p_k||^2."""
    return _ratio_sum(p_meas, p_est, "sinogram")


def distance_image(f_true: Sequence, f_est: Sequence) -> float:
    """Sum over materials of ||f_true - f_est||^2 / ||f_true||^2."""
    return _ratio_sum(f_true, f_est, "image")


def _pair(ref, est):
    r, e = _values(ref), _values(est)
    if r.shape != e.shape:
        raise ValueError(f"shape mismatch {r.shape} vs {e.shape}")
    return r, e


def rmse(ref, est) -> float:
    r, e = _pair(ref, est)
    return math.sqrt(float(np.mean((r - e) ** 2)))


def psnr(ref, est) -> float:
    """10 log10(peak^2 / MSE) with peak = max(ref); +inf for identical images."""
    r, e = _pair(ref, est)
    peak = float(r.max())
    if peak <= 0:
        raise ValueError("reference peak must be positive")
    mse = float(np.mean((r - e) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim(ref, est, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over all full 8x8 windows (uniform weights, population moments).

    Stabilizers use peak = max(ref): C1 = (0.01 peak)^2, C2 = (0.03 peak)^2.
    Images smaller than the window are scored as a single window.
    """
    r, e = _pair(ref, est)
    r = np.atleast_2d(r)
    e = np.atleast_2d(e)
    peak = float(r.max())
    if peak <= 0:
        peak = float(np.abs(r).max()) or 1.0
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    w = (min(window, r.shape[0]), min(window, r.shape[1]))

    def mean(a):
        return uniform_filter(a, size=w, mode="constant")

    mr, me = mean(r), mean(e)
    vr = mean(r * r) - mr * mr
    ve = mean(e * e) - me * me
    cov = mean(r * e) - mr * me
    s = ((2 * mr * me + c1) * (2 * cov + c2)) / ((mr * mr + me * me + c1) * (vr + ve + c2))
    # keep only windows lying fully inside the image
    h0, w0 = w[0] // 2, w[1] // 2
    s = s[h0 : r.shape[0] - (w[0] - 1 - h0), w0 : r.shape[1] - (w[1] - 1 - w0)]
    return float(np.clip(s.mean(), -1.0, 1.0))


@dataclass
class MetricReport:
    d_data: float = math.nan
    d_image: float = math.nan
    # keyed by image label
    psnr: dict = field(default_factory=dict)
    ssim: dict = field(default_factory=dict)
    rmse: dict = field(default_factory=dict)
    iteration: int | None = None


def report(refs: Sequence, ests: Sequence, labels: Sequence[str], p_meas=None, p_est=None) -> MetricReport:
    rep = MetricReport(d_image=distance_image(refs, ests))
    if p_meas is not None:
        rep.d_data = distance_data(p_meas, p_est)
    for lab, r, e in zip(labels, refs, ests):
        rep.psnr[lab] = psnr(r, e)
        rep.ssim[lab] = ssim(r, e)
        rep.rmse[lab] = rmse(r, e)
    return rep


def write_reports(path, reports: Sequence[MetricReport]):
    """One CSV row per report; infinite PSNR is written as 'inf'."""
    labels = list(reports[0].psnr) if reports else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["iter", "d_data", "d_image"]
        for lab in labels:
            head += [f"psnr_{lab}", f"ssim_{lab}", f"rmse_{lab}"]
        w.writerow(head)
        for i, r in enumerate(reports):
            row = [r.iteration if r.iteration is not None else i, repr(r.d_data), repr(r.d_image)]
            for lab in labels:
                row += [repr(r.psnr[lab]), repr(r.ssim[lab]), repr(r.rmse[lab])]
            w.writerow(row)


def as_dict(r: MetricReport) -> dict:
    return asdict(r)
