"""Reconstruction metrics and ROI-embedding connectivity."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ReconReport:
    mse: float
    pcc: float
    ssim: float
    per_sample: dict[str, list[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"mse": self.mse, "pcc": self.pcc, "ssim": self.ssim,
                "per_sample_median": {k: float(np.nanmedian(v)) for k, v in self.per_sample.items()}}


@dataclass
class RoiConnectivity:
    pairs: list[tuple[int, int, float]]
    top_k: int = 5


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def mse(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean((x - y) ** 2))


def pcc(x, y) -> float:
    x, y = _pair(x, y)
    x, y = x.ravel(), y.ravel()
    if x.size < 2:
        raise ValueError("PCC needs at least two values")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if sx == 0 or sy == 0:
        raise ValueError("PCC is undefined for a constant input")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def ssim(x, y) -> float:
    """Single-window SSIM; the dynamic range L comes from the reference ``x``."""
    x, y = _pair(x, y)
    if x.size < 2:
        raise ValueError("SSIM needs at least two values")
    L = max(float(x.max() - x.min()), 1e-8)
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(), y.var()
    cov = np.mean((x - mx) * (y - my))
    return float((2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)))


def recon_report(chi: np.ndarray, chi_hat: np.ndarray) -> ReconReport:
    """Aggregate metrics over the whole stack plus per-sample values (NaN where PCC is undefined)."""
    per = {"mse": [], "pcc": [], "ssim": []}
    for x, y in zip(chi, chi_hat):
        per["mse"].append(mse(x, y))
        try:
            per["pcc"].append(pcc(x, y))
        except ValueError:
            per["pcc"].append(float("nan"))
        per["ssim"].append(ssim(x, y))
    return ReconReport(mse(chi, chi_hat), pcc(chi, chi_hat), ssim(chi, chi_hat), per)


def nonzero_mse(chi: np.ndarray, chi_hat: np.ndarray) -> float:
    mask = np.asarray(chi) != 0
    return float(np.mean((np.asarray(chi_hat)[mask] - np.asarray(chi)[mask]) ** 2))


def roi_embeddings(ae) -> np.ndarray:
    """Response of the ROI encoder to each one-hot ROI probe, shape ``(R, d_theta)``."""
    return ae.phi_roi.forward(np.eye(ae.n_rois))


def roi_connectivity(ae, top_k: int = 5) -> RoiConnectivity:
    return connectivity_from_embeddings(roi_embeddings(ae), top_k)


def connectivity_from_embeddings(emb: np.ndarray, top_k: int = 5) -> RoiConnectivity:
    const = [r for r in range(len(emb)) if np.ptp(emb[r]) == 0]
    if const:
        warnings.warn(f"{len(const)} ROI embedding(s) are constant; pairs involving ROIs {const[:10]} skipped",
                      RuntimeWarning, stacklevel=2)
    skip = set(const)
    pairs = [(a, b, pcc(emb[a], emb[b])) for a, b in itertools.combinations(range(len(emb)), 2)
             if a not in skip and b not in skip]
    pairs.sort(key=lambda t: (-t[2], t[0], t[1]))
    return RoiConnectivity(pairs[:top_k], top_k)
