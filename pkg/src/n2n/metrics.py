"""Evaluation metrics and collapse diagnostics."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .graph import Graph
from .objectives import gtv
from .tensor import covariance, eig_sym

SPECTRUM_FLOOR = 1e-12


def micro_f1(pred, truth, subset=None) -> float:
    """Micro-averaged F1 over ``subset``; equals accuracy for single-label data."""
    p, t = np.asarray(pred).ravel(), np.asarray(truth).ravel()
    if p.shape != t.shape:
        raise ValueError(f"prediction/label length mismatch {p.shape} vs {t.shape}")
    idx = np.arange(p.size) if subset is None else np.asarray(subset, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ValueError("micro_f1 needs a nonempty subset")
    return float(np.mean(p[idx] == t[idx]))


@dataclass
class CollapseReport:
    eigenvalues: np.ndarray  # descending
    top_fraction: float
    effective_rank: float
    degenerate: bool
    gtv: Optional[float] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["eigenvalues"] = self.eigenvalues.tolist()
        return out


def spectrum_stats(eigenvalues) -> tuple[float, float, bool]:
    """Top-eigenvalue share and exp-entropy effective rank of a PSD spectrum."""
    lam = np.sort(np.asarray(eigenvalues, dtype=np.float64))[::-1]
    if lam.size == 0 or lam[0] <= SPECTRUM_FLOOR:
        # zero spectrum: everything sits on one point
        return 1.0, 1.0, True
    clamped = np.maximum(lam, SPECTRUM_FLOOR)
    p = clamped / clamped.sum()
    rank = float(np.exp(-np.sum(p * np.log(p))))
    return float(clamped[0] / clamped.sum()), min(max(rank, 1.0), float(lam.size)), False


def collapse_report(h, graph: Optional[Graph] = None, solver: str = "jacobi") -> CollapseReport:
    """Covariance spectrum of ``h`` and the statistics derived from it.

    ``solver="numpy"`` swaps the Jacobi routine for LAPACK on large D.
    """
    hv = np.asarray(h, dtype=np.float64)
    if hv.ndim != 2 or hv.shape[0] < 2:
        raise ValueError("collapse_report needs a matrix with at least two rows")
    cov = covariance(hv, 0.0)
    if solver == "jacobi":
        lam, _ = eig_sym(cov, vectors=False)
    elif solver == "numpy":
        lam = np.linalg.eigvalsh(cov)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    lam = lam[::-1].copy()
    top, rank, degenerate = spectrum_stats(lam)
    return CollapseReport(lam, top, rank, degenerate, gtv(hv, graph) if graph is not None else None)
