"""NMSE, spectral efficiency, and the per-trial report record."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

NMSE_FLOOR_DB = -120.0


class UndefinedMetricError(ValueError):
    pass


def nmse(H_hat: np.ndarray, H: np.ndarray, return_excluded: bool = False):
    """Column-averaged normalized squared error; zero-norm columns of ``H`` are skipped.

    With the ``N x M`` channel layout the columns are per-antenna vectors, so
    antennas outside every visibility region are excluded.
    """
    H_hat, H = np.asarray(H_hat), np.asarray(H)
    if H_hat.shape != H.shape:
        raise ValueError(f"shape mismatch {H_hat.shape} vs {H.shape}")
    ref = np.sum(np.abs(H) ** 2, axis=0)
    keep = ref > 0
    if not keep.any():
        raise UndefinedMetricError("all columns of the reference channel are zero")
    err = np.sum(np.abs(H_hat - H) ** 2, axis=0)
    value = float(np.mean(err[keep] / ref[keep]))
    if return_excluded:
        return value, int((~keep).sum())
    return value


def to_db(x: float, floor: float = NMSE_FLOOR_DB) -> float:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return float("nan")
    if x <= 0:
        return floor
    return max(10.0 * math.log10(x), floor)


def spectral_efficiency(H_dl: np.ndarray, H_hat: np.ndarray, P: float = 1.0) -> float:
    """Per-subcarrier MRT rate, ``mean_n log2(1 + P |[H Hh^H / ||Hh||]_nn|^2)``."""
    norm = np.linalg.norm(H_hat)
    if norm == 0:
        raise UndefinedMetricError("MRT precoder undefined for an all-zero estimate")
    d = np.einsum("nm,nm->n", H_dl, H_hat.conj()) / norm
    return float(np.mean(np.log2(1.0 + P * np.abs(d) ** 2)))


@dataclass
class ReconstructionReport:
    scheme: str
    snr_db: float
    trial: int
    nmse_ul: float = float("nan")
    nmse_dl: float = float("nan")
    se: float = float("nan")
    l_hat: int = 0
    dl_symbols: int = 0
    feedback_count: int = 0
    failed: bool = False
    error: str | None = None
    true_L: int = 0
    nmse_ul_coarse: float = float("nan")
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def nmse_ul_db(self) -> float:
        return to_db(self.nmse_ul)

    @property
    def nmse_dl_db(self) -> float:
        return to_db(self.nmse_dl)

    def csv_row(self) -> dict:
        return {
            "scheme": self.scheme,
            "snr_db": self.snr_db,
            "trial": self.trial,
            "nmse_ul_db": self.nmse_ul_db,
            "nmse_dl_db": self.nmse_dl_db,
            "se_bps_hz": self.se,
            "l_hat": self.l_hat,
            "dl_symbols": self.dl_symbols,
            "feedback_count": self.feedback_count,
            "failed": int(self.failed),
        }

    def to_dict(self) -> dict:
        return asdict(self)
