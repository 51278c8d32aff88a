"""Angular-temporal images of the uplink pilots and YOLO-style labels.

Two orientations of the oversampled transform exist:

* ``angular_temporal_transform`` is the literal product ``U_a^H Y U_t``; its
  row ``k`` probes angle ``-k/(gamma_a M)`` (mod 1).
* the *image* orientation reorders rows so that row ``r`` probes angle
  ``r/(gamma_a M)``.  Entry ``[r, c]`` is then the matched filter
  ``a(r/Ka)^H Y q*(c/Kt)``, i.e. a zero-padded 2-D FFT of ``Y``.  All
  downstream consumers (normalization, PNG export, detection) use it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import fft as sp_fft

from .model import ConfigurationError, Scenario

GRID = 938


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class ImageConfig:
    gamma_a: int = 16
    gamma_t: int = 16
    eta: float = 255.0
    grid_size: int = GRID

    def __post_init__(self):
        if self.gamma_a < 1 or self.gamma_t < 1:
            raise ConfigurationError("oversampling rates must be >= 1")
        if self.eta <= 0:
            raise ConfigurationError("eta must be positive")
        if self.grid_size != GRID:
            raise ConfigurationError(f"grid_size is fixed at {GRID}")


@dataclass
class SpectralImage:
    """Normalized magnitudes in image orientation (rows: angle, cols: delay)."""

    magnitudes: np.ndarray
    M: int
    N: int
    S: int
    eta: float = 255.0
    linear: np.ndarray | None = None  # complex, same orientation, pre-normalization


@dataclass(frozen=True)
class BoxLabel:
    x_min: int
    y_min: int
    x_max: int
    y_max: int
    class_id: int = 0

    def __post_init__(self):
        for v in (self.x_min, self.y_min, self.x_max, self.y_max):
            if not 0 <= v <= GRID:
                raise ValueError(f"coordinate {v} outside [0, {GRID}]")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError(f"degenerate box {self}")

    def to_line(self) -> str:
        return f"{self.class_id} {self.x_min} {self.y_min} {self.x_max} {self.y_max}"

    @classmethod
    def from_line(cls, line: str) -> "BoxLabel":
        c, x0, y0, x1, y1 = (int(v) for v in line.split())
        return cls(x0, y0, x1, y1, class_id=c)


def transform_matrices(M: int, N: int, cfg: ImageConfig) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``U_a`` (M x gamma_a M) and ``U_t`` (N x gamma_t N)."""
    Ka, Kt = cfg.gamma_a * M, cfg.gamma_t * N
    U_a = np.exp(2j * np.pi * np.outer(np.arange(M), -np.arange(Ka) / Ka))
    U_t = np.exp(2j * np.pi * np.outer(np.arange(N), -np.arange(Kt) / Kt))
    return U_a, U_t


def angular_temporal_transform(Y: np.ndarray, cfg: ImageConfig) -> np.ndarray:
    """``U_a^H Y U_t`` computed with zero-padded FFTs."""
    Y = np.asarray(Y)
    if Y.ndim != 2:
        raise ValueError(f"expected a 2-D pilot grid, got shape {Y.shape}")
    M, N = Y.shape
    Ka, Kt = cfg.gamma_a * M, cfg.gamma_t * N
    # conj(exp(-j2pi mk/Ka)) = exp(+j2pi mk/Ka): an unnormalized inverse DFT
    return Ka * np.fft.ifft(np.fft.fft(Y, n=Kt, axis=1), n=Ka, axis=0)


def to_image_orientation(Ybar: np.ndarray) -> np.ndarray:
    """Reorder rows of ``U_a^H Y U_t`` so row ``r`` corresponds to angle ``r/Ka``."""
    Ka = Ybar.shape[0]
    return Ybar[(-np.arange(Ka)) % Ka]


def matched_filter_image(Y: np.ndarray, cfg: ImageConfig) -> np.ndarray:
    """Image-oriented transform: ``[r, c] = a(r/Ka)^H Y q*(c/Kt)``."""
    M, N = Y.shape
    # delay axis first, so the angle-axis pass runs on Kt columns rather than
    # zero-padding both axes up front
    B = sp_fft.fft(Y, n=cfg.gamma_t * N, axis=1)
    return sp_fft.fft(B, n=cfg.gamma_a * M, axis=0)


def normalize_image(Ybar: np.ndarray, eta: float = 255.0) -> np.ndarray:
    mag = np.abs(np.asarray(Ybar))
    peak = mag.max() if mag.size else 0.0
    if peak == 0:
        raise DegenerateInputError("cannot normalize an all-zero matrix")
    return eta * mag / peak


def spectral_image(Y: np.ndarray, S: int, cfg: ImageConfig = ImageConfig()) -> SpectralImage:
    M, N = Y.shape
    B = matched_filter_image(Y, cfg)
    return SpectralImage(normalize_image(B, cfg.eta), M, N, S, cfg.eta, linear=B)


def spot_size(M: int, N: int, S: int, span: int) -> tuple[float, float]:
    """Dark-spot (width along delay, height along angle) in normalized units."""
    return 2.0 / N, 2.0 * S / (span * M)


def make_labels(scenario: Scenario, cfg: ImageConfig = ImageConfig()) -> list[BoxLabel]:
    """One box per path; x runs along delay, y along angle.

    Corners follow ``ceil(938 * (center -/+ size/2))`` and are clamped to the
    frame, so a spot that wraps past 0 or 1 keeps only its in-frame side.
    """
    c = scenario.config
    g = cfg.grid_size
    labels = []
    for p in scenario.paths:
        w, h = spot_size(c.M, c.N, c.S, p.span)
        x0 = math.ceil(g * (p.gamma - w / 2))
        x1 = math.ceil(g * (p.gamma + w / 2))
        y0 = math.ceil(g * (p.theta - h / 2))
        y1 = math.ceil(g * (p.theta + h / 2))
        x0, x1 = _clamp_pair(x0, x1, g)
        y0, y1 = _clamp_pair(y0, y1, g)
        labels.append(BoxLabel(x0, y0, x1, y1))
    return labels


def _clamp_pair(lo: int, hi: int, g: int) -> tuple[int, int]:
    lo, hi = min(max(lo, 0), g), min(max(hi, 0), g)
    if hi <= lo:
        if lo >= g:
            lo = g - 1
        hi = lo + 1
    return lo, hi


def write_labels(labels, path) -> None:
    Path(path).write_text("".join(lb.to_line() + "\n" for lb in labels))


def read_labels(path) -> list[BoxLabel]:
    lines = Path(path).read_text().splitlines()
    return [BoxLabel.from_line(ln) for ln in lines if ln.strip()]


def export_png(img: SpectralImage, path) -> None:
    """8-bit grayscale PNG; strong components dark on white, angle origin at top-left."""
    pixels = np.clip(np.rint(img.eta - img.magnitudes), 0, 255).astype(np.uint8)
    Image.fromarray(pixels, mode="L").save(path)


def read_png(path, eta: float = 255.0) -> np.ndarray:
    """Pixel matrix of an exported image; ``eta - pixels`` recovers magnitudes."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def dirichlet(x, length: int, start: int = 0) -> np.ndarray:
    """``sum_{m=start}^{start+length-1} exp(j 2 pi m x)`` in closed form."""
    x = np.asarray(x, dtype=float)
    s = np.sin(np.pi * x)
    near = np.abs(s) < 1e-12
    safe = np.where(near, 1.0, s)
    ratio = np.where(near, length * np.cos(np.pi * length * x) / np.where(near, np.cos(np.pi * x), 1.0),
                     np.sin(np.pi * length * x) / safe)
    return ratio * np.exp(1j * np.pi * x * (2 * start + length - 1))


def dark_spot_profile(
    theta, gamma, s_start, s_end, M, N, S, probe_axis="angle", oversampling=16, offsets=None
) -> np.ndarray:
    """Analytic magnitude of a single path's spot along one axis.

    Without ``offsets`` the profile is sampled on the oversampled image grid
    (``oversampling * M`` angle points or ``oversampling * N`` delay points,
    image orientation).  With ``offsets`` it is evaluated at those
    displacements from the spot center.
    """
    if probe_axis == "angle":
        length, center, K = (s_end - s_start + 1) * M // S, theta, oversampling * M
    elif probe_axis == "delay":
        length, center, K = N, gamma, oversampling * N
    else:
        raise ValueError(f"probe_axis must be 'angle' or 'delay', got {probe_axis!r}")
    if offsets is None:
        x = center - np.arange(K) / K
    else:
        x = -np.asarray(offsets, dtype=float)
    return np.abs(dirichlet(x, length))
