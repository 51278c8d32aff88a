"""Path detection on angular-temporal images and box -> parameter conversion.

The built-in detector is an algorithmic stand-in for a trained object
detector.  It keeps the same output contract: a confidence in (0, 1] and an
integer box in the 938 x 938 network frame, x along delay and y along angle.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .image import GRID, ImageConfig, dirichlet, spot_size

# |sin(pi u)/(pi u)| = 1/2 at u = 0.60335 (u in units of the first-null offset)
_HALF_AMPLITUDE_U = 0.603355


class DetectionFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    confidence: float
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if not 0 < self.confidence <= 1:
            raise ValueError(f"confidence {self.confidence} outside (0, 1]")
        for v in (self.x_min, self.y_min, self.x_max, self.y_max):
            if not 0 <= v <= GRID:
                raise ValueError(f"coordinate {v} outside [0, {GRID}]")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError("box corners must satisfy x_min < x_max and y_min < y_max")


@dataclass(frozen=True)
class CoarseEstimate:
    theta_t: float
    gamma_t: float
    S_l: int


@dataclass(frozen=True)
class DetectorConfig:
    tau_det: float = 6.0
    # 10x floor exceedance -> confidence 0.8
    kappa: float = 10.0 / math.log(5.0)
    L_max: int = 16
    min_confidence: float = 0.5
    # centers closer than this fraction of the null-to-null width (elliptical
    # metric over both axes) are treated as cancellation residue; 0.5 is the
    # strict one-spot-per-main-lobe rule, smaller values resolve close pairs
    min_separation: float = 0.25
    # share of already-cancelled pattern magnitude added to the local floor
    residual_fraction: float = 0.05
    # cyclic re-fits of interacting spots after each new detection
    refit_passes: int = 3

    def __post_init__(self):
        if self.tau_det <= 0 or self.kappa <= 0 or self.L_max < 1:
            raise ValueError("tau_det and kappa must be positive and L_max >= 1")
        if self.residual_fraction < 0:
            raise ValueError("residual_fraction must be non-negative")
        if not 0.0 <= self.min_separation <= 1.0:
            raise ValueError(f"min_separation must lie in [0, 1], got {self.min_separation}")


def drop_unconfident(dets, threshold: float = 0.5) -> list[Detection]:
    return [d for d in dets if d.confidence >= threshold]


def box_from_center(gamma: float, theta: float, width: float, height: float) -> tuple[int, int, int, int]:
    """Integer (x_min, y_min, x_max, y_max) with the label ceiling rule, clamped to the frame."""
    x0 = math.ceil(GRID * (gamma - width / 2))
    x1 = math.ceil(GRID * (gamma + width / 2))
    y0 = math.ceil(GRID * (theta - height / 2))
    y1 = math.ceil(GRID * (theta + height / 2))

    def clamp(lo, hi):
        lo, hi = min(max(lo, 0), GRID), min(max(hi, 0), GRID)
        if hi <= lo:
            lo = min(lo, GRID - 1)
            hi = lo + 1
        return lo, hi

    x0, x1 = clamp(x0, x1)
    y0, y1 = clamp(y0, y1)
    return x0, y0, x1, y1


def _parabolic_offset(left: float, mid: float, right: float) -> float:
    den = left - 2 * mid + right
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / den, -0.5, 0.5))


def _half_amplitude_width(profile: np.ndarray, idx: int) -> float:
    """Full width (in samples) of the main lobe at half the peak amplitude.

    Walks circularly from ``idx`` in both directions to the first sample below
    half of ``profile[idx]`` and interpolates linearly between samples.
    """
    K = profile.size
    half = 0.5 * profile[idx]
    total = 0.0
    for step in (1, -1):
        prev = profile[idx]
        for k in range(1, K // 2):
            cur = profile[(idx + step * k) % K]
            if cur < half:
                total += k - 1 + (prev - half) / (prev - cur)
                break
            prev = cur
        else:
            total += K / 2
    return total


def _candidate_ranges(S: int):
    return [(a, b) for a in range(1, S + 1) for b in range(a, S + 1)]


@dataclass
class _Spot:
    theta: float
    gamma: float
    height: float
    beta: complex
    pat_a: np.ndarray
    pat_t: np.ndarray
    r: int
    c: int
    confidence: float = 0.0
    emitted: bool = False


class _CleanState:
    """Residual bookkeeping for the detector.

    The residual is ``image - sum(beta * outer(pat_a, pat_t))`` over the
    current spots.  A decimated copy (``Rc``) is kept up to date for the
    global search; full-resolution values are rebuilt on demand.
    """

    def __init__(self, B, M, N, S):
        self.B = B
        self.coherent = np.iscomplexobj(B)
        self.Ka, self.Kt = B.shape
        self.M, self.N, self.S = M, N, S
        self.da = max(1, (self.Ka // M) // 4)
        self.dt = max(1, (self.Kt // N) // 4)
        self.rows_c = np.arange(0, self.Ka, self.da)
        self.cols_c = np.arange(0, self.Kt, self.dt)
        self.Rc = B[:: self.da, :: self.dt].astype(complex if self.coherent else float)
        self.spots: list[_Spot] = []

    def magnitude(self, x):
        return np.abs(x) if self.coherent else np.maximum(x, 0.0)

    def residual(self, rr, cc, skip=None):
        out = self.B[np.ix_(rr, cc)].astype(complex if self.coherent else float)
        for k, sp in enumerate(self.spots):
            if k != skip:
                out -= sp.beta * np.outer(sp.pat_a[rr], sp.pat_t[cc])
        return out

    def interaction(self, r, c, skip=None) -> float:
        return sum(abs(sp.beta * sp.pat_a[r] * sp.pat_t[c]) for k, sp in enumerate(self.spots) if k != skip)

    def _coarse(self, sp: _Spot, sign: float):
        self.Rc -= sign * sp.beta * np.outer(sp.pat_a[self.rows_c], sp.pat_t[self.cols_c])

    def pick(self, tau: float, floor: float, eps: float):
        """Strongest coarse point whose magnitude reaches ``tau`` times its local floor.

        The local floor is ``floor + eps * clutter`` with the clutter summed
        over the cancelled patterns.  It is only evaluated at candidates above
        the plain floor, in decreasing order of magnitude, which selects the
        same point as a full clutter map at a fraction of the cost.
        """
        mag = self.magnitude(self.Rc).ravel()
        idx = np.flatnonzero(mag >= tau * floor)
        if idx.size == 0:
            return None
        order = idx[np.argsort(-mag[idx], kind="stable")]
        if not self.spots or eps == 0:
            return np.unravel_index(int(order[0]), self.Rc.shape)
        A = np.stack([np.abs(sp.beta) * np.abs(sp.pat_a[self.rows_c]) for sp in self.spots])
        T = np.stack([np.abs(sp.pat_t[self.cols_c]) for sp in self.spots])
        start, size = 0, 256
        while start < order.size:
            chunk = order[start:start + size]
            i, j = np.unravel_index(chunk, self.Rc.shape)
            clutter = np.einsum("ki,ki->i", A[:, i], T[:, j])
            ok = mag[chunk] >= tau * (floor + eps * clutter)
            if ok.any():
                return np.unravel_index(int(chunk[int(np.argmax(ok))]), self.Rc.shape)
            start, size = start + size, size * 4
        return None

    def add(self, sp: _Spot) -> None:
        self.spots.append(sp)
        self._coarse(sp, 1.0)

    def replace(self, k: int, sp: _Spot) -> None:
        self._coarse(self.spots[k], -1.0)
        self.spots[k] = sp
        self._coarse(sp, 1.0)

    def locate(self, r0, c0, reach_r, reach_c, skip=None):
        """Strongest full-resolution residual sample within the given reach."""
        wr = (r0 + np.arange(-reach_r, reach_r + 1)) % self.Ka
        wc = (c0 + np.arange(-reach_c, reach_c + 1)) % self.Kt
        mag = self.magnitude(self.residual(wr, wc, skip))
        a, b = np.unravel_index(int(np.argmax(mag)), mag.shape)
        return int(wr[a]), int(wc[b]), float(mag[a, b])

    def fit(self, r, c, peak, skip=None) -> _Spot:
        """Sub-cell center, main-lobe height and best visibility pattern at (r, c)."""
        Ka, Kt, N = self.Ka, self.Kt, self.N
        sub = self.M // self.S
        col = self.residual(np.arange(Ka), np.array([c]), skip)[:, 0]
        col_mag = self.magnitude(col)
        row3 = self.magnitude(self.residual(np.array([r]), (c + np.arange(-1, 2)) % Kt, skip))[0]
        dr = _parabolic_offset(col_mag[(r - 1) % Ka], peak, col_mag[(r + 1) % Ka])
        dc = _parabolic_offset(row3[0], peak, row3[2])
        theta = ((r + dr) / Ka) % 1.0
        gamma = ((c + dc) / Kt) % 1.0
        height = _half_amplitude_width(col_mag, r) / _HALF_AMPLITUDE_U / Ka

        # fitting window along the angle axis: two null widths of the widest lobe
        half_win = min(Ka // 2, int(math.ceil(2 * Ka / sub)))
        win = (r + np.arange(-half_win, half_win + 1)) % Ka
        t_col = dirichlet(gamma - c / Kt, N)
        y = col[win]
        best = None
        for lo, hi in _candidate_ranges(self.S):
            length, start = (hi - lo + 1) * sub, (lo - 1) * sub
            f = dirichlet(theta - win / Ka, length, start) * t_col
            if not self.coherent:
                f = np.abs(f)
            ff = float(np.vdot(f, f).real)
            if ff == 0:
                continue
            beta = np.vdot(f, y) / ff
            if not self.coherent:
                beta = max(float(beta.real), 0.0)
            err = float(np.linalg.norm(y - beta * f) ** 2)
            if best is None or err < best[0]:
                best = (err, beta, length, start)
        _, beta, length, start = best
        pat_a = dirichlet(theta - np.arange(Ka) / Ka, length, start)
        pat_t = dirichlet(gamma - np.arange(Kt) / Kt, N)
        if not self.coherent:
            pat_a, pat_t = np.abs(pat_a), np.abs(pat_t)
        return _Spot(theta, gamma, height, beta, pat_a, pat_t, r, c)


def detect_boxes(
    image: np.ndarray,
    M: int,
    N: int,
    S: int,
    cfg: ImageConfig = ImageConfig(),
    params: DetectorConfig = DetectorConfig(),
) -> list[Detection]:
    """Detect dark spots by iterative peak picking and cancellation.

    ``image`` is the linear angular-temporal matrix in image orientation
    (rows: angle, columns: delay).  A complex matrix enables coherent
    cancellation of each spot's full cross pattern; a real magnitude matrix
    falls back to subtracting the analytic magnitude pattern.

    Each iteration takes the strongest point whose magnitude exceeds
    ``tau_det`` times the local floor, locates the spot center to sub-cell
    accuracy, sizes the box height from the main-lobe width along the angle
    axis (the width is always ``2/N``), scores a confidence
    ``1 - exp(-(peak/floor)/kappa)`` and cancels the spot.  Earlier spots
    whose patterns reach the new one are then re-fitted against the updated
    residual, which separates overlapping spots that a single pass would
    merge or leave half-cancelled.

    The local floor is the median magnitude plus ``residual_fraction`` of the
    patterns already cancelled at that point, so imperfect cancellation of a
    strong spot is not mistaken for a new one.  The search runs on a
    decimated copy of the residual (about four samples per resolution cell).
    """
    B = np.asarray(image)
    if B.size == 0:
        return []
    if not np.iscomplexobj(B):
        B = B.astype(float)
    st = _CleanState(B, M, N, S)
    mag_c = st.magnitude(st.Rc)
    if mag_c.max() == 0:
        return []
    floor = float(np.median(mag_c))
    if floor <= 0:
        floor = float(mag_c[mag_c > 0].min())
    w_norm = 2.0 / N
    eps = params.residual_fraction

    def refit(k):
        old = st.spots[k]
        r, c, peak = st.locate(old.r, old.c, st.da, st.dt, skip=k)
        new = st.fit(r, c, peak, skip=k)
        new.confidence, new.emitted = old.confidence, old.emitted
        st.replace(k, new)

    for _ in range(4 * params.L_max):
        if sum(sp.emitted for sp in st.spots) >= params.L_max:
            break
        picked = st.pick(params.tau_det, floor, eps)
        if picked is None:
            break
        i, j = picked
        r, c, peak = st.locate(int(st.rows_c[i]), int(st.cols_c[j]), st.da, st.dt)
        lf = floor + eps * st.interaction(r, c)
        if peak < params.tau_det * lf:
            break
        spot = st.fit(r, c, peak)
        spot.confidence = min(max(1.0 - math.exp(-(peak / lf) / params.kappa), 1e-12), 1.0)
        st.add(spot)
        new = len(st.spots) - 1
        neighbours = [k for k in range(new) if abs(st.spots[k].beta * st.spots[k].pat_a[r] * st.spots[k].pat_t[c]) > floor]
        for _pass in range(params.refit_passes if neighbours else 0):
            for k in neighbours + [new]:
                refit(k)

        spot = st.spots[new]
        centers = [(sp.theta, sp.gamma, sp.height) for sp in st.spots[:new] if sp.emitted]
        # a residual of an already-detected spot is cancelled but not reported
        if _too_close(spot.theta, spot.gamma, centers, w_norm, params.min_separation):
            continue
        if spot.confidence < params.min_confidence:
            continue
        spot.emitted = True

    dets = []
    kept: list[tuple[float, float, float]] = []
    for sp in sorted((sp for sp in st.spots if sp.emitted), key=lambda s: -s.confidence):
        # re-fitting can pull two emitted spots together; keep the more confident one
        if _too_close(sp.theta, sp.gamma, kept, w_norm, params.min_separation):
            continue
        kept.append((sp.theta, sp.gamma, sp.height))
        x0, y0, x1, y1 = box_from_center(sp.gamma, sp.theta, w_norm, sp.height)
        dets.append(Detection(sp.confidence, x0, y0, x1, y1))
    return dets


def _too_close(theta, gamma, centers, w_norm, frac) -> bool:
    if frac <= 0:
        return False
    return any(
        (_circ(theta, t0) / (frac * h0)) ** 2 + (_circ(gamma, g0) / (frac * w_norm)) ** 2 < 1.0
        for t0, g0, h0 in centers
    )


def _circ(a: float, b: float) -> float:
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def coarse_estimates(det: Detection, M: int, N: int, S: int) -> CoarseEstimate:
    theta = ((det.y_min + det.y_max) / (2 * GRID)) % 1.0
    gamma = ((det.x_min + det.x_max) / (2 * GRID)) % 1.0
    h_hat = (det.y_max - det.y_min) / GRID
    dist = [abs(h_hat - spot_size(M, N, S, s)[1]) for s in range(1, S + 1)]
    # ties (up to rounding) go to the smaller s, i.e. the wider visibility
    best = min(dist)
    S_l = next(s for s, d in enumerate(dist, start=1) if d <= best + 1e-12)
    return CoarseEstimate(theta, gamma, S_l)


def export_detections(dets, path) -> None:
    with open(path, "w") as fh:
        for d in dets:
            fh.write(json.dumps(asdict(d)) + "\n")


def import_detections(path, threshold: float = 0.5) -> list[Detection]:
    """Read JSON-lines detections; entries below ``threshold`` confidence are dropped."""
    dets = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            fields = {k: obj[k] for k in ("confidence", "x_min", "y_min", "x_max", "y_max")}
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DetectionFormatError(f"{path}:{lineno}: malformed detection ({exc})") from exc
        for k in ("x_min", "y_min", "x_max", "y_max"):
            v = fields[k]
            if isinstance(v, bool) or not float(v).is_integer():
                raise DetectionFormatError(f"{path}:{lineno}: {k}={v!r} is not an integer")
            fields[k] = int(v)
        try:
            det = Detection(float(fields["confidence"]), fields["x_min"], fields["y_min"],
                            fields["x_max"], fields["y_max"])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
        dets.append(det)
    return drop_unconfident(dets, threshold)
