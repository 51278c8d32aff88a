"""Reference estimators: NOMP, LS, genie-covariance LMMSE and the per-subarray scheme."""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .metrics import ReconstructionReport, nmse
from .model import (
    DOWNLINK_TRAINING_NOISE,
    Scenario,
    complex_noise,
    noise_rng,
    path_signature,
    snr_to_power,
    synthesize_channel,
    uplink_pilot_observation,
)
from .pipeline import SchemeSettings, extract_parameters, finish_downlink
from .refinement import (
    PathEstimate,
    _newton_visit,
    least_squares_gains,
    reconstruct_uplink,
)
from .visibility import VisibilityEstimate


@dataclass(frozen=True)
class NompConfig:
    gamma_a: int = 4
    gamma_t: int = 4
    max_paths: int = 16
    false_alarm: float = 0.01
    newton_rounds: int = 3
    newton_steps: int = 1
    calibration_draws: int = 200

    def __post_init__(self):
        if min(self.gamma_a, self.gamma_t, self.max_paths, self.newton_rounds, self.newton_steps,
               self.calibration_draws) < 1:
            raise ValueError("NOMP settings must be positive")
        if not 0 < self.false_alarm < 1:
            raise ValueError("false_alarm must lie in (0, 1)")

    def threshold(self, M: int, N: int) -> float:
        """Detection threshold on ``|a^H R q*|^2`` for unit-variance noise.

        Noise-only correlations are exponential with mean ``M N``.  The
        oversampled grid holds correlated cells, so the number of independent
        cells ``K`` is calibrated by Monte Carlo from the mean grid maximum
        (``E[max] = ln K + euler_gamma`` in units of ``M N``); the threshold
        then keeps ``P(max > threshold) = false_alarm`` exactly for ``K``
        independent exponentials.
        """
        K = effective_cells(M, N, self.gamma_a, self.gamma_t, self.calibration_draws)
        return M * N * -math.log(-math.expm1(math.log1p(-self.false_alarm) / K))


@functools.lru_cache(maxsize=None)
def effective_cells(M: int, N: int, gamma_a: int, gamma_t: int, draws: int = 200) -> float:
    """Independent-cell count of the oversampled noise-only correlation grid (fixed seed)."""
    rng = np.random.default_rng(np.random.SeedSequence([M, N, gamma_a, gamma_t]))
    maxima = [
        np.max(np.abs(np.fft.fft2(complex_noise(rng, (M, N)), s=(gamma_a * M, gamma_t * N))) ** 2) / (M * N)
        for _ in range(draws)
    ]
    return math.exp(float(np.mean(maxima)) - np.euler_gamma)


def nomp_estimate(Y: np.ndarray, cfg: NompConfig = NompConfig(), P: float = 1.0, S: int = 1,
                  residue_trace: list | None = None) -> list[PathEstimate]:
    """Newtonized OMP over the full array (stationary model).

    Each iteration picks the strongest oversampled-grid correlation of the
    residue, Newton-refines it, cyclically refines every path found so far,
    re-solves all gains jointly and updates the residue.  The returned paths
    carry full visibility ``[1, S]``.
    """
    M, N = Y.shape
    Ka, Kt = cfg.gamma_a * M, cfg.gamma_t * N
    m = np.arange(M)
    full = VisibilityEstimate(1, S)
    sq = math.sqrt(P)
    tau = cfg.threshold(M, N)
    params: list[list[float]] = []
    gains = np.zeros(0, dtype=complex)
    res = Y.astype(complex, copy=True)
    if residue_trace is not None:
        residue_trace.append(float(np.vdot(res, res).real))

    def comp(t, g):
        return np.outer(np.exp(2j * np.pi * m * t), np.exp(2j * np.pi * np.arange(N) * g))

    while len(params) < cfg.max_paths:
        corr = np.abs(np.fft.fft2(res, s=(Ka, Kt))) ** 2
        r, c = np.unravel_index(int(np.argmax(corr)), corr.shape)
        if corr[r, c] < tau:
            break
        t, g, _ = _newton_visit(res, m, r / Ka, c / Kt, N, cfg.newton_steps)
        z = np.exp(-2j * np.pi * m * t) @ res @ np.exp(-2j * np.pi * np.arange(N) * g)
        a = z / (sq * M * N)
        res = res - sq * a * comp(t, g)
        params.append([t, g])
        gains = np.append(gains, a)
        for _ in range(cfg.newton_rounds):
            for k in range(len(params)):
                t, g = params[k]
                plus = res + sq * gains[k] * comp(t, g)
                t, g, _ = _newton_visit(plus, m, t, g, N, cfg.newton_steps)
                z = np.exp(-2j * np.pi * m * t) @ plus @ np.exp(-2j * np.pi * np.arange(N) * g)
                gains[k] = z / (sq * M * N)
                params[k] = [t, g]
                res = plus - sq * gains[k] * comp(t, g)
        triples = [(t, g, full) for t, g in params]
        gains = least_squares_gains(Y, triples, P, S)
        res = Y - sq * sum(a * comp(t, g) for (t, g), a in zip(params, gains))
        if residue_trace is not None:
            residue_trace.append(float(np.vdot(res, res).real))
    return [PathEstimate(float(t), float(g), complex(a), full) for (t, g), a in zip(params, gains)]


def ls_estimate(Y: np.ndarray, P: float) -> np.ndarray:
    """Per-entry LS channel ``Y^T / sqrt(P)`` for all-one pilots (``N x M``)."""
    return np.asarray(Y).T / math.sqrt(P)


def channel_covariance(scenario: Scenario) -> np.ndarray:
    """Genie spatial covariance ``sum_l |beta_l|^2 v_l v_l^H`` (``M x M``)."""
    c = scenario.config
    R = np.zeros((c.M, c.M), dtype=complex)
    for p in scenario.paths:
        v = path_signature(p.theta, p.s_start, p.s_end, c.M, c.S)
        R += abs(p.alpha) ** 2 * np.outer(v, v.conj())
    return R


def lmmse_estimate(Y: np.ndarray, scenario: Scenario, P: float) -> np.ndarray:
    """Per-subcarrier LMMSE ``R (R + I/P)^{-1} h_LS`` with the genie covariance."""
    R = channel_covariance(scenario)
    M = R.shape[0]
    W = np.linalg.solve((R + np.eye(M) / P).T, R.T).T  # R (R + I/P)^{-1}
    return (W @ ls_estimate(Y, P).T).T


def downlink_full_training(scenario: Scenario, snr_db: float, draw: int = 0, noise: bool = True) -> np.ndarray:
    """``M x N`` downlink observation with one orthogonal pilot symbol per antenna."""
    Y = math.sqrt(snr_to_power(snr_db)) * synthesize_channel(scenario, "downlink").T
    if noise:
        Y = Y + complex_noise(noise_rng(scenario, DOWNLINK_TRAINING_NOISE, draw), Y.shape)
    return Y


def linear_scheme(kind: str, scenario: Scenario, snr_db: float, draw: int = 0, trial: int = 0) -> ReconstructionReport:
    """LS or LMMSE on both links; downlink costs M symbols and M*N fed-back values."""
    from .metrics import spectral_efficiency

    c = scenario.config
    P = snr_to_power(snr_db)
    report = ReconstructionReport(kind, snr_db, trial, true_L=scenario.L)
    t0 = time.perf_counter()
    Y_ul = uplink_pilot_observation(scenario, snr_db, draw)
    Y_dl = downlink_full_training(scenario, snr_db, draw)
    if kind == "ls":
        H_ul_hat, H_dl_hat = ls_estimate(Y_ul, P), ls_estimate(Y_dl, P)
    elif kind == "lmmse":
        H_ul_hat, H_dl_hat = lmmse_estimate(Y_ul, scenario, P), lmmse_estimate(Y_dl, scenario, P)
    else:
        raise ValueError(f"unknown linear scheme {kind!r}")
    report.timings["estimate"] = time.perf_counter() - t0
    H_dl = synthesize_channel(scenario, "downlink")
    report.nmse_ul = nmse(H_ul_hat, synthesize_channel(scenario, "uplink"))
    report.nmse_dl = nmse(H_dl_hat, H_dl)
    report.se = spectral_efficiency(H_dl, H_dl_hat, P)
    report.dl_symbols = c.M
    report.feedback_count = c.M * c.N
    return report


def nomp_scheme(scenario: Scenario, snr_db: float, cfg: NompConfig = NompConfig(), draw: int = 0,
                trial: int = 0) -> ReconstructionReport:
    c = scenario.config
    P = snr_to_power(snr_db)
    report = ReconstructionReport("nomp", snr_db, trial, true_L=scenario.L)
    Y = uplink_pilot_observation(scenario, snr_db, draw)
    t0 = time.perf_counter()
    paths = nomp_estimate(Y, cfg, P, c.S)
    report.timings["nomp"] = time.perf_counter() - t0
    report.l_hat = len(paths)
    if not paths:
        raise ValueError("NOMP found no paths")
    report.nmse_ul = nmse(reconstruct_uplink(paths, c.M, c.N, c.S), synthesize_channel(scenario, "uplink"))
    finish_downlink(report, scenario, paths, snr_db, draw)
    return report


def subarray_estimates(Y: np.ndarray, S: int, P: float, settings: SchemeSettings = SchemeSettings()):
    """Stationary extraction on each subarray slice, re-referenced to the full array.

    Returns one list of paths per subarray; paths found on subarray ``s`` are
    visible on ``{s}`` only.
    """
    M = Y.shape[0]
    sub = M // S
    out = []
    for s in range(1, S + 1):
        m0 = (s - 1) * sub
        ex = extract_parameters(Y[m0:m0 + sub], 1, P, settings)
        phi = VisibilityEstimate(s, s)
        paths = []
        for p in ex.refined:
            # local steering starts at antenna 0 of the slice; re-reference to the full array
            alpha = p.alpha * np.exp(-2j * np.pi * m0 * p.theta)
            paths.append(replace(p, alpha=complex(alpha), phi=phi, alpha_coarse=None))
        out.append(paths)
    return out


def alternative_scheme(
    scenario: Scenario, snr_db: float, settings: SchemeSettings = SchemeSettings(), draw: int = 0,
    trial: int = 0,
) -> ReconstructionReport:
    """Run the stationary pipeline on each subarray slice and stack the results.

    Every path found on subarray ``s`` is kept as a separate path visible on
    ``{s}`` only; downlink training then needs one symbol per such path.
    """
    c = scenario.config
    P = snr_to_power(snr_db)
    report = ReconstructionReport("alternative", snr_db, trial, true_L=scenario.L)
    Y = uplink_pilot_observation(scenario, snr_db, draw)
    t0 = time.perf_counter()
    per_subarray = subarray_estimates(Y, c.S, P, settings)
    paths = [p for ps in per_subarray for p in ps]
    report.timings["extract"] = time.perf_counter() - t0
    report.l_hat = len(paths)
    report.diagnostics["per_subarray"] = [len(ps) for ps in per_subarray]
    if not paths:
        raise ValueError("no paths detected on any subarray")
    report.nmse_ul = nmse(reconstruct_uplink(paths, c.M, c.N, c.S), synthesize_channel(scenario, "uplink"))
    finish_downlink(report, scenario, paths, snr_db, draw)
    return report


def mean_angle_error(estimates, scenario: Scenario) -> float:
    """Mean circular |theta_hat - theta| over true paths, matching each to its nearest estimate."""
    errs = []
    for p in scenario.paths:
        best = min(
            (_circ(e.theta, p.theta) + _circ(e.gamma, p.gamma), _circ(e.theta, p.theta)) for e in estimates
        )
        errs.append(best[1])
    return float(np.mean(errs))


def per_subarray_angle_error(per_subarray, scenario: Scenario) -> float:
    """Mean circular angle error of per-subarray estimates.

    ``per_subarray[s-1]`` holds the estimates found on subarray ``s``.  Every
    (true path, subarray in its visibility region) pair contributes the error
    of that subarray's nearest estimate, so a path seen by several subarrays
    is scored once per subarray rather than by its luckiest estimate.
    """
    errs = []
    for s, ests in enumerate(per_subarray, start=1):
        if not ests:
            continue
        for p in scenario.paths:
            if p.s_start <= s <= p.s_end:
                e = min(ests, key=lambda e: _circ(e.theta, p.theta) + _circ(e.gamma, p.gamma))
                errs.append(_circ(e.theta, p.theta))
    if not errs:
        raise ValueError("no subarray estimate can be matched to a visible path")
    return float(np.mean(errs))


def _circ(a, b):
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)
