"""The proposed reconstruction scheme wired end to end."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .detection import Detection, DetectorConfig, coarse_estimates, detect_boxes
from .downlink import downlink_pilot_observation, estimate_downlink_gains, reconstruct_downlink
from .image import ImageConfig, matched_filter_image
from .metrics import ReconstructionReport, nmse, spectral_efficiency
from .model import Scenario, snr_to_power, synthesize_channel, uplink_pilot_observation
from .refinement import PathEstimate, RefinerConfig, least_squares_gains, refine_all, reconstruct_uplink
from .visibility import VisibilityEstimate, identify_by_box, identify_by_power, projection_powers


@dataclass(frozen=True)
class SchemeSettings:
    image: ImageConfig = ImageConfig()
    refiner: RefinerConfig = RefinerConfig()
    detector: DetectorConfig = DetectorConfig()
    identifier: str = "power"
    delta: float = 0.2


@dataclass
class Extraction:
    detections: list[Detection]
    coarse: list[PathEstimate]
    refined: list[PathEstimate]
    powers: list[np.ndarray] = field(default_factory=list)
    S_l: list[int] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)


def identify(identifier: str, S_l: int, powers, delta: float) -> VisibilityEstimate:
    if identifier == "box":
        return identify_by_box(S_l, powers)
    if identifier == "power":
        return identify_by_power(powers, delta)
    raise ValueError(f"unknown identifier {identifier!r}")


def extract_parameters(
    Y: np.ndarray, S: int, P: float, settings: SchemeSettings = SchemeSettings(),
    detections: list[Detection] | None = None,
) -> Extraction:
    """Image -> detections -> coarse (theta, gamma, phi) -> refined paths."""
    M, N = Y.shape
    timings = {}
    t0 = time.perf_counter()
    if detections is None:
        B = matched_filter_image(Y, settings.image)
        timings["image"] = time.perf_counter() - t0
        t1 = time.perf_counter()
        detections = detect_boxes(B, M, N, S, settings.image, settings.detector)
        timings["detect"] = time.perf_counter() - t1
    t2 = time.perf_counter()
    triples, powers, sizes = [], [], []
    for det in detections:
        ce = coarse_estimates(det, M, N, S)
        pw = projection_powers(Y, ce.theta_t, ce.gamma_t, S)
        phi = identify(settings.identifier, ce.S_l, pw, settings.delta)
        triples.append((ce.theta_t, ce.gamma_t, phi))
        powers.append(pw)
        sizes.append(ce.S_l)
    timings["identify"] = time.perf_counter() - t2
    if not triples:
        return Extraction(detections, [], [], powers, sizes, timings)
    gains = least_squares_gains(Y, triples, P, S)
    coarse = [PathEstimate(t, g, complex(a), ph, complex(a)) for (t, g, ph), a in zip(triples, gains)]
    t3 = time.perf_counter()
    trace: list = []
    refined, _ = refine_all(Y, triples, settings.refiner, P, S, trace)
    timings["refine"] = time.perf_counter() - t3
    return Extraction(detections, coarse, refined, powers, sizes, timings, trace)


def proposed_scheme(
    scenario: Scenario, snr_db: float, settings: SchemeSettings = SchemeSettings(), draw: int = 0,
    trial: int = 0, detections: list[Detection] | None = None,
) -> ReconstructionReport:
    c = scenario.config
    P = snr_to_power(snr_db)
    report = ReconstructionReport("proposed", snr_db, trial, true_L=scenario.L)
    Y = uplink_pilot_observation(scenario, snr_db, draw)
    ex = extract_parameters(Y, c.S, P, settings, detections)
    report.timings.update(ex.timings)
    report.l_hat = len(ex.refined)
    if not ex.refined:
        raise ValueError("no paths detected")
    H_ul = synthesize_channel(scenario, "uplink")
    report.nmse_ul_coarse = nmse(reconstruct_uplink(ex.coarse, c.M, c.N, c.S), H_ul)
    report.nmse_ul = nmse(reconstruct_uplink(ex.refined, c.M, c.N, c.S), H_ul)
    finish_downlink(report, scenario, ex.refined, snr_db, draw)
    report.diagnostics["refine_trace"] = ex.trace
    report.diagnostics["paths"] = [
        {"theta": p.theta, "gamma": p.gamma, "s_start": p.phi.s_start, "s_end": p.phi.s_end}
        for p in ex.refined
    ]
    return report


def finish_downlink(report: ReconstructionReport, scenario: Scenario, paths, snr_db: float, draw: int) -> None:
    """Beamformed training, LS gains, feedback, reconstruction and metrics."""
    c = scenario.config
    P = snr_to_power(snr_db)
    t0 = time.perf_counter()
    y = downlink_pilot_observation(scenario, paths, snr_db, draw)
    payload = estimate_downlink_gains(y, paths, P, c.M, c.S)
    H_hat = reconstruct_downlink(paths, payload, c.M, c.N, c.S)
    report.timings["downlink"] = time.perf_counter() - t0
    H_dl = synthesize_channel(scenario, "downlink")
    report.nmse_dl = nmse(H_hat, H_dl)
    report.se = spectral_efficiency(H_dl, H_hat, P)
    report.dl_symbols = len(y)
    report.feedback_count = len(payload)
    report.diagnostics["feedback"] = payload.to_json()
