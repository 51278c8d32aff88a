"""Beamformed downlink pilots, downlink gain estimation, feedback and reconstruction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .model import (
    DOWNLINK_NOISE,
    Scenario,
    complex_noise,
    delay_vector,
    noise_rng,
    path_signature,
    snr_to_power,
)
from .refinement import COND_LIMIT, IllConditionedError, PathEstimate


@dataclass
class FeedbackPayload:
    gains: list[complex]

    def to_json(self) -> str:
        return json.dumps([[g.real, g.imag] for g in self.gains])

    @classmethod
    def from_json(cls, text: str) -> "FeedbackPayload":
        return cls([complex(re, im) for re, im in json.loads(text)])

    def __len__(self):
        return len(self.gains)


def beamformer(est: PathEstimate, M: int, S: int) -> np.ndarray:
    """Unit-norm conjugate beam toward ``est.theta`` on the subarrays in ``est.phi``."""
    visible = est.phi.span * M // S
    return math.sqrt(1.0 / visible) * np.conj(
        path_signature(est.theta, est.phi.s_start, est.phi.s_end, M, S)
    )


def downlink_pilot_observation(
    scenario: Scenario, estimates, snr_db: float | None = None, draw: int = 0, noise: bool = True
) -> list[np.ndarray]:
    """Received pilots on symbols t = 1..len(estimates), one length-N vector each.

    The channel uses the true paths; the beams use the estimates.
    """
    if not estimates:
        raise ValueError("at least one estimated path is needed for downlink training")
    c = scenario.config
    P = c.P_dl if snr_db is None else snr_to_power(snr_db)
    H = np.zeros((c.N, c.M), dtype=complex)
    for p in scenario.paths:
        H += p.g_dl * np.outer(delay_vector(p.gamma, c.N), path_signature(p.theta, p.s_start, p.s_end, c.M, c.S))
    B = np.stack([beamformer(e, c.M, c.S) for e in estimates], axis=1)
    Yt = math.sqrt(P) * (H @ B)  # column t = symbol t
    if noise:
        Yt = Yt + complex_noise(noise_rng(scenario, DOWNLINK_NOISE, draw), Yt.shape)
    return [Yt[:, t] for t in range(Yt.shape[1])]


def downlink_design(estimates, M: int, N: int, S: int) -> np.ndarray:
    """Stacked ``(T*N) x L`` matrix with blocks ``q(gamma_l) (a_l * p_l)^T b_t``."""
    V = np.stack([path_signature(e.theta, e.phi.s_start, e.phi.s_end, M, S) for e in estimates], axis=1)
    Q = np.stack([delay_vector(e.gamma, N) for e in estimates], axis=1)
    B = np.stack([beamformer(e, M, S) for e in estimates], axis=1)
    beam_gain = V.T @ B  # [l, t] = v_l^T b_t
    blocks = [Q * beam_gain[:, t][None, :] for t in range(B.shape[1])]
    return np.concatenate(blocks, axis=0)


def estimate_downlink_gains(y_list, estimates, P_dl: float, M: int, S: int) -> FeedbackPayload:
    """LS downlink gains over all training symbols, scaled to estimate ``g_dl``."""
    N = len(y_list[0])
    A = downlink_design(estimates, M, N, S)
    y = np.concatenate(y_list)
    gram = A.conj().T @ A
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError(f"downlink normal equations ill-conditioned (cond={cond:.3g})")
    g = np.linalg.solve(gram, A.conj().T @ y) / math.sqrt(P_dl)
    return FeedbackPayload([complex(v) for v in g])


def reconstruct_downlink(estimates, payload: FeedbackPayload, M: int, N: int, S: int) -> np.ndarray:
    if len(estimates) != len(payload):
        raise ValueError(f"{len(estimates)} paths but {len(payload)} fed-back gains")
    H = np.zeros((N, M), dtype=complex)
    for e, g in zip(estimates, payload.gains):
        H += g * np.outer(delay_vector(e.gamma, N), path_signature(e.theta, e.phi.s_start, e.phi.s_end, M, S))
    return H
