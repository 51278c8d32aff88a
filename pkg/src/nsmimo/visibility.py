"""Visibility-region identification from projection powers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import delay_vector, steering_vector


@dataclass(frozen=True)
class VisibilityEstimate:
    s_start: int
    s_end: int

    def __post_init__(self):
        if not 1 <= self.s_start <= self.s_end:
            raise ValueError(f"invalid visibility span [{self.s_start}, {self.s_end}]")

    @property
    def span(self) -> int:
        return self.s_end - self.s_start + 1


def projection_powers(Y: np.ndarray, theta: float, gamma: float, S: int) -> np.ndarray:
    """``P_s = |(a(theta) * p({s}))^H Y q*(gamma)|^2`` for s = 1..S (index s-1)."""
    M, N = Y.shape
    z = np.conj(steering_vector(theta, M)) * (Y @ np.conj(delay_vector(gamma, N)))
    return np.abs(z.reshape(S, M // S).sum(axis=1)) ** 2


def projection_power(Y, theta, gamma, s, M, N, S) -> float:
    if not 1 <= s <= S:
        raise ValueError(f"subarray index {s} outside 1..{S}")
    if Y.shape != (M, N):
        raise ValueError(f"pilot grid shape {Y.shape} != {(M, N)}")
    return float(projection_powers(Y, theta, gamma, S)[s - 1])


def identify_by_box(S_l: int, powers) -> VisibilityEstimate:
    """Shrink [1, S] to ``S_l`` subarrays, dropping the weaker end at each step."""
    P = np.asarray(powers, dtype=float)
    S = P.size
    if not 1 <= S_l <= S:
        raise ValueError(f"S_l={S_l} outside 1..{S}")
    i, j = 1, S
    while j - i + 1 > S_l:
        if P[i - 1] >= P[j - 1]:
            j -= 1
        else:
            i += 1
    return VisibilityEstimate(i, j)


def identify_by_power(powers, delta: float = 0.2) -> VisibilityEstimate:
    """Outermost subarrays whose power reaches ``delta`` times the maximum."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    P = np.asarray(powers, dtype=float)
    S = P.size
    best = int(np.argmax(P))
    thr = delta * P[best]
    i, j = 0, S - 1
    while i < S - 1 and P[i] < thr:
        i += 1
    while j > 0 and P[j] < thr:
        j -= 1
    if i > j:
        return VisibilityEstimate(best + 1, best + 1)
    return VisibilityEstimate(i + 1, j + 1)
