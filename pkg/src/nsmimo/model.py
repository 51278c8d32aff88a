"""System model: scenarios, array/delay signatures, channels and pilot observations.

Layout conventions used throughout the package:

* channels (``H_ul``, ``H_dl``) are ``N x M`` arrays (subcarrier x antenna);
* pilot observations (``Y_ul``) are ``M x N`` arrays (antenna x subcarrier).

Conversions between the two are always an explicit ``.T``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

UPLINK_NOISE = 0
DOWNLINK_NOISE = 1
DOWNLINK_TRAINING_NOISE = 2


class ConfigurationError(ValueError):
    """Raised for inconsistent system or experiment parameters."""


@dataclass(frozen=True)
class SystemConfig:
    M: int = 128
    N: int = 128
    S: int = 4
    d_over_lambda: float = 0.5
    delta_f: float = 15e3
    f_ul: float = 2.58e9
    f_dl: float = 2.64e9
    P_ul: float = 1.0
    P_dl: float = 1.0

    def __post_init__(self):
        if self.M < 1 or self.N < 1 or self.S < 1:
            raise ConfigurationError(f"M, N, S must be positive, got {self.M}, {self.N}, {self.S}")
        if self.M % self.S:
            raise ConfigurationError(f"M={self.M} is not divisible by S={self.S}")
        if self.delta_f <= 0:
            raise ConfigurationError("delta_f must be positive")
        if self.P_ul <= 0 or self.P_dl <= 0:
            raise ConfigurationError("transmit powers must be positive")

    @property
    def subarray_size(self) -> int:
        return self.M // self.S


@dataclass(frozen=True)
class PathParams:
    """One propagation path; angle and delay are normalized to [0, 1)."""

    theta: float
    gamma: float
    alpha: complex
    g_dl: complex
    s_start: int
    s_end: int

    @property
    def span(self) -> int:
        return self.s_end - self.s_start + 1


@dataclass(frozen=True)
class Scenario:
    config: SystemConfig
    paths: tuple[PathParams, ...]
    rng_seed: int = 0

    @property
    def L(self) -> int:
        return len(self.paths)

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        paths = [
            {
                "theta": p.theta,
                "gamma": p.gamma,
                "alpha_re": float(np.real(p.alpha)),
                "alpha_im": float(np.imag(p.alpha)),
                "g_dl_re": float(np.real(p.g_dl)),
                "g_dl_im": float(np.imag(p.g_dl)),
                "s_start": p.s_start,
                "s_end": p.s_end,
            }
            for p in self.paths
        ]
        return {"config": cfg, "paths": paths, "seed": self.rng_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        config = SystemConfig(**d["config"])
        paths = tuple(
            PathParams(
                theta=float(p["theta"]),
                gamma=float(p["gamma"]),
                alpha=complex(p["alpha_re"], p["alpha_im"]),
                g_dl=complex(p["g_dl_re"], p["g_dl_im"]),
                s_start=int(p["s_start"]),
                s_end=int(p["s_end"]),
            )
            for p in d["paths"]
        )
        return cls(config, paths, int(d.get("seed", 0)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def sample_scenario(config: SystemConfig, L_range=(1, 10), rng_seed: int = 0) -> Scenario:
    """Draw a random scenario.

    Path count is uniform over ``L_range`` (inclusive), angles/delays uniform in
    [0, 1), ``|alpha| = |g_dl| = beta ~ U[0.5, 1]`` with independent uniform
    phases, and the visibility pair ``(s_start, s_end)`` uniform over all
    ordered pairs ``1 <= s_start <= s_end <= S``.
    """
    lo, hi = int(L_range[0]), int(L_range[1])
    if lo < 1 or hi < lo:
        raise ConfigurationError(f"invalid L_range {L_range}")
    if not isinstance(config, SystemConfig):
        raise ConfigurationError("config must be a SystemConfig")
    rng = np.random.default_rng(rng_seed)
    S = config.S
    pairs = [(a, b) for a in range(1, S + 1) for b in range(a, S + 1)]
    L = int(rng.integers(lo, hi + 1))
    paths = []
    for _ in range(L):
        theta, gamma = rng.random(2)
        beta = rng.uniform(0.5, 1.0)
        phi_ul, phi_dl = rng.uniform(0.0, 2 * np.pi, size=2)
        a, b = pairs[int(rng.integers(len(pairs)))]
        paths.append(
            PathParams(
                theta=float(theta),
                gamma=float(gamma),
                alpha=complex(beta * np.exp(1j * phi_ul)),
                g_dl=complex(beta * np.exp(1j * phi_dl)),
                s_start=a,
                s_end=b,
            )
        )
    return Scenario(config, tuple(paths), int(rng_seed))


def steering_vector(theta, M: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(M) * theta)


def delay_vector(gamma, N: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(N) * gamma)


def selection_vector(s_start: int, s_end: int, M: int, S: int) -> np.ndarray:
    """0/1 mask of the antennas whose subarray index lies in [s_start, s_end]."""
    m = np.arange(1, M + 1)
    sub = -(-m * S // M)  # ceil(m S / M) in integers
    return ((sub >= s_start) & (sub <= s_end)).astype(float)


def visible_rows(s_start: int, s_end: int, M: int, S: int) -> slice:
    """0-based row slice of the antennas in subarrays s_start..s_end."""
    size = M // S
    return slice((s_start - 1) * size, s_end * size)


def effective_uplink_gain(g_ul: complex, tau: float, f_ul: float, f_dl: float) -> complex:
    return complex(g_ul * np.exp(2j * np.pi * (f_ul - f_dl) * tau))


def path_signature(theta, s_start, s_end, M, S) -> np.ndarray:
    """Masked steering vector ``a(theta) * p(Phi)``."""
    return steering_vector(theta, M) * selection_vector(s_start, s_end, M, S)


def _channel(components, M, N, S) -> np.ndarray:
    H = np.zeros((N, M), dtype=complex)
    for gain, theta, gamma, s_start, s_end in components:
        v = path_signature(theta, s_start, s_end, M, S)
        H += gain * np.outer(delay_vector(gamma, N), v)
    return H


def synthesize_channel(scenario: Scenario, link: str = "uplink") -> np.ndarray:
    """Ground-truth ``N x M`` channel for ``link`` in {"uplink", "downlink"}."""
    if link not in ("uplink", "downlink"):
        raise ValueError(f"unknown link {link!r}")
    c = scenario.config
    comps = [
        (p.alpha if link == "uplink" else p.g_dl, p.theta, p.gamma, p.s_start, p.s_end)
        for p in scenario.paths
    ]
    return _channel(comps, c.M, c.N, c.S)


def noise_rng(scenario: Scenario, stream: int, draw: int = 0) -> np.random.Generator:
    """Independent generator per (scenario seed, noise stream, draw index)."""
    ss = np.random.SeedSequence(scenario.rng_seed, spawn_key=(stream, draw))
    return np.random.default_rng(ss)


def complex_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Circular complex Gaussian samples with unit variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def snr_to_power(snr_db) -> float:
    return 10.0 ** (snr_db / 10.0)


def uplink_pilot_observation(
    scenario: Scenario, snr_db: float | None = None, draw: int = 0, noise: bool = True
) -> np.ndarray:
    """``M x N`` received all-one uplink pilots.

    ``snr_db`` sets ``P_ul = 10**(snr_db/10)``; ``None`` uses the config's
    ``P_ul``. ``noise=False`` returns the noiseless part.
    """
    c = scenario.config
    P = c.P_ul if snr_db is None else snr_to_power(snr_db)
    Y = math.sqrt(P) * synthesize_channel(scenario, "uplink").T
    if noise:
        Y = Y + complex_noise(noise_rng(scenario, UPLINK_NOISE, draw), (c.M, c.N))
    return Y


def subarray_visibility(scenario: Scenario, s: int) -> set[int]:
    """Indices (0-based, into ``scenario.paths``) of the paths subarray ``s`` sees."""
    if not 1 <= s <= scenario.config.S:
        raise ValueError(f"subarray index {s} outside 1..{scenario.config.S}")
    return {i for i, p in enumerate(scenario.paths) if p.s_start <= s <= p.s_end}
