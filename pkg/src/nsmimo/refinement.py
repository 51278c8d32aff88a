"""Coarse gains, Newton refinement of angles/delays, uplink reconstruction."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import delay_vector, path_signature, visible_rows
from .visibility import VisibilityEstimate


class IllConditionedError(np.linalg.LinAlgError):
    """Least-squares normal equations are (numerically) singular."""


@dataclass(frozen=True)
class RefinerConfig:
    rounds: int = 3
    newton_steps_per_visit: int = 1
    step_acceptance: bool = True
    fd_check_tol: float = 1e-4

    def __post_init__(self):
        if self.rounds < 1 or self.newton_steps_per_visit < 1:
            raise ValueError("rounds and newton_steps_per_visit must be >= 1")


@dataclass(frozen=True)
class PathEstimate:
    theta: float
    gamma: float
    alpha: complex
    phi: VisibilityEstimate
    alpha_coarse: complex | None = None


COND_LIMIT = 1e10


def _signature_matrices(estimates, M, N, S):
    V = np.stack([path_signature(t, ph.s_start, ph.s_end, M, S) for t, _, ph in estimates], axis=1)
    Q = np.stack([delay_vector(g, N) for _, g, _ in estimates], axis=1)
    return V, Q


def _as_triples(estimates):
    out = []
    for e in estimates:
        if isinstance(e, PathEstimate):
            out.append((e.theta, e.gamma, e.phi))
        else:
            t, g, ph = e
            out.append((t, g, ph))
    return out


def least_squares_gains(Y: np.ndarray, estimates, P: float, S: int) -> np.ndarray:
    """Joint LS gains of the components ``q(gamma) kron (a(theta) * p(phi))``.

    The solution of the normal equations is divided by ``sqrt(P)`` so that it
    estimates the path gain itself.
    """
    triples = _as_triples(estimates)
    if not triples:
        return np.zeros(0, dtype=complex)
    M, N = Y.shape
    V, Q = _signature_matrices(triples, M, N, S)
    gram = (V.conj().T @ V) * (Q.conj().T @ Q)
    rhs = np.sum(V.conj() * (Y @ Q.conj()), axis=0)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError(f"normal equations ill-conditioned (cond={cond:.3g})")
    return np.linalg.solve(gram, rhs) / math.sqrt(P)


coarse_gains = least_squares_gains


def order_paths(estimates, gains, M: int, S: int) -> list[int]:
    """Indices sorted by decreasing ``|gain|^2 * visible antenna count`` (stable)."""
    sub = M // S
    metric = [abs(g) ** 2 * e.span * sub for e, g in zip((_phi(e) for e in estimates), gains)]
    return sorted(range(len(metric)), key=lambda i: -metric[i])


def _phi(e):
    return e.phi if isinstance(e, PathEstimate) else e[2]


def component(theta, gamma, phi: VisibilityEstimate, M, N, S) -> np.ndarray:
    """``M x N`` pilot-domain component ``(a(theta) * p(phi)) q(gamma)^T``."""
    return np.outer(path_signature(theta, phi.s_start, phi.s_end, M, S), delay_vector(gamma, N))


def reconstruct_uplink(estimates, M: int, N: int, S: int) -> np.ndarray:
    """``N x M`` channel ``sum_l alpha_l (a * p) q^T`` from path estimates."""
    H = np.zeros((N, M), dtype=complex)
    for e in estimates:
        H += e.alpha * component(e.theta, e.gamma, e.phi, M, N, S).T
    return H


# --- matched-filter objective on a block of visible rows ---------------------


def objective_derivatives(Yv: np.ndarray, m: np.ndarray, theta: float, gamma: float):
    """Value, gradient and Hessian of ``G = |u^H Yv v*|^2 / len(m)``.

    ``Yv`` holds the visible rows, ``m`` their global antenna indices; ``u`` is
    the steering vector restricted to those rows and ``v`` the delay vector.
    Also returns the complex correlation ``z``.
    """
    N = Yv.shape[1]
    n = np.arange(N)
    u = np.exp(-2j * np.pi * m * theta)
    v = np.exp(-2j * np.pi * n * gamma)
    dm, dn = -2j * np.pi * m, -2j * np.pi * n
    U = np.stack([u, dm * u, dm * dm * u])
    W = Yv @ np.stack([v, dn * v, dn * dn * v], axis=1)
    Z = U @ W  # Z[i, k] = d^i/dtheta^i d^k/dgamma^k z
    z, zt, ztt, zg, zgg, ztg = Z[0, 0], Z[1, 0], Z[2, 0], Z[0, 1], Z[0, 2], Z[1, 1]
    scale = 1.0 / len(m)
    G = abs(z) ** 2 * scale
    grad = 2 * scale * np.array([(np.conj(z) * zt).real, (np.conj(z) * zg).real])
    h_tt = 2 * scale * (abs(zt) ** 2 + (np.conj(z) * ztt).real)
    h_gg = 2 * scale * (abs(zg) ** 2 + (np.conj(z) * zgg).real)
    h_tg = 2 * scale * ((np.conj(zt) * zg).real + (np.conj(z) * ztg).real)
    hess = np.array([[h_tt, h_tg], [h_tg, h_gg]])
    return G, grad, hess, z


def _objective(Yv, m, theta, gamma) -> float:
    u = np.exp(-2j * np.pi * m * theta)
    v = np.exp(-2j * np.pi * np.arange(Yv.shape[1]) * gamma)
    return abs(u @ Yv @ v) ** 2 / len(m)


def _newton_visit(Yv, m, theta, gamma, N, steps):
    """Newton ascent on G with improvement-only acceptance and a probing fallback.

    Returns the new (theta, gamma) and the number of fallback events.
    """
    fallbacks = 0
    # probes: half of a half-resolution cell along each axis
    h = np.array([1.0 / (4 * len(m)), 1.0 / (4 * N)])
    for _ in range(steps):
        G0, grad, hess, _ = objective_derivatives(Yv, m, theta, gamma)
        moved = False
        eig = np.linalg.eigvalsh(hess)
        if eig.max() < 0:
            # the full step and three halvings; keep the best improving one, so
            # a step that overshoots the peak (common from clamped boxes) loses
            # to a shorter step that lands closer
            step = -np.linalg.solve(hess, grad)
            best_val = G0
            for k in range(4):
                t1, g1 = theta + step[0] / 2**k, gamma + step[1] / 2**k
                val = _objective(Yv, m, t1, g1)
                if val > best_val:
                    best_val, best_pt = val, (t1, g1)
            if best_val > G0:
                theta, gamma = best_pt
                moved = True
        if moved:
            continue
        fallbacks += 1
        best = (G0, theta, gamma)
        for axis in (0, 1):
            for sign in (1.0, -1.0):
                t1 = best[1] + (sign * h[0] if axis == 0 else 0.0)
                g1 = best[2] + (sign * h[1] if axis == 1 else 0.0)
                val = _objective(Yv, m, t1, g1)
                if val > best[0]:
                    best = (val, t1, g1)
        theta, gamma = best[1], best[2]
    return theta % 1.0, gamma % 1.0, fallbacks


def newton_refine_path(
    Y_res_plus: np.ndarray, est: PathEstimate, P: float, S: int, cfg: RefinerConfig = RefinerConfig(),
    diagnostics: dict | None = None,
) -> PathEstimate:
    """Refine one path on its visible rows; the gain is re-solved in closed form."""
    M, N = Y_res_plus.shape
    rows = visible_rows(est.phi.s_start, est.phi.s_end, M, S)
    Yv = Y_res_plus[rows]
    m = np.arange(M)[rows]
    theta, gamma, fb = _newton_visit(Yv, m, est.theta, est.gamma, N, cfg.newton_steps_per_visit)
    if cfg.step_acceptance and _objective(Yv, m, theta, gamma) < _objective(Yv, m, est.theta, est.gamma):
        theta, gamma = est.theta, est.gamma
    z = np.exp(-2j * np.pi * m * theta) @ Yv @ np.exp(-2j * np.pi * np.arange(N) * gamma)
    alpha = z / (math.sqrt(P) * len(m) * N)
    if diagnostics is not None:
        diagnostics["fallbacks"] = diagnostics.get("fallbacks", 0) + fb
    return replace(est, theta=float(theta), gamma=float(gamma), alpha=complex(alpha))


def refine_all(
    Y: np.ndarray, estimates, cfg: RefinerConfig, P: float, S: int, trace: list | None = None
) -> tuple[list[PathEstimate], np.ndarray]:
    """Cyclic per-path refinement against the shared residue.

    ``estimates`` are (theta, gamma, VisibilityEstimate) triples or
    PathEstimate objects.  Returns the refined paths (gains jointly re-solved
    at the refined parameters) and the final residue.  When ``trace`` is a
    list, one record per visit is appended.
    """
    triples = _as_triples(estimates)
    M, N = Y.shape
    if not triples:
        return [], Y.copy()
    sq = math.sqrt(P)
    gains = least_squares_gains(Y, triples, P, S)
    paths = [PathEstimate(t, g, complex(a), ph, alpha_coarse=complex(a)) for (t, g, ph), a in zip(triples, gains)]
    res = Y.astype(complex, copy=True)
    for p in paths:
        res -= sq * p.alpha * component(p.theta, p.gamma, p.phi, M, N, S)
    order = order_paths(paths, [p.alpha for p in paths], M, S)
    for rnd in range(cfg.rounds):
        for l in order:
            p = paths[l]
            rows = visible_rows(p.phi.s_start, p.phi.s_end, M, S)
            comp_old = component(p.theta, p.gamma, p.phi, M, N, S)[rows]
            block = res[rows] + sq * p.alpha * comp_old
            plus = np.zeros_like(res)
            plus[rows] = block
            diag: dict = {}
            new = newton_refine_path(plus, p, P, S, cfg, diag)
            res[rows] = block - sq * new.alpha * component(new.theta, new.gamma, new.phi, M, N, S)[rows]
            paths[l] = new
            if trace is not None:
                trace.append({
                    "round": rnd, "path": l, "theta": new.theta, "gamma": new.gamma,
                    "residual_power": float(np.vdot(res, res).real), "fallbacks": diag.get("fallbacks", 0),
                })
    gains = least_squares_gains(Y, paths, P, S)
    paths = [replace(p, alpha=complex(a)) for p, a in zip(paths, gains)]
    res = Y - sq * reconstruct_uplink(paths, M, N, S).T
    return paths, res
