"""AMP joint activity and coarse data detection on the beacon antenna.

Model: Y = S X + W with a discrete spike-and-slab prior on every entry of X.
Noise variance is learned per slot by EM; the sparsity ratio of UE k is shared
across its T slots (nearest-neighbour sparsity pattern learning).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit, logsumexp

from .errors import NumericalDivergence
from .sysmodel import Constellation

D_FLOOR = 1e-12
V_FLOOR = 1e-12
SIGMA2_FLOOR = 1e-15
# learned sparsity is kept off 0 and 1, which are absorbing for the EM update
GAMMA_EPS = 1e-10
# early exit is only considered after this many iterations
MIN_ITERS = 5


@dataclass
class AmpState:
    V: np.ndarray        # M x T factor-node variances
    Z: np.ndarray        # M x T factor-node means
    C: np.ndarray        # K x T variable-node means
    D: np.ndarray        # K x T variable-node variances
    xhat: np.ndarray     # K x T posterior means
    v: np.ndarray        # K x T posterior variances
    pi: np.ndarray       # K x T belief indicators
    xi: np.ndarray       # K x T x L normalized symbol weights
    gamma: np.ndarray    # K x T sparsity ratios
    sigma2_t: np.ndarray # T learned noise variances
    iter: int = 0


@dataclass
class CoarseResult:
    Xhat: np.ndarray
    pi: np.ndarray
    active_set_hat: np.ndarray
    sigma2_t: np.ndarray
    iterations: int

    @property
    def Ka_hat(self) -> int:
        return len(self.active_set_hat)


def init_state(Y: np.ndarray, K: int, L: int, sparsity: float) -> AmpState:
    M, T = Y.shape
    sigma2 = np.maximum(np.sum(np.abs(Y) ** 2, axis=0) / ((100 + 1) * M), SIGMA2_FLOOR)
    return AmpState(
        V=np.ones((M, T)),
        Z=Y.astype(complex),
        C=np.zeros((K, T), dtype=complex),
        D=np.ones((K, T)),
        xhat=np.zeros((K, T), dtype=complex),
        v=np.ones((K, T)),
        pi=np.zeros((K, T)),
        xi=np.full((K, T, L), 1.0 / L),
        gamma=np.full((K, T), float(sparsity)),
        sigma2_t=sigma2,
    )


def amp_factor_update(state: AmpState, Y: np.ndarray, S: np.ndarray):
    """Undamped factor-node variance and Onsager-corrected mean."""
    V = (np.abs(S) ** 2) @ state.v
    Z = S @ state.xhat - V * (Y - state.Z) / (state.sigma2_t + state.V)
    return V, Z


def amp_variable_update(state: AmpState, Y: np.ndarray, S: np.ndarray):
    w = 1.0 / (state.sigma2_t + state.V)
    D = 1.0 / ((np.abs(S) ** 2).T @ w)
    D = np.maximum(D, D_FLOOR)
    C = state.xhat + D * (S.conj().T @ ((Y - state.Z) * w))
    return C, D


def posterior_step(C, D, gamma, constellation: Constellation):
    """Spike-and-slab posterior given the scalar channel C = x + CN(0, D).

    Returns (pi, xi, xhat, v) where xi holds the normalized symbol weights.
    """
    a = constellation.points
    C = np.asarray(C)
    D = np.asarray(D, dtype=float)[..., None]
    expo = -(np.abs(a) ** 2 - 2 * np.real(np.conj(a) * C[..., None])) / D
    log_sum = logsumexp(expo, axis=-1)
    xi = np.exp(expo - log_sum[..., None])
    gamma = np.asarray(gamma, dtype=float)
    with np.errstate(divide="ignore"):
        pi = expit(logit(gamma) + log_sum - np.log(constellation.L))
    xhat = pi * (xi @ a)
    v = np.maximum(pi * (xi @ (np.abs(a) ** 2)) - np.abs(xhat) ** 2, 0.0)
    return pi, xi, xhat, v


def em_update(state: AmpState, Y: np.ndarray):
    """Per-slot EM noise variance and slot-averaged sparsity ratio."""
    s2 = state.sigma2_t
    resid = np.abs(Y - state.Z) ** 2 / np.abs(1 + state.V / s2) ** 2
    sigma2_t = np.mean(resid + s2 * state.V / (s2 + state.V), axis=0)
    sigma2_t = np.maximum(sigma2_t, SIGMA2_FLOOR)
    gamma = np.repeat(state.pi.mean(axis=1, keepdims=True), state.pi.shape[1], axis=1)
    gamma = np.clip(gamma, GAMMA_EPS, 1 - GAMMA_EPS)
    return gamma, sigma2_t


def _check_finite(state: AmpState, iteration: int):
    for name in ("V", "Z", "C", "D", "xhat", "v", "sigma2_t"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise NumericalDivergence("coarse_dd", iteration, name)


def coarse_detect(
    Y_beacon,
    S,
    constellation: Constellation,
    rho_damp: float = 0.3,
    N_coarse: int = 50,
    sparsity_init: float = 0.1,
    tol: float = 1e-6,
    trace=None,
) -> CoarseResult:
    """Run the coarse detector on the M x T beacon-antenna observation.

    ``trace`` is an optional text stream; one CSV row per iteration
    (iteration, mean belief, mean learned noise variance, residual norm).
    """
    Y = np.asarray(Y_beacon, dtype=complex)
    S = np.asarray(S)
    K = S.shape[1]
    state = init_state(Y, K, constellation.L, sparsity_init)
    writer = csv.writer(trace) if trace is not None else None
    if writer is not None:
        writer.writerow(["iteration", "mean_belief", "sigma2", "residual_norm"])

    for i in range(1, N_coarse + 1):
        V_new, Z_new = amp_factor_update(state, Y, S)
        state.V = np.maximum(rho_damp * state.V + (1 - rho_damp) * V_new, V_FLOOR)
        state.Z = rho_damp * state.Z + (1 - rho_damp) * Z_new
        state.C, state.D = amp_variable_update(state, Y, S)
        x_prev = state.xhat
        state.pi, state.xi, state.xhat, state.v = posterior_step(
            state.C, state.D, state.gamma, constellation
        )
        state.gamma, state.sigma2_t = em_update(state, Y)
        state.iter = i
        _check_finite(state, i)
        if writer is not None:
            writer.writerow([i, float(state.pi.mean()), float(state.sigma2_t.mean()),
                             float(np.linalg.norm(Y - S @ state.xhat))])
        if i >= MIN_ITERS and np.max(np.abs(state.xhat - x_prev), initial=0.0) < tol:
            break

    active = np.flatnonzero(state.pi.mean(axis=1) > 0.5)
    return CoarseResult(
        Xhat=state.xhat, pi=state.pi, active_set_hat=active,
        sigma2_t=state.sigma2_t, iterations=state.iter,
    )
