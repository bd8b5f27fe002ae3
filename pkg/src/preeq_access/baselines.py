"""Reference schemes: pilot-based JADCE + coherent LMMSE, and single-antenna JADD."""

from __future__ import annotations

import enum
import functools

import numpy as np

from .ce_gmmv import CeProblem, dft_matrix, gmmv_amp, ls_fallback, to_angular, to_spatial
from .channel import generate_channel
from .coarse_dd import coarse_detect
from .detector import DetectionResult, _finish, _run, build_dd_operator, lmmse_detect
from .sysmodel import Constellation, SystemConfig
from .uplink import synthesize_uplink

SIGMA2_FLOOR = 1e-15
# spawn key of the RNG stream reserved for threshold calibration
CALIBRATION_STREAM = 2**31 - 1


class BaselineKind(str, enum.Enum):
    PilotGmmvAmp = "pilot_gmmv_amp"
    PilotSomp = "pilot_somp"
    SingleAntennaAmp = "single_antenna_amp"
    SingleAntennaSomp = "single_antenna_somp"


ALIASES = {
    "baseline1": BaselineKind.PilotGmmvAmp,
    "baseline2": BaselineKind.PilotSomp,
    "baseline3": BaselineKind.SingleAntennaAmp,
    "baseline4": BaselineKind.SingleAntennaSomp,
}


def parse_kind(name) -> BaselineKind:
    if isinstance(name, BaselineKind):
        return name
    return ALIASES.get(name) or BaselineKind(name)


def somp_recover(Y_obs, Phi, max_sparsity=None, residual_threshold=0.0):
    """Simultaneous OMP for Y_obs = Phi X with row-sparse X.

    Stops after ``max_sparsity`` atoms or once the residual Frobenius norm drops
    to ``residual_threshold``. Returns (X_hat, support, residual_norms) where
    residual_norms[0] is the norm of Y_obs.
    """
    Y_obs = np.asarray(Y_obs)
    if Y_obs.ndim == 1:
        Y_obs = Y_obs[:, None]
    n = Phi.shape[1]
    limit = min(n, Phi.shape[0]) if max_sparsity is None else min(max_sparsity, n)
    col_norm = np.linalg.norm(Phi, axis=0)
    col_norm[col_norm == 0] = np.inf

    support = []
    coef = np.zeros((0, Y_obs.shape[1]), dtype=complex)
    resid = Y_obs.astype(complex)
    norms = [np.linalg.norm(resid)]
    while len(support) < limit and norms[-1] > residual_threshold:
        score = np.abs(Phi.conj().T @ resid).sum(axis=1) / col_norm
        score[support] = -np.inf
        j = int(np.argmax(score))
        if score[j] <= 0:
            break
        support.append(j)
        coef = np.linalg.lstsq(Phi[:, support], Y_obs, rcond=None)[0]
        resid = Y_obs - Phi[:, support] @ coef
        norms.append(np.linalg.norm(resid))

    X = np.zeros((n, Y_obs.shape[1]), dtype=coef.dtype if support else complex)
    if support:
        X[support] = coef
    return X, np.array(sorted(support), dtype=int), norms


@functools.lru_cache(maxsize=32)
def median_active_row_energy(config: SystemConfig) -> float:
    """Median per-UE channel energy over N x M, from a held-out channel draw."""
    ss = np.random.SeedSequence(config.seed, spawn_key=(CALIBRATION_STREAM,))
    H = generate_channel(np.random.default_rng(ss), config).H
    return float(np.median(np.sum(np.abs(H) ** 2, axis=(0, 1))))


def pilot_matrix(rng: np.random.Generator, T: int, K: int) -> np.ndarray:
    """T x K i.i.d. CN(0,1) pilots, reused on every subcarrier."""
    return (rng.standard_normal((T, K)) + 1j * rng.standard_normal((T, K))) / np.sqrt(2)


def pilot_observation(H, P, alpha, sigma2, rng):
    """N x M x T received pilot block: Y[n, m, t] = sum_k H[n, m, k] P[t, k] alpha_k + noise."""
    N, M, _ = H.shape
    T = P.shape[0]
    Y = np.einsum("nmk,tk->nmt", H * alpha[None, None, :], P)
    W = rng.standard_normal((N, M, T)) + 1j * rng.standard_normal((N, M, T))
    return Y + np.sqrt(sigma2 / 2) * W


def _empty(K, T, constellation):
    return _finish(np.array([], dtype=int), np.zeros((K, T), dtype=complex), constellation, None, [], [])


def _coherent_dd(H_hat, active, S, truth_alpha, X, g, sigma2_data, sigma2_hat, constellation, rng, H):
    """LMMSE detection on a data frame sent after the pilot block."""
    N, M, K = H.shape
    T = X.shape[1]
    Y_data = synthesize_uplink(H, g, np.ones((M, K), dtype=complex), S, truth_alpha, X, sigma2_data, rng)
    H_act = H_hat[:, :, active]
    Phi, Y_DD = build_dd_operator(H_act, S, active, Y_data)
    Xt = _run("fine_dd", lmmse_detect, Phi, Y_DD, max(sigma2_hat, SIGMA2_FLOOR))
    Xhat = np.zeros((K, T), dtype=complex)
    Xhat[active] = Xt
    return _finish(active, Xhat, constellation, H_act, [(Xhat.copy(), H_act)], [])


def run_baseline(kind, scenario, config: SystemConfig, rng: np.random.Generator | None = None) -> DetectionResult:
    """Run one reference scheme on a scenario built by the harness.

    ``scenario`` needs attributes S, H, g, truth (FrameTruth with Y), sigma2 and
    constellation. Pilot schemes draw pilots, pilot noise and a data frame from
    ``rng``; their CSI estimate is of the raw channel H (no pre-equalization).
    """
    kind = parse_kind(kind)
    constellation: Constellation = scenario.constellation
    S, truth = scenario.S, scenario.truth
    K, T = config.K, config.T
    sparsity = config.Ka / K if config.Ka > 0 else 0.1

    if kind is BaselineKind.SingleAntennaAmp:
        coarse = _run("coarse_dd", coarse_detect, truth.Y[config.eta - 1], S, constellation,
                      config.rho_damp, config.N_coarse, sparsity)
        return _finish(coarse.active_set_hat, coarse.Xhat, constellation, None,
                       [(coarse.Xhat.copy(), None)], [])

    if kind is BaselineKind.SingleAntennaSomp:
        if config.Ka == 0:
            return _empty(K, T, constellation)
        X, support, _ = somp_recover(truth.Y[config.eta - 1], S, max_sparsity=config.Ka)
        return _finish(support, X, constellation, None, [(X.copy(), None)], [])

    if rng is None:
        raise ValueError("pilot baselines need an rng for pilots and the data frame")
    H, g, sigma2 = scenario.H, scenario.g, scenario.sigma2
    N, M = H.shape[:2]
    P = pilot_matrix(rng, T, K)
    alpha = truth.alpha.astype(float)
    Y_pilot = pilot_observation(H, P, alpha, sigma2, rng)
    U = dft_matrix(N)
    R = to_angular(Y_pilot, U)

    if kind is BaselineKind.PilotSomp:
        if config.Ka == 0:
            return _empty(K, T, constellation)
        Y_obs = np.transpose(R, (1, 0, 2)).reshape(T, M * N)
        X, support, norms = somp_recover(Y_obs, P, max_sparsity=config.Ka)
        A = np.transpose(X.reshape(K, M, N), (1, 0, 2))
        dof = max(T - len(support), 1)
        sigma2_hat = norms[-1] ** 2 / (dof * M * N)
        H_hat = to_spatial(A, U)
        return _coherent_dd(H_hat, support, S, truth.alpha, truth.X, g, sigma2,
                            sigma2_hat, constellation, rng, H)

    problem = CeProblem(Phi=np.broadcast_to(P, (M, T, K)), R=R, U=U)
    if problem.overdetermined:
        ce = _run("ce_ls", ls_fallback, problem, max(sigma2, SIGMA2_FLOOR))
    else:
        ce = _run("ce_gmmv", gmmv_amp, problem, config.N_gmmv, None, config.rho_damp, sparsity)
    energy = np.sum(np.abs(ce.A_hat) ** 2, axis=(0, 2))
    threshold = config.pilot_threshold * median_active_row_energy(config)
    active = np.flatnonzero(energy > threshold)
    if active.size == 0:
        return _empty(K, T, constellation)
    return _coherent_dd(ce.H_equ_hat, active, S, truth.alpha, truth.X, g, sigma2,
                        ce.sigma2_hat, constellation, rng, H)
