"""Iterative receiver: coarse detection, then alternating data-aided CE and LMMSE."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ce_gmmv import build_ce_problem, gmmv_amp, ls_fallback
from .coarse_dd import coarse_detect
from .errors import ShapeMismatch, SingularSystem, StageError
from .sysmodel import Constellation, SystemConfig

SIGMA2_FLOOR = 1e-15


@dataclass
class DetectionResult:
    active_set_hat: np.ndarray
    Xhat: np.ndarray                  # K x T soft estimates, zero outside the detected set
    Xhard: np.ndarray                 # K x T hard decisions, zero outside the detected set
    sym_idx_hat: np.ndarray           # K x T decided symbol indices, -1 outside the set
    bits_hat: np.ndarray              # Ka_hat x T x bits_per_symbol
    H_equ_hat: np.ndarray | None      # N x M x Ka_hat, None without a CE stage
    history: list = field(default_factory=list)  # (Xhat, H_equ_hat) per stage; stage 0 = coarse
    ce_path: list = field(default_factory=list)  # "gmmv" or "ls" per outer iteration


def build_dd_operator(H_equ_hat, S, active_set_hat, Y=None):
    """Stack the per-antenna M x Ka operators into an NM x Ka matrix.

    Row n*M + m holds H_equ_hat[n, m, :] * S[m, active]. When ``Y`` is given
    the matching NM x T stacked observation is returned as well.
    """
    active = np.asarray(active_set_hat, dtype=int)
    N, M, Ka = H_equ_hat.shape
    if S.shape[0] != M or Ka != active.size:
        raise ShapeMismatch("CE estimate does not match codes / active set")
    Phi = (H_equ_hat * S[:, active][None]).reshape(N * M, Ka)
    if Y is None:
        return Phi
    if Y.shape[:2] != (N, M):
        raise ShapeMismatch("received tensor does not match CE estimate")
    return Phi, Y.reshape(N * M, Y.shape[2])


def lmmse_detect(Phi_DD, Y_DD, sigma2_hat: float) -> np.ndarray:
    if sigma2_hat <= 0:
        raise ValueError("sigma2_hat must be positive")
    PhiH = Phi_DD.conj().T
    G = PhiH @ Phi_DD + sigma2_hat * np.eye(Phi_DD.shape[1])
    try:
        return np.linalg.solve(G, PhiH @ Y_DD)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None


def hard_decision(X, constellation: Constellation):
    """Nearest-point slicer; ties go to the lowest symbol index."""
    X = np.asarray(X)
    dist = np.abs(X[..., None] - constellation.points) ** 2
    idx = np.argmin(dist, axis=-1)
    return constellation.points[idx], constellation.bits_of(idx), idx


def _finish(active, Xhat, constellation, H_equ_hat, history, ce_path):
    K, T = Xhat.shape
    Xhat = Xhat.copy()
    mask = np.zeros(K, dtype=bool)
    mask[active] = True
    Xhat[~mask] = 0
    Xhard = np.zeros_like(Xhat)
    idx_all = np.full((K, T), -1, dtype=np.int64)
    sym, bits, idx = hard_decision(Xhat[active], constellation)
    Xhard[active] = sym
    idx_all[active] = idx
    return DetectionResult(active_set_hat=active, Xhat=Xhat, Xhard=Xhard, sym_idx_hat=idx_all,
                           bits_hat=bits, H_equ_hat=H_equ_hat, history=history, ce_path=ce_path)


def _run(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ArithmeticError, ValueError) as exc:
        raise StageError(stage, exc) from exc


def iterative_detect(Y, S, config: SystemConfig, constellation: Constellation, N_iter=None) -> DetectionResult:
    """Coarse AMP on the beacon antenna, then ``N_iter`` rounds of CE + LMMSE."""
    N_iter = config.N_iter if N_iter is None else N_iter
    sparsity = config.Ka / config.K if config.Ka > 0 else 0.1
    coarse = _run("coarse_dd", coarse_detect, Y[config.eta - 1], S, constellation,
                  config.rho_damp, config.N_coarse, sparsity)
    active = coarse.active_set_hat
    Xhat = coarse.Xhat.copy()
    history = [(Xhat.copy(), None)]
    if active.size == 0:
        return _finish(active, Xhat, constellation, None, history, [])

    sigma2_coarse = max(float(np.mean(coarse.sigma2_t)), SIGMA2_FLOOR)
    H_equ_hat = None
    ce_path = []
    for _ in range(N_iter):
        problem = build_ce_problem(Y, S, Xhat, active)
        if problem.overdetermined:
            ce = _run("ce_ls", ls_fallback, problem, sigma2_coarse)
            ce_path.append("ls")
        else:
            ce = _run("ce_gmmv", gmmv_amp, problem, config.N_gmmv, sigma2_coarse, config.rho_damp)
            ce_path.append("gmmv")
        H_equ_hat = ce.H_equ_hat
        Phi, Y_DD = build_dd_operator(H_equ_hat, S, active, Y)
        Xt = _run("fine_dd", lmmse_detect, Phi, Y_DD, max(ce.sigma2_hat, SIGMA2_FLOOR))
        Xhat[active] = Xt
        history.append((Xhat.copy(), H_equ_hat))
    return _finish(active, Xhat, constellation, H_equ_hat, history, ce_path)
