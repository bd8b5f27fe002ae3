"""UE-side pre-equalization and synthesis of the received tensor at the BS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import exp1

from .channel import mean_large_scale_gain
from .errors import ShapeMismatch
from .sysmodel import Constellation, SystemConfig


@dataclass(frozen=True)
class PreEqualization:
    Theta: np.ndarray      # M x K
    null_mask: np.ndarray  # M x K, True where nulled
    p_e: float             # mean |theta|^2 over non-nulled entries


@dataclass(frozen=True)
class FrameTruth:
    active_set: np.ndarray   # sorted UE indices
    alpha: np.ndarray        # K activity indicators
    X: np.ndarray            # K x T, zero rows for inactive UEs
    sym_idx: np.ndarray      # K x T constellation indices, -1 when inactive
    bits: np.ndarray         # Ka x T x bits_per_symbol
    Y: np.ndarray | None = None
    sigma2: float = 0.0
    p: np.ndarray | None = None


def pre_equalize(h_beacon_row, h0: float):
    """Channel inversion with nulling of deep fades (|h| < h0)."""
    h = np.asarray(h_beacon_row)
    nulled = np.abs(h) < h0
    theta = np.zeros(h.shape, dtype=complex)
    np.divide(1.0, h, out=theta, where=~nulled)
    return theta, nulled


def pre_equalization(H: np.ndarray, eta: int, h0: float) -> PreEqualization:
    """Pre-equalization factors of all UEs against beacon antenna ``eta`` (1-based)."""
    theta, nulled = pre_equalize(H[eta - 1], h0)
    kept = np.abs(theta[~nulled]) ** 2
    p_e = float(kept.mean()) if kept.size else 0.0
    return PreEqualization(Theta=theta, null_mask=nulled, p_e=p_e)


def nominal_preeq_power(h0: float) -> float:
    """E[|theta|^2] for a CN(0,1) beacon coefficient under nulling at h0."""
    return float(exp1(h0 ** 2))


def draw_frame(rng: np.random.Generator, config: SystemConfig, constellation: Constellation) -> FrameTruth:
    K, Ka, T = config.K, config.Ka, config.T
    active = np.sort(rng.choice(K, size=Ka, replace=False))
    alpha = np.zeros(K, dtype=np.int8)
    alpha[active] = 1
    sym_idx = np.full((K, T), -1, dtype=np.int64)
    sym_idx[active] = rng.integers(0, constellation.L, size=(Ka, T))
    X = np.zeros((K, T), dtype=complex)
    X[active] = constellation.points[sym_idx[active]]
    bits = constellation.bits_of(sym_idx[active])
    return FrameTruth(active_set=active, alpha=alpha, X=X, sym_idx=sym_idx, bits=bits)


def noise_variance(Bs: float, noise_psd_dbm_hz: float, M: int) -> float:
    """Per-subcarrier thermal noise power in watts."""
    if Bs <= 0:
        raise ValueError("bandwidth must be positive")
    total = 10 ** ((noise_psd_dbm_hz - 30) / 10) * Bs
    return total / M


def effective_noise_variance(config: SystemConfig) -> float:
    """Noise variance relative to a unit-power received UE signal.

    Without an explicit ``snr_db`` the operating point is a UE with the
    population-mean large-scale gain transmitting ``tx_power_dbm`` spread over
    the M subcarriers, with pre-equalization costing E[|theta|^2].
    """
    if config.snr_db is not None:
        return 0.0 if np.isposinf(config.snr_db) else 10 ** (-config.snr_db / 10)
    per_sc_tx = 10 ** ((config.tx_power_dbm - 30) / 10) / config.M
    g_bar = mean_large_scale_gain(config.dist_min_km, config.dist_max_km)
    signal = per_sc_tx * g_bar / nominal_preeq_power(config.h0)
    return noise_variance(config.Bs, config.noise_psd, config.M) / signal


def synthesize_uplink(H, g, Theta, S, alpha, X, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Received N x M x T tensor for power-controlled, pre-equalized UEs plus AWGN."""
    N, M, K = H.shape
    T = X.shape[1]
    if Theta.shape != (M, K) or S.shape != (M, K) or X.shape[0] != K or len(g) != K or len(alpha) != K:
        raise ShapeMismatch("inconsistent shapes in uplink synthesis")
    g = np.asarray(g, dtype=float)
    amp = np.sqrt(1.0 / g) * np.sqrt(g)  # power control times large-scale fading
    eff = H * (Theta * S * (amp * alpha))[None]
    Y = np.einsum("nmk,kt->nmt", eff, X)
    W = rng.standard_normal((N, M, T)) + 1j * rng.standard_normal((N, M, T))
    return Y + np.sqrt(sigma2 / 2) * W
