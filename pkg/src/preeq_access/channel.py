"""One-ring spatial-frequency channel model and log-distance path loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDistance
from .sysmodel import SystemConfig

# upper edge of the per-path delay distribution, seconds
MAX_DELAY_S = 1e-6


@dataclass(frozen=True)
class PathSet:
    phi: np.ndarray   # angles of arrival, rad
    tau: np.ndarray   # delays, s
    beta: np.ndarray  # complex path gains

    @property
    def P(self) -> int:
        return len(self.phi)


@dataclass(frozen=True)
class ChannelRealization:
    H: np.ndarray          # N x M x K small-scale fading
    g: np.ndarray          # K large-scale linear power gains
    d: np.ndarray          # K distances, km
    paths: tuple           # K PathSets
    phi_center: np.ndarray

    def save(self, path) -> None:
        counts = np.array([p.P for p in self.paths])
        np.savez(
            path, H=self.H, g=self.g, d=self.d, phi_center=self.phi_center,
            counts=counts,
            phi=np.concatenate([p.phi for p in self.paths]),
            tau=np.concatenate([p.tau for p in self.paths]),
            beta=np.concatenate([p.beta for p in self.paths]),
        )

    @classmethod
    def load(cls, path) -> "ChannelRealization":
        with np.load(path) as z:
            edges = np.concatenate([[0], np.cumsum(z["counts"])])
            paths = tuple(
                PathSet(z["phi"][a:b], z["tau"][a:b], z["beta"][a:b])
                for a, b in zip(edges[:-1], edges[1:])
            )
            return cls(H=z["H"], g=z["g"], d=z["d"], paths=paths, phi_center=z["phi_center"])


def steering_vector(phi, N: int) -> np.ndarray:
    """Half-wavelength ULA response; ``phi`` may be a scalar or a 1-D array.

    For an array of P angles the result has shape (N, P).
    """
    n = np.arange(N)
    phi = np.asarray(phi, dtype=float)
    return np.exp(-1j * np.pi * np.multiply.outer(n, np.sin(phi)))


def subcarrier_frequencies(M: int, Bs: float) -> np.ndarray:
    return -Bs / 2 + np.arange(M) * Bs / M


def draw_paths(rng: np.random.Generator, config: SystemConfig, phi_center: float) -> PathSet:
    P = int(rng.integers(config.paths_min, config.paths_max + 1))
    spread = np.deg2rad(config.angle_spread_deg)
    phi = phi_center + rng.uniform(-spread, spread, P) if spread > 0 else np.full(P, phi_center)
    tau = rng.uniform(0.0, MAX_DELAY_S, P)
    beta = (rng.standard_normal(P) + 1j * rng.standard_normal(P)) / np.sqrt(2 * P)
    return PathSet(phi=phi, tau=tau, beta=beta)


def small_scale_channel(paths: PathSet, N: int, M: int, Bs: float) -> np.ndarray:
    """N x M response: sum over paths of gain x steering x delay phase ramp."""
    A = steering_vector(paths.phi, N) * paths.beta
    F = np.exp(-2j * np.pi * np.outer(paths.tau, subcarrier_frequencies(M, Bs)))
    return A @ F


def path_loss_db(d_km):
    d_km = np.asarray(d_km, dtype=float)
    if np.any(d_km <= 0):
        raise NonPositiveDistance("distance must be positive")
    return 128.1 + 37.6 * np.log10(d_km)


def large_scale_gain(d_km):
    gain = 10.0 ** (-path_loss_db(d_km) / 10)
    return float(gain) if np.ndim(gain) == 0 else gain


def mean_large_scale_gain(dist_min_km: float, dist_max_km: float) -> float:
    """E[g] for d uniform on [dist_min_km, dist_max_km] (closed form)."""
    a = 3.76
    if dist_max_km == dist_min_km:
        return large_scale_gain(dist_min_km)
    moment = (dist_min_km ** (1 - a) - dist_max_km ** (1 - a)) / ((a - 1) * (dist_max_km - dist_min_km))
    return 10 ** (-12.81) * moment


def generate_channel(rng: np.random.Generator, config: SystemConfig) -> ChannelRealization:
    K = config.K
    phi_center = rng.uniform(-np.pi / 2, np.pi / 2, K)
    d = rng.uniform(config.dist_min_km, config.dist_max_km, K)
    paths = tuple(draw_paths(rng, config, phi_center[k]) for k in range(K))
    H = np.empty((config.N, config.M, K), dtype=complex)
    for k, ps in enumerate(paths):
        H[:, :, k] = small_scale_channel(ps, config.N, config.M, config.Bs)
    return ChannelRealization(H=H, g=np.asarray(large_scale_gain(d)), d=d, paths=paths, phi_center=phi_center)
