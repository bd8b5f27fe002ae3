"""Experiment configuration, modulation alphabet and spreading codes."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, UnsupportedOrder


class CodeKind(str, enum.Enum):
    UnitModulusRandomPhase = "UnitModulusRandomPhase"
    ComplexGaussian = "ComplexGaussian"
    FourierRows = "FourierRows"


@dataclass(frozen=True)
class SystemConfig:
    """All scenario dimensions, receiver hyperparameters and physical constants.

    Defaults are the full-scale scenario (128 antennas, 500 UEs, 50 active).
    ``SystemConfig.desk()`` returns the reduced profile used by the test suite.

    ``snr_db`` overrides the noise level derived from ``tx_power_dbm``; it is
    the per-subcarrier SNR of a unit-power received UE signal. ``inf`` gives a
    noiseless channel.
    """

    N: int = 128
    M: int = 60
    K: int = 500
    Ka: int = 50
    T: int = 20
    L: int = 4
    eta: int = 1
    h0: float = 0.2
    code_kind: CodeKind = CodeKind.ComplexGaussian
    Bs: float = 10e6
    noise_psd: float = -174.0
    tx_power_dbm: float = 7.0
    angle_spread_deg: float = 7.5
    paths_min: int = 8
    paths_max: int = 12
    dist_min_km: float = 0.1
    dist_max_km: float = 1.0
    rho_damp: float = 0.3
    N_coarse: int = 50
    N_iter: int = 3
    N_gmmv: int = 50
    seed: int = 0
    snr_db: float | None = None
    scheme: str = "proposed"
    pilot_threshold: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "code_kind", CodeKind(self.code_kind))
        for name in ("N", "M", "K", "T", "L", "paths_min", "N_coarse"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.N_iter < 0 or self.N_gmmv < 1:
            raise ConfigError("N_iter must be >= 0 and N_gmmv >= 1")
        if not 0 <= self.Ka <= self.K:
            raise ConfigError("need 0 <= Ka <= K")
        if not 1 <= self.eta <= self.N:
            raise ConfigError("beacon antenna index eta must lie in 1..N")
        if self.L < 2 or self.L & (self.L - 1):
            raise ConfigError("L must be a power of two")
        if self.h0 <= 0:
            raise ConfigError("h0 must be positive")
        if not 0 <= self.rho_damp < 1:
            raise ConfigError("rho_damp must lie in [0, 1)")
        if self.paths_max < self.paths_min:
            raise ConfigError("paths_max < paths_min")
        if not 0 < self.dist_min_km <= self.dist_max_km:
            raise ConfigError("invalid distance range")
        if self.Bs <= 0 or self.angle_spread_deg < 0:
            raise ConfigError("Bs must be positive and angle spread nonnegative")

    @classmethod
    def desk(cls, **overrides) -> "SystemConfig":
        base = dict(N=32, M=40, K=100, Ka=10, T=16, snr_db=-10.0)
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.L))


def _parse_optional_float(text: str):
    if text.lower() in ("", "none"):
        return None
    return float(text)


def _parse_int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text}")
    return int(value)


_CONVERTERS = {
    "int": _parse_int,
    "float": float,
    "str": str,
    "CodeKind": CodeKind,
    "float | None": _parse_optional_float,
}


def parse_config(text: str) -> SystemConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    types = {f.name: f.type for f in dataclasses.fields(SystemConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS[types[key]](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return SystemConfig(**values)


def load_config(path) -> SystemConfig:
    return parse_config(Path(path).read_text())


def dump_config(config: SystemConfig) -> str:
    lines = []
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if isinstance(value, CodeKind):
            value = value.value
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Constellation:
    points: np.ndarray
    bit_map: np.ndarray = field(repr=False)

    @property
    def L(self) -> int:
        return len(self.points)

    @property
    def bits_per_symbol(self) -> int:
        return self.bit_map.shape[1]

    def bits_of(self, indices: np.ndarray) -> np.ndarray:
        """Map symbol indices (any shape) to bits, adding a trailing bit axis."""
        return self.bit_map[indices]


def make_constellation(L: int) -> Constellation:
    """Unit-average-power PSK alphabet with Gray labels (L = 2, 4 or 8)."""
    if L == 2:
        points = np.array([1.0 + 0j, -1.0 + 0j])
    elif L == 4:
        r = 1 / math.sqrt(2)
        points = np.array([r + 1j * r, -r + 1j * r, -r - 1j * r, r - 1j * r])
    elif L == 8:
        points = np.exp(1j * (2 * np.pi * np.arange(8) / 8 + np.pi / 8))
    else:
        raise UnsupportedOrder(f"modulation order {L} not supported")
    nbits = int(math.log2(L))
    gray = np.arange(L) ^ (np.arange(L) >> 1)
    bit_map = ((gray[:, None] >> np.arange(nbits - 1, -1, -1)) & 1).astype(np.int8)
    points.setflags(write=False)
    bit_map.setflags(write=False)
    return Constellation(points=points, bit_map=bit_map)


@dataclass(frozen=True)
class SpreadingCodes:
    S: np.ndarray
    kind: CodeKind


def generate_spreading_codes(rng: np.random.Generator, kind, M: int, K: int) -> SpreadingCodes:
    """Draw an M x K code matrix; column k is UE k's signature.

    FourierRows picks M distinct rows of the (unnormalized) K x K DFT matrix,
    so every entry has unit modulus and no two columns coincide.
    """
    kind = CodeKind(kind)
    if M < 1 or K < 1:
        raise ValueError("M and K must be positive")
    if kind is CodeKind.UnitModulusRandomPhase:
        S = np.exp(2j * np.pi * rng.random((M, K)))
    elif kind is CodeKind.ComplexGaussian:
        S = (rng.standard_normal((M, K)) + 1j * rng.standard_normal((M, K))) / math.sqrt(2)
    else:
        if M > K:
            raise ValueError("FourierRows needs M <= K")
        rows = np.sort(rng.choice(K, size=M, replace=False))
        S = np.exp(-2j * np.pi * np.outer(rows, np.arange(K)) / K)
    S.setflags(write=False)
    return SpreadingCodes(S=S, kind=kind)
