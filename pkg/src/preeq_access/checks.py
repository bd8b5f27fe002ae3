"""Acceptance checks.

Each ``criterion_*`` function runs one experiment and returns a CheckResult.
The Monte Carlo runs shared by several criteria are cached per process.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .baselines import somp_recover
from .ce_gmmv import dft_matrix, to_angular, to_spatial
from .channel import generate_channel
from .coarse_dd import coarse_detect
from .detector import lmmse_detect
from .harness import make_scenario, run_trial, run_trials, sweep
from .oracles import exhaustive_posterior_means
from .sysmodel import CodeKind, SystemConfig, generate_spreading_codes, make_constellation

MC_FRAMES = 200
T_GRID = (8, 12, 16, 20)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"criterion {self.number:2d} [{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def criterion_1(instances: int = 50) -> CheckResult:
    """Coarse AMP posterior means vs exhaustive enumeration on tiny problems."""
    const = make_constellation(4)
    M, K, T, Ka = 8, 4, 2, 2
    sigma2 = 10 ** (-15 / 10)
    devs = []
    for seed in range(instances):
        rng = np.random.default_rng(seed)
        S = generate_spreading_codes(rng, CodeKind.ComplexGaussian, M, K).S
        X = np.zeros((K, T), dtype=complex)
        act = rng.choice(K, Ka, replace=False)
        X[act] = const.points[rng.integers(0, 4, (Ka, T))]
        Y = S @ X + np.sqrt(sigma2) * _cn(rng, M, T)
        amp = coarse_detect(Y, S, const, 0.3, 50, Ka / K).Xhat
        exact = exhaustive_posterior_means(Y, S, const.points, Ka / K, sigma2)
        devs.append(np.mean(np.abs(amp - exact) ** 2))
    mean_dev = float(np.mean(devs))
    return CheckResult(1, "AMP vs exhaustive posterior", mean_dev < 1e-2,
                       f"mean squared deviation {mean_dev:.3e} (< 1e-2) over {instances} instances")


def criterion_2(systems: int = 100) -> CheckResult:
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(systems):
        rows, cols, T = int(rng.integers(8, 64)), int(rng.integers(1, 8)), int(rng.integers(1, 16))
        Q = np.linalg.qr(_cn(rng, rows, cols))[0]
        X = _cn(rng, cols, T)
        worst = max(worst, float(np.max(np.abs(lmmse_detect(Q, Q @ X, 1e-12) - X))))
    return CheckResult(2, "LMMSE exactness", worst < 1e-6, f"max abs error {worst:.3e} (< 1e-6)")


def criterion_3() -> CheckResult:
    rng = np.random.default_rng(3)
    unit, trip = 0.0, 0.0
    for N in (1, 2, 4, 32, 128):
        U = dft_matrix(N)
        unit = max(unit, float(np.max(np.abs(U @ U.conj().T - np.eye(N)))))
        Y = _cn(rng, N, 5, 3)
        trip = max(trip, float(np.max(np.abs(to_spatial(to_angular(Y, U), U) - Y))))
    ok = unit < 1e-10 and trip < 1e-9
    return CheckResult(3, "angular transform invariants", ok,
                       f"unitarity {unit:.1e} (< 1e-10), round trip {trip:.1e} (< 1e-9)")


def criterion_4(ues: int = 1000) -> CheckResult:
    config = SystemConfig()
    rng = np.random.default_rng(np.random.SeedSequence(4))
    total, count, done = 0.0, 0, 0
    while done < ues:
        H = generate_channel(rng, config).H[:, :, : ues - done]
        total += float(np.sum(np.abs(H) ** 2))
        count += H.size
        done += H.shape[2]
    power = total / count
    return CheckResult(4, "channel normalization", abs(power - 1) < 0.1,
                       f"E|H|^2 = {power:.4f} over {ues} UEs (within 10% of 1)")


def criterion_5(frames: int = 20) -> CheckResult:
    config = SystemConfig.desk(snr_db=float("inf"), h0=1e-9, N_iter=1)
    metrics = [run_trial(config, t)[0] for t in range(frames)]
    clean = sum(m.error is None and m.ber == 0 and m.adep == 0 for m in metrics)
    return CheckResult(5, "noiseless zero BER", clean == frames, f"{clean}/{frames} frames with BER = ADEP = 0")


@functools.lru_cache(maxsize=None)
def desk_run(frames: int = MC_FRAMES):
    """Proposed (3 outer iterations) and single-antenna AMP on common-seed desk frames."""
    return tuple(run_trials(SystemConfig.desk(N_iter=3), frames, ["proposed", "single_antenna_amp"]))


def _stats(values):
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def _ok(metrics, scheme):
    return [m for m in metrics if m.scheme == scheme and m.error is None]


def criterion_6(frames: int = MC_FRAMES) -> CheckResult:
    """Gaps are paired per frame; each must be >= -1 standard error of the paired difference."""
    prop = _ok(desk_run(frames), "proposed")
    stages = np.array([[m.ber_stages[0], m.ber_stages[1], m.ber_stages[3]] for m in prop])
    coarse, one, three = stages.mean(axis=0)
    gap_c1 = _stats(stages[:, 0] - stages[:, 1])
    gap_13 = _stats(stages[:, 1] - stages[:, 2])
    ok = gap_c1[0] >= -gap_c1[1] and gap_13[0] >= -gap_13[1] and coarse - three > 0
    return CheckResult(6, "iteration gain in BER", ok,
                       f"BER coarse {coarse:.4g}, N_iter=1 {one:.4g}, N_iter=3 {three:.4g}; "
                       f"gaps {gap_c1[0]:.3g}+-{gap_c1[1]:.2g}, {gap_13[0]:.3g}+-{gap_13[1]:.2g} "
                       f"over {len(prop)} frames")


def criterion_7(frames: int = MC_FRAMES) -> CheckResult:
    prop = _ok(desk_run(frames), "proposed")
    pairs = [(m.nmse_db_stages[0], m.nmse_db_stages[2]) for m in prop
             if np.isfinite(m.nmse_db_stages[0]) and np.isfinite(m.nmse_db_stages[2])]
    one, se_1 = _stats([p[0] for p in pairs])
    three, se_3 = _stats([p[1] for p in pairs])
    return CheckResult(7, "NMSE iteration trend", three <= one,
                       f"NMSE N_iter=1 {one:.3f}+-{se_1:.2f} dB, N_iter=3 {three:.3f}+-{se_3:.2f} dB "
                       f"over {len(pairs)} frames")


def t_sweep(frames: int = MC_FRAMES):
    return sweep(SystemConfig.desk(), "T", list(T_GRID), frames, ["proposed", "pilot_somp"])


def criterion_8(frames: int = MC_FRAMES, table=None) -> CheckResult:
    table = table or t_sweep(frames)
    prop = [table.lookup("adep", "proposed", T) for T in T_GRID]
    somp = [table.lookup("adep", "pilot_somp", T) for T in T_GRID]
    monotone = all(b.mean <= a.mean + max(a.stderr, b.stderr) for a, b in zip(prop, prop[1:]))
    beats = all(p.mean <= s.mean for p, s in zip(prop, somp))
    detail = ", ".join(f"T={T}: {p.mean:.4f} vs {s.mean:.4f}" for T, p, s in zip(T_GRID, prop, somp))
    return CheckResult(8, "ADEP vs overhead", monotone and beats, f"ADEP proposed vs SOMP pilot: {detail}")


def criterion_9(frames: int = MC_FRAMES) -> CheckResult:
    run = desk_run(frames)
    prop, _ = _stats([m.ber for m in _ok(run, "proposed")])
    single, _ = _stats([m.ber for m in _ok(run, "single_antenna_amp")])
    return CheckResult(9, "multi-antenna diversity", prop < single,
                       f"BER N=32 {prop:.4g} vs single-antenna AMP {single:.4g}")


def _em_hits(config, runs):
    hits = 0
    for t in range(runs):
        sc = make_scenario(config, t)
        res = coarse_detect(sc.truth.Y[config.eta - 1], sc.S, sc.constellation, config.rho_damp,
                            config.N_coarse, config.Ka / config.K)
        hits += 0.5 <= float(np.mean(res.sigma2_t)) / sc.sigma2 <= 2.0
    return hits


def criterion_10(runs: int = 100) -> CheckResult:
    """Scored at the desk profile, nulling included; the no-nulling figure is reported alongside."""
    config = SystemConfig.desk(snr_db=10.0)
    hits = _em_hits(config, runs)
    clean = _em_hits(config.replace(h0=1e-9), runs)
    return CheckResult(10, "EM noise learning", hits >= 0.8 * runs,
                       f"{hits}/{runs} runs within a factor 2 of the injected noise variance (>= 80%); "
                       f"without nulling {clean}/{runs}")


def criterion_11(instances: int = 100, columns: int = 4) -> CheckResult:
    M, K, Ka = 64, 128, 8
    rng = np.random.default_rng(11)
    exact = 0
    for _ in range(instances):
        Phi = _cn(rng, M, K)
        support = np.sort(rng.choice(K, Ka, replace=False))
        X = np.zeros((K, columns), dtype=complex)
        X[support] = _cn(rng, Ka, columns)
        exact += np.array_equal(somp_recover(Phi @ X, Phi, max_sparsity=Ka)[1], support)
    return CheckResult(11, "SOMP support recovery", exact >= 0.95 * instances,
                       f"{exact}/{instances} exact supports (>= 95%)")


def criterion_12(frames: int = 20) -> CheckResult:
    config = SystemConfig.desk(N_iter=3)
    first = sweep(config, "T", [8, 16], frames, ["proposed", "pilot_somp"], workers=1).to_csv()
    second = sweep(config, "T", [8, 16], frames, ["proposed", "pilot_somp"], workers=2).to_csv()
    return CheckResult(12, "determinism", first == second,
                       f"{len(first)} byte CSV, serial and 2-worker runs identical: {first == second}")


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 13)}
FAST = (1, 2, 3, 4, 5, 10, 11)
