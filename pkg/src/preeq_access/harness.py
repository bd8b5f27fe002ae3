"""Monte Carlo trials, metrics and parameter sweeps."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import BaselineKind, parse_kind, run_baseline
from .channel import generate_channel
from .detector import DetectionResult, hard_decision, iterative_detect
from .errors import ShapeMismatch
from .sysmodel import SystemConfig, generate_spreading_codes, make_constellation
from .uplink import FrameTruth, draw_frame, effective_noise_variance, pre_equalization, synthesize_uplink

log = logging.getLogger(__name__)

CSV_HEADER = ["sweep_var", "value", "scheme", "metric", "mean", "stderr", "trials", "seed"]
SWEEP_VARS = ("T", "M", "rho", "N_iter", "scheme")
WORKERS_ENV = "PREEQ_WORKERS"
# spawn key of the stream for the UE spreading codes, fixed across trials
CODES_STREAM = 2**31 - 2


@dataclass
class Scenario:
    config: SystemConfig
    constellation: object
    S: np.ndarray
    H: np.ndarray
    g: np.ndarray
    Theta: np.ndarray
    truth: FrameTruth
    sigma2: float
    baseline_seq: np.random.SeedSequence


@dataclass
class TrialMetrics:
    trial: int
    seed: int
    scheme: str
    adep: float = math.nan
    ber: float = math.nan
    nmse_db: float = math.nan
    ber_stages: tuple = ()
    nmse_db_stages: tuple = ()
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def as_metrics(self) -> dict:
        """Flat metric name -> value mapping used for aggregation."""
        if self.failed:
            return {}
        out = {"adep": self.adep, "ber": self.ber}
        if not math.isnan(self.nmse_db):
            out["nmse_db"] = self.nmse_db
        if self.ber_stages:
            out["ber_coarse"] = self.ber_stages[0]
            for i, b in enumerate(self.ber_stages[1:], 1):
                out[f"ber_iter{i}"] = b
            for i, n in enumerate(self.nmse_db_stages, 1):
                out[f"nmse_db_iter{i}"] = n
        return out


@dataclass
class SweepRow:
    sweep_var: str
    value: str
    scheme: str
    metric: str
    mean: float
    stderr: float
    trials: int
    seed: int


@dataclass
class SweepTable:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.sweep_var, r.value, r.scheme, r.metric, repr(float(r.mean)),
                        repr(float(r.stderr)), r.trials, r.seed])
        return buf.getvalue()

    def lookup(self, metric, scheme=None, value=None) -> SweepRow:
        for r in self.rows:
            if r.metric == metric and (scheme is None or r.scheme == scheme) \
                    and (value is None or r.value == str(value)):
                return r
        raise KeyError((metric, scheme, value))


def trial_seed_sequence(seed: int, trial_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(trial_index,))


def make_scenario(config: SystemConfig, trial_index: int) -> Scenario:
    """Channel, frame and received tensor of one trial; reproducible per (seed, trial)."""
    constellation = make_constellation(config.L)
    codes_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(CODES_STREAM,)))
    S = generate_spreading_codes(codes_rng, config.code_kind, config.M, config.K).S
    ch_seq, frame_seq, noise_seq, base_seq = trial_seed_sequence(config.seed, trial_index).spawn(4)
    ch = generate_channel(np.random.default_rng(ch_seq), config)
    pe = pre_equalization(ch.H, config.eta, config.h0)
    truth = draw_frame(np.random.default_rng(frame_seq), config, constellation)
    sigma2 = effective_noise_variance(config)
    Y = synthesize_uplink(ch.H, ch.g, pe.Theta, S, truth.alpha, truth.X, sigma2,
                          np.random.default_rng(noise_seq))
    truth = FrameTruth(active_set=truth.active_set, alpha=truth.alpha, X=truth.X, sym_idx=truth.sym_idx,
                       bits=truth.bits, Y=Y, sigma2=sigma2, p=1.0 / ch.g)
    return Scenario(config=config, constellation=constellation, S=S, H=ch.H, g=ch.g, Theta=pe.Theta,
                    truth=truth, sigma2=sigma2, baseline_seq=base_seq)


def _ber(truth: FrameTruth, active_hat, Xhat, constellation) -> float:
    if truth.active_set.size == 0:
        return 0.0
    bits_hat = hard_decision(Xhat, constellation)[1]
    detected = np.isin(truth.active_set, active_hat)
    errors = truth.bits[~detected].size
    hit = truth.active_set[detected]
    errors += int(np.sum(bits_hat[hit] != truth.bits[detected]))
    return errors / truth.bits.size


def _nmse_db(truth: FrameTruth, active_hat, H_equ_hat, Theta, H) -> float:
    if H_equ_hat is None:
        return math.nan
    pos = np.flatnonzero(np.isin(active_hat, truth.active_set))
    if pos.size == 0:
        return math.inf
    ks = np.asarray(active_hat)[pos]
    ref = H[:, :, ks] * Theta[:, ks][None]
    err = np.sum(np.abs(H_equ_hat[:, :, pos] - ref) ** 2)
    with np.errstate(divide="ignore"):
        return float(10 * np.log10(err / np.sum(np.abs(ref) ** 2)))


def compute_metrics(truth: FrameTruth, result: DetectionResult, Theta, H, constellation=None) -> TrialMetrics:
    """ADEP, BER (missed UEs count fully wrong) and equivalent-CSI NMSE.

    NMSE is nan for results without a CSI estimate and +inf when no UE was
    correctly detected.
    """
    constellation = constellation or make_constellation(2 ** truth.bits.shape[-1])
    K = truth.alpha.size
    if result.Xhat.shape[0] != K or Theta.shape[1] != K or H.shape[2] != K:
        raise ShapeMismatch("truth and result disagree on K")
    detected = np.zeros(K, dtype=bool)
    detected[result.active_set_hat] = True
    adep = float(np.sum(detected != truth.alpha.astype(bool))) / K
    ber = _ber(truth, result.active_set_hat, result.Xhat, constellation)
    nmse = _nmse_db(truth, result.active_set_hat, result.H_equ_hat, Theta, H)
    return TrialMetrics(trial=-1, seed=-1, scheme="", adep=adep, ber=ber, nmse_db=nmse)


def _scheme_name(scheme) -> str:
    return "proposed" if scheme == "proposed" else parse_kind(scheme).value


def run_scheme(scenario: Scenario, scheme: str, trial_index: int) -> TrialMetrics:
    config = scenario.config
    name = _scheme_name(scheme)
    try:
        if name == "proposed":
            result = iterative_detect(scenario.truth.Y, scenario.S, config, scenario.constellation)
            Theta = scenario.Theta
        else:
            kind = parse_kind(name)
            rng = np.random.default_rng(scenario.baseline_seq)
            result = run_baseline(kind, scenario, config, rng)
            pilot = kind in (BaselineKind.PilotGmmvAmp, BaselineKind.PilotSomp)
            Theta = np.ones_like(scenario.Theta) if pilot else scenario.Theta
        m = compute_metrics(scenario.truth, result, Theta, scenario.H, scenario.constellation)
        if name == "proposed":
            m.ber_stages = tuple(_ber(scenario.truth, result.active_set_hat, X, scenario.constellation)
                                 for X, _ in result.history)
            m.nmse_db_stages = tuple(_nmse_db(scenario.truth, result.active_set_hat, Hh, Theta, scenario.H)
                                     for _, Hh in result.history[1:])
    except Exception as exc:  # a failed frame must not abort a sweep
        log.warning("trial %d scheme %s failed: %s", trial_index, name, exc)
        m = TrialMetrics(trial=trial_index, seed=config.seed, scheme=name, error=f"{type(exc).__name__}: {exc}")
    m.trial, m.seed, m.scheme = trial_index, config.seed, name
    return m


def run_trial(config: SystemConfig, trial_index: int, schemes=None) -> list:
    """Metrics of every scheme on one common-seed frame."""
    schemes = schemes or [config.scheme]
    scenario = make_scenario(config, trial_index)
    return [run_scheme(scenario, s, trial_index) for s in schemes]


def _job(args):
    config, trial, schemes = args
    return run_trial(config, trial, schemes)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_trials(config: SystemConfig, trials: int, schemes=None, workers=None) -> list:
    jobs = [(config, t, schemes) for t in range(trials)]
    workers = workers or worker_count()
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            nested = list(pool.map(_job, jobs))
    else:
        nested = [_job(j) for j in jobs]
    out = [m for group in nested for m in group]
    out.sort(key=lambda m: (m.trial, m.scheme))
    return out


def aggregate(metrics: list, sweep_var: str, value, seed: int) -> list:
    rows = []
    by_scheme = {}
    for m in metrics:
        by_scheme.setdefault(m.scheme, []).append(m)
    for scheme in sorted(by_scheme):
        group = by_scheme[scheme]
        collected = {}
        for m in group:
            for k, v in m.as_metrics().items():
                collected.setdefault(k, []).append(v)
        for name in sorted(collected):
            vals = np.array([v for v in collected[name] if np.isfinite(v)])
            if vals.size == 0:
                continue
            se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
            rows.append(SweepRow(sweep_var, str(value), scheme, name, float(vals.mean()), se, int(vals.size), seed))
        n_failed = sum(m.failed for m in group)
        rows.append(SweepRow(sweep_var, str(value), scheme, "failed_fraction",
                             n_failed / len(group), 0.0, len(group), seed))
    return rows


def apply_sweep_value(config: SystemConfig, variable: str, value) -> SystemConfig:
    """Config for one sweep point.

    Sweeping ``rho`` with an explicit ``snr_db`` moves the SNR dB-for-dB
    relative to the configured transmit power.
    """
    if variable in ("T", "M", "N_iter"):
        return config.replace(**{variable: int(value)})
    if variable == "rho":
        rho = float(value)
        if config.snr_db is not None:
            return config.replace(tx_power_dbm=rho, snr_db=config.snr_db + rho - config.tx_power_dbm)
        return config.replace(tx_power_dbm=rho)
    if variable == "scheme":
        return config.replace(scheme=_scheme_name(value))
    raise ValueError(f"unknown sweep variable {variable!r}; expected one of {SWEEP_VARS}")


def sweep(config: SystemConfig, variable: str, values, trials: int, schemes=None, workers=None) -> SweepTable:
    if not values:
        raise ValueError("empty value list")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    table = SweepTable()
    for value in values:
        point = apply_sweep_value(config, variable, value)
        point_schemes = [point.scheme] if variable == "scheme" else (schemes or [point.scheme])
        metrics = run_trials(point, trials, point_schemes, workers)
        table.rows.extend(aggregate(metrics, variable, value, config.seed))
    return table
