"""Seeded Monte Carlo runner for rate sweeps and decision-time benchmarks."""

from __future__ import annotations

import logging
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from . import baselines
from .channel import generate_channels
from .config import ConfigError, SystemConfig
from .transceiver import allocate_for_channels, cf_mgm_mmf_rate

log = logging.getLogger(__name__)

SCHEMES = ("cf-mgm", "mrt", "sca")
SWEEP_PARAMS = {
    "users-per-group": "users_per_group",
    "kappa-db": "rician_kappa_db",
    "txpower-dbm": "tx_power_dbm",
    "none": None,
}


@dataclass
class TrialResult:
    trial: int
    rates: dict[str, float] = field(default_factory=dict)
    group_rates: dict[str, np.ndarray] = field(default_factory=dict)
    times: dict[str, float] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    t_star: float = math.nan


def trial_rngs(master_seed: int, trial: int) -> dict[str, np.random.Generator]:
    """Independent streams for one trial, keyed by what consumes them.

    The streams depend only on ``(master_seed, trial)``, so any trial can be
    recomputed alone, in any order, on any worker.
    """
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(trial,))
    names = ("channel", "schedule", "sca", "csir")
    return {name: np.random.default_rng(child) for name, child in zip(names, seq.spawn(len(names)))}


def _sca_options(cfg: SystemConfig) -> dict:
    return {"restarts": cfg.sca_restarts, "max_iters": cfg.sca_max_iters, "tau": cfg.sca_tau}


def run_trial(
    cfg: SystemConfig,
    trial: int,
    schemes: Sequence[str] = SCHEMES,
    extra: dict[str, Callable] | None = None,
) -> TrialResult:
    """Evaluate every requested scheme on one shared channel realization.

    ``extra`` maps additional scheme names to ``f(cfg, channels) -> rate``
    (used for calibration and testing).  A failing scheme is recorded with
    a NaN rate and its error message; the other schemes still run.
    """
    rngs = trial_rngs(cfg.master_seed, trial)
    channels = generate_channels(cfg, rngs["channel"])
    result = TrialResult(trial)
    schedule = None
    for scheme in schemes:
        try:
            if scheme == "cf-mgm":
                start = time.perf_counter()
                alloc = allocate_for_channels(channels, cfg)
                result.times[scheme] = time.perf_counter() - start
                report = cf_mgm_mmf_rate(channels, cfg, rng=rngs["csir"], alloc=alloc)
                result.t_star = alloc.t_star
            elif scheme in baselines.SCHEMES:
                if schedule is None:
                    schedule = baselines.time_division_schedule(cfg.group_sizes, cfg.n_antennas, rngs["schedule"])
                start = time.perf_counter()
                beams = baselines.design_frame(
                    scheme, channels, schedule, cfg.baseline_slot_power_mw, cfg.noise_mw,
                    rng=rngs["sca"], sca_options=_sca_options(cfg),
                )
                result.times[scheme] = time.perf_counter() - start
                report = baselines.td_mmf_rate(
                    scheme, channels, schedule, cfg.baseline_slot_power_mw, cfg.noise_mw,
                    cfg.rate_normalization, beams=beams,
                )
            elif extra and scheme in extra:
                start = time.perf_counter()
                rate = float(extra[scheme](cfg, channels))
                result.times[scheme] = time.perf_counter() - start
                result.rates[scheme] = rate
                continue
            else:
                raise ValueError(f"unknown scheme {scheme!r}")
            result.rates[scheme] = report.mmf_rate
            result.group_rates[scheme] = np.asarray(report.group_rates)
        except Exception as exc:  # noqa: BLE001 - one scheme must not sink the trial
            log.warning("trial %d: scheme %s failed: %s", trial, scheme, exc)
            result.rates[scheme] = math.nan
            result.errors[scheme] = f"{type(exc).__name__}: {exc}"
    return result


@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: tuple
    base: SystemConfig = field(default_factory=SystemConfig)
    schemes: tuple[str, ...] = SCHEMES
    trials: int | None = None

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigError(f"sweep param must be one of {sorted(SWEEP_PARAMS)}, got {self.param!r}")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if not self.values:
            raise ConfigError("sweep values must be nonempty")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        for scheme in self.schemes:
            if scheme not in SCHEMES:
                raise ConfigError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
        if self.trials is not None and self.trials < 1:
            raise ConfigError("trials must be positive")
        for value in self.values:
            self.config_at(value)

    @property
    def n_trials(self) -> int:
        return self.trials if self.trials is not None else self.base.n_trials

    def config_at(self, value) -> SystemConfig:
        name = SWEEP_PARAMS[self.param]
        if name is None:
            return self.base
        if name == "users_per_group":
            value = int(value)
        else:
            value = float(value)
        return self.base.replace(**{name: value})


@dataclass(frozen=True)
class RawRow:
    trial: int
    scheme: str
    sweep_param: str
    sweep_value: float
    mmf_rate_bps: float
    decision_time_s: float | None


@dataclass(frozen=True)
class AggregateStats:
    scheme: str
    sweep_param: str
    sweep_value: float
    mean_rate: float
    stderr: float
    ci95_lo: float
    ci95_hi: float
    n_trials: int
    n_excluded: int


@dataclass
class SweepResult:
    spec: SweepSpec
    raw: list[RawRow]
    aggregate: list[AggregateStats]
    trials: dict[float, list[TrialResult]]

    def stats(self, scheme: str, value) -> AggregateStats:
        for row in self.aggregate:
            if row.scheme == scheme and row.sweep_value == value:
                return row
        raise KeyError((scheme, value))

    def rates(self, scheme: str, value) -> np.ndarray:
        return np.array([t.rates[scheme] for t in self.trials[value]])


def aggregate(values: Iterable[float]) -> tuple[float, float, float, float, int, int]:
    """Mean, standard error and Student-t 95% interval, skipping NaN entries."""
    arr = np.asarray(list(values), dtype=float)
    ok = arr[np.isfinite(arr)]
    n, excluded = len(ok), len(arr) - len(ok)
    if n == 0:
        return math.nan, math.nan, math.nan, math.nan, 0, excluded
    # shifting by the first sample keeps a constant series exact
    mean = float(ok[0] + math.fsum(ok - ok[0]) / n)
    if n < 2:
        return mean, math.nan, math.nan, math.nan, n, excluded
    sem = float((ok - ok[0]).std(ddof=1) / math.sqrt(n))
    if sem == 0:
        return mean, 0.0, mean, mean, n, excluded
    lo, hi = stats.t.interval(0.95, n - 1, loc=mean, scale=sem)
    return mean, sem, float(lo), float(hi), n, excluded


def _work(args):
    cfg, trial, schemes = args
    return run_trial(cfg, trial, schemes)


def run_sweep(spec: SweepSpec, workers: int = 1, record_timing: bool = False, progress=None) -> SweepResult:
    """Run every (value, trial) pair and aggregate per value and scheme.

    Work items are independent; results are always reassembled in
    (value, trial, scheme) order so the output does not depend on
    ``workers``.  Decision times are kept in the raw rows only when
    ``record_timing`` is set, because wall-clock readings differ run to run.
    """
    keys = [(v, t) for v in spec.values for t in range(spec.n_trials)]
    jobs = [(spec.config_at(v), t, spec.schemes) for v, t in keys]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_work, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = []
        for i, job in enumerate(jobs):
            results.append(_work(job))
            if progress:
                progress(i + 1, len(jobs))

    by_value: dict = {}
    for (value, _), res in zip(keys, results):
        by_value.setdefault(value, []).append(res)

    raw, agg = [], []
    for value, trials in by_value.items():
        for res in trials:
            for scheme in spec.schemes:
                raw.append(RawRow(
                    res.trial, scheme, spec.param, value, res.rates[scheme],
                    res.times.get(scheme) if record_timing else None,
                ))
        for scheme in spec.schemes:
            mean, sem, lo, hi, n, excluded = aggregate(t.rates[scheme] for t in trials)
            if excluded:
                log.warning("%s=%s scheme %s: %d trial(s) excluded", spec.param, value, scheme, excluded)
            agg.append(AggregateStats(scheme, spec.param, value, mean, sem, lo, hi, n, excluded))
    return SweepResult(spec, raw, agg, by_value)


def time_decision(fn: Callable[[], object], repeats: int = 5, warmup: int = 1) -> float:
    """Median wall-clock of ``repeats`` calls after ``warmup`` discarded calls."""
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def runtime_benchmark(
    cfg: SystemConfig,
    users_per_group: Sequence[int],
    schemes: Sequence[str] = SCHEMES,
    trials: int = 3,
    repeats: int = 5,
    inner_loops: dict[str, int] | None = None,
) -> dict[str, dict[int, float]]:
    """Mean decision time per scheme and group size.

    Only the transmit decision is timed: the CF-MGM allocation from
    large-scale gains, or beamformer design for all slots of a baseline.
    Each trial contributes the median of ``repeats`` warm runs.  Very fast
    decisions can be looped ``inner_loops[scheme]`` times per run and the
    time divided back, which keeps timer resolution out of the figure.
    Scheme ``"noop"`` times an empty decision as a harness-overhead floor.
    """
    inner_loops = inner_loops or {}
    out: dict[str, dict[int, float]] = {s: {} for s in schemes}
    for k_g in users_per_group:
        kcfg = cfg.replace(users_per_group=int(k_g))
        per_scheme: dict[str, list[float]] = {s: [] for s in schemes}
        for trial in range(trials):
            rngs = trial_rngs(kcfg.master_seed, trial)
            channels = generate_channels(kcfg, rngs["channel"])
            schedule = baselines.time_division_schedule(kcfg.group_sizes, kcfg.n_antennas, rngs["schedule"])
            for scheme in schemes:
                loops = inner_loops.get(scheme, 1)
                if scheme == "cf-mgm":
                    def decide():
                        for _ in range(loops):
                            allocate_for_channels(channels, kcfg)
                elif scheme == "noop":
                    def decide():
                        for _ in range(loops):
                            pass
                else:
                    seed = np.random.SeedSequence(entropy=kcfg.master_seed, spawn_key=(trial, 99))

                    def decide(scheme=scheme):
                        for _ in range(loops):
                            baselines.design_frame(
                                scheme, channels, schedule, kcfg.baseline_slot_power_mw, kcfg.noise_mw,
                                rng=np.random.default_rng(seed), sca_options=_sca_options(kcfg),
                            )
                per_scheme[scheme].append(time_decision(decide, repeats) / loops)
        for scheme in schemes:
            out[scheme][int(k_g)] = float(np.mean(per_scheme[scheme]))
    return out
