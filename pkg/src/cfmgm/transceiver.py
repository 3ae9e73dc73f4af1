"""CSIT-free multi-group multicast chain: precoding, reception, combining,
closed-form max-min fair power allocation and rate evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .channel import ChannelSet, UserGeometry, complex_normal
from .config import SystemConfig
from .cpdft import PrecoderBank, build_precoder_bank, equalizer

QPSK = np.exp(1j * np.pi * (2 * np.arange(4) + 1) / 4)


@dataclass(frozen=True)
class SymbolFrame:
    """Symbols sent in one frame: ``G`` data symbols followed by two pilots."""

    s: np.ndarray
    constellation: str = "qpsk"

    @property
    def pilots(self) -> np.ndarray:
        return self.s[-2:]


def make_frame(n_groups: int, rng: np.random.Generator, pilots=(1.0, 1.0)) -> SymbolFrame:
    data = rng.choice(QPSK, size=n_groups)
    return SymbolFrame(np.concatenate([data, np.asarray(pilots, dtype=complex)]))


@dataclass
class OpCounter:
    """Counts the work done by the allocator, used to check its O(K+G) cost."""

    comparisons: int = 0
    arithmetic: int = 0


@dataclass(frozen=True)
class PowerAllocation:
    """Per-symbol powers ``p`` (data then pilots, mW) and the fairness target.

    ``t_star`` is the common linear SINR the allocation guarantees to each
    group's worst user under the large-scale gains ``gains``.
    """

    p: np.ndarray
    t_star: float
    gains: np.ndarray
    budget: float

    @property
    def data_powers(self) -> np.ndarray:
        return self.p[: len(self.gains)]

    @property
    def pilot_powers(self) -> np.ndarray:
        return self.p[len(self.gains):]


@dataclass(frozen=True)
class RateReport:
    worst_sinr: np.ndarray
    group_rates: np.ndarray
    normalization: str
    allocation: PowerAllocation | None = None
    per_user_sinr: tuple[np.ndarray, ...] = field(default=(), repr=False)

    @property
    def mmf_rate(self) -> float:
        return float(np.min(self.group_rates))


def effective_gain(geom: UserGeometry | float, noise_mw: float) -> float:
    """Large-scale power gain over noise, ``distance**-2 / noise``.

    Accepts a :class:`UserGeometry` or a bare distance in meters.
    """
    r = geom.distance if isinstance(geom, UserGeometry) else float(geom)
    if r <= 0 or noise_mw <= 0:
        raise ValueError("distance and noise power must be positive")
    return 1.0 / (r * r * noise_mw)


def worst_case_gains(
    geometries: Sequence[Sequence[UserGeometry]], noise_mw: float, counter: OpCounter | None = None
) -> list[float]:
    """Minimum effective gain within each group (one comparison per user)."""
    out = []
    for users in geometries:
        if not users:
            raise ValueError("every group needs at least one user")
        worst = math.inf
        for u in users:
            a = effective_gain(u, noise_mw)
            if a < worst:
                worst = a
        if counter is not None:
            counter.comparisons += len(users)
        out.append(worst)
    return out


def mmf_power_allocation(
    gains: Sequence[float], budget: float, n_pilots: int = 2, counter: OpCounter | None = None
) -> PowerAllocation:
    """Closed-form max-min fair split of ``budget`` across the groups.

    Every group ends with ``gains[g] * p[g] == t_star`` and the data powers
    sum to ``budget``.  Pilots get the mean data power, outside the budget.
    """
    if len(gains) == 0:
        raise ValueError("gains must be nonempty")
    if budget <= 0:
        raise ValueError("budget must be positive")
    inv_sum = 0.0
    for a in gains:
        if not a > 0:
            raise ValueError("gains must be positive")
        inv_sum += 1.0 / a
    t_star = budget / inv_sum
    data = [t_star / a for a in gains]
    if counter is not None:
        counter.arithmetic += 2 * len(gains)
    pilot = budget / len(gains)
    p = np.array(data + [pilot] * n_pilots)
    return PowerAllocation(p=p, t_star=t_star, gains=np.asarray(gains, dtype=float), budget=budget)


def allocate_for_channels(
    channels: ChannelSet, cfg: SystemConfig, counter: OpCounter | None = None
) -> PowerAllocation:
    gains = worst_case_gains(channels.geometry, cfg.noise_mw, counter)
    return mmf_power_allocation(gains, cfg.cf_data_budget_mw, counter=counter)


def transmit_frame(bank: PrecoderBank, p: np.ndarray | PowerAllocation, frame: SymbolFrame | np.ndarray) -> np.ndarray:
    """Return the ``N`` slot signals as rows: ``x_n = U_n diag(sqrt(p)) s / sqrt(N)``."""
    p = p.p if isinstance(p, PowerAllocation) else np.asarray(p, dtype=float)
    s = frame.s if isinstance(frame, SymbolFrame) else np.asarray(frame)
    n = bank.n
    if p.shape != (n,) or s.shape != (n,):
        raise ValueError(f"expected length-{n} power and symbol vectors, got {p.shape} and {s.shape}")
    if np.any(p < 0):
        raise ValueError("powers must be nonnegative")
    return bank.U @ (np.sqrt(p) * s) / np.sqrt(n)


def receive_frame(h: np.ndarray, xs: np.ndarray, noise_mw: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Stack ``h.T @ x_n + z_n`` over the slots."""
    h = np.asarray(h)
    if xs.shape[-1] != h.shape[-1]:
        raise ValueError("channel and transmit vectors differ in length")
    y = xs @ h
    if noise_mw > 0:
        if rng is None:
            raise ValueError("rng is required when noise_mw > 0")
        y = y + complex_normal(rng, y.shape, np.sqrt(noise_mw))
    return y


def combine(y: np.ndarray, bank: PrecoderBank, g: int, h_hat: np.ndarray) -> complex:
    """Equalize-and-combine for symbol ``g``: ``(1/h_hat).T @ conj(F_g) @ y``."""
    e = equalizer(h_hat)
    return complex(e @ (bank.F[g].conj() @ y))


def realized_sinr(
    h: np.ndarray,
    p: np.ndarray | PowerAllocation,
    g: int,
    noise_mw: float,
    h_hat: np.ndarray | None = None,
    bank: PrecoderBank | None = None,
) -> np.ndarray | float:
    """SINR of symbol ``g`` after combining, for one channel or a stack of rows.

    With perfect CSIR the cross terms cancel exactly and the SINR is
    ``N p_g / (noise * ||1/h||^2)``.  With a mismatched ``h_hat`` the residual
    coupling to every other symbol (pilots included) counts as interference.
    """
    p = p.p if isinstance(p, PowerAllocation) else np.asarray(p, dtype=float)
    h = np.asarray(h)
    n = h.shape[-1]
    if h_hat is None:
        e = equalizer(h)
        return n * p[g] / (noise_mw * np.sum(np.abs(e) ** 2, axis=-1))

    e = equalizer(h_hat)
    bank = bank or build_precoder_bank(n)
    coupling = np.einsum("...a,qab,...b->...q", e, _products(bank, g), h)
    power = np.abs(coupling) ** 2 * p / n
    signal = power[..., g]
    interference = power.sum(axis=-1) - signal
    return signal / (interference + noise_mw * np.sum(np.abs(e) ** 2, axis=-1))


def _products(bank: PrecoderBank, g: int) -> np.ndarray:
    return np.stack([bank.combiner_product(g, q) for q in range(bank.n)])


def _rate(sinr, n: int, normalization: str):
    scale = 1.0 / n if normalization == "per-slot" else 1.0
    return scale * np.log2(1.0 + sinr)


def predicted_mmf_rate(alloc: PowerAllocation, n_antennas: int, normalization: str = "per-slot") -> float:
    """Rate the allocation targets under the pure-LoS approximation."""
    return float(_rate(alloc.t_star, n_antennas, normalization))


def cf_mgm_mmf_rate(
    channels: ChannelSet,
    cfg: SystemConfig,
    rng: np.random.Generator | None = None,
    alloc: PowerAllocation | None = None,
) -> RateReport:
    """Max-min fair CF-MGM rate of one realization.

    Powers come from large-scale gains only; per-user SINRs use the full
    channels.  ``rng`` is needed only when ``cfg.csir_error_var > 0``.
    """
    n = cfg.n_antennas
    if n != cfg.n_groups + 2:
        raise ValueError("CF-MGM needs n_antennas == n_groups + 2")
    if alloc is None:
        alloc = allocate_for_channels(channels, cfg)
    bank = build_precoder_bank(n) if cfg.csir_error_var > 0 else None
    per_user = []
    for g, h in enumerate(channels.h):
        h_hat = None
        if cfg.csir_error_var > 0:
            if rng is None:
                raise ValueError("rng is required for imperfect CSIR")
            scale = np.sqrt(cfg.csir_error_var) * np.abs(h)
            h_hat = h + complex_normal(rng, h.shape, scale)
        per_user.append(np.atleast_1d(realized_sinr(h, alloc, g, cfg.noise_mw, h_hat=h_hat, bank=bank)))
    worst = np.array([s.min() for s in per_user])
    rates = _rate(worst, n, cfg.rate_normalization)
    return RateReport(worst, rates, cfg.rate_normalization, alloc, tuple(per_user))


def dof_estimate(rate_fn: Callable[[float], float], p_lo: float, p_hi: float) -> float:
    """Finite-difference slope of ``rate_fn(P)`` against ``log2(P)``."""
    if not 0 < p_lo < p_hi:
        raise ValueError("need 0 < p_lo < p_hi")
    return (rate_fn(p_hi) - rate_fn(p_lo)) / (math.log2(p_hi) - math.log2(p_lo))
