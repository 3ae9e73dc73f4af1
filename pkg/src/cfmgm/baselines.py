"""CSIT-based time-division multicast baselines.

Each slot serves a subset of every group with ``G`` linear beams.  Two
beamformers are provided: MRT directions with max-min power control, and a
smoothed max-min ascent over the full beamformers (an SCA-family method).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelSet, complex_normal

LN2 = np.log(2.0)


@dataclass(frozen=True)
class BeamformerSet:
    """Beams ``W[g]`` as rows, in sqrt(mW)."""

    W: np.ndarray

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.W) ** 2))


@dataclass(frozen=True)
class SlotSchedule:
    """``slots[n][g]`` holds the indices of group ``g`` users served in slot ``n``."""

    slots: tuple[tuple[np.ndarray, ...], ...]

    @property
    def n_slots(self) -> int:
        return len(self.slots)


@dataclass
class PowerControlResult:
    q: np.ndarray
    t: float
    iterates: list[np.ndarray] = field(default_factory=list, repr=False)


@dataclass
class ScaResult:
    beams: BeamformerSet
    min_rate: float
    trace: list[tuple[float, np.ndarray]]
    exhausted: bool


def _stack(served: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate per-group channel rows; return rows and their group labels."""
    H = np.concatenate([np.atleast_2d(h) for h in served])
    labels = np.concatenate([np.full(len(np.atleast_2d(h)), g) for g, h in enumerate(served)])
    return H, labels


def conventional_sinr(h: np.ndarray, beams: BeamformerSet | np.ndarray, g: int, noise_mw: float):
    """``|h.T w_g|^2 / (sum_{g' != g} |h.T w_g'|^2 + noise)``; rows of ``h`` broadcast."""
    W = beams.W if isinstance(beams, BeamformerSet) else np.asarray(beams)
    power = np.abs(np.asarray(h) @ W.T) ** 2
    signal = power[..., g]
    return signal / (power.sum(axis=-1) - signal + noise_mw)


def mrt_beamformers(served: Sequence[np.ndarray]) -> np.ndarray:
    """Unit-norm MRT directions, one row per group.

    The received amplitude is ``h.T @ w``, so the matched direction is the
    conjugate of the summed group channel.  A vanishing sum falls back to
    the first served user's channel.
    """
    dirs = []
    for h in served:
        h = np.atleast_2d(h)
        if len(h) == 0:
            raise ValueError("every group needs at least one served user")
        d = h.sum(axis=0).conj()
        norm = np.linalg.norm(d)
        if norm <= 1e-12 * np.linalg.norm(h, axis=1).max():
            d = h[0].conj()
            norm = np.linalg.norm(d)
        dirs.append(d / norm if norm > 0 else d)
    return np.array(dirs)


def _interference_terms(gains: np.ndarray, labels: np.ndarray, n_groups: int, noise_mw: float):
    """Per group, the affine pieces ``q_g >= t * (B_k @ q + c_k)`` of every user ``k``."""
    own = gains[np.arange(len(labels)), labels]
    B = gains / own[:, None]
    B[np.arange(len(labels)), labels] = 0.0
    c = noise_mw / own
    return B, c


def _min_fixed_point(t, B, c, labels, n_groups, budget, record=False, max_iter=10_000):
    """Smallest ``q`` with ``q_g = t * max_{k in g} (B_k q + c_k)``, or None if ``sum q > budget``.

    Iterates are nondecreasing from zero.  Each step fixes the maximizing
    user of every group and jumps to that affine system's fixed point; a
    spectral radius >= 1 means no finite fixed point exists.
    """
    q = np.zeros(n_groups)
    iterates = [q] if record else None
    eye = np.eye(n_groups)
    for _ in range(max_iter):
        values = t * (B @ q + c)
        choice = np.full(n_groups, -1)
        best = np.full(n_groups, -np.inf)
        for k, g in enumerate(labels):
            if values[k] > best[g]:
                best[g], choice[g] = values[k], k
        A = eye - t * B[choice]
        try:
            q_new = np.linalg.solve(A, t * c[choice])
        except np.linalg.LinAlgError:
            return None, iterates
        # a nonpositive or shrinking solution means the chosen system has no
        # nonnegative fixed point, i.e. the target is unreachable
        if not np.all(np.isfinite(q_new)) or np.any(q_new < q * (1 - 1e-12) - 1e-300):
            return None, iterates
        if record:
            iterates.append(q_new)
        if q_new.sum() > budget:
            return None, iterates
        if np.all(np.abs(q_new - q) <= 1e-10 * max(q_new.max(), 1e-300)):
            return q_new, iterates
        q = q_new
    return None, iterates


def maxmin_power_control(
    directions: np.ndarray,
    served: Sequence[np.ndarray],
    budget: float,
    noise_mw: float,
    tol: float = 1e-6,
    record: bool = False,
) -> PowerControlResult:
    """Bisection on the common SINR target with fixed unit beam directions.

    Returns the group powers of the largest target found feasible.  A group
    whose beam gives zero gain to one of its users pins the target to zero.
    """
    H, labels = _stack(served)
    n_groups = len(served)
    gains = np.abs(H @ directions.T) ** 2
    own = gains[np.arange(len(labels)), labels]
    if np.any(own <= 0):
        return PowerControlResult(np.full(n_groups, budget / n_groups), 0.0)

    B, c = _interference_terms(gains, labels, n_groups, noise_mw)
    feasible = lambda t: _min_fixed_point(t, B, c, labels, n_groups, budget)[0]

    # no user can beat the full budget on its own beam with zero interference
    t_hi = budget / c.max()
    q_hi = feasible(t_hi)
    if q_hi is not None:
        return _result(t_hi, B, c, labels, n_groups, budget, record)
    t_lo = t_hi
    while True:
        t_lo *= 1e-3
        if feasible(t_lo) is not None:
            break
    while t_hi - t_lo > tol * t_lo:
        mid = np.sqrt(t_lo * t_hi) if t_hi / t_lo > 4 else 0.5 * (t_lo + t_hi)
        if feasible(mid) is not None:
            t_lo = mid
        else:
            t_hi = mid
    return _result(t_lo, B, c, labels, n_groups, budget, record)


def _result(t, B, c, labels, n_groups, budget, record):
    q, iterates = _min_fixed_point(t, B, c, labels, n_groups, budget, record=record)
    return PowerControlResult(q, float(t), iterates or [])


def mrt_slot(served: Sequence[np.ndarray], budget: float, noise_mw: float) -> BeamformerSet:
    dirs = mrt_beamformers(served)
    pc = maxmin_power_control(dirs, served, budget, noise_mw)
    return BeamformerSet(np.sqrt(pc.q)[:, None] * dirs)


def sca_mmf_beamforming(
    served: Sequence[np.ndarray],
    budget: float,
    noise_mw: float,
    rng: np.random.Generator,
    restarts: int = 5,
    max_iters: int = 500,
    tau: float = 0.1,
    anneal_every: int = 50,
    anneal_factor: float = 0.5,
    perturbation: float = 0.3,
) -> ScaResult:
    """Smoothed max-min ascent over the beamformers with a total power constraint.

    The objective is the log-sum-exp soft minimum of all served users'
    rates (bits) with temperature ``tau``.  Steps follow the normalized
    gradient, are projected onto ``sum ||w_g||^2 <= budget`` and are only
    accepted when the smoothed objective increases (backtracking by 0.5).
    ``tau`` is halved every ``anneal_every`` iterations or as soon as the
    step size collapses.  Restart 0 starts from MRT with max-min power
    control; the rest add complex Gaussian perturbations to MRT directions.
    All restarts run together as a batch; the best true min-rate wins.
    """
    H, labels = _stack(served)
    n_groups = len(served)
    Hn = H / np.sqrt(noise_mw)
    own_mask = np.zeros((len(labels), n_groups), dtype=bool)
    own_mask[np.arange(len(labels)), labels] = True

    dirs = mrt_beamformers(served)
    start = mrt_slot(served, budget, noise_mw).W / np.sqrt(budget)
    V = np.empty((restarts,) + dirs.shape, dtype=complex)
    V[0] = start
    for r in range(1, restarts):
        v = dirs + perturbation * complex_normal(rng, dirs.shape)
        V[r] = v / np.linalg.norm(v)
    Hs = np.sqrt(budget) * Hn
    Hs_T, Hs_conj = Hs.T.copy(), Hs.conj()

    def rates(V):
        z = np.swapaxes(V @ Hs_T, 1, 2)
        pw = np.abs(z) ** 2
        total = pw.sum(axis=2) + 1.0
        interf = total - pw[:, own_mask]
        return z, total, interf, (np.log(total) - np.log(interf)) / LN2

    def smoothed(r, tau):
        m = r.min(axis=1, keepdims=True)
        return m[:, 0] - tau * np.log(np.exp(-(r - m) / tau).sum(axis=1))

    def project(V):
        norm = np.sqrt(np.sum(np.abs(V) ** 2, axis=(1, 2)))
        return V / np.maximum(norm, 1.0)[:, None, None]

    step = np.full(restarts, 0.1)
    z, total, interf, r = rates(V)
    obj = smoothed(r, tau)
    trace = [(tau, obj.copy())]
    it = 0
    phase_start = 0
    min_step = 1e-7
    while it < max_iters:
        it += 1
        pi = np.exp(-(r - r.min(axis=1, keepdims=True)) / tau)
        pi /= pi.sum(axis=1, keepdims=True)
        coef = (pi / LN2)[:, :, None] * (1.0 / total[:, :, None] - (~own_mask)[None] / interf[:, :, None]) * z
        grad = np.swapaxes(coef, 1, 2) @ Hs_conj
        gnorm = np.sqrt(np.sum(np.abs(grad) ** 2, axis=(1, 2)))
        direction = grad / np.maximum(gnorm, 1e-300)[:, None, None]

        active = step >= min_step
        accepted = np.zeros(restarts, dtype=bool)
        trial_step = np.minimum(2.0 * step, 1.0)
        while True:
            pending = active & ~accepted
            if not pending.any():
                break
            V_try = project(V + trial_step[:, None, None] * direction)
            z_t, tot_t, int_t, r_t = rates(V_try)
            obj_t = smoothed(r_t, tau)
            ok = pending & (obj_t > obj)
            if ok.any():
                V[ok], z[ok], total[ok], interf[ok], r[ok], obj[ok] = (
                    V_try[ok], z_t[ok], tot_t[ok], int_t[ok], r_t[ok], obj_t[ok])
                accepted |= ok
            fail = pending & ~ok
            trial_step[fail] *= 0.5
            step[fail] = trial_step[fail]
            active &= step >= min_step
        step[accepted] = trial_step[accepted]
        trace.append((tau, obj.copy()))

        stalled = not (step >= min_step).any()
        if it - phase_start >= anneal_every or stalled:
            if stalled and tau < 1e-4:
                break
            tau *= anneal_factor
            phase_start = it
            step[:] = np.maximum(step, 1e-3)
            obj = smoothed(r, tau)
            trace.append((tau, obj.copy()))

    true_min = r.min(axis=1)
    best = int(np.argmax(true_min))
    W = np.sqrt(budget) * V[best]
    return ScaResult(BeamformerSet(W), float(true_min[best]), trace, exhausted=it >= max_iters)


def time_division_schedule(group_sizes: Sequence[int] | int, n_slots: int, rng: np.random.Generator) -> SlotSchedule:
    """Shuffle each group and deal its users round-robin into ``n_slots`` slots."""
    if isinstance(group_sizes, (int, np.integer)):
        group_sizes = [int(group_sizes)]
    dealt = []
    for k_g in group_sizes:
        if k_g < 1:
            raise ValueError("groups must be nonempty")
        perm = rng.permutation(k_g)
        dealt.append([np.sort(perm[n::n_slots]) for n in range(n_slots)])
    return SlotSchedule(tuple(tuple(d[n] for d in dealt) for n in range(n_slots)))


def slot_rate(beams: BeamformerSet, served: Sequence[np.ndarray], noise_mw: float) -> np.ndarray:
    """Per-group ``log2(1 + min SINR)`` over the served users of one slot."""
    out = []
    for g, h in enumerate(served):
        if len(h) == 0:
            out.append(np.inf)
            continue
        out.append(np.log2(1.0 + np.min(conventional_sinr(h, beams, g, noise_mw))))
    return np.array(out)


SCHEMES = ("mrt", "sca")


@dataclass(frozen=True)
class TdRateReport:
    slot_rates: np.ndarray
    group_rates: np.ndarray
    mmf_rate: float
    normalization: str
    beams: tuple[BeamformerSet, ...] = field(default=(), repr=False)


def design_slot(scheme: str, served, budget, noise_mw, rng=None, sca_options: dict | None = None) -> BeamformerSet:
    if scheme == "mrt":
        return mrt_slot(served, budget, noise_mw)
    if scheme == "sca":
        if rng is None:
            raise ValueError("the SCA baseline needs an rng for its restarts")
        return sca_mmf_beamforming(served, budget, noise_mw, rng, **(sca_options or {})).beams
    raise ValueError(f"unknown baseline scheme {scheme!r}")


def served_channels(channels: ChannelSet, slot: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [channels.h[g][idx] for g, idx in enumerate(slot)]


def design_frame(scheme, channels, schedule, budget, noise_mw, rng=None, sca_options=None) -> list[BeamformerSet]:
    """Beamformers for every slot (the part timed as the transmit decision).

    Groups with nobody scheduled in a slot get a zero beam there.
    """
    out = []
    for slot in schedule.slots:
        served = served_channels(channels, slot)
        active = [g for g, h in enumerate(served) if len(h)]
        W = np.zeros((len(served), channels.n_antennas), dtype=complex)
        if active:
            beams = design_slot(scheme, [served[g] for g in active], budget, noise_mw, rng, sca_options)
            W[active] = beams.W
        out.append(BeamformerSet(W))
    return out


def td_mmf_rate(
    scheme: str,
    channels: ChannelSet,
    schedule: SlotSchedule,
    budget: float,
    noise_mw: float,
    normalization: str = "per-slot",
    rng: np.random.Generator | None = None,
    sca_options: dict | None = None,
    beams: Sequence[BeamformerSet] | None = None,
) -> TdRateReport:
    """Time-division MMF rate: each slot's max-min rate, averaged over slots.

    Under ``per-frame`` normalization slot rates are summed instead.
    """
    if beams is None:
        beams = design_frame(scheme, channels, schedule, budget, noise_mw, rng, sca_options)
    per_slot = np.array([
        slot_rate(b, served_channels(channels, slot), noise_mw) for b, slot in zip(beams, schedule.slots)
    ])
    slot_mmf = per_slot.min(axis=1)
    slot_mmf[np.isinf(slot_mmf)] = 0.0
    per_slot[np.isinf(per_slot)] = 0.0
    scale = 1.0 / schedule.n_slots if normalization == "per-slot" else 1.0
    return TdRateReport(
        slot_rates=slot_mmf,
        group_rates=scale * per_slot.sum(axis=0),
        mmf_rate=float(scale * slot_mmf.sum()),
        normalization=normalization,
        beams=tuple(beams),
    )
