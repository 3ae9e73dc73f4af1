"""Self-verification suite run by ``cfmgm verify``.

Each check returns a :class:`Check`; the suite passes only if all do.  The
allocator is compared with a bisection oracle that only ever asks whether a
target SINR fits in the budget, never using the closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import complex_normal
from .cpdft import PrecoderBank, build_precoder_bank, equalizer
from .transceiver import QPSK, mmf_power_allocation, realized_sinr


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


def faulty_bank(n: int, slot: int = 1, row: int = 0, col: int = 0, phase: float = np.pi / 2) -> PrecoderBank:
    """A bank with one precoder entry rotated, for fault-injection tests."""
    good = build_precoder_bank(n)
    U = good.U.copy()
    U[slot, row, col] *= np.exp(1j * phase)
    return PrecoderBank(U=U, F=np.ascontiguousarray(np.transpose(U, (2, 1, 0))))


def random_nonzero_channels(rng: np.random.Generator, count: int, n: int, floor: float = 0.1) -> np.ndarray:
    """Complex channels whose entries have modulus in ``[floor, floor + 2)``."""
    mod = floor + 2.0 * rng.random((count, n))
    return mod * np.exp(2j * np.pi * rng.random((count, n)))


def cancellation_errors(bank: PrecoderBank, h: np.ndarray) -> tuple[float, float]:
    """Largest deviation of the combined gain from ``N`` and of any cross term from 0."""
    n = bank.n
    e = equalizer(h)
    # coupling[c, g, q] = e_c.T conj(F_g) F_q.T h_c
    left = np.einsum("ca,gab->cgb", e, bank.F.conj())
    right = np.einsum("qnb,cn->cqb", bank.F, h)
    coupling = np.einsum("cgb,cqb->cgq", left, right)
    eye = np.eye(n, dtype=bool)
    gain_err = np.abs(coupling[:, eye] - n).max()
    cross_err = np.abs(coupling[:, ~eye]).max()
    return float(gain_err), float(cross_err)


def check_cancellation(n: int, rng, trials: int = 1000, bank: PrecoderBank | None = None, tol: float = 1e-9) -> Check:
    bank = bank or build_precoder_bank(n)
    h = random_nonzero_channels(rng, trials, n)
    gain_err, cross_err = cancellation_errors(bank, h)
    return Check(
        f"cancellation_identity[N={n}]",
        gain_err < tol and cross_err < tol,
        f"max |gain - N| = {gain_err:.3e}, max |cross| = {cross_err:.3e} over {trials} channels",
    )


def check_unitary(n: int, bank: PrecoderBank | None = None, tol: float = 1e-12) -> Check:
    bank = bank or build_precoder_bank(n)
    eye = np.eye(n)
    err = max(np.abs(U.conj().T @ U - eye).max() for U in bank.U)
    return Check(f"precoders_unitary[N={n}]", err < tol, f"max |U^H U - I| = {err:.3e}")


def lp_bisection_t_star(gains: np.ndarray, budget: float, rel_tol: float = 1e-13) -> float:
    """Largest ``t`` with ``sum_g t / A_g <= budget``, found by bisection."""
    gains = np.asarray(gains, dtype=float)
    feasible = lambda t: np.sum(t / gains) <= budget
    # all power to the strongest group bounds every feasible target
    lo, hi = 0.0, budget * gains.max()
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def random_allocation_instance(rng: np.random.Generator, max_groups: int = 16):
    g = int(rng.integers(1, max_groups + 1))
    gains = 10.0 ** rng.uniform(-2, 9, size=g)
    budget = 10.0 ** rng.uniform(-3, 3)
    return gains, budget


def check_allocator(rng, instances: int = 1000, tol: float = 1e-9, active_tol: float = 1e-12) -> list[Check]:
    worst_t = worst_sum = worst_equal = 0.0
    for _ in range(instances):
        gains, budget = random_allocation_instance(rng)
        alloc = mmf_power_allocation(gains, budget)
        oracle = lp_bisection_t_star(gains, budget)
        worst_t = max(worst_t, abs(alloc.t_star - oracle) / oracle)
        data = alloc.data_powers
        worst_sum = max(worst_sum, abs(data.sum() - budget) / budget)
        level = gains * data
        worst_equal = max(worst_equal, (level.max() - level.min()) / level.max())
    return [
        Check("allocator_vs_lp_oracle", worst_t < tol, f"max relative t* error {worst_t:.3e} over {instances}"),
        Check(
            "allocator_activeness",
            worst_sum < active_tol and worst_equal < active_tol,
            f"max budget slack {worst_sum:.3e}, max spread of A_g p_g {worst_equal:.3e}",
        ),
    ]


def simulate_combined(bank, h, p, g, noise_mw, rng, frames: int, h_hat=None):
    """Run ``frames`` noisy frames through the chain; return sent and combined symbols."""
    n = bank.n
    s = rng.choice(QPSK, size=(frames, n))
    # x[f, slot] = U_slot @ (sqrt(p) * s_f) / sqrt(N); y[f, slot] = h.T x + z
    x = np.einsum("tab,fb->fta", bank.U, np.sqrt(p) * s) / np.sqrt(n)
    y = x @ h + complex_normal(rng, (frames, n), np.sqrt(noise_mw))
    e = equalizer(h if h_hat is None else h_hat)
    out = y @ (bank.F[g].conj().T @ e)
    return s, out


def empirical_sinr(bank, h, p, g, noise_mw, rng, frames: int) -> float:
    s, out = simulate_combined(bank, h, p, g, noise_mw, rng, frames)
    wanted = np.sqrt(bank.n * p[g]) * s[:, g]
    return float(np.mean(np.abs(wanted) ** 2) / np.mean(np.abs(out - wanted) ** 2))


def check_sinr(n: int, rng, frames: int = 10_000, tol: float = 0.03) -> Check:
    bank = build_precoder_bank(n)
    h = 0.01 * (1.0 + 0.3 * complex_normal(rng, n)) * np.exp(2j * np.pi * rng.random(n))
    p = rng.uniform(0.5, 2.0, size=n)
    noise = 1e-4
    worst = 0.0
    for g in range(n):
        emp = empirical_sinr(bank, h, p, g, noise, rng, frames)
        law = realized_sinr(h, p, g, noise)
        worst = max(worst, abs(emp / law - 1.0))
    return Check(f"sinr_moment[N={n}]", worst < tol, f"max relative SINR error {worst:.3e} at {frames} frames")


def check_noise_whiteness(n: int, rng, draws: int = 100_000, tol: float = 0.05) -> Check:
    bank = build_precoder_bank(n)
    z = complex_normal(rng, (draws, n))
    worst = 0.0
    for g in range(n):
        w = z @ bank.F[g].conj().T
        cov = w.T @ w.conj() / draws
        worst = max(worst, np.abs(cov - np.eye(n)).max())
    return Check(f"noise_whiteness[N={n}]", worst < tol, f"max |cov - I| = {worst:.3e}")


def run_suite(sizes=(4, 8, 16), seed: int = 0, fault: bool = False) -> list[Check]:
    """All checks at every size in ``sizes``; ``fault`` corrupts one precoder entry."""
    rng = np.random.default_rng(seed)
    checks = []
    for n in sizes:
        bank = faulty_bank(n) if fault else None
        checks.append(check_cancellation(n, rng, bank=bank))
        checks.append(check_unitary(n, bank=bank))
        checks.append(check_sinr(n, rng))
        checks.append(check_noise_whiteness(n, rng))
    checks.extend(check_allocator(rng))
    return checks
