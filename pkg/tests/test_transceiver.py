import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from cfmgm.channel import UserGeometry, complex_normal, generate_channels
from cfmgm.config import SystemConfig
from cfmgm.cpdft import build_precoder_bank
from cfmgm.transceiver import (
    OpCounter,
    SymbolFrame,
    allocate_for_channels,
    cf_mgm_mmf_rate,
    combine,
    dof_estimate,
    effective_gain,
    make_frame,
    mmf_power_allocation,
    predicted_mmf_rate,
    realized_sinr,
    receive_frame,
    transmit_frame,
    worst_case_gains,
)
from cfmgm.verify import empirical_sinr, lp_bisection_t_star, random_allocation_instance

gain_lists = st.lists(st.floats(1e-3, 1e9), min_size=1, max_size=16)
budgets = st.floats(1e-3, 1e3)


# -- large-scale gains -------------------------------------------------------

def test_effective_gain_examples():
    assert effective_gain(UserGeometry(0.0, 100.0, 0.0), 1e-12) == pytest.approx(1e8)
    assert effective_gain(1.0, 1.0) == 1.0
    assert effective_gain(40.0, 1e-9) == pytest.approx(effective_gain(20.0, 1e-9) / 4)
    with pytest.raises(ValueError):
        effective_gain(0.0, 1.0)
    with pytest.raises(ValueError):
        effective_gain(10.0, 0.0)


def test_worst_case_gains():
    g = lambda r: UserGeometry(0.0, r, 0.0)
    assert worst_case_gains([[g(60.0)]], 1.0) == [pytest.approx(1 / 3600)]
    assert worst_case_gains([[g(50.0), g(100.0)]], 1.0) == [pytest.approx(1e-4)]
    users = [g(r) for r in (55.0, 91.0, 73.0, 64.0)]
    assert worst_case_gains([users], 1e-9) == worst_case_gains([users[::-1]], 1e-9)
    with pytest.raises(ValueError):
        worst_case_gains([[]], 1.0)


# -- allocator ---------------------------------------------------------------

def test_allocation_symmetric():
    alloc = mmf_power_allocation([1.0, 1.0], 2.0)
    assert alloc.t_star == pytest.approx(1.0)
    np.testing.assert_allclose(alloc.data_powers, [1.0, 1.0])


def test_allocation_two_groups_grid_oracle():
    # brute force: every split of the budget, keep the best worst-group SINR
    p1 = np.linspace(0.0, 3.0, 30_001)
    worst = np.minimum(1.0 * p1, 2.0 * (3.0 - p1))
    best = np.argmax(worst)
    assert (worst[best], p1[best]) == pytest.approx((2.0, 2.0), abs=1e-3)

    alloc = mmf_power_allocation([1.0, 2.0], 3.0)
    assert alloc.t_star == pytest.approx(2.0, rel=1e-15)
    np.testing.assert_allclose(alloc.data_powers, [2.0, 1.0], rtol=1e-15)


def test_allocation_default_scale():
    alloc = mmf_power_allocation([1e8] * 6, 2.0)
    assert alloc.t_star == pytest.approx(2e8 / 6, rel=1e-12)
    assert alloc.t_star == pytest.approx(lp_bisection_t_star(np.full(6, 1e8), 2.0), rel=1e-9)


def test_allocation_pilots_and_errors():
    alloc = mmf_power_allocation([1.0, 4.0, 2.0], 6.0)
    np.testing.assert_allclose(alloc.pilot_powers, [2.0, 2.0])
    assert len(alloc.p) == 5
    with pytest.raises(ValueError):
        mmf_power_allocation([], 1.0)
    with pytest.raises(ValueError):
        mmf_power_allocation([1.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        mmf_power_allocation([1.0], -1.0)


def test_allocation_against_lp_oracles():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        gains, budget = random_allocation_instance(rng)
        alloc = mmf_power_allocation(gains, budget)
        oracle = lp_bisection_t_star(gains, budget)
        assert abs(alloc.t_star - oracle) <= 1e-9 * oracle
        level = gains * alloc.data_powers
        assert np.ptp(level) <= 1e-12 * level.max()
        assert abs(alloc.data_powers.sum() - budget) <= 1e-12 * budget


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.1, 100.0), min_size=1, max_size=8), st.floats(0.1, 10.0))
def test_allocation_matches_linprog(gains, budget):
    # variables (p_1..p_G, t): maximize t, t <= A_g p_g, sum p <= budget
    g = len(gains)
    c = np.zeros(g + 1)
    c[-1] = -1.0
    a_ub = np.zeros((g + 1, g + 1))
    for i, a in enumerate(gains):
        a_ub[i, i] = -a
        a_ub[i, -1] = 1.0
    a_ub[g, :g] = 1.0
    b_ub = np.zeros(g + 1)
    b_ub[g] = budget
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=[(0, None)] * (g + 1), method="highs")
    assert res.status == 0
    assert mmf_power_allocation(gains, budget).t_star == pytest.approx(-res.fun, rel=1e-6)


@given(gain_lists, budgets, st.floats(1.01, 10.0), st.data())
def test_allocation_monotone(gains, budget, factor, data):
    base = mmf_power_allocation(gains, budget).t_star
    assert mmf_power_allocation(gains, budget * factor).t_star > base
    i = data.draw(st.integers(0, len(gains) - 1))
    bumped = list(gains)
    bumped[i] *= factor
    assert mmf_power_allocation(bumped, budget).t_star > base


@pytest.mark.parametrize("k_g", [1, 16, 48])
def test_allocator_operation_count(k_g):
    cfg = SystemConfig(users_per_group=k_g)
    ch = generate_channels(cfg, np.random.default_rng(0))
    counter = OpCounter()
    allocate_for_channels(ch, cfg, counter)
    assert counter.comparisons == cfg.n_users
    assert counter.arithmetic == 2 * cfg.n_groups


# -- transmit / receive / combine -------------------------------------------

def explicit_precoder(n, slot):
    return np.array([[cmath.exp(-2j * math.pi * a * ((g + slot) % n) / n) / math.sqrt(n) for g in range(n)]
                     for a in range(n)])


def test_transmit_zero_power():
    bank = build_precoder_bank(5)
    xs = transmit_frame(bank, np.zeros(5), np.ones(5))
    assert np.all(xs == 0)


def test_transmit_toy_n3():
    bank = build_precoder_bank(3)
    xs = transmit_frame(bank, np.ones(3), np.ones(3))
    for slot in range(3):
        expected = explicit_precoder(3, slot).sum(axis=1) / math.sqrt(3)
        np.testing.assert_allclose(xs[slot], expected, atol=1e-15)


def test_transmit_rejects_bad_shapes():
    bank = build_precoder_bank(4)
    with pytest.raises(ValueError):
        transmit_frame(bank, np.ones(3), np.ones(4))
    with pytest.raises(ValueError):
        transmit_frame(bank, -np.ones(4), np.ones(4))


def test_transmit_power_moment(rng):
    bank = build_precoder_bank(8)
    p = rng.uniform(0.1, 3.0, size=8)
    energy = np.zeros(8)
    frames = 20_000
    for _ in range(frames):
        s = make_frame(6, rng).s.copy()
        s[-2:] = rng.choice([1, -1, 1j, -1j], size=2)  # random pilots keep E[ss^H] = I
        energy += np.sum(np.abs(transmit_frame(bank, p, s)) ** 2, axis=1)
    np.testing.assert_allclose(energy / frames, p.sum() / 8, rtol=0.02)


def test_receive_structure(rng):
    n = 6
    bank = build_precoder_bank(n)
    h = complex_normal(rng, n)
    p = rng.uniform(0.5, 2.0, size=n)
    frame = make_frame(n - 2, rng)
    y = receive_frame(h, transmit_frame(bank, p, frame), 0.0)
    expected = sum(bank.F[g].T @ h * math.sqrt(p[g] / n) * frame.s[g] for g in range(n))
    np.testing.assert_allclose(y, expected, atol=1e-12)

    only = np.zeros(n)
    only[2] = p[2]
    y = receive_frame(h, transmit_frame(bank, only, frame), 0.0)
    np.testing.assert_allclose(y, bank.F[2].T @ h * math.sqrt(p[2] / n) * frame.s[2], atol=1e-12)
    assert np.all(receive_frame(h, transmit_frame(bank, np.zeros(n), frame), 0.0) == 0)


def test_receive_noise_variance(rng):
    h = np.ones(4)
    xs = np.zeros((4, 4))
    samples = np.concatenate([receive_frame(h, xs, 2.5e-3, rng) for _ in range(25_000)])
    assert np.mean(np.abs(samples) ** 2) == pytest.approx(2.5e-3, rel=0.03)


def test_noiseless_reconstruction(rng):
    for n in (3, 5, 8, 16):
        bank = build_precoder_bank(n)
        for _ in range(20):
            h = (0.2 + rng.random(n)) * np.exp(2j * math.pi * rng.random(n))
            p = rng.uniform(0.1, 4.0, size=n)
            frame = make_frame(n - 2, rng, pilots=(1.0, 1j))
            y = receive_frame(h, transmit_frame(bank, p, frame), 0.0)
            for g in range(n):
                assert abs(combine(y, bank, g, h) - math.sqrt(n * p[g]) * frame.s[g]) < 1e-9


def test_combine_pilot_and_mismatch(rng):
    n = 4
    bank = build_precoder_bank(n)
    h = np.array([0.5 + 0.1j, -0.3j, 0.8, 0.2 - 0.6j])
    p = np.array([1.0, 2.0, 0.5, 0.7])
    frame = SymbolFrame(np.array([1j, -1, 1.0, 1.0]))
    y = receive_frame(h, transmit_frame(bank, p, frame), 0.0)
    assert combine(y, bank, n - 2, h) == pytest.approx(math.sqrt(n * p[n - 2]) * 1.0)
    for g in range(n):
        assert combine(y, bank, g, 2 * h) == pytest.approx(0.5 * math.sqrt(n * p[g]) * frame.s[g], abs=1e-12)
    with pytest.raises(ValueError):
        combine(y, bank, 0, np.array([1, 0, 1, 1]))


# -- SINR ---------------------------------------------------------------------

def test_sinr_constant_modulus():
    n = 8
    h = 0.1 * np.exp(2j * math.pi * np.arange(n) / 7)
    p = np.full(n, 2.0)
    assert realized_sinr(h, p, 3, 1.0) == pytest.approx(0.02)
    assert realized_sinr(h, p, 3, 1.0) == pytest.approx(2.0 * 0.1**2 / 1.0)
    p[3] = 0.0
    assert realized_sinr(h, p, 3, 1.0) == 0.0


def test_sinr_monte_carlo(rng):
    n = 8
    bank = build_precoder_bank(n)
    h = 0.01 * (1.0 + 0.4 * complex_normal(rng, n))
    p = rng.uniform(0.5, 2.0, size=n)
    noise = 2e-4
    law = realized_sinr(h, p, 1, noise)
    # frame by frame through the public chain
    errors = []
    for _ in range(10_000):
        frame = make_frame(n - 2, rng)
        y = receive_frame(h, transmit_frame(bank, p, frame), noise, rng)
        errors.append(combine(y, bank, 1, h) - math.sqrt(n * p[1]) * frame.s[1])
    emp = n * p[1] / np.mean(np.abs(errors) ** 2)
    assert emp == pytest.approx(law, rel=0.03)
    assert empirical_sinr(bank, h, p, 4, noise, rng, 10_000) == pytest.approx(realized_sinr(h, p, 4, noise), rel=0.03)


def test_sinr_imperfect_csir(rng):
    n = 8
    bank = build_precoder_bank(n)
    h = 0.01 * np.exp(2j * math.pi * rng.random(n)) * (1 + 0.3 * complex_normal(rng, n))
    h_hat = h * (1 + 0.1 * complex_normal(rng, n))
    p = rng.uniform(0.5, 2.0, size=n)
    noise = 1e-5
    law = realized_sinr(h, p, 2, noise, h_hat=h_hat, bank=bank)
    assert law < realized_sinr(h, p, 2, noise)
    # perfect estimate through the general path agrees with the closed form
    assert realized_sinr(h, p, 2, noise, h_hat=h, bank=bank) == pytest.approx(realized_sinr(h, p, 2, noise), rel=1e-9)

    frames = 10_000
    err = []
    coupling = (1 / h_hat) @ bank.combiner_product(2, 2) @ h
    for _ in range(frames):
        frame = make_frame(n - 2, rng)
        frame.s[-2:] = rng.choice([1, -1, 1j, -1j], size=2)
        y = receive_frame(h, transmit_frame(bank, p, frame), noise, rng)
        err.append(combine(y, bank, 2, h_hat) - coupling * math.sqrt(p[2] / n) * frame.s[2])
    emp = abs(coupling) ** 2 * p[2] / n / np.mean(np.abs(err) ** 2)
    assert emp == pytest.approx(law, rel=0.03)


# -- rates --------------------------------------------------------------------

def test_identical_users_equal_rates():
    cfg = SystemConfig(rician_kappa_db=float("inf"), aod_range=(0.3, 0.3), distance_range=(70.0, 70.0))
    report = cf_mgm_mmf_rate(generate_channels(cfg, np.random.default_rng(1)), cfg)
    np.testing.assert_allclose(report.group_rates, report.group_rates[0], rtol=1e-12)
    assert report.mmf_rate == pytest.approx(report.group_rates[0])


def test_los_sinr_equals_allocation_target(los_cfg):
    ch = generate_channels(los_cfg, np.random.default_rng(2))
    report = cf_mgm_mmf_rate(ch, los_cfg)
    np.testing.assert_allclose(report.worst_sinr / report.allocation.t_star, 1.0, atol=1e-9)
    assert report.mmf_rate == pytest.approx(predicted_mmf_rate(report.allocation, 8), rel=1e-9)


def test_rate_normalizations(default_cfg):
    ch = generate_channels(default_cfg, np.random.default_rng(3))
    per_slot = cf_mgm_mmf_rate(ch, default_cfg)
    per_frame = cf_mgm_mmf_rate(ch, default_cfg.replace(rate_normalization="per-frame"))
    assert per_frame.mmf_rate == pytest.approx(8 * per_slot.mmf_rate)
    np.testing.assert_allclose(per_slot.group_rates, np.log2(1 + per_slot.worst_sinr) / 8)


def test_imperfect_csir_lowers_rate(default_cfg):
    ch = generate_channels(default_cfg, np.random.default_rng(4))
    clean = cf_mgm_mmf_rate(ch, default_cfg).mmf_rate
    noisy = cf_mgm_mmf_rate(ch, default_cfg.replace(csir_error_var=1e-3), rng=np.random.default_rng(0)).mmf_rate
    assert noisy < clean
    with pytest.raises(ValueError):
        cf_mgm_mmf_rate(ch, default_cfg.replace(csir_error_var=1e-3))


# -- DoF ------------------------------------------------------------------------

def test_dof_linear_target():
    c = 0.37
    slope = dof_estimate(lambda p: math.log2(1 + c * p), 1e6, 1e7)
    # closed form: log2((1 + c 1e7) / (1 + c 1e6)) / log2(10)
    assert slope == pytest.approx(math.log2((1 + c * 1e7) / (1 + c * 1e6)) / math.log2(10), rel=1e-12)
    assert slope == pytest.approx(1.0, abs=1e-3)


def test_dof_constant_rate():
    assert dof_estimate(lambda p: 2.5, 1.0, 1e3) == 0.0
    with pytest.raises(ValueError):
        dof_estimate(lambda p: p, 0.0, 1.0)
    with pytest.raises(ValueError):
        dof_estimate(lambda p: p, 2.0, 1.0)
