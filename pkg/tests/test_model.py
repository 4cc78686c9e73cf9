import numpy as np
import pytest

from hcran_noma import model
from hcran_noma.model import (ChannelState, ConfigError, PowerAllocation,
                              check_feasibility, derive_binaries,
                              energy_efficiency, sic_margin, sinr,
                              total_power, user_rate, weighted_sum_rate)

from conftest import make_config, make_channel


def manual_sinr(p, gamma, sigma, m, k, n):
    """Scalar transcription of the interference rule, used as an oracle:
    same-RRH users with stronger gain interfere through the victim's own
    channel, every other RRH's users through their cross channels."""
    m_count, k_count, _ = p.shape
    interf = 0.0
    for i in range(k_count):
        if i == k:
            continue
        stronger = gamma[m, i, n] > gamma[m, k, n] or (
            gamma[m, i, n] == gamma[m, k, n] and i < k)
        if stronger:
            interf += p[m, i, n] * gamma[m, k, n]
    for j in range(m_count):
        if j == m:
            continue
        for i in range(k_count):
            interf += p[j, i, n] * gamma[j, k, n]
    return p[m, k, n] * gamma[m, k, n] / (sigma[m, k, n] + interf)


def uniform_channel(cfg, gamma):
    shape = (cfg.n_rrh, cfg.n_users, cfg.n_subcarriers)
    return ChannelState(gamma=np.asarray(gamma, dtype=float) * np.ones(shape),
                        sigma=np.ones(shape))


class TestSinr:
    def test_single_user_identity(self):
        cfg = make_config(m=1, k=1, n=1)
        ch = uniform_channel(cfg, 1.0)
        alloc = PowerAllocation(p=np.ones((1, 1, 1)))
        assert sinr(alloc, ch, 0, 0, 0) == pytest.approx(1.0)

    def test_strong_user_sees_no_weak_interference(self):
        cfg = make_config(m=1, k=2, n=1)
        shape = (1, 2, 1)
        gamma = np.array([2.0, 1.0]).reshape(shape)  # user 0 stronger
        ch = ChannelState(gamma=gamma, sigma=np.ones(shape))
        alloc = PowerAllocation(p=np.full(shape, 3.0))
        # the weaker user's signal is decoded and removed at the strong user
        assert sinr(alloc, ch, 0, 0, 0) == pytest.approx(3.0 * 2.0 / 1.0)
        # the weak user eats the strong user's power through its own channel
        assert sinr(alloc, ch, 0, 1, 0) == pytest.approx(3.0 / (1.0 + 3.0))

    def test_matches_manual_evaluation(self):
        cfg = make_config(m=2, k=2, n=1)
        ch = make_channel(cfg, seed=7)
        rng = np.random.default_rng(8)
        alloc = PowerAllocation(p=rng.uniform(0, 1, ch.gamma.shape))
        for m in range(2):
            for k in range(2):
                assert sinr(alloc, ch, m, k, 0) == pytest.approx(
                    manual_sinr(alloc.p, ch.gamma, ch.sigma, m, k, 0), rel=1e-12)

    def test_index_errors(self, small_cfg, small_channel):
        alloc = model.zeros_like_alloc(small_cfg)
        with pytest.raises(IndexError):
            sinr(alloc, small_channel, 5, 0, 0)
        with pytest.raises(IndexError):
            sinr(alloc, small_channel, 0, 0, 99)


class TestRates:
    def test_known_points(self):
        cfg = make_config(m=1, k=1, n=1)
        shape = (1, 1, 1)
        ch = ChannelState(gamma=np.ones(shape), sigma=np.ones(shape))
        assert user_rate(PowerAllocation(p=np.ones(shape)), ch, 0, 0, 0) == pytest.approx(1.0)
        assert user_rate(PowerAllocation(p=np.zeros(shape)), ch, 0, 0, 0) == pytest.approx(0.0)
        assert user_rate(PowerAllocation(p=np.full(shape, 3.0)), ch, 0, 0, 0) == pytest.approx(2.0)

    def test_rate_is_log_of_sinr(self, small_cfg, small_channel):
        rng = np.random.default_rng(0)
        alloc = PowerAllocation(p=rng.uniform(0, 0.5, small_channel.gamma.shape))
        for m in range(small_cfg.n_rrh):
            for k in range(small_cfg.n_users):
                for n in range(small_cfg.n_subcarriers):
                    z = sinr(alloc, small_channel, m, k, n)
                    assert user_rate(alloc, small_channel, m, k, n) == pytest.approx(
                        np.log2(1 + z), rel=1e-12)

    def test_monotone_in_own_power(self, small_cfg, small_channel):
        rng = np.random.default_rng(1)
        p = rng.uniform(0, 0.5, small_channel.gamma.shape)
        base = user_rate(PowerAllocation(p=p.copy()), small_channel, 0, 1, 0)
        p[0, 1, 0] *= 1.5
        assert user_rate(PowerAllocation(p=p), small_channel, 0, 1, 0) >= base

    def test_weighted_sum_rate_trivials(self, small_cfg, small_channel):
        zero = model.zeros_like_alloc(small_cfg)
        assert weighted_sum_rate(zero, small_channel, small_cfg) == 0.0

        cfg0 = make_config(weights=np.zeros((2, 3)))
        rng = np.random.default_rng(2)
        alloc = PowerAllocation(p=rng.uniform(0, 0.5, small_channel.gamma.shape))
        assert weighted_sum_rate(alloc, small_channel, cfg0) == 0.0

    def test_unit_instance(self):
        cfg = make_config(m=1, k=1, n=1)
        shape = (1, 1, 1)
        ch = ChannelState(gamma=np.ones(shape), sigma=np.ones(shape))
        alloc = PowerAllocation(p=np.ones(shape))
        assert weighted_sum_rate(alloc, ch, cfg) == pytest.approx(1.0)


class TestPower:
    def test_static_floor_constants(self):
        # 3 W fiber at the macro site, 1 W per low-power head, 0.1 W / 3 W
        # circuits, two low-power heads: 3 + 2 + 0.2 + 3
        cfg = make_config(m=3, k=2, n=2)
        assert total_power(model.zeros_like_alloc(cfg), cfg) == pytest.approx(8.2)

    def test_amplifier_term(self):
        cfg = make_config(m=3, k=2, n=2, p_max=[4.0, 4.0, 4.0])
        alloc = model.zeros_like_alloc(cfg)
        alloc.p[1, 0, 0] = 1.0  # one elastic watt on a low-power head, eta=2
        assert total_power(alloc, cfg) == pytest.approx(10.2)

    def test_single_tier(self):
        cfg = make_config(m=1, k=1, n=1, eta=[4.0])
        alloc = model.zeros_like_alloc(cfg)
        assert total_power(alloc, cfg) == pytest.approx(6.0)
        alloc.p[0, 0, 0] = 0.5
        assert total_power(alloc, cfg) == pytest.approx(6.0 + 4.0 * 0.5)

    def test_streaming_power_excluded(self):
        cfg = make_config(m=1, k=2, n=1, streaming=(0,))
        alloc = model.zeros_like_alloc(cfg)
        alloc.p[0, 0, 0] = 1.0  # streaming user power is not in the model
        assert total_power(alloc, cfg) == pytest.approx(cfg.static_power())


class TestEnergyEfficiency:
    def test_zero_rate(self, small_cfg, small_channel):
        rep = energy_efficiency(model.zeros_like_alloc(small_cfg), small_channel, small_cfg)
        assert rep.ee == 0.0
        assert rep.total_power >= small_cfg.static_power()

    def test_identity(self, small_cfg, small_channel):
        rng = np.random.default_rng(3)
        alloc = PowerAllocation(p=rng.uniform(0, 0.3, small_channel.gamma.shape))
        rep = energy_efficiency(alloc, small_channel, small_cfg)
        assert rep.ee * rep.total_power == pytest.approx(rep.sum_rate, rel=1e-12)


class TestSicMargin:
    def test_symmetric_zero(self):
        cfg = make_config(m=2, k=2, n=1)
        shape = (2, 2, 1)
        ch = ChannelState(gamma=np.ones(shape), sigma=np.ones(shape))
        alloc = PowerAllocation(p=np.zeros(shape))
        # equal gains, equal noise, no cross power: the margin vanishes;
        # ties orient toward the lower index, so (0, 1) is the valid order
        assert sic_margin(alloc, ch, 0, 0, 1, 0) == pytest.approx(0.0)

    def test_sign_forced_without_cross_power(self):
        cfg = make_config(m=1, k=2, n=1)
        shape = (1, 2, 1)
        gamma = np.array([3.0, 1.0]).reshape(shape)
        ch = ChannelState(gamma=gamma, sigma=np.ones(shape))
        alloc = PowerAllocation(p=np.zeros(shape))
        # gamma_weak*sigma - gamma_strong*sigma = 1 - 3 < 0
        assert sic_margin(alloc, ch, 0, 0, 1, 0) == pytest.approx(-2.0)

    def test_order_precondition(self):
        cfg = make_config(m=1, k=2, n=1)
        shape = (1, 2, 1)
        gamma = np.array([3.0, 1.0]).reshape(shape)
        ch = ChannelState(gamma=gamma, sigma=np.ones(shape))
        alloc = PowerAllocation(p=np.zeros(shape))
        with pytest.raises(ValueError):
            sic_margin(alloc, ch, 0, 1, 0, 0)  # wrong orientation
        with pytest.raises(ValueError):
            sic_margin(alloc, ch, 0, 1, 1, 0)

    def test_sign_agrees_with_direct_comparison(self):
        # oracle: the weak user's signal measured at the strong user must be
        # at least as clean as at its own receiver (cross interference only)
        cfg = make_config(m=2, k=2, n=1)
        rng = np.random.default_rng(11)
        for trial in range(50):
            ch = make_channel(cfg, seed=100 + trial)
            p = rng.uniform(0, 1.0, ch.gamma.shape)
            alloc = PowerAllocation(p=p)
            cross = model.cross_interference(p, ch)
            strong = model.stronger_mask(ch.gamma)
            for m in range(2):
                a, b = (0, 1) if strong[m, 0, 1, 0] else (1, 0)
                omega = sic_margin(alloc, ch, m, a, b, 0)
                at_strong = ch.gamma[m, a, 0] / (ch.sigma[m, a, 0] + cross[m, a, 0])
                at_weak = ch.gamma[m, b, 0] / (ch.sigma[m, b, 0] + cross[m, b, 0])
                assert (omega <= 0) == (at_strong >= at_weak)


class TestFeasibility:
    def test_zero_alloc_reports_only_min_rate(self):
        cfg = make_config(m=2, k=3, n=2, streaming=(0,))
        ch = make_channel(cfg)
        report = check_feasibility(model.zeros_like_alloc(cfg), ch, cfg)
        names = {v.constraint for v in report.violations}
        assert names == {"C13"}

    def test_mask_violation(self, small_cfg, small_channel):
        alloc = model.zeros_like_alloc(small_cfg)
        alloc.p[0, 0, 0] = small_cfg.p_mask[0, 0, 0] * 1.5
        report = check_feasibility(alloc, small_channel, small_cfg)
        assert any(v.constraint == "C4" and v.index == (0, 0, 0)
                   for v in report.violations)

    def test_two_rrh_product(self, small_cfg, small_channel):
        alloc = model.zeros_like_alloc(small_cfg)
        alloc.p[0, 0, 0] = small_cfg.p_mask[0, 0, 0]
        alloc.p[1, 0, 1] = small_cfg.p_mask[1, 0, 1]
        report = check_feasibility(alloc, small_channel, small_cfg)
        assert report.by_constraint("C10")

    def test_subcarrier_tuple_product(self):
        cfg = make_config(m=1, k=5, n=1, l_max=3)
        ch = make_channel(cfg)
        alloc = model.zeros_like_alloc(cfg)
        alloc.p[0, :4, 0] = cfg.p_mask[0, :4, 0]
        report = check_feasibility(alloc, ch, cfg)
        assert report.by_constraint("C11")

    def test_budget_violation(self, small_cfg, small_channel):
        alloc = model.zeros_like_alloc(small_cfg)
        alloc.p[...] = small_cfg.p_mask  # sums to K * p_max per head
        report = check_feasibility(alloc, small_channel, small_cfg)
        assert report.by_constraint("C12")


class TestDeriveBinaries:
    def test_zero_allocation(self, small_cfg):
        rho, a = derive_binaries(model.zeros_like_alloc(small_cfg), small_cfg)
        assert rho.sum() == 0 and a.sum() == 0

    def test_single_serving_head(self, small_cfg):
        alloc = model.zeros_like_alloc(small_cfg)
        alloc.p[1, 2, 0] = 0.1
        rho, a = derive_binaries(alloc, small_cfg)
        assert a[1, 2] == 1 and a.sum() == 1
        assert rho[1, 2, 0] == 1

    def test_top_l_selection(self):
        cfg = make_config(m=1, k=4, n=1, l_max=3)
        alloc = model.zeros_like_alloc(cfg)
        alloc.p[0, :, 0] = [0.4, 0.1, 0.3, 0.2]
        rho, _ = derive_binaries(alloc, cfg)
        assert list(rho[0, :, 0]) == [1, 0, 1, 1]

    def test_invariants_random(self):
        cfg = make_config(m=2, k=6, n=3, l_max=3)
        rng = np.random.default_rng(12)
        for _ in range(20):
            alloc = PowerAllocation(p=rng.uniform(0, 0.3, (2, 6, 3)))
            rho, a = derive_binaries(alloc, cfg)
            assert np.all(rho.sum(axis=1) <= cfg.l_max)
            assert np.all(a.sum(axis=0) <= 1)


class TestConfigValidation:
    def test_mask_above_budget(self):
        cfg = make_config()
        with pytest.raises(ConfigError):
            model.NetworkConfig(
                m_f=cfg.m_f, n_subcarriers=cfg.n_subcarriers,
                subcarrier_bandwidth=cfg.subcarrier_bandwidth, users=cfg.users,
                l_max=cfg.l_max, p_max=cfg.p_max, p_mask=cfg.p_mask * 100,
                eta=cfg.eta, p_fiber_hpn=3.0, p_fiber_lpn=1.0,
                p_circuit_hpn=3.0, p_circuit_lpn=0.1, weights=cfg.weights,
                rrh_positions=cfg.rrh_positions)

    def test_user_kind_rules(self):
        from hcran_noma.model import UserSpec
        from hcran_noma.traffic import TrafficSpec
        spec = TrafficSpec.from_queue(25.0, 125.0, 1024.0)
        with pytest.raises(ConfigError):
            UserSpec(kind="streaming", position=(0.0, 0.0))
        with pytest.raises(ConfigError):
            UserSpec(kind="elastic", position=(0.0, 0.0), traffic=spec)
        with pytest.raises(ConfigError):
            UserSpec(kind="bursty", position=(0.0, 0.0))
