"""Channel model oracles: hand-evaluated path loss, SINR/SNR, RSSI, and
Monte-Carlo checks of the Rician fading normalization."""

import math

import numpy as np
import pytest

from multirat import channel
from multirat.channel import (LinkBudget, NoiseModel, cellular_pathloss_gain,
                              cellular_sinr, draw_rician, rssi_dbm, wifi_pathloss_db,
                              wifi_snr)
from multirat.topology import ApConfig


def make_ap(**kw):
    defaults = dict(position=(0.0, 0.0), ref_loss_db=40.0, ref_distance_m=1.0,
                    indoor_exponent=3.0, obstacle_losses_db=())
    defaults.update(kw)
    return ApConfig(**defaults)


class TestCellularPathloss:
    def test_identity_at_reference(self):
        assert cellular_pathloss_gain(1.0, 1.0, 2.0) == 1.0

    def test_hand_value(self):
        assert cellular_pathloss_gain(100.0, 1e-3, 3.5) == pytest.approx(
            1e-3 * 100.0 ** -3.5, rel=1e-12)

    def test_clamp_below_one_meter(self):
        assert cellular_pathloss_gain(0.5, 1.0, 2.0) == cellular_pathloss_gain(
            1.0, 1.0, 2.0)

    def test_strictly_decreasing(self):
        ds = np.linspace(1.0, 500.0, 200)
        gains = [cellular_pathloss_gain(d, 1e-3, 3.5) for d in ds]
        assert all(a > b for a, b in zip(gains, gains[1:]))

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            cellular_pathloss_gain(10.0, 0.0, 2.0)


class TestWifiPathloss:
    def test_reference_distance(self):
        ap = make_ap()
        assert wifi_pathloss_db(ap.ref_distance_m, ap) == 40.0

    def test_hand_value_decade(self):
        # one decade with gamma=3 adds 30 dB, plus a 5 dB obstacle
        ap = make_ap(indoor_exponent=3.0, obstacle_losses_db=(5.0,))
        assert wifi_pathloss_db(10.0, ap) == pytest.approx(40.0 + 30.0 + 5.0,
                                                           rel=1e-12)

    def test_clamp_below_reference(self):
        ap = make_ap()
        assert wifi_pathloss_db(0.5, ap) == wifi_pathloss_db(1.0, ap)

    def test_strictly_increasing(self):
        ap = make_ap()
        ds = np.linspace(1.0, 100.0, 100)
        pls = [wifi_pathloss_db(d, ap) for d in ds]
        assert all(a < b for a, b in zip(pls, pls[1:]))


class TestRician:
    def test_los_limit(self):
        rng = np.random.default_rng(0)
        sample = draw_rician(120.0, rng)   # kappa = 1e12, essentially pure LoS
        assert sample.power == pytest.approx(1.0, abs=1e-6)

    def test_mean_power_normalized(self):
        rng = np.random.default_rng(1)
        powers = channel.draw_rician_powers(6.0, 100_000, rng)
        assert powers.mean() == pytest.approx(1.0, abs=0.02)

    @pytest.mark.parametrize("k_db", [0.0, 5.0, 10.0, 20.0])
    def test_mean_power_across_k_factors(self, k_db):
        rng = np.random.default_rng(int(k_db) + 10)
        powers = channel.draw_rician_powers(k_db, 100_000, rng)
        assert 0.98 <= powers.mean() <= 1.02

    def test_deterministic_per_seed(self):
        a = [draw_rician(6.0, np.random.default_rng(42)).coefficient
             for _ in range(1)]
        b = [draw_rician(6.0, np.random.default_rng(42)).coefficient
             for _ in range(1)]
        assert a == b
        seq1 = channel.draw_rician_powers(6.0, 50, np.random.default_rng(7))
        seq2 = channel.draw_rician_powers(6.0, 50, np.random.default_rng(7))
        assert np.array_equal(seq1, seq2)


def lb(rx, gain=1.0, fading=1.0):
    return LinkBudget(rx_power=rx, pathloss_gain=gain, fading_power=fading)


class TestSinrSnr:
    def test_sinr_reduces_to_snr(self):
        noise = NoiseModel(spectral_density=1e-12, bandwidth=1.0)
        assert cellular_sinr(lb(1e-9), [], noise) == pytest.approx(1000.0,
                                                                   rel=1e-12)

    def test_symmetric_interferer(self):
        noise = NoiseModel(spectral_density=1e-30, bandwidth=1.0)
        val = cellular_sinr(lb(1e-9), [lb(1e-9)], noise)
        assert val == pytest.approx(1.0, rel=1e-9)

    def test_zero_numerator(self):
        noise = NoiseModel(spectral_density=1e-12, bandwidth=1.0)
        assert cellular_sinr(lb(0.0), [], noise) == 0.0

    def test_adding_interferers_never_increases(self):
        noise = NoiseModel(spectral_density=1e-15, bandwidth=1e6)
        rng = np.random.default_rng(3)
        serving = lb(1e-9)
        interferers = []
        prev = cellular_sinr(serving, interferers, noise)
        for _ in range(10):
            interferers.append(lb(float(rng.uniform(0, 1e-10))))
            cur = cellular_sinr(serving, interferers, noise)
            assert cur <= prev
            prev = cur

    def test_wifi_snr_hand_value(self):
        noise = NoiseModel(spectral_density=1e-13, bandwidth=1.0)
        assert wifi_snr(lb(1e-10), noise) == pytest.approx(1000.0, rel=1e-12)

    def test_wifi_snr_zero(self):
        noise = NoiseModel(spectral_density=1e-13, bandwidth=1.0)
        assert wifi_snr(lb(0.0), noise) == 0.0

    def test_doubling_bandwidth_halves_snr(self):
        n1 = NoiseModel(spectral_density=1e-17, bandwidth=20e6)
        n2 = NoiseModel(spectral_density=1e-17, bandwidth=40e6)
        assert wifi_snr(lb(1e-9), n2) == pytest.approx(
            wifi_snr(lb(1e-9), n1) / 2.0, rel=1e-12)


class TestRssi:
    def test_one_milliwatt(self):
        assert rssi_dbm(1e-3) == 0.0

    def test_one_watt(self):
        assert rssi_dbm(1.0) == pytest.approx(30.0, abs=1e-12)

    def test_hand_value(self):
        assert rssi_dbm(1e-10) == pytest.approx(-70.0, abs=1e-9)

    def test_zero_power_floor(self):
        assert rssi_dbm(0.0) == channel.RSSI_FLOOR_DBM

    def test_round_trip(self):
        for dbm in (-120.0, -70.5, -30.0, 0.0, 23.0):
            watts = 10.0 ** (dbm / 10.0) * 1e-3
            assert rssi_dbm(watts) == pytest.approx(dbm, abs=1e-9)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            rssi_dbm(-1.0)
