import math

import numpy as np
import pytest

from iabsim.channel import (CHANNEL_PARAMS, MCS_TABLE, ChannelModel, LinkGeometry,
                            beamforming_gain_db, link_snr_db, los_probability,
                            noise_power_dbm, o2i_penetration_db, pathloss_db,
                            shadow_sigma_db, spectral_efficiency,
                            _o2i_wall_loss_db)


def geom(model, d2d, h_tx, h_rx):
    return LinkGeometry((0.0, 0.0, h_tx), (d2d, 0.0, h_rx), model)


class TestNoisePower:
    def test_unit_bandwidth(self):
        assert noise_power_dbm(1.0, -174.0, 0.0) == -174.0

    def test_bs_receiver(self):
        assert noise_power_dbm(1e9, -174.0, 7.0) == pytest.approx(-77.0, abs=1e-9)

    def test_ue_receiver(self):
        assert noise_power_dbm(1e9, -174.0, 10.0) == pytest.approx(-74.0, abs=1e-9)

    def test_rejects_zero_bandwidth(self):
        with pytest.raises(ValueError):
            noise_power_dbm(0.0, -174.0, 7.0)


class TestBeamformingGain:
    def test_single_element(self):
        assert beamforming_gain_db(1, 1) == 0.0

    def test_256_by_1(self):
        assert beamforming_gain_db(256, 1) == pytest.approx(24.08, abs=5e-3)

    def test_256_by_64(self):
        assert beamforming_gain_db(256, 64) == pytest.approx(42.14, abs=5e-3)

    def test_rejects_zero_elements(self):
        with pytest.raises(ValueError):
            beamforming_gain_db(0, 4)


class TestLinkSnr:
    def test_dbm_composition(self):
        snr = link_snr_db(40.0, beamforming_gain_db(256, 64), 120.0, 0.0, 0.0, -77.0)
        assert snr == pytest.approx(39.14, abs=5e-3)

    def test_cancellation(self):
        assert link_snr_db(20.0, 0.0, 97.0, 0.0, 0.0, -77.0) == pytest.approx(0.0, abs=1e-12)

    def test_three_db_pathloss_costs_three_db(self):
        a = link_snr_db(40.0, 10.0, 120.0, 1.0, 2.0, -77.0)
        b = link_snr_db(40.0, 10.0, 123.0, 1.0, 2.0, -77.0)
        assert a - b == pytest.approx(3.0, abs=1e-12)


class TestLosProbability:
    def test_colocated(self):
        assert los_probability(ChannelModel.UMA, 0.0) == 1.0

    def test_uma_near_region(self):
        assert los_probability(ChannelModel.UMA, 10.0) == 1.0

    def test_uma_formula_value(self):
        # published UMa LOS probability at 100 m, h_UT below the C(h) knee
        expected = 18.0 / 100.0 + math.exp(-100.0 / 63.0) * (1.0 - 18.0 / 100.0)
        assert los_probability(ChannelModel.UMA, 100.0) == pytest.approx(expected, rel=1e-12)

    def test_umi_formula_value(self):
        expected = 18.0 / 200.0 + math.exp(-200.0 / 36.0) * (1.0 - 18.0 / 200.0)
        assert los_probability(ChannelModel.UMI_STREET_CANYON, 200.0) == pytest.approx(expected, rel=1e-12)

    def test_umi_monotone(self):
        assert los_probability(ChannelModel.UMI_STREET_CANYON, 100.0) >= \
            los_probability(ChannelModel.UMI_STREET_CANYON, 500.0)

    @pytest.mark.parametrize("model", [ChannelModel.UMA, ChannelModel.UMI_STREET_CANYON])
    def test_monotone_non_increasing_sweep(self, model):
        d = np.linspace(1.0, 2000.0, 400)
        p = np.array([los_probability(model, x) for x in d])
        assert np.all(p[:-1] >= p[1:] - 1e-12)
        assert np.all((0.0 <= p) & (p <= 1.0))

    def test_inh_open_office_pieces(self):
        assert los_probability(ChannelModel.INH, 5.0) == 1.0
        assert los_probability(ChannelModel.INH, 20.0) == pytest.approx(
            math.exp(-(20.0 - 5.0) / 70.8), rel=1e-12)
        assert los_probability(ChannelModel.INH, 60.0) == pytest.approx(
            0.54 * math.exp(-(60.0 - 49.0) / 211.7), rel=1e-12)


class TestPathloss:
    def test_inh_los_reference_value(self):
        # independent evaluation of the InH-LOS formula at d3d=20 m, 30 GHz
        expected = 32.4 + 17.3 * math.log10(20.0) + 20.0 * math.log10(30.0)
        got = pathloss_db(geom(ChannelModel.INH, 20.0, 3.0, 3.0), True, 30e9)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_uma_los_reference_value(self):
        g = geom(ChannelModel.UMA, 100.0, 25.0, 1.5)
        d3d = math.hypot(100.0, 23.5)
        expected = 28.0 + 22.0 * math.log10(d3d) + 20.0 * math.log10(30.0)
        assert pathloss_db(g, True, 30e9) == pytest.approx(expected, rel=1e-12)

    def test_uma_nlos_monotone(self):
        pl100 = pathloss_db(geom(ChannelModel.UMA, 100.0, 25.0, 1.5), False, 30e9)
        pl200 = pathloss_db(geom(ChannelModel.UMA, 200.0, 25.0, 1.5), False, 30e9)
        assert pl200 > pl100

    @pytest.mark.parametrize("model,h_tx", [(ChannelModel.UMA, 25.0),
                                            (ChannelModel.UMI_STREET_CANYON, 10.0),
                                            (ChannelModel.INH, 3.0)])
    def test_nlos_at_least_los(self, model, h_tx):
        for d in (15.0, 60.0, 250.0, 900.0):
            g = geom(model, d, h_tx, 1.5)
            assert pathloss_db(g, False, 30e9) >= pathloss_db(g, True, 30e9) - 1e-12

    def test_uma_los_continuous_at_breakpoint(self):
        dbp = 4.0 * (25.0 - 1.0) * (1.5 - 1.0) * 30e9 / 3.0e8
        lo = pathloss_db(geom(ChannelModel.UMA, dbp * (1 - 1e-9), 25.0, 1.5), True, 30e9)
        hi = pathloss_db(geom(ChannelModel.UMA, dbp * (1 + 1e-9), 25.0, 1.5), True, 30e9)
        assert lo == pytest.approx(hi, abs=1e-5)

    def test_clamped_below_model_minimum(self):
        near = pathloss_db(geom(ChannelModel.UMA, 4.0, 25.0, 1.5), True, 30e9)
        at_min = pathloss_db(geom(ChannelModel.UMA, 10.0, 25.0, 1.5), True, 30e9)
        assert near == pytest.approx(at_min, rel=1e-12)

    def test_strictly_increasing_beyond_breakpoint(self):
        d = np.linspace(20.0, 3000.0, 200)
        pl = [pathloss_db(geom(ChannelModel.UMI_STREET_CANYON, x, 10.0, 1.5), False, 30e9)
              for x in d]
        assert np.all(np.diff(pl) > 0)


class TestShadowSigma:
    @pytest.mark.parametrize("model,los,expected", [
        (ChannelModel.UMA, True, 4.0), (ChannelModel.UMA, False, 6.0),
        (ChannelModel.UMI_STREET_CANYON, True, 4.0),
        (ChannelModel.UMI_STREET_CANYON, False, 7.82),
        (ChannelModel.INH, True, 3.0), (ChannelModel.INH, False, 8.03),
    ])
    def test_published_sigmas(self, model, los, expected):
        assert shadow_sigma_db(model, los) == expected


class TestO2iPenetration:
    def test_wall_loss_values_at_30ghz(self):
        # low loss: 30% standard glass (2+0.2f), 70% concrete (5+4f)
        glass = 2.0 + 0.2 * 30.0
        concrete = 5.0 + 4.0 * 30.0
        low = 5.0 - 10.0 * math.log10(0.3 * 10 ** (-glass / 10) + 0.7 * 10 ** (-concrete / 10))
        irr = 23.0 + 0.3 * 30.0
        high = 5.0 - 10.0 * math.log10(0.7 * 10 ** (-irr / 10) + 0.3 * 10 ** (-concrete / 10))
        assert _o2i_wall_loss_db(CHANNEL_PARAMS, False, 30.0) == pytest.approx(low, rel=1e-12)
        assert _o2i_wall_loss_db(CHANNEL_PARAMS, True, 30.0) == pytest.approx(high, rel=1e-12)
        assert low == pytest.approx(18.23, abs=5e-3)
        assert high == pytest.approx(38.55, abs=5e-3)

    def test_high_loss_dominates_low_loss(self):
        rng = np.random.default_rng(1234)
        low = np.sort([o2i_penetration_db(rng, False, 30e9) for _ in range(10_000)])
        high = np.sort([o2i_penetration_db(rng, True, 30e9) for _ in range(10_000)])
        assert high.mean() - low.mean() > 10.0
        for q in (0.1, 0.25, 0.5, 0.75, 0.9):
            k = int(q * 10_000)
            assert high[k] > low[k]

    def test_draw_is_deterministic_given_stream(self):
        a = o2i_penetration_db(np.random.default_rng(7), True, 30e9)
        b = o2i_penetration_db(np.random.default_rng(7), True, 30e9)
        assert a == b


class TestSpectralEfficiency:
    def test_below_lowest_mcs(self):
        assert spectral_efficiency(-20.0) == 0.0

    def test_table_maximum(self):
        assert spectral_efficiency(60.0) == MCS_TABLE.max_se == 7.4063

    def test_monotone_step_sweep(self):
        snr = np.linspace(-30.0, 30.0, 2000)
        se = np.array([spectral_efficiency(x) for x in snr])
        assert np.all(np.diff(se) >= 0.0)
        image = set(np.unique(se))
        assert image <= set(MCS_TABLE.spectral_efficiency) | {0.0}

    def test_exact_threshold_inclusive(self):
        thr = MCS_TABLE.required_snr_db[5]
        assert spectral_efficiency(thr) == MCS_TABLE.spectral_efficiency[5]
        assert spectral_efficiency(thr - 1e-9) == MCS_TABLE.spectral_efficiency[4]


class TestMcsTablePins:
    def test_shape_and_orders(self):
        assert len(MCS_TABLE.mcs_index) == 28
        assert set(MCS_TABLE.modulation_order) <= {2, 4, 6, 8}
        assert np.all(np.diff(MCS_TABLE.spectral_efficiency) > 0)
        assert np.all(np.diff(MCS_TABLE.required_snr_db) > 0)

    def test_se_matches_modulation_times_code_rate(self):
        se = MCS_TABLE.modulation_order * MCS_TABLE.code_rate_x1024 / 1024.0
        assert np.allclose(se, MCS_TABLE.spectral_efficiency, atol=5e-5)

    def test_required_snr_is_gap_inverted_se(self):
        # independent recomputation of the shipped thresholds: Γ = 3 dB gap
        expected = 10.0 * np.log10(2.0 ** MCS_TABLE.spectral_efficiency - 1.0) + 3.0
        assert np.allclose(MCS_TABLE.required_snr_db, expected, atol=5e-4)
