import numpy as np
import pytest

from mmlab.agents import (
    BASE_OBS_DIM,
    STATUS_CANCELLING,
    STATUS_CLOSED,
    STATUS_OPEN,
    STATUS_PENDING,
    ActionPair,
    AdaptiveSpreadPolicy,
    FixedSpreadPolicy,
    MarketView,
    decode_action,
    encode_alpha,
    encode_observation,
    observation_schema,
)


class TestActionPair:
    def test_index_round_trip_covers_all_100(self):
        seen = set()
        for a_bid in range(1, 11):
            for a_ask in range(1, 11):
                pair = ActionPair(a_bid, a_ask)
                assert ActionPair.from_index(pair.index) == pair
                seen.add(pair.index)
        assert seen == set(range(100))

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            ActionPair(0, 5)
        with pytest.raises(ValueError):
            ActionPair(5, 11)
        with pytest.raises(ValueError):
            ActionPair.from_index(100)


class TestDecodeAction:
    def test_one_bp_bid(self):
        p_bid, _ = decode_action(ActionPair(1, 1), 20000.0, 20001.0)
        assert p_bid == pytest.approx(19998.0, rel=1e-12)

    def test_ten_bps_bid(self):
        p_bid, _ = decode_action(ActionPair(10, 1), 20000.0, 20001.0)
        assert p_bid == pytest.approx(19980.0, rel=1e-12)

    def test_five_bps_ask(self):
        _, p_ask = decode_action(ActionPair(1, 5), 99.9, 100.0)
        assert p_ask == pytest.approx(100.05, rel=1e-12)

    def test_strictly_monotone_in_levels(self):
        for best_bid, best_ask in ((100.0, 100.01), (20000.0, 20000.5), (0.5, 0.5001)):
            bids = [decode_action(ActionPair(a, 1), best_bid, best_ask)[0] for a in range(1, 11)]
            asks = [decode_action(ActionPair(1, a), best_bid, best_ask)[1] for a in range(1, 11)]
            assert all(b1 > b2 for b1, b2 in zip(bids, bids[1:]))
            assert all(a1 < a2 for a1, a2 in zip(asks, asks[1:]))

    def test_crossed_input_rejected(self):
        with pytest.raises(ValueError):
            decode_action(ActionPair(1, 1), 100.0, 100.0)


class TestEncodeObservation:
    def view(self, **kw):
        defaults = dict(best_bid=100.0, best_ask=100.1)
        defaults.update(kw)
        return MarketView(**defaults)

    def test_order_at_best_zero_rdr(self):
        obs = encode_observation(
            self.view(bid_status=STATUS_OPEN, bid_price=100.0), 0.0, 10.0, 0.0
        )
        assert obs.rdr_bid == 0.0

    def test_rdr_measures_relative_distance(self):
        obs = encode_observation(
            self.view(
                bid_status=STATUS_OPEN,
                bid_price=99.9,
                ask_status=STATUS_OPEN,
                ask_price=100.3,
            ),
            0.0,
            10.0,
            0.0,
        )
        assert obs.rdr_bid == pytest.approx(0.1 / 100.0)
        assert obs.rdr_ask == pytest.approx(0.2 / 100.1)

    def test_one_hot_layout(self):
        for status, expect in (
            (STATUS_PENDING, [1, 0, 0, 0]),
            (STATUS_OPEN, [0, 1, 0, 0]),
            (STATUS_CANCELLING, [0, 0, 1, 0]),
            (STATUS_CLOSED, [0, 0, 0, 1]),
        ):
            obs = encode_observation(
                self.view(bid_status=status, bid_price=99.0), 0.0, 10.0, 0.0
            )
            assert obs.to_vector()[2:6].tolist() == expect
            assert obs.to_vector()[2:6].sum() == 1.0

    def test_flat_no_orders(self):
        obs = encode_observation(self.view(), 0.0, 10.0, 0.0)
        vec = obs.to_vector()
        assert obs.ir == 0.0 and obs.ep_rel == 0.0
        assert obs.bid_status == STATUS_CLOSED and obs.ask_status == STATUS_CLOSED
        assert len(vec) == BASE_OBS_DIM == 12

    def test_ep_rel_normalized_by_mid(self):
        obs = encode_observation(self.view(), 2.0, 10.0, 99.0)
        mid = (100.0 + 100.1) / 2
        assert obs.ir == 0.2
        assert obs.ep_rel == pytest.approx((99.0 - mid) / mid)

    def test_alpha_block_appended_with_validity_bits(self):
        names = ("pret_200", "tiq_200")
        obs = encode_observation(
            self.view(),
            0.0,
            10.0,
            0.0,
            alpha={"pret_200": 0.001, "tiq_200": None},
            alpha_names=names,
        )
        vec = obs.to_vector()
        assert len(vec) == 12 + 4
        assert vec[12:].tolist() == [0.001, 1.0, 0.0, 0.0]

    def test_dimension_constant_across_calls(self):
        names = ("pret_200",)
        dims = set()
        for value in (0.1, None, -0.2):
            obs = encode_observation(
                self.view(), 0.0, 10.0, 0.0, alpha={"pret_200": value}, alpha_names=names
            )
            dims.add(obs.dim)
        assert dims == {14}

    def test_schema_matches_vector_layout(self):
        schema = observation_schema(("pret_200",))
        assert schema["dim"] == 14
        assert schema["fields"][0] == "rdr_bid"
        assert schema["fields"][12:] == ["pret_200", "pret_200_valid"]
        assert encode_alpha({"pret_200": None}, ("pret_200",)) == (0.0, 0.0)


class TestBaselinePolicies:
    def obs(self, ir):
        return encode_observation(MarketView(100.0, 100.1), ir * 10.0, 10.0, 0.0)

    def test_fixed_spread_always_median(self):
        policy = FixedSpreadPolicy()
        for ir in (-1.0, -0.3, 0.0, 0.7, 1.0):
            assert policy.act(self.obs(ir)) == ActionPair(5, 5)

    def test_adaptive_reduces_to_fixed_at_zero_inventory(self):
        assert AdaptiveSpreadPolicy(1.0).act(self.obs(0.0)) == ActionPair(5, 5)

    def test_adaptive_full_long_skew(self):
        assert AdaptiveSpreadPolicy(1.0).act(self.obs(1.0)) == ActionPair(10, 1)

    def test_adaptive_full_short_skew(self):
        assert AdaptiveSpreadPolicy(1.0).act(self.obs(-1.0)) == ActionPair(1, 10)

    def test_adaptive_antisymmetric_in_ir(self, rng):
        policy = AdaptiveSpreadPolicy(0.7)
        for _ in range(50):
            ir = float(rng.uniform(-1, 1))
            a = policy.act(self.obs(ir))
            b = policy.act(self.obs(-ir))
            assert (a.a_bid, a.a_ask) == (b.a_ask, b.a_bid)

    def test_adaptive_rejects_negative_k(self):
        with pytest.raises(ValueError):
            AdaptiveSpreadPolicy(-0.1)


class TestTuneAdaptiveK:
    def test_single_element_grid(self):
        from mmlab.agents import tune_adaptive_k
        from mmlab.marketsim import SimParams, generate

        ticks = generate(
            SimParams(4.0, 0.5, 1e-6, -9.4, 0.4, 20000.0, seed=3), 200_000
        )
        assert tune_adaptive_k(ticks, [0.8], i_max=3.0, seed=1) == 0.8

    def test_zero_grid(self):
        from mmlab.agents import tune_adaptive_k
        from mmlab.marketsim import SimParams, generate

        ticks = generate(
            SimParams(4.0, 0.5, 1e-6, -9.4, 0.4, 20000.0, seed=3), 200_000
        )
        assert tune_adaptive_k(ticks, [0.0], i_max=3.0, seed=1) == 0.0

    def test_empty_grid_rejected(self):
        from mmlab.agents import tune_adaptive_k

        with pytest.raises(ValueError):
            tune_adaptive_k(None, [])
