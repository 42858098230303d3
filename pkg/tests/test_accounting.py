import math
from fractions import Fraction

import numpy as np
import pytest

from mmlab.accounting import (
    PortfolioState,
    apply_fill,
    inventory_ratio,
    step_reward,
    step_reward_exact,
    step_reward_total,
)
from mmlab.errors import InventoryCapError


def flat(i_max=10.0, lam=0.01):
    return PortfolioState.flat(i_max, lam)


class TestApplyFill:
    def test_first_buy_from_flat(self):
        s = apply_fill(flat(), "bid", 100.0, 1.0)
        assert s.inventory == 1.0
        assert s.entry_price == 100.0
        assert s.realized_pnl == 0.0

    def test_reducing_sell_realizes_pnl(self):
        s = flat()
        s = apply_fill(s, "bid", 100.0, 2.0)
        s = apply_fill(s, "ask", 103.0, 1.0)
        assert s.inventory == 1.0
        assert s.entry_price == 100.0
        assert s.realized_pnl == 3.0

    def test_opening_buy_weighted_average(self):
        s = apply_fill(flat(), "bid", 100.0, 1.0)
        s = apply_fill(s, "bid", 102.0, 1.0)
        assert s.inventory == 2.0
        assert s.entry_price == 101.0
        assert s.realized_pnl == 0.0

    def test_short_side_symmetric(self):
        s = apply_fill(flat(), "ask", 100.0, 2.0)
        assert s.inventory == -2.0
        assert s.entry_price == 100.0
        s = apply_fill(s, "bid", 97.0, 1.0)  # buy back below entry: gain
        assert s.inventory == -1.0
        assert s.realized_pnl == 3.0

    def test_cross_through_flat(self):
        s = apply_fill(flat(), "bid", 100.0, 1.0)
        s = apply_fill(s, "ask", 110.0, 2.0)
        assert s.inventory == -1.0
        assert s.entry_price == 110.0
        assert s.realized_pnl == 10.0

    def test_entry_price_zero_iff_flat(self):
        s = apply_fill(flat(), "bid", 100.0, 1.0)
        s = apply_fill(s, "ask", 101.0, 1.0)
        assert s.inventory == 0.0
        assert s.entry_price == 0.0
        assert s.realized_pnl == 1.0

    def test_cap_breach_rejected(self):
        s = apply_fill(flat(i_max=2.0), "bid", 100.0, 2.0)
        with pytest.raises(InventoryCapError):
            apply_fill(s, "bid", 100.0, 1.0)

    def test_split_fill_associative_exactly(self):
        prices = [100.37, 101.113, 99.91]
        whole = flat()
        split = flat()
        for p in prices:
            whole = apply_fill(whole, "bid", p, 2.0)
            split = apply_fill(split, "bid", p, 1.0)
            split = apply_fill(split, "bid", p, 1.0)
        assert whole.inv == split.inv
        assert whole.entry_cost == split.entry_cost
        assert whole.realized == split.realized

    def test_rejects_nonpositive_qty_or_price(self):
        with pytest.raises(ValueError):
            apply_fill(flat(), "bid", 100.0, 0.0)
        with pytest.raises(ValueError):
            apply_fill(flat(), "bid", -1.0, 1.0)


class TestInventoryRatio:
    def test_values(self):
        s = flat(i_max=10.0)
        assert inventory_ratio(s) == 0.0
        s = apply_fill(s, "bid", 100.0, 10.0)
        assert inventory_ratio(s) == 1.0
        s2 = apply_fill(flat(i_max=10.0), "ask", 100.0, 5.0)
        assert inventory_ratio(s2) == -0.5


class TestStepReward:
    def test_pure_penalty_when_nothing_moves(self):
        s = apply_fill(flat(lam=0.02), "bid", 100.0, 3.0)
        r = step_reward(s, s, 100.0, 100.0)
        assert r.holding == 0.0
        assert r.spread == 0.0
        assert r.total == -0.02 * 3.0

    def test_holding_pnl_from_mid_move(self):
        s = apply_fill(flat(lam=0.0), "bid", 100.0, 1.0)
        r = step_reward(s, s, 100.0, 100.5)
        assert r.total == pytest.approx(0.5)
        assert r.holding == pytest.approx(0.5)

    def test_decomposition_sums_to_total(self, rng):
        s_prev = apply_fill(flat(), "bid", 100.0, 2.0)
        s_next = apply_fill(s_prev, "ask", 101.3, 1.0)
        r = step_reward(s_prev, s_next, 100.1, 100.4)
        assert r.total == (r.holding + r.spread) - r.penalty


def random_walk_fills(rng, n_steps, lam=0.01, i_max=8.0):
    """Random fill/price sequence with a cash-ledger oracle running beside."""
    state = flat(i_max=i_max, lam=lam)
    mid = 100.0
    cash = Fraction(0)
    states = [state]
    mids = [mid]
    for _ in range(n_steps):
        mid *= 1.0 + rng.normal(0, 2e-3)
        if rng.random() < 0.6:
            side = "bid" if rng.random() < 0.5 else "ask"
            qty = float(rng.integers(1, 4))
            price = mid * (1 + rng.normal(0, 1e-3))
            new_inv = state.inventory + (qty if side == "bid" else -qty)
            if abs(new_inv) <= i_max:
                state = apply_fill(state, side, price, qty)
                cash += (Fraction(price) * Fraction(qty)) * (1 if side == "ask" else -1)
        states.append(state)
        mids.append(mid)
    return states, mids, cash


class TestMarkToMarketOracle:
    @pytest.mark.parametrize("seed", range(10))
    def test_equity_equals_cash_plus_position_value(self, seed):
        rng = np.random.default_rng(seed)
        states, mids, cash = random_walk_fills(rng, 60)
        final, mid = states[-1], mids[-1]
        oracle = float(cash + final.inv * Fraction(mid))
        got = final.equity(mid)
        assert got == pytest.approx(oracle, rel=1e-9, abs=1e-9)
        # the exact forms agree identically
        assert final.exact_equity(mid) == cash + final.inv * Fraction(mid)

    @pytest.mark.parametrize("seed", range(10))
    def test_reward_telescoping_exact_at_zero_lam(self, seed):
        rng = np.random.default_rng(seed + 100)
        states, mids, _ = random_walk_fills(rng, 60, lam=0.0)
        total = Fraction(0)
        for i in range(1, len(states)):
            r, _ = step_reward_exact(states[i - 1], states[i], mids[i - 1], mids[i])
            total += r
        assert total == states[-1].exact_equity(mids[-1]) - states[0].exact_equity(mids[0])

    def test_float_total_matches_breakdown_path(self):
        s1 = apply_fill(flat(), "bid", 100.0, 1.0)
        s2 = apply_fill(s1, "ask", 100.7, 1.0)
        assert step_reward_total(s1, s2, 100.1, 100.2) == step_reward(
            s1, s2, 100.1, 100.2
        ).total


class TestRewardSumOverEpisode:
    def test_lambda_zero_sum_equals_equity_change(self, rng):
        states, mids, _ = random_walk_fills(rng, 120, lam=0.0)
        exact_sum = sum(
            step_reward_exact(states[i - 1], states[i], mids[i - 1], mids[i])[0]
            for i in range(1, len(states))
        )
        assert exact_sum == states[-1].exact_equity(mids[-1])
        float_sum = math.fsum(
            step_reward_total(states[i - 1], states[i], mids[i - 1], mids[i])
            for i in range(1, len(states))
        )
        assert float_sum == pytest.approx(float(exact_sum), rel=1e-9, abs=1e-12)
