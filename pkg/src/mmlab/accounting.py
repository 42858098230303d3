"""Inventory, entry-price and PnL bookkeeping, plus the per-step reward.

Fills are split into a position-reducing part and a position-opening part.
Only the reducing part realises PnL against the entry price; the opening
part folds into the size-weighted entry price.  Taking the realisation
formula literally for position-increasing fills would book spurious realised
PnL (a first buy from flat would immediately realise a loss of the full
price), and the split above is the minimal rule under which the equity
identity ``V = I*(p_mid - EP) + M`` and the mark-to-market identity
``V = cash + I*p_mid`` hold simultaneously.

Internals are exact rationals so fill splitting is associative and reward
telescoping is exact; float views are cached for the hot per-tick paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Tuple

from .errors import InventoryCapError

_ZERO = Fraction(0)


@dataclass(frozen=True, slots=True)
class PortfolioState:
    """Inventory I, entry price EP, realised PnL M; equity V is derived.

    Instances are immutable; :func:`apply_fill` returns the successor state.
    """

    i_max: float
    lam: float
    inv: Fraction = _ZERO
    entry_cost: Fraction = _ZERO  # I * EP, signed
    realized: Fraction = _ZERO
    # float views, kept in lockstep with the exact fields
    inventory: float = 0.0
    entry_price: float = 0.0
    realized_pnl: float = 0.0

    @classmethod
    def flat(cls, i_max: float, lam: float = 0.01) -> "PortfolioState":
        if i_max <= 0:
            raise ValueError("i_max must be > 0")
        return cls(i_max=i_max, lam=lam)

    def _successor(
        self, inv: Fraction, entry_cost: Fraction, realized: Fraction
    ) -> "PortfolioState":
        ep = entry_cost / inv if inv else _ZERO
        return PortfolioState(
            i_max=self.i_max,
            lam=self.lam,
            inv=inv,
            entry_cost=entry_cost,
            realized=realized,
            inventory=float(inv),
            entry_price=float(ep),
            realized_pnl=float(realized),
        )

    def equity(self, p_mid: float) -> float:
        return self.inventory * (p_mid - self.entry_price) + self.realized_pnl

    def exact_equity(self, p_mid: float) -> Fraction:
        return self.inv * Fraction(p_mid) - self.entry_cost + self.realized


def apply_fill(
    state: PortfolioState, side: str, price: float, qty: float
) -> PortfolioState:
    """Apply one executed order; ``side`` is the agent order's side, so a
    filled bid buys (inventory up) and a filled ask sells (inventory down)."""
    if qty <= 0:
        raise ValueError("fill qty must be > 0")
    if price <= 0:
        raise ValueError("fill price must be > 0")
    delta = Fraction(qty) if side == "bid" else -Fraction(qty)
    inv = state.inv
    inv_new = inv + delta
    if abs(inv_new) > Fraction(state.i_max):
        raise InventoryCapError(
            f"fill of {qty} on {side} would move inventory to {float(inv_new)}, "
            f"cap {state.i_max}"
        )
    price_f = Fraction(price)

    if inv == 0 or (inv > 0) == (delta > 0):
        # pure opening: fold into the weighted-average entry price
        return state._successor(inv_new, state.entry_cost + delta * price_f, state.realized)

    ep = state.entry_cost / inv
    reduce_mag = min(abs(delta), abs(inv))
    if inv > 0:  # selling against a long
        realized = state.realized + reduce_mag * (price_f - ep)
        inv_mid = inv - reduce_mag
    else:  # buying against a short
        realized = state.realized + reduce_mag * (ep - price_f)
        inv_mid = inv + reduce_mag
    entry_cost = ep * inv_mid
    leftover = abs(delta) - reduce_mag
    if leftover:
        # crossed through flat; remainder opens on the fill's side
        signed = leftover if delta > 0 else -leftover
        inv_mid += signed
        entry_cost += signed * price_f
    return state._successor(inv_mid, entry_cost, realized)


def inventory_ratio(state: PortfolioState) -> float:
    return state.inventory / state.i_max


@dataclass(frozen=True, slots=True)
class RewardStep:
    """Per-step reward and its three-way decomposition."""

    total: float
    holding: float  # change in unrealised PnL
    spread: float  # change in realised PnL (spread capturing)
    penalty: float  # lam * |I_next|


def step_reward_total(
    prev: PortfolioState, nxt: PortfolioState, p_mid_prev: float, p_mid_next: float
) -> float:
    """Reward (V_next - V_prev) - lam*|I_next| as one float expression; this
    is the canonical per-tick series that traces and replays must reproduce."""
    holding = nxt.inventory * (p_mid_next - nxt.entry_price) - prev.inventory * (
        p_mid_prev - prev.entry_price
    )
    spread = nxt.realized_pnl - prev.realized_pnl
    penalty = nxt.lam * abs(nxt.inventory)
    return (holding + spread) - penalty


def step_reward(
    prev: PortfolioState, nxt: PortfolioState, p_mid_prev: float, p_mid_next: float
) -> RewardStep:
    holding = nxt.inventory * (p_mid_next - nxt.entry_price) - prev.inventory * (
        p_mid_prev - prev.entry_price
    )
    spread = nxt.realized_pnl - prev.realized_pnl
    penalty = nxt.lam * abs(nxt.inventory)
    return RewardStep((holding + spread) - penalty, holding, spread, penalty)


def step_reward_exact(
    prev: PortfolioState, nxt: PortfolioState, p_mid_prev: float, p_mid_next: float
) -> Tuple[Fraction, Fraction]:
    """(reward, penalty) as exact rationals, for telescoping-sum checks."""
    dv = nxt.exact_equity(p_mid_next) - prev.exact_equity(p_mid_prev)
    penalty = Fraction(nxt.lam) * abs(nxt.inv)
    return dv - penalty, penalty
