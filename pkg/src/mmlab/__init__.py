"""mmlab: a laboratory for latency-aware high-frequency market making.

Subsystems:

* ``messages`` / ``recorder`` -- level-3 feed capture and replayable logs
* ``book``                    -- full order-book reconstruction and depth queries
* ``marketsim``               -- calibrated top-of-book tick simulation
* ``env``                     -- latency-aware order-lifecycle exchange environment
* ``accounting``              -- inventory / entry-price / PnL bookkeeping and rewards
* ``agents``                  -- observation encoding, action decoding, baseline quoters
* ``features``                -- microstructure alpha signals and an OLS evaluation harness
* ``rl``                      -- from-scratch MLP, double-DQN and clipped-PPO trainers
* ``backtest``                -- episode-level evaluation and latency sweeps
"""

__version__ = "0.1.0"
