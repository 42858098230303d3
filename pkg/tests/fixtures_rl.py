"""Fixture MDPs and a finite-difference harness for the RL stack."""

from __future__ import annotations

import numpy as np

from mmlab.rl.mlp import Mlp, flat_grads


class ChainGridworld:
    """Four states in a line; right reaches the terminal reward.

    Actions: 0 = left, 1 = right (clamped at the left wall).  Entering the
    terminal state pays +1; every other step costs 0.05.  The optimal policy
    is "always right" from every state.
    """

    n_states = 4
    n_actions = 2
    obs_dim = 4
    step_cost = -0.05
    goal_reward = 1.0
    max_steps = 30

    def __init__(self):
        self._state = 0
        self._steps = 0

    def _obs(self) -> np.ndarray:
        vec = np.zeros(self.obs_dim)
        vec[self._state] = 1.0
        return vec

    def reset(self) -> np.ndarray:
        self._state = 0
        self._steps = 0
        return self._obs()

    def step(self, action: int):
        self._steps += 1
        nxt = self._state + (1 if action == 1 else -1)
        nxt = max(0, nxt)
        if nxt == self.n_states - 1:
            self._state = nxt
            return self._obs(), self.goal_reward, True, {"terminal": True}
        self._state = nxt
        if self._steps >= self.max_steps:
            return self._obs(), self.step_cost, True, {"terminal": False}
        return self._obs(), self.step_cost, False, {}

    def value_iteration(self, gamma: float, tol: float = 1e-12) -> np.ndarray:
        """Exact tabular Q* for the non-terminal states."""
        n = self.n_states
        q = np.zeros((n, self.n_actions))
        while True:
            v = q.max(axis=1)
            v[n - 1] = 0.0  # terminal
            q_new = np.zeros_like(q)
            for s in range(n - 1):
                for a in range(self.n_actions):
                    nxt = max(0, s + (1 if a == 1 else -1))
                    if nxt == n - 1:
                        q_new[s, a] = self.goal_reward
                    else:
                        q_new[s, a] = self.step_cost + gamma * v[nxt]
            if np.abs(q_new - q).max() < tol:
                return q_new
            q = q_new

    def optimal_actions(self, gamma: float) -> np.ndarray:
        return self.value_iteration(gamma).argmax(axis=1)[: self.n_states - 1]


class Bandit:
    """One-step episodes over fixed arm payouts; obs is a constant."""

    obs_dim = 1

    def __init__(self, arm_means=(0.2, 0.3, 1.0, 0.1, 0.25), noise=0.0, rng=None):
        self.arm_means = np.asarray(arm_means, dtype=np.float64)
        self.n_actions = len(self.arm_means)
        self.noise = noise
        self.rng = rng or np.random.default_rng(0)

    @property
    def best_arm(self) -> int:
        return int(self.arm_means.argmax())

    def reset(self) -> np.ndarray:
        return np.ones(1)

    def step(self, action: int):
        r = float(self.arm_means[action])
        if self.noise:
            r += float(self.rng.normal(0, self.noise))
        return np.ones(1), r, True, {"terminal": True}


class TwoStateMdp:
    """Deterministic continuing MDP small enough for exact value iteration."""

    n_states = 2
    n_actions = 2
    # rewards[s][a], transitions[s][a]
    rewards = np.array([[0.0, 1.0], [2.0, 0.0]])
    transitions = np.array([[0, 1], [0, 1]])

    def q_star(self, gamma: float, iters: int = 10_000) -> np.ndarray:
        q = np.zeros((2, 2))
        for _ in range(iters):
            v = q.max(axis=1)
            q = self.rewards + gamma * v[self.transitions]
        return q

    def all_transitions(self):
        obs = np.eye(2)
        rows = []
        for s in range(2):
            for a in range(2):
                rows.append(
                    (obs[s], a, self.rewards[s, a], obs[self.transitions[s, a]], False)
                )
        return rows


def finite_diff_grad(net: Mlp, loss_fn, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of loss_fn(net) over the flat parameters."""
    flat = net.get_flat()
    grad = np.empty_like(flat)
    for i in range(len(flat)):
        orig = flat[i]
        flat[i] = orig + h
        net.set_flat(flat)
        f_plus = loss_fn(net)
        flat[i] = orig - h
        net.set_flat(flat)
        f_minus = loss_fn(net)
        flat[i] = orig
        grad[i] = (f_plus - f_minus) / (2 * h)
    net.set_flat(flat)
    return grad


def grad_relative_error(analytic, numeric) -> float:
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), 1e-8)
    return float(np.linalg.norm(analytic - numeric)) / denom


def analytic_to_flat(grads) -> np.ndarray:
    return flat_grads(grads)
