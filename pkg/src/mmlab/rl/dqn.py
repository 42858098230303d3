"""Double deep Q-learning: decoupled action selection and evaluation.

The moving network picks the argmax action in the successor state; the
target network supplies that action's value.  Target parameters are a
periodic hard copy of the moving network.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import TrainingDiverged
from .mlp import Adam, Mlp, save_checkpoint
from .replay import ReplayBuffer


def dqn_loss(
    moving: Mlp,
    target: Mlp,
    batch: Dict[str, np.ndarray],
    gamma: float,
) -> Tuple[float, List[Tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Mean squared TD error with the double-Q target.

    Gradients flow only through the moving net's value of the taken action;
    the target ``r + gamma * q_target(s', argmax_a q_moving(s', a))``
    collapses to ``r`` on terminal transitions.  Also returns per-sample TD
    errors for logging.
    """
    obs = batch["obs"]
    actions = batch["actions"]
    rewards = batch["rewards"]
    next_obs = batch["next_obs"]
    dones = batch["dones"]
    n = len(actions)
    rows = np.arange(n)

    a_star = moving.forward(next_obs).argmax(axis=1)
    q_next = target.forward(next_obs)[rows, a_star]
    y = rewards + gamma * q_next * (~dones)

    out, cache = moving.forward_cached(obs)
    q_sa = out[rows, actions]
    td = q_sa - y
    loss = float(np.mean(td**2))

    grad_out = np.zeros_like(out)
    grad_out[rows, actions] = 2.0 * td / n
    return loss, moving.backward(cache, grad_out), td


@dataclass
class DqnConfig:
    hidden: Tuple[int, ...] = (64, 64)
    gamma: float = 0.99
    lr: float = 0.00005
    batch_size: int = 8192
    buffer_capacity: int = 1_000_000
    target_sync_every: int = 1000  # gradient steps between hard copies
    train_every: int = 1  # env steps per gradient step
    warmup_steps: int = 1000  # buffer fill before learning starts
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_frac: float = 0.3  # fraction of total steps to anneal over
    seed: int = 0
    diag_checkpoint: Optional[str] = None  # written if the loss diverges


@dataclass
class EpisodeLogRow:
    episode: int
    steps: int
    reward: float
    td_error: float
    epsilon: float


@dataclass
class DqnResult:
    net: Mlp
    episode_log: List[EpisodeLogRow] = field(default_factory=list)
    td_log: List[float] = field(default_factory=list)
    grad_steps: int = 0


def _vec(obs) -> np.ndarray:
    return obs.to_vector() if hasattr(obs, "to_vector") else np.asarray(obs, dtype=np.float64)


class DqnTrainer:
    def __init__(self, env, config: DqnConfig, rng: Optional[np.random.Generator] = None):
        self.env = env
        self.cfg = config
        self.rng = rng or np.random.default_rng(config.seed)
        sizes = [env.obs_dim, *config.hidden, env.n_actions]
        self.moving = Mlp(sizes, self.rng)
        self.target = self.moving.copy()
        self.opt = Adam(self.moving, lr=config.lr)
        self.buffer = ReplayBuffer(config.buffer_capacity)

    def epsilon(self, step: int, total_steps: int) -> float:
        anneal = max(1, int(total_steps * self.cfg.eps_anneal_frac))
        frac = min(1.0, step / anneal)
        return self.cfg.eps_start + frac * (self.cfg.eps_end - self.cfg.eps_start)

    def act(self, obs_vec: np.ndarray, eps: float) -> int:
        if self.rng.random() < eps:
            return int(self.rng.integers(self.env.n_actions))
        return int(self.moving.forward(obs_vec).argmax())

    def train(self, total_steps: int) -> DqnResult:
        cfg = self.cfg
        result = DqnResult(net=self.moving)
        obs = _vec(self.env.reset())
        ep_reward, ep_steps, ep_td, episode = 0.0, 0, [], 0
        for step in range(total_steps):
            eps = self.epsilon(step, total_steps)
            action = self.act(obs, eps)
            nxt, reward, done, info = self.env.step(action)
            nxt = _vec(nxt)
            terminal = done and info.get("terminal", True)
            self.buffer.add(obs, action, reward, nxt, terminal)
            obs = nxt
            ep_reward += reward
            ep_steps += 1

            if len(self.buffer) >= max(cfg.warmup_steps, cfg.batch_size // 8) and (
                step % cfg.train_every == 0
            ):
                batch = self.buffer.sample(min(cfg.batch_size, len(self.buffer)), self.rng)
                loss, grads, td = dqn_loss(self.moving, self.target, batch, cfg.gamma)
                if not np.isfinite(loss):
                    if cfg.diag_checkpoint:
                        save_checkpoint(cfg.diag_checkpoint, "dqn", self.moving, self.opt)
                    raise TrainingDiverged(f"non-finite DQN loss at step {step}")
                self.opt.step(grads)
                result.grad_steps += 1
                mean_abs_td = float(np.mean(np.abs(td)))
                ep_td.append(mean_abs_td)
                result.td_log.append(mean_abs_td)
                if result.grad_steps % cfg.target_sync_every == 0:
                    self.target.copy_from(self.moving)

            if done:
                result.episode_log.append(
                    EpisodeLogRow(
                        episode,
                        ep_steps,
                        ep_reward,
                        float(np.mean(ep_td)) if ep_td else float("nan"),
                        eps,
                    )
                )
                episode += 1
                ep_reward, ep_steps, ep_td = 0.0, 0, []
                obs = _vec(self.env.reset())
        return result

    def greedy_policy(self):
        return GreedyQPolicy(self.moving)


class GreedyQPolicy:
    """Deterministic argmax over Q-values; evaluation-time policy."""

    def __init__(self, net: Mlp):
        self.net = net

    def act(self, obs, rng=None):
        from ..agents import ActionPair

        vec = _vec(obs)
        return ActionPair.from_index(int(self.net.forward(vec).argmax()))

    def act_index(self, obs_vec: np.ndarray) -> int:
        return int(self.net.forward(obs_vec).argmax())
