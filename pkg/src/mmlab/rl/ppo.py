"""Clipped-surrogate proximal policy optimisation over a shared trunk.

One network carries both heads: the first ``n_actions`` outputs are action
logits, the last output is the state value.  The policy objective maximises
``min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv)`` where the ratio is the
new policy's probability of the stored action over the collecting policy's;
samples whose ratio has saturated the clip band contribute no policy
gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..errors import TrainingDiverged
from .mlp import Adam, Mlp


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def gae_advantages(
    rewards: np.ndarray,
    values: np.ndarray,
    terminals: np.ndarray,
    gamma: float,
    lam: float,
    bootstrap_value: float = 0.0,
) -> np.ndarray:
    """Generalised advantage recursion over one collected segment.

    ``values`` has one entry per step; the value after the last step is
    ``bootstrap_value`` (zero when the segment ended in a terminal state).
    ``terminals[t]`` marks transitions into a terminal state, which cut the
    recursion.  lam=1 gives discounted-return-minus-value, lam=0 one-step TD
    residuals.
    """
    n = len(rewards)
    adv = np.zeros(n, dtype=np.float64)
    gae = 0.0
    next_value = bootstrap_value
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if terminals[t] else 1.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        gae = delta + gamma * lam * nonterminal * gae
        adv[t] = gae
        next_value = values[t]
    return adv


@dataclass
class PpoBatch:
    obs: np.ndarray
    actions: np.ndarray
    logp_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    clip_eps: float = 0.2
    epochs: int = 4


@dataclass
class PpoStats:
    loss: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


def ppo_loss(
    net: Mlp,
    obs: np.ndarray,
    actions: np.ndarray,
    logp_old: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    clip_eps: float,
    vf_coef: float = 0.5,
    ent_coef: float = 0.01,
) -> Tuple[float, list, PpoStats]:
    """Loss and exact gradients for one minibatch.

    The policy gradient flows through the unclipped branch only where it is
    the active side of the min; clipped-and-worse samples are masked to zero.
    """
    n, n_actions = len(actions), net.output_dim - 1
    rows = np.arange(n)
    out, cache = net.forward_cached(obs)
    logits = out[:, :n_actions]
    values = out[:, n_actions]

    logp = log_softmax(logits)
    probs = np.exp(logp)
    logp_a = logp[rows, actions]
    ratio = np.exp(logp_a - logp_old)
    if not np.all(np.isfinite(ratio)):
        raise TrainingDiverged("non-finite probability ratio in PPO update")

    surr1 = ratio * advantages
    clipped_ratio = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    surr2 = clipped_ratio * advantages
    use_unclipped = surr1 <= surr2
    objective = np.where(use_unclipped, surr1, surr2)
    policy_loss = -float(np.mean(objective))

    v_err = values - returns
    value_loss = float(np.mean(v_err**2))

    entropy = -np.sum(probs * logp, axis=1)
    ent_mean = float(np.mean(entropy))

    loss = policy_loss + vf_coef * value_loss - ent_coef * ent_mean

    # d(-objective)/d logp_a: active only when the unclipped branch is live
    g_logp_a = np.where(use_unclipped, -ratio * advantages, 0.0) / n
    grad_logits = probs * (-g_logp_a[:, None])
    grad_logits[rows, actions] += g_logp_a
    # entropy bonus: dH/dz_j = -p_j (logp_j + H)
    grad_logits += (ent_coef / n) * probs * (logp + entropy[:, None])

    grad_out = np.zeros_like(out)
    grad_out[:, :n_actions] = grad_logits
    grad_out[:, n_actions] = vf_coef * 2.0 * v_err / n

    clip_fraction = float(np.mean(~use_unclipped & (np.abs(ratio - 1.0) > clip_eps)))
    stats = PpoStats(loss, policy_loss, value_loss, ent_mean, clip_fraction)
    return loss, net.backward(cache, grad_out), stats


def ppo_update(
    net: Mlp,
    batch: PpoBatch,
    optimizer: Adam,
    rng: np.random.Generator,
    minibatch_size: Optional[int] = None,
    vf_coef: float = 0.5,
    ent_coef: float = 0.01,
    normalize_advantages: bool = True,
) -> PpoStats:
    """Multiple epochs of minibatch updates over one collected batch."""
    n = len(batch.actions)
    adv = batch.advantages
    if normalize_advantages and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    mb = minibatch_size or n
    last_stats: Optional[PpoStats] = None
    for _ in range(batch.epochs):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            idx = order[start : start + mb]
            _, grads, last_stats = ppo_loss(
                net,
                batch.obs[idx],
                batch.actions[idx],
                batch.logp_old[idx],
                adv[idx],
                batch.returns[idx],
                batch.clip_eps,
                vf_coef,
                ent_coef,
            )
            optimizer.step(grads)
    assert last_stats is not None
    return last_stats


@dataclass
class PpoConfig:
    hidden: Tuple[int, ...] = (64, 64)
    gamma: float = 0.99
    lam: float = 0.95
    lr: float = 0.00010
    clip_eps: float = 0.2
    epochs: int = 4
    rollout_steps: int = 8192
    minibatch_size: int = 2048
    vf_coef: float = 0.5
    ent_coef: float = 0.01
    seed: int = 0


@dataclass
class UpdateLogRow:
    update: int
    steps: int
    mean_episode_reward: float
    entropy: float
    clip_fraction: float


@dataclass
class PpoResult:
    net: Mlp
    update_log: List[UpdateLogRow] = field(default_factory=list)
    episode_rewards: List[float] = field(default_factory=list)


def _vec(obs) -> np.ndarray:
    return obs.to_vector() if hasattr(obs, "to_vector") else np.asarray(obs, dtype=np.float64)


class PpoTrainer:
    def __init__(self, env, config: PpoConfig, rng: Optional[np.random.Generator] = None):
        self.env = env
        self.cfg = config
        self.rng = rng or np.random.default_rng(config.seed)
        sizes = [env.obs_dim, *config.hidden, env.n_actions + 1]
        self.net = Mlp(sizes, self.rng)
        self.opt = Adam(self.net, lr=config.lr)
        self._obs = None
        self._ep_reward = 0.0

    def _policy_step(self, obs_vec: np.ndarray) -> Tuple[int, float, float]:
        out = self.net.forward(obs_vec)
        logits, value = out[: self.env.n_actions], out[self.env.n_actions]
        logp = log_softmax(logits)
        action = int(self.rng.choice(len(logp), p=np.exp(logp)))
        return action, float(logp[action]), float(value)

    def collect(self, n_steps: int) -> Tuple[PpoBatch, List[float]]:
        cfg = self.cfg
        obs_buf = np.empty((n_steps, self.env.obs_dim))
        act_buf = np.empty(n_steps, dtype=np.int64)
        logp_buf = np.empty(n_steps)
        rew_buf = np.empty(n_steps)
        val_buf = np.empty(n_steps)
        term_buf = np.zeros(n_steps, dtype=np.bool_)
        done_buf = np.zeros(n_steps, dtype=np.bool_)
        finished_rewards: List[float] = []

        if self._obs is None:
            self._obs = _vec(self.env.reset())
            self._ep_reward = 0.0
        seg_tails = {}  # segment end index -> bootstrap value (0 for true terminals)
        for t in range(n_steps):
            action, logp_a, value = self._policy_step(self._obs)
            nxt, reward, done, info = self.env.step(action)
            obs_buf[t] = self._obs
            act_buf[t] = action
            logp_buf[t] = logp_a
            rew_buf[t] = reward
            val_buf[t] = value
            done_buf[t] = done
            self._ep_reward += reward
            if done:
                term_buf[t] = info.get("terminal", True)
                if not term_buf[t]:
                    # truncation/cutoff: bootstrap from the state where the cut happened
                    seg_tails[t] = float(self.net.forward(_vec(nxt))[self.env.n_actions])
                finished_rewards.append(self._ep_reward)
                self._ep_reward = 0.0
                self._obs = _vec(self.env.reset())
            else:
                self._obs = _vec(nxt)
        if not done_buf[n_steps - 1]:
            seg_tails[n_steps - 1] = float(
                self.net.forward(self._obs)[self.env.n_actions]
            )

        # advantage recursion restarts at every done; only terminals zero the tail
        adv = np.empty(n_steps)
        start = 0
        for t in range(n_steps):
            if done_buf[t] or t == n_steps - 1:
                seg = slice(start, t + 1)
                adv[seg] = gae_advantages(
                    rew_buf[seg],
                    val_buf[seg],
                    term_buf[seg],
                    cfg.gamma,
                    cfg.lam,
                    seg_tails.get(t, 0.0),
                )
                start = t + 1
        returns = adv + val_buf
        batch = PpoBatch(
            obs_buf, act_buf, logp_buf, adv, returns, clip_eps=cfg.clip_eps, epochs=cfg.epochs
        )
        return batch, finished_rewards

    def train(self, n_updates: int) -> PpoResult:
        cfg = self.cfg
        result = PpoResult(net=self.net)
        steps = 0
        for update in range(n_updates):
            batch, finished = self.collect(cfg.rollout_steps)
            steps += cfg.rollout_steps
            stats = ppo_update(
                self.net,
                batch,
                self.opt,
                self.rng,
                minibatch_size=cfg.minibatch_size,
                vf_coef=cfg.vf_coef,
                ent_coef=cfg.ent_coef,
            )
            result.episode_rewards.extend(finished)
            mean_rew = float(np.mean(finished)) if finished else float("nan")
            result.update_log.append(
                UpdateLogRow(update, steps, mean_rew, stats.entropy, stats.clip_fraction)
            )
        return result

    def policy(self):
        return SoftmaxPolicy(self.net, deterministic=True)


class SoftmaxPolicy:
    """Policy head over the shared trunk; deterministic mode takes the argmax
    for reproducible evaluation."""

    def __init__(self, net: Mlp, deterministic: bool = True):
        self.net = net
        self.n_actions = net.output_dim - 1
        self.deterministic = deterministic

    def act(self, obs, rng=None):
        from ..agents import ActionPair

        return ActionPair.from_index(self.act_index(_vec(obs), rng))

    def act_index(self, obs_vec: np.ndarray, rng=None) -> int:
        logits = self.net.forward(obs_vec)[: self.n_actions]
        if self.deterministic or rng is None:
            return int(logits.argmax())
        p = np.exp(log_softmax(logits))
        return int(rng.choice(self.n_actions, p=p))
