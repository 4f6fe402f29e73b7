"""Clipped-surrogate PPO with GAE over a discrete action set."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import Network, NetworkSpec, adam_step, clip_by_global_norm, log_softmax

REWARD_SCALE = 10.0
ADV_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class PpoHyperparams:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatch_size: int = 64
    horizon: int = 200
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    learning_rate: float = 3e-5

    def __post_init__(self):
        if not (0 < self.gamma <= 1 and 0 < self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in (0, 1]")
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        if self.epochs < 1 or self.minibatch_size < 1 or self.horizon < 1:
            raise ValueError("epochs, minibatch_size and horizon must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")


def reward_from_lift(lift: float, baseline_lift: float) -> float:
    """Negative scaled square of the lift deviation from the goal lift."""
    if not (math.isfinite(lift) and math.isfinite(baseline_lift)):
        raise ValueError("lift values must be finite")
    dl = lift - baseline_lift
    return -REWARD_SCALE * dl * dl


def compute_gae(rewards, values, bootstrap_value: float, gamma: float, lam: float, dones=None):
    """Generalized advantage estimates and returns for one rollout.

    ``dones[t]`` marks that the episode terminated after step t; the sum is cut
    there and the following value is not bootstrapped.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape or rewards.ndim != 1:
        raise ValueError(f"rewards {rewards.shape} and values {values.shape} must be equal-length vectors")
    n = len(rewards)
    dones = np.zeros(n, dtype=bool) if dones is None else np.asarray(dones, dtype=bool)
    if dones.shape != (n,):
        raise ValueError("dones must match rewards in length")
    adv = np.zeros(n)
    last = 0.0
    for t in reversed(range(n)):
        nonterminal = 0.0 if dones[t] else 1.0
        next_v = bootstrap_value if t == n - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_v * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    var = float(np.var(adv))
    if var < ADV_VAR_FLOOR:
        return np.asarray(adv, dtype=np.float64)
    return (adv - adv.mean()) / math.sqrt(var)


def entropy(logits: np.ndarray) -> np.ndarray:
    logp = log_softmax(logits)
    return -(np.exp(logp) * logp).sum(-1)


def actor_loss(logits, actions, old_logp, advantages, clip: float, entropy_coef: float):
    """Clipped surrogate loss with entropy bonus, and its gradient w.r.t. the logits."""
    logits = np.atleast_2d(logits)
    b = len(logits)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    idx = np.arange(b)
    logp = logp_all[idx, actions]
    ratio = np.exp(logp - old_logp)
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, 1 - clip, 1 + clip) * advantages
    obj = np.minimum(surr1, surr2)
    ent = -(probs * logp_all).sum(-1)
    loss = -obj.mean() - entropy_coef * ent.mean()

    # gradient flows through the unclipped branch only when it is the active minimum
    g_logp = np.where(surr1 <= surr2, ratio * advantages, 0.0)
    onehot = np.zeros_like(logits)
    onehot[idx, actions] = 1.0
    d_obj = g_logp[:, None] * (onehot - probs)
    d_ent = -probs * (logp_all + ent[:, None])
    dlogits = (-d_obj - entropy_coef * d_ent) / b
    stats = {
        "ratio_mean": float(ratio.mean()),
        "clip_fraction": float(np.mean(np.abs(ratio - 1) > clip)),
        "entropy": float(ent.mean()),
        "surrogate": float(obj.mean()),
    }
    return float(loss), dlogits, stats


def critic_loss(values, returns, value_coef: float):
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    err = values - returns
    loss = value_coef * float(np.mean(err * err))
    dvalues = value_coef * 2.0 * err / len(err)
    return loss, dvalues[:, None]


@dataclass
class Rollout:
    obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    logps: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    dones: list = field(default_factory=list)

    def add(self, obs, action, logp, value, reward, done=False):
        if not (logp <= 0 and math.isfinite(logp)):
            raise ValueError(f"log-probability {logp} must be finite and nonpositive")
        self.obs.append(obs)
        self.actions.append(int(action))
        self.logps.append(float(logp))
        self.values.append(float(value))
        self.rewards.append(float(reward))
        self.dones.append(bool(done))

    def __len__(self):
        return len(self.actions)


class PpoAgent:
    """Separate actor and critic networks of identical trunk shape."""

    def __init__(self, actor: Network, critic: Network, hp: PpoHyperparams):
        if actor.spec.input_channels != critic.spec.input_channels:
            raise ValueError("actor and critic must see the same observation")
        if critic.spec.outputs != 1:
            raise ValueError("critic head must be scalar")
        self.actor = actor
        self.critic = critic
        self.hp = hp

    @classmethod
    def create(cls, channels: int, n_actions: int, hp: PpoHyperparams, rng: np.random.Generator,
               filters: int = 16, hidden=(512, 512)) -> "PpoAgent":
        actor = Network.initialize(NetworkSpec(channels, n_actions, filters=filters, hidden=hidden),
                                   rng, lr=hp.learning_rate)
        critic = Network.initialize(NetworkSpec(channels, 1, filters=filters, hidden=hidden),
                                    rng, lr=hp.learning_rate)
        return cls(actor, critic, hp)

    @property
    def channels(self) -> int:
        return self.actor.spec.input_channels

    def act(self, obs) -> int:
        """Greedy action, ties to the lowest index."""
        return int(np.argmax(self.actor.forward(obs)))

    def select_action(self, obs, mode: str = "sample", rng: np.random.Generator | None = None):
        return select_action(self.actor, self.critic, obs, mode, rng)

    def update(self, rollout: Rollout, bootstrap_value: float, rng: np.random.Generator) -> dict:
        return ppo_update(self.actor, self.critic, rollout, bootstrap_value, self.hp, rng)


def select_action(actor: Network, critic: Network, obs, mode: str = "sample",
                  rng: np.random.Generator | None = None):
    """Return ``(action index, log-probability, value)``."""
    logp = log_softmax(actor.forward(obs))
    if mode == "greedy":
        a = int(np.argmax(logp))
    elif mode == "sample":
        if rng is None:
            raise ValueError("sampling requires a random generator")
        cdf = np.cumsum(np.exp(logp))
        a = int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(cdf) - 1))
    else:
        raise ValueError(f"unknown selection mode {mode!r}")
    value = float(critic.forward(obs)[0])
    return a, float(min(logp[a], 0.0)), value


def ppo_update(actor: Network, critic: Network, rollout: Rollout, bootstrap_value: float,
               hp: PpoHyperparams, rng: np.random.Generator) -> dict:
    """Run the clipped-surrogate epochs over one rollout; returns update statistics."""
    n = len(rollout)
    if n != hp.horizon:
        raise ValueError(f"rollout length {n} differs from horizon {hp.horizon}")
    obs = np.stack(rollout.obs)
    actions = np.asarray(rollout.actions)
    old_logp = np.asarray(rollout.logps)
    adv, returns = compute_gae(rollout.rewards, rollout.values, bootstrap_value,
                               hp.gamma, hp.gae_lambda, rollout.dones)
    adv = normalize_advantages(adv)

    sums = {"actor_loss": 0.0, "critic_loss": 0.0, "ratio_mean": 0.0, "clip_fraction": 0.0,
            "entropy": 0.0, "actor_grad_norm": 0.0, "critic_grad_norm": 0.0}
    batches = 0
    for _ in range(hp.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hp.minibatch_size):
            mb = order[start:start + hp.minibatch_size]
            logits = actor.forward(obs[mb], record=True)
            a_loss, dlogits, st = actor_loss(logits, actions[mb], old_logp[mb], adv[mb],
                                             hp.clip, hp.entropy_coef)
            values = critic.forward(obs[mb], record=True)
            c_loss, dvalues = critic_loss(values, returns[mb], hp.value_coef)
            if not (math.isfinite(a_loss) and math.isfinite(c_loss)):
                raise FloatingPointError(f"non-finite PPO loss (actor {a_loss}, critic {c_loss}) "
                                         f"at minibatch {batches}")
            ga, na = clip_by_global_norm(actor.backward(dlogits), hp.max_grad_norm)
            gc, nc = clip_by_global_norm(critic.backward(dvalues), hp.max_grad_norm)
            adam_step(actor, ga)
            adam_step(critic, gc)
            sums["actor_loss"] += a_loss
            sums["critic_loss"] += c_loss
            sums["actor_grad_norm"] += na
            sums["critic_grad_norm"] += nc
            for k in ("ratio_mean", "clip_fraction", "entropy"):
                sums[k] += st[k]
            batches += 1
    stats = {k: v / batches for k, v in sums.items()}
    stats["minibatches"] = batches
    stats["advantage_std"] = float(np.std(adv))
    return stats
