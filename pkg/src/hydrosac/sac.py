"""Soft actor-critic agent: replay memory, twin soft-Q networks, value and
target value networks, and the per-batch update.

The update follows the usual soft actor-critic scheme with a fixed entropy
temperature: both Q networks regress on reward + gamma * (1 - done) *
V_target(next_obs); the value network regresses on min_k Q_k(obs, a~) -
alpha * log pi(a~|obs) with fresh reparameterized actions a~; the policy
ascends min_k Q_k(obs, a~) - alpha * log pi(a~|obs) through a~; the target
value network trails the value network by Polyak averaging.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .neural import (
    LINEAR,
    RELU,
    PolicyNet,
    RmspropState,
    flat_grads,
    mlp_init,
    rmsprop_step,
)

OBS_DIM = 5

EXPLORE_RANDOM = "explore_random"
STOCHASTIC = "stochastic"
DETERMINISTIC = "deterministic"
ACTION_MODES = (EXPLORE_RANDOM, STOCHASTIC, DETERMINISTIC)


class TrainingAborted(RuntimeError):
    """Raised when an update produces a non-finite loss."""

    def __init__(self, message, report=None, records=None):
        super().__init__(message)
        self.report = report
        self.records = records


@dataclass
class Transition:
    obs: np.ndarray  # (5,)
    action: float  # in (0, 1)
    reward: float
    next_obs: np.ndarray  # (5,)
    done: bool


class ReplayBuffer:
    """Unbounded transition store; nothing is ever evicted."""

    def __init__(self, obs_dim=OBS_DIM, initial_capacity=1024):
        self._obs_dim = obs_dim
        self._size = 0
        self._alloc(initial_capacity)

    def _alloc(self, capacity):
        self.obs = np.empty((capacity, self._obs_dim))
        self.actions = np.empty(capacity)
        self.rewards = np.empty(capacity)
        self.next_obs = np.empty((capacity, self._obs_dim))
        self.done = np.empty(capacity)

    def _grow(self):
        old = (self.obs, self.actions, self.rewards, self.next_obs, self.done)
        self._alloc(2 * len(self.actions))
        for new, prev in zip(
            (self.obs, self.actions, self.rewards, self.next_obs, self.done), old
        ):
            new[: self._size] = prev[: self._size]

    def __len__(self):
        return self._size

    def push(self, t):
        if self._size == len(self.actions):
            self._grow()
        i = self._size
        self.obs[i] = t.obs
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_obs[i] = t.next_obs
        self.done[i] = 1.0 if t.done else 0.0
        self._size += 1

    def get(self, i):
        if not 0 <= i < self._size:
            raise IndexError(i)
        return Transition(
            obs=self.obs[i].copy(),
            action=float(self.actions[i]),
            reward=float(self.rewards[i]),
            next_obs=self.next_obs[i].copy(),
            done=bool(self.done[i]),
        )

    def sample_indices(self, batch_size, rng):
        if self._size < batch_size:
            raise ValueError(
                f"buffer holds {self._size} transitions, need {batch_size}"
            )
        return rng.integers(0, self._size, size=batch_size)

    def sample(self, batch_size, rng):
        """Uniform draws with replacement, as a list of Transitions."""
        return [self.get(int(i)) for i in self.sample_indices(batch_size, rng)]

    def sample_arrays(self, batch_size, rng):
        """Uniform draws with replacement, as batch arrays for update()."""
        idx = self.sample_indices(batch_size, rng)
        return (
            self.obs[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_obs[idx],
            self.done[idx],
        )

    def export_arrays(self):
        n = self._size
        return {
            "obs": self.obs[:n].copy(),
            "actions": self.actions[:n].copy(),
            "rewards": self.rewards[:n].copy(),
            "next_obs": self.next_obs[:n].copy(),
            "done": self.done[:n].copy(),
        }


@dataclass
class SacConfig:
    hidden_width: int = 100
    init_bound: float = 3e-3
    gamma: float = 0.99
    tau: float = 0.0006
    alpha: float = 0.2
    lr_value: float = 5e-4
    lr_q: float = 5e-4
    lr_policy: float = 1e-4
    rmsprop_rho: float = 0.99
    rmsprop_eps: float = 1e-8
    log_std_min: float = -20.0
    log_std_max: float = 2.0
    squash_prob_floor: float = 3e-6

    def validate(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")


@dataclass
class LossReport:
    q1_loss: float
    q2_loss: float
    value_loss: float
    policy_loss: float
    mean_log_prob: float

    def finite(self):
        return all(
            np.isfinite(v)
            for v in (
                self.q1_loss,
                self.q2_loss,
                self.value_loss,
                self.policy_loss,
                self.mean_log_prob,
            )
        )


class AgentBundle:
    """Policy, twin Q networks, value pair, optimizers, and hyperparameters."""

    def __init__(self, cfg, policy, q1, q2, value, value_target):
        self.cfg = cfg
        self.policy = policy
        self.q1 = q1
        self.q2 = q2
        self.value = value
        self.value_target = value_target
        self.opt_policy = RmspropState(policy.parameters(), cfg.rmsprop_rho, cfg.rmsprop_eps)
        self.opt_q1 = RmspropState(q1.parameters(), cfg.rmsprop_rho, cfg.rmsprop_eps)
        self.opt_q2 = RmspropState(q2.parameters(), cfg.rmsprop_rho, cfg.rmsprop_eps)
        self.opt_value = RmspropState(value.parameters(), cfg.rmsprop_rho, cfg.rmsprop_eps)

    @classmethod
    def init(cls, cfg, rng):
        """Fresh networks; the target value net starts as a copy of the value net."""
        cfg.validate()
        w = cfg.hidden_width
        policy = PolicyNet.init(
            OBS_DIM, w, rng, head_bound=cfg.init_bound,
            log_std_min=cfg.log_std_min, log_std_max=cfg.log_std_max,
            prob_floor=cfg.squash_prob_floor,
        )
        hidden3 = [RELU, RELU, RELU, LINEAR]
        q1 = mlp_init([OBS_DIM + 1, w, w, w, 1], hidden3, rng, cfg.init_bound)
        q2 = mlp_init([OBS_DIM + 1, w, w, w, 1], hidden3, rng, cfg.init_bound)
        value = mlp_init([OBS_DIM, w, w, w, 1], hidden3, rng, cfg.init_bound)
        value_target = value.copy()
        return cls(cfg, policy, q1, q2, value, value_target)


def polyak_update(target, main, tau):
    """target <- (1 - tau) * target + tau * main, elementwise."""
    tp = target.parameters()
    mp = main.parameters()
    if len(tp) != len(mp) or any(a.shape != b.shape for a, b in zip(tp, mp)):
        raise ValueError("target and main network shapes differ")
    for t, m in zip(tp, mp):
        if t.ndim == 2:
            K.polyak2d(t, m, tau)
        else:
            K.polyak1d(t, m, tau)


def compute_q_targets(batch, value_target, gamma):
    """Soft Bellman targets: reward + gamma * (1 - done) * V_target(next_obs)."""
    _, _, rewards, next_obs, done = batch
    v_next = value_target.forward(next_obs)[:, 0]
    return K.q_target(rewards, done, v_next, gamma)


def select_action(agent, obs, mode, rng=None):
    if mode == EXPLORE_RANDOM:
        return float(rng.random())
    if mode == STOCHASTIC:
        return agent.policy.sample(obs, rng)[0]
    if mode == DETERMINISTIC:
        return agent.policy.mean_action(obs)
    raise ValueError(f"unknown action mode {mode!r}; expected one of {ACTION_MODES}")


def update(agent, batch, rng):
    """One gradient step on every network from one replay batch.

    In order: sample fresh actions from the current policy; step both Q
    networks on the Bellman targets; step the value network toward
    min-Q minus the entropy term; step the policy through the fresh
    actions; Polyak-average the target value network. Raises
    TrainingAborted if any loss turns non-finite.
    """
    cfg = agent.cfg
    obs, actions, rewards, next_obs, done = batch
    n = len(rewards)

    # Fresh reparameterized actions from the current policy.
    a_new, log_pi, _ = agent.policy.sample(obs, rng)

    # Twin Q regression on the soft Bellman target.
    q_tgt = compute_q_targets(batch, agent.value_target, cfg.gamma)
    qa = np.concatenate([obs, actions[:, None]], axis=1)
    q_losses = []
    for qnet, opt in ((agent.q1, agent.opt_q1), (agent.q2, agent.opt_q2)):
        diff = qnet.forward(qa)[:, 0] - q_tgt
        q_losses.append(float(np.mean(diff * diff)))
        grads, _ = qnet.backward((2.0 / n) * diff[:, None])
        rmsprop_step(qnet.parameters(), flat_grads(grads), opt, cfg.lr_q)

    # Value regression toward min-Q of the fresh actions minus entropy.
    # The Q passes double as the cached forwards for the policy step below.
    qa_new = np.concatenate([obs, a_new[:, None]], axis=1)
    q1_new = agent.q1.forward(qa_new)[:, 0]
    q2_new = agent.q2.forward(qa_new)[:, 0]
    min_q = np.minimum(q1_new, q2_new)
    v_tgt = min_q - cfg.alpha * log_pi
    v_diff = agent.value.forward(obs)[:, 0] - v_tgt
    value_loss = float(np.mean(v_diff * v_diff))
    v_grads, _ = agent.value.backward((2.0 / n) * v_diff[:, None])
    rmsprop_step(agent.value.parameters(), flat_grads(v_grads), agent.opt_value, cfg.lr_value)

    # Policy step: gradients reach the policy only through the fresh
    # actions and their log probabilities; Q parameters are left untouched.
    policy_loss = float(np.mean(cfg.alpha * log_pi - min_q))
    pick_q1 = q1_new <= q2_new
    g1 = np.where(pick_q1, -1.0 / n, 0.0)[:, None]
    g2 = np.where(pick_q1, 0.0, -1.0 / n)[:, None]
    _, din1 = agent.q1.backward(g1)
    _, din2 = agent.q2.backward(g2)
    g_action = din1[:, OBS_DIM] + din2[:, OBS_DIM]
    g_log_pi = np.full(n, cfg.alpha / n)
    trunk_g, mean_g, ls_g, _ = agent.policy.backward_sample(g_action, g_log_pi)
    policy_grads = flat_grads(trunk_g) + flat_grads(mean_g) + flat_grads(ls_g)
    rmsprop_step(agent.policy.parameters(), policy_grads, agent.opt_policy, cfg.lr_policy)

    polyak_update(agent.value_target, agent.value, cfg.tau)

    report = LossReport(
        q1_loss=q_losses[0],
        q2_loss=q_losses[1],
        value_loss=value_loss,
        policy_loss=policy_loss,
        mean_log_prob=float(np.mean(log_pi)),
    )
    if not report.finite():
        raise TrainingAborted("non-finite loss during update", report=report)
    return report
