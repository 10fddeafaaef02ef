"""Advantage actor-critic with one-step TD advantages and per-episode updates."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import gridworld as gw
from .analysis import episode_entropy
from .errors import NumericError, UsageError
from .neural import (Architecture, NetworkParams, OptimizerState, backward, forward,
                     init_params, log_softmax, optimizer_step, softmax)


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.9
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    learning_rate: float = 1e-3
    episodes: int = 5000
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise UsageError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.value_coef < 0 or self.entropy_coef < 0:
            raise UsageError("loss coefficients must be non-negative")
        if not self.learning_rate > 0:
            raise UsageError("learning_rate must be positive")
        if self.episodes < 1:
            raise UsageError("episodes must be >= 1")


@dataclass
class EpisodeRecord:
    transitions: list[gw.Transition]
    probs: np.ndarray          # (T, A) policy at each visited state
    values: np.ndarray         # (T,) V(s_t)
    log_probs: np.ndarray      # (T,) log pi(a_t | s_t)
    bootstrap_value: float = 0.0   # V(s_T) when truncated, else 0
    all_states_entropy: float = float("nan")

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def truncated(self) -> bool:
        return bool(self.transitions) and self.transitions[-1].truncated

    @property
    def total_reward(self) -> float:
        return float(sum(t.reward for t in self.transitions))


@dataclass(frozen=True)
class LossBreakdown:
    value_loss: float
    policy_loss: float
    entropy_term: float
    total: float


def td_error(reward: float, gamma: float, v_next: float, v_curr: float, terminal: bool) -> float:
    bootstrap = 0.0 if terminal else gamma * v_next
    return reward + bootstrap - v_curr


def value_loss(delta):
    return 0.5 * np.square(delta)


def policy_loss(log_probs, advantages) -> float:
    log_probs = np.asarray(log_probs, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    if log_probs.shape != advantages.shape:
        raise UsageError("log_probs and advantages differ in length")
    return float(-np.mean(log_probs * advantages))


def _state_table(params: NetworkParams, grid: gw.GridMap):
    fp = forward(params, np.eye(grid.n_states))
    return softmax(fp.policy_logits), fp.value, log_softmax(fp.policy_logits)


def collect_episode(params: NetworkParams, config: gw.EnvConfig,
                    rng: np.random.Generator) -> EpisodeRecord:
    """Roll out one on-policy episode.

    Parameters are fixed for the whole episode, so the policy and value are
    evaluated once for every cell and looked up along the trajectory.
    """
    grid = config.map
    probs, values, logp = _state_table(params, grid)
    cdf = np.cumsum(probs, axis=1)
    last_action = probs.shape[1] - 1

    live = [s for s in range(grid.n_states) if not grid.is_terminal(s)]
    p_live = probs[live]
    with np.errstate(divide="ignore", invalid="ignore"):
        all_h = -np.sum(np.where(p_live > 0, p_live * np.log(p_live), 0.0), axis=1)

    state = gw.reset(config)
    transitions, visited, actions = [], [], []
    for t in range(config.max_steps):
        action = min(int(np.searchsorted(cdf[state], rng.random(), side="right")), last_action)
        tr = gw.step(state, action, rng, config, steps_taken=t)
        transitions.append(tr)
        visited.append(state)
        actions.append(action)
        state = tr.next_state
        if tr.terminal or tr.truncated:
            break
    visited_arr = np.asarray(visited)
    record = EpisodeRecord(
        transitions=transitions,
        probs=probs[visited_arr],
        values=values[visited_arr],
        log_probs=logp[visited_arr, np.asarray(actions)],
        all_states_entropy=float(all_h.mean()),
    )
    if record.truncated:
        record.bootstrap_value = float(values[state])
    return record


def episode_gradients(params: NetworkParams, record: EpisodeRecord, config: AgentConfig,
                      grid: gw.GridMap):
    """Loss breakdown and parameter gradients for one episode.

    TD targets and advantages are treated as constants.
    """
    if not record.transitions:
        raise UsageError("cannot train on an empty episode")
    n = len(record)
    states = np.fromiter((t.state for t in record.transitions), dtype=np.intp, count=n)
    actions = np.fromiter((t.action for t in record.transitions), dtype=np.intp, count=n)
    rewards = np.fromiter((t.reward for t in record.transitions), dtype=np.float64, count=n)

    fp = forward(params, np.eye(grid.n_states)[states])
    v = fp.value
    v_next = np.empty(n)
    v_next[:-1] = v[1:]
    last = record.transitions[-1]
    v_next[-1] = 0.0 if last.terminal else record.bootstrap_value
    delta = rewards + config.gamma * v_next - v

    logp_all = log_softmax(fp.policy_logits)
    p = np.exp(logp_all)
    logp = logp_all[np.arange(n), actions]
    step_h = -np.sum(p * logp_all, axis=1)

    v_loss = float(np.mean(value_loss(delta)))
    p_loss = policy_loss(logp, delta)
    h_term = float(np.mean(step_h))
    total = p_loss + config.value_coef * v_loss - config.entropy_coef * h_term
    breakdown = LossBreakdown(v_loss, p_loss, h_term, total)
    if not np.isfinite([v_loss, p_loss, h_term, total]).all():
        raise NumericError(f"non-finite loss {breakdown}")

    onehot = np.zeros_like(p)
    onehot[np.arange(n), actions] = 1.0
    d_logits = (-delta / n)[:, None] * (onehot - p)
    d_logits += (config.entropy_coef / n) * p * (logp_all + step_h[:, None])
    d_value = config.value_coef * (-delta) / n
    return breakdown, backward(fp, params, d_logits, d_value)


def train_episode(params: NetworkParams, opt: OptimizerState, record: EpisodeRecord,
                  config: AgentConfig, grid: gw.GridMap | None = None):
    """One optimizer step on the episode-mean actor-critic loss.

    Returns ``(breakdown, new_params, new_opt)``.
    """
    grid = grid or gw.GridMap.from_rows(gw.DEFAULT_MAP)
    breakdown, grads = episode_gradients(params, record, config, grid)
    new_params, new_opt = optimizer_step(params, grads, opt)
    return breakdown, new_params, new_opt


@dataclass
class EpisodeStats:
    episode: int
    entropy: float
    all_states_entropy: float
    ret: float
    success: bool
    steps: int
    loss: LossBreakdown


@dataclass
class Learner:
    """A single training job: one network, one optimizer, one rng stream."""

    arch: Architecture
    env: gw.EnvConfig
    config: AgentConfig
    seed: int
    params: NetworkParams = field(init=False)
    opt: OptimizerState = field(init=False)
    rng: np.random.Generator = field(init=False)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)
        self.params = init_params(self.arch, self.rng)
        c = self.config
        self.opt = OptimizerState.create(self.params, c.learning_rate, c.beta1, c.beta2, c.epsilon)

    def episodes(self, n: int | None = None) -> Iterator[EpisodeStats]:
        n = self.config.episodes if n is None else n
        for k in range(1, n + 1):
            record = collect_episode(self.params, self.env, self.rng)
            loss, self.params, self.opt = train_episode(
                self.params, self.opt, record, self.config, self.env.map)
            ret = record.total_reward
            yield EpisodeStats(k, episode_entropy(record), record.all_states_entropy,
                               ret, ret > 0, len(record), loss)
