"""Episode runners shared by the command line and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .agent import PPOAgent, PPOHyperparams, RolloutBuffer
from .env import SchedulingEnv
from .heuristics import run_policy
from .metrics import MetricsAccumulator, MetricsReport
from .workload import sample_episode

EVAL_SEED_OFFSET = 1_000_003


def train_seed(seed: int, episode: int) -> list:
    return [seed, episode]


def eval_seed(seed: int, episode: int) -> list:
    return [seed, EVAL_SEED_OFFSET + episode]


@dataclass
class EpisodeResult:
    report: MetricsReport
    total_reward: float
    steps: int
    metrics: MetricsAccumulator


def run_agent_episode(env: SchedulingEnv, agent: PPOAgent, seed, learn: bool = False,
                      greedy: bool = False) -> EpisodeResult:
    """One episode with the agent's policy; ``learn`` applies a PPO update at the end."""
    obs = env.reset(seed)
    buf = RolloutBuffer() if learn else None
    total = 0.0
    steps = 0
    done = False
    while not done:
        action, logp, value = agent.act(obs, greedy=greedy)
        res = env.step(action)
        if buf is not None:
            buf.add(obs, action, logp, res.reward, value, res.done)
        total += res.reward
        steps += 1
        obs, done = res.observation, res.done
    if buf is not None:
        agent.learn(buf)
    return EpisodeResult(env.report(), total, steps, env.metrics)


def run_callable_episode(env: SchedulingEnv, choose: Callable[[np.ndarray], int], seed) -> EpisodeResult:
    obs = env.reset(seed)
    total = 0.0
    steps = 0
    done = False
    while not done:
        res = env.step(choose(obs))
        total += res.reward
        steps += 1
        obs, done = res.observation, res.done
    return EpisodeResult(env.report(), total, steps, env.metrics)


def run_random_episode(env: SchedulingEnv, seed, rng: np.random.Generator) -> EpisodeResult:
    """Uniformly random actions, including the forward action."""
    n = env.n_actions
    return run_callable_episode(env, lambda _obs: int(rng.integers(n)), seed)


def run_heuristic_episode(env: SchedulingEnv, policy: str, seed) -> EpisodeResult:
    """Same episode jobs and stopping rule as the environment, under a heuristic."""
    n = min(env.episode_jobs, len(env.trace))
    jobs = sample_episode(env.trace, seed, n)
    sim = run_policy(jobs, env.cores, policy, placements=env.placement_target,
                     window_size=env.window_cfg.size)
    return EpisodeResult(sim.metrics.finalize(), float("nan"), 0, sim.metrics)


def train_agent(env: SchedulingEnv, agent: PPOAgent, episodes: int, seed: int,
                callback: Optional[Callable[[int, EpisodeResult], None]] = None) -> PPOAgent:
    """Sequential training: one PPO update after every episode."""
    for ep in range(episodes):
        result = run_agent_episode(env, agent, train_seed(seed, ep), learn=True)
        if callback is not None:
            callback(ep + 1, result)
    return agent


# Desk-scale PPO settings: the 16-core congested profile trains in a few
# hundred 200-placement episodes with these, where the large-network defaults
# stall near the random policy.
DESK_HYPER = PPOHyperparams(lr=1e-3, minibatch=64, epochs=10, entropy_coef=0.01, gae_lambda=0.95)
DESK_HIDDEN = (64, 64)


def train_and_evaluate(env: SchedulingEnv, seed: int, episodes: int, eval_episodes: int,
                       hyper: PPOHyperparams = DESK_HYPER, hidden=DESK_HIDDEN,
                       greedy: bool = False) -> tuple[PPOAgent, list]:
    """Train a fresh agent, then evaluate the frozen policy on held-out episode seeds."""
    agent = PPOAgent.create(env.obs_dim, env.n_actions, replace(hyper, seed=seed), hidden)
    train_agent(env, agent, episodes, seed)
    frozen = PPOAgent(agent.params, agent.hyper)
    results = [run_agent_episode(env, frozen, eval_seed(seed, i), greedy=greedy)
               for i in range(eval_episodes)]
    return agent, results


def random_baseline(env: SchedulingEnv, seed: int, eval_episodes: int) -> list:
    """Uniform-random actions on the same held-out episodes as train_and_evaluate."""
    rng = np.random.default_rng(seed)
    return [run_random_episode(env, eval_seed(seed, i), rng) for i in range(eval_episodes)]
