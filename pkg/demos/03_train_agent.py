"""
Training the PPO agent
======================

Train an actor-critic agent for a few hundred episodes on the 16-core
profile with a (5,1) split window, then compare its frozen policy with
uniform random actions on the same held-out episodes.
"""

import numpy as np

from splitsched.env import SchedulingEnv, WindowConfig
from splitsched.experiment import random_baseline, train_and_evaluate
from splitsched.workload import DESK_PARAMS, generate_synthetic

trace = generate_synthetic(DESK_PARAMS, 20000)
env = SchedulingEnv(trace, 16, WindowConfig(5, 1), placements=200)
print("observation size", env.obs_dim, "actions", env.n_actions)

agent, trained = train_and_evaluate(env, seed=0, episodes=200, eval_episodes=10)
random = random_baseline(env, seed=0, eval_episodes=10)

for name, res in (("ppo", trained), ("random", random)):
    reward = np.mean([r.total_reward for r in res])
    wait = np.mean([r.report.wait_time for r in res])
    invalid = np.mean([r.report.invalid_rate for r in res])
    print(f"{name:>7}: reward {reward:8.1f}  wait {wait:8.1f}  invalid rate {invalid:.2f}")

# Invalid picks are not a failure mode here: like Fwd, they end the
# scheduling cycle and move time on, so the agent learns to use either.
