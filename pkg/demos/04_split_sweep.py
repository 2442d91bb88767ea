"""
Sweeping window splits
======================

With the total window fixed at 8 slots, train one agent per split and look
at average wait, queue length and how often wide jobs get placed. Moving all
slots to the tail gives the lowest wait, but wide jobs stuck at the queue
head are then rarely seen, which is the starvation risk.
"""

import numpy as np

from splitsched.env import SchedulingEnv, WindowConfig
from splitsched.experiment import train_and_evaluate
from splitsched.workload import DESK_PARAMS, generate_synthetic

trace = generate_synthetic(DESK_PARAMS, 20000)

for head, tail in [(8, 0), (7, 1), (4, 4), (0, 8)]:
    env = SchedulingEnv(trace, 16, WindowConfig(head, tail), placements=200)
    _, results = train_and_evaluate(env, seed=1, episodes=150, eval_episodes=5)
    wait = np.mean([r.report.wait_time for r in results])
    queue = np.mean([r.report.queue_length for r in results])
    wide = sum(n for r in results for c, _, n, _ in r.metrics.job_type_table() if c > 8)
    print(f"({head},{tail})  wait {wait:8.1f}  queue {queue:6.2f}  wide-job placements {wide}")
