"""
Heuristic baselines on a congested cluster
==========================================

Generate a synthetic workload for a 16-core cluster that is offered a bit
more work than it can do, then replay the same episodes under the four
queue heuristics and compare the time-averaged metrics.
"""

import numpy as np

from splitsched.heuristics import POLICIES, run_policy
from splitsched.workload import DESK_PARAMS, generate_synthetic, sample_episode

# 20k jobs: lognormal runtimes, core counts biased towards powers of two
trace = generate_synthetic(DESK_PARAMS, 20000)
print(f"{len(trace)} jobs, offered load {trace.offered_load():.2f} core-s/s on 16 cores")

# each episode starts at a seeded offset into the trace and stops after 200 placements
episodes = [sample_episode(trace, [0, i], 400) for i in range(10)]

print(f"{'policy':>10} {'util':>6} {'queue':>7} {'wait':>9}")
for policy in POLICIES:
    reports = [run_policy(jobs, 16, policy, placements=200).metrics.finalize() for jobs in episodes]
    util = np.mean([r.utilization for r in reports])
    queue = np.mean([r.queue_length for r in reports])
    wait = np.mean([r.wait_time for r in reports])
    print(f"{policy:>10} {util:6.3f} {queue:7.2f} {wait:9.1f}")

# Strict FCFS idles cores behind a wide head job. EASY backfilling fills
# them without delaying the head, so it keeps utilization highest.
