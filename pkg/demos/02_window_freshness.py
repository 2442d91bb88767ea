"""
Why a tail slot helps
=====================

Build a small congested scene by hand: a 4-core cluster with one core free,
three 4-core jobs waiting, then a 1-core job arriving. A head-only window
never shows the new job, a window with one tail slot always does.
"""

from splitsched.env import SchedulingEnv, WindowConfig
from splitsched.sim import Job

jobs = [Job(1, 0, 3, 100)] + [Job(i, 1, 4, 100) for i in (2, 3, 4)] + [Job(5, 2, 1, 10)]


def describe(head, tail):
    env = SchedulingEnv(None, 4, WindowConfig(head, tail), placements=10)
    env.reset(jobs=jobs)
    env.step(0)                      # start job 1 on three cores
    while env.sim.now < 2 or len(env.sim.queue) < 4:
        env.step(env.fwd_action)     # wait for the arrivals
    ids = [j.id for j in env.sim.queue]
    shown = [None if s is None else ids[s] for s in env.window.slots]
    print(f"window ({head},{tail}): queue {ids}, slots show {shown}")
    return env


describe(2, 0)
env = describe(1, 1)

# with the split window the agent can place job 5 on the idle core right away
slot = env.window.slots.index(len(env.sim.queue) - 1)
res = env.step(slot)
print("placed job", res.info["placed"], "reward", res.reward)
