import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splitsched.env import (
    EpisodeFinishedError, EpisodeMaxima, Normalizers, RewardWeights, SchedulingEnv,
    WindowConfig, WorkloadExhaustedError, build_observation, build_window, reward,
)
from splitsched.sim import ClusterState, Job, JobQueue, allocate
from splitsched.workload import Trace, generate_synthetic, DESK_PARAMS

W3 = RewardWeights()


def one_based(view):
    return [None if s is None else s + 1 for s in view.slots]


def test_window_head_and_tail():
    assert one_based(build_window(10, WindowConfig(3, 2))) == [1, 2, 3, 9, 10]


def test_window_empty_queue():
    assert one_based(build_window(0, WindowConfig(3, 2))) == [None] * 5


def test_window_dedup_and_pad():
    assert one_based(build_window(4, WindowConfig(3, 2))) == [1, 2, 3, 4, None]


def test_window_tail_only():
    assert one_based(build_window(5, WindowConfig(0, 3))) == [3, 4, 5]
    assert one_based(build_window(2, WindowConfig(0, 3))) == [1, 2, None]


def test_window_rejects_zero_size():
    with pytest.raises(ValueError):
        WindowConfig(0, 0)


def test_window_no_duplicates_exhaustive():
    for head in range(5):
        for tail in range(5):
            if head + tail == 0:
                continue
            cfg = WindowConfig(head, tail)
            M = cfg.size
            for L in range(3 * M + 1):
                view = build_window(L, cfg)
                pos = view.positions()
                assert len(pos) == len(set(pos)) == min(L, M)
                assert all(0 <= p < L for p in pos)
                assert view.slots[:min(L, head)] == tuple(range(min(L, head)))
                if tail and L:
                    assert L - 1 in pos


def test_observation_all_zero():
    obs = build_observation(ClusterState(4), JobQueue(), build_window(0, WindowConfig(2, 1)),
                            Normalizers(4, 100.0), 0.0)
    assert obs.shape == (4 + 9,)
    assert not obs.any()


def test_observation_remaining_time_boundary():
    c = ClusterState(4)
    allocate(c, Job(1, 0, 1, 100))
    obs = build_observation(c, JobQueue(), build_window(0, WindowConfig(1, 0)),
                            Normalizers(4, 100.0), 0.0)
    assert obs[0] == 1.0 and not obs[1:].any()


def test_observation_slot_triple():
    q = JobQueue([Job(1, 0, 2, 50)])
    obs = build_observation(ClusterState(4), q, build_window(1, WindowConfig(2, 1)),
                            Normalizers(4, 100.0), 0.0)
    np.testing.assert_allclose(obs[4:7], [0.5, 0.5, 0.0])
    assert not obs[7:].any()


def _state(util_cores, queue_submits, now, lmax, wmax, n=4):
    c = ClusterState(n, now=now)
    if util_cores:
        allocate(c, Job(0, now, util_cores, 10))
    q = JobQueue([Job(i + 1, s, 1, 1) for i, s in enumerate(queue_submits)])
    return c, q, EpisodeMaxima(lmax, wmax)


def test_reward_best_case():
    assert reward(*_state(4, [], 0, 3, 10), W3) == 0.0


def test_reward_worst_case():
    c, q, m = _state(0, [0, 10], 20, 2, 30)
    assert abs(reward(c, q, m, W3) - (-1.0)) <= 1e-12


def test_reward_mixed():
    # eta = 0.5, L = 2 of 4, W = 15 + 15 = 30 of 60
    c, q, m = _state(2, [5, 5], 20, 4, 60)
    assert abs(reward(c, q, m, W3) - (-0.5)) <= 1e-12


def test_reward_zero_denominators():
    c, q, m = _state(0, [], 0, 0, 0)
    assert abs(reward(c, q, m, W3) + 1 / 3) <= 1e-12


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 8), st.lists(st.integers(0, 100), max_size=12), st.integers(0, 50),
       st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_reward_bound(cores, submits, extra, a, b, c_):
    total = a + b + c_
    weights = RewardWeights(a / total, b / total, c_ / total) if total > 1 else RewardWeights(a, b, c_)
    now = max(submits, default=0) + extra
    cl, q, m = _state(cores, submits, now, 0, 0, n=8)
    m.update(q, now)
    r = reward(cl, q, m, weights)
    assert -1.0 - 1e-12 <= r <= 0.0


def tiny_env(jobs, head=2, tail=1, placements=100, cores=4):
    env = SchedulingEnv(None, cores, WindowConfig(head, tail), placements=placements)
    env.reset(jobs=jobs)
    return env


def test_valid_selection():
    env = tiny_env([Job(1, 0, 2, 10), Job(2, 5, 1, 10)])
    res = env.step(0)
    assert res.reward == 0.0
    assert res.info["placed"] == 1 and env.sim.now == 0
    assert 1 in env.sim.cluster.allocations
    assert len(env.sim.queue) == 0 and not res.done


def test_fwd_to_pending_arrival():
    env = tiny_env([Job(1, 0, 1, 5), Job(2, 10, 1, 5)])
    env.step(0)
    res = env.step(env.fwd_action)           # t=5, job 1 completes
    assert env.sim.now == 5 and not env.sim.cluster.allocations and len(env.sim.queue) == 0
    res = env.step(env.fwd_action)
    assert abs(res.reward - (-1 / 3)) <= 1e-12
    assert env.sim.now == 10
    assert [j.id for j in env.sim.queue] == [2]
    assert res.info["arrived"] == 2


def test_empty_slot_is_invalid():
    env = tiny_env([Job(1, 0, 1, 5), Job(2, 10, 1, 5)])
    res = env.step(1)
    assert res.info["invalid"]
    assert res.reward < 0
    assert env.sim.now == 10


def test_unfitting_job_is_invalid():
    env = tiny_env([Job(1, 0, 3, 50), Job(2, 1, 3, 5), Job(3, 2, 1, 5)])
    env.step(0)
    env.step(env.fwd_action)
    t = env.sim.now
    res = env.step(0)      # job 2 needs 3 cores, 1 free
    assert res.info["invalid"] and env.sim.now > t


def test_reset_state_and_first_job_visible():
    env = SchedulingEnv(None, 4, WindowConfig(2, 1), placements=10)
    obs = env.reset(jobs=[Job(7, 0, 2, 100)])
    assert env.sim.placements == 0 and env.sim.cluster.in_use == 0
    assert env.sim.now == 0
    assert env.window.slots[0] == 0
    np.testing.assert_allclose(obs[4:7], [0.5, 1.0, 0.0])


def test_reset_deterministic():
    trace = generate_synthetic(DESK_PARAMS, 500)
    env = SchedulingEnv(trace, 16, WindowConfig(5, 1), placements=50)
    a = env.reset(seed=3)
    b = env.reset(seed=3)
    np.testing.assert_array_equal(a, b)


def test_reset_without_workload():
    env = SchedulingEnv(None, 4, WindowConfig(1, 1))
    with pytest.raises(WorkloadExhaustedError):
        env.reset()
    env = SchedulingEnv(Trace([Job(1, 0, 1, 1)], 4, 1.0), 4, WindowConfig(1, 1), placements=5,
                        episode_jobs=3)
    env.reset(seed=0)   # episode length is capped by the trace


def test_step_after_done():
    env = tiny_env([Job(1, 0, 1, 5)], placements=1)
    res = env.step(0)
    assert res.done
    with pytest.raises(EpisodeFinishedError):
        env.step(0)


def test_placement_target_ends_episode():
    env = tiny_env([Job(i, 0, 1, 5) for i in range(1, 6)], placements=2)
    env.step(0)
    env.step(env.fwd_action)
    assert env.step(0).done


def test_congested_witness_head_only_window_misses_arrival():
    # job 1 leaves one core free; three 4-core jobs block the head, then a
    # 1-core job that fits arrives behind them
    jobs = [Job(1, 0, 3, 100)] + [Job(i, 1, 4, 100) for i in (2, 3, 4)] + [Job(5, 2, 1, 10)]
    env = tiny_env(jobs, head=2, tail=0)
    env.step(0)
    while env.sim.now < 2 or len(env.sim.queue) < 4:
        env.step(env.fwd_action)
    arrived = [j.id for j in env.sim.queue].index(5)
    assert arrived not in env.window.positions()
    assert env.sim.fits(arrived)

    split = tiny_env(jobs, head=1, tail=1)
    split.step(0)
    while split.sim.now < 2 or len(split.sim.queue) < 4:
        split.step(split.fwd_action)
    arrived = [j.id for j in split.sim.queue].index(5)
    assert arrived in split.window.positions()


def _fuzz_jobs(rng, n, cores):
    t = 0.0
    jobs = []
    for i in range(n):
        t += float(rng.integers(0, 4))
        jobs.append(Job(i + 1, t, int(rng.integers(1, cores + 1)), float(rng.integers(1, 20))))
    return jobs


@pytest.mark.parametrize("seed", range(20))
def test_step_invariants_fuzz(seed):
    rng = np.random.default_rng(seed)
    env = tiny_env(_fuzz_jobs(rng, 30, 4), head=int(rng.integers(0, 3)), tail=1, placements=25)
    done = False
    while not done:
        L, t = len(env.sim.queue), env.sim.now
        consumed = env.sim.clock.cursor, len(env.sim.finished)
        res = env.step(int(rng.integers(env.n_actions)))
        done = res.done
        assert -1.0 <= res.reward <= 0.0
        assert 0 <= env.sim.cluster.in_use <= env.cores
        assert env.sim.now >= t
        progressed = (env.sim.now > t or len(env.sim.queue) < L
                      or (env.sim.clock.cursor, len(env.sim.finished)) != consumed)
        assert progressed or done
        if res.info["placed"] is not None:
            assert res.reward == 0.0
        elif res.reward == 0.0:
            assert env.sim.cluster.in_use == env.cores or len(env.sim.queue) == 0
        if res.info["arrived"] is not None:
            assert len(env.sim.queue) - 1 in env.window.positions()
