"""Split-window scheduling environment with Schedule Cycling.

The agent sees ``head`` jobs from the front of the queue and ``tail`` jobs
from the back. Each step either places a visible job (reward 0, clock
unchanged, same cycle) or ends the cycle: an explicit forward action or an
invalid selection is charged the current penalty and the clock moves to the
next arrival or completion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .metrics import MetricsAccumulator
from .sim import ClusterState, Job, JobQueue, Simulation, available_cores
from .workload import Trace, TraceTooShortError, sample_episode


class EpisodeFinishedError(RuntimeError):
    pass


class WorkloadExhaustedError(RuntimeError):
    pass


@dataclass(frozen=True)
class WindowConfig:
    head: int
    tail: int

    def __post_init__(self):
        if self.head < 0 or self.tail < 0:
            raise ValueError("window slot counts must be non-negative")
        if self.head + self.tail < 1:
            raise ValueError("window must have at least one slot (head + tail >= 1)")

    @property
    def size(self) -> int:
        return self.head + self.tail


@dataclass(frozen=True)
class WindowView:
    """``slots[k]`` is a 0-based queue index or None for an empty slot."""

    slots: tuple

    def __len__(self):
        return len(self.slots)

    def positions(self) -> list:
        return [s for s in self.slots if s is not None]


def build_window(queue_len: int, cfg: WindowConfig) -> WindowView:
    """Head slots take queue indices 0..head-1; tail slots take the last
    ``tail`` indices not already covered, in ascending queue order.
    Unused slots in either region are left empty at the region's end."""
    n_head = min(queue_len, cfg.head)
    tail_lo = max(n_head, queue_len - cfg.tail)
    head = list(range(n_head)) + [None] * (cfg.head - n_head)
    tail = list(range(tail_lo, queue_len))
    tail += [None] * (cfg.tail - len(tail))
    return WindowView(tuple(head + tail))


@dataclass(frozen=True)
class Normalizers:
    cores: int
    max_runtime: float


def build_observation(cluster: ClusterState, queue: JobQueue, window: WindowView,
                      norm: Normalizers, max_wait: float) -> np.ndarray:
    """Per-core remaining time / max runtime, then (cores/N, runtime/max runtime,
    wait/max(max_wait, 1)) for each window slot; empty slots are zeros."""
    n = cluster.total_cores
    obs = np.zeros(n + 3 * len(window))
    obs[:n] = cluster.remaining_times() / norm.max_runtime
    now = cluster.now
    wait_scale = max(max_wait, 1.0)
    for k, pos in enumerate(window.slots):
        if pos is None:
            continue
        job = queue[pos]
        base = n + 3 * k
        obs[base] = job.cores / norm.cores
        obs[base + 1] = job.runtime / norm.max_runtime
        obs[base + 2] = (now - job.submit_time) / wait_scale
    return obs


@dataclass(frozen=True)
class RewardWeights:
    w1: float = 1 / 3
    w2: float = 1 / 3
    w3: float = 1 / 3

    def __post_init__(self):
        for name in ("w1", "w2", "w3"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"reward weight {name} must be in [0, 1]")


@dataclass
class EpisodeMaxima:
    queue_len: float = 0.0
    total_wait: float = 0.0

    def update(self, queue: JobQueue, now: float) -> None:
        self.queue_len = max(self.queue_len, len(queue))
        self.total_wait = max(self.total_wait, queue.total_wait(now))


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def reward(cluster: ClusterState, queue: JobQueue, maxima: EpisodeMaxima,
           weights: RewardWeights) -> float:
    util = cluster.in_use / cluster.total_cores
    return (-weights.w1 * (1.0 - util)
            - weights.w2 * _ratio(len(queue), maxima.queue_len)
            - weights.w3 * _ratio(queue.total_wait(cluster.now), maxima.total_wait))


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


class SchedulingEnv:
    """Reset/step environment over a trace (or an explicit job list).

    Actions ``0..M-1`` pick a window slot, action ``M`` is the forward action.
    An episode ends after ``placements`` successful placements, or when no
    arrival, completion or queued job is left.
    """

    def __init__(self, trace: Optional[Trace], cores: int, window: WindowConfig,
                 weights: RewardWeights = RewardWeights(), placements: int = 1000,
                 episode_jobs: Optional[int] = None, max_runtime: Optional[float] = None):
        self.trace = trace
        self.cores = int(cores)
        self.window_cfg = window
        self.weights = weights
        self.placement_target = placements
        self.episode_jobs = episode_jobs or 2 * placements
        if max_runtime is None:
            max_runtime = trace.max_runtime if trace is not None else 1.0
        self.norm = Normalizers(self.cores, float(max_runtime))
        self.sim: Optional[Simulation] = None
        self.done = True

    @property
    def n_actions(self) -> int:
        return self.window_cfg.size + 1

    @property
    def fwd_action(self) -> int:
        return self.window_cfg.size

    @property
    def obs_dim(self) -> int:
        return self.cores + 3 * self.window_cfg.size

    def reset(self, seed=None, jobs: Optional[Sequence[Job]] = None) -> np.ndarray:
        if jobs is None:
            if self.trace is None:
                raise WorkloadExhaustedError("no trace and no job list given")
            n = min(self.episode_jobs, len(self.trace))
            try:
                jobs = sample_episode(self.trace, seed, n)
            except TraceTooShortError as exc:
                raise WorkloadExhaustedError(str(exc)) from exc
        if not jobs:
            raise WorkloadExhaustedError("episode has no jobs")
        if self.trace is None:
            self.norm = Normalizers(self.cores, max(self.norm.max_runtime, max(j.runtime for j in jobs)))
        self.metrics = MetricsAccumulator(self.cores)
        self.sim = Simulation(jobs, self.cores, metrics=self.metrics)
        self.maxima = EpisodeMaxima()
        self.maxima.update(self.sim.queue, self.sim.now)
        self.max_wait = 0.0
        self.done = False
        return self._observe()

    def _observe(self) -> np.ndarray:
        sim = self.sim
        queue = sim.queue
        if len(queue):
            self.max_wait = max(self.max_wait, sim.now - queue[0].submit_time)
        self.window = build_window(len(queue), self.window_cfg)
        return build_observation(sim.cluster, queue, self.window, self.norm, self.max_wait)

    def current_reward(self) -> float:
        self.maxima.update(self.sim.queue, self.sim.now)
        return reward(self.sim.cluster, self.sim.queue, self.maxima, self.weights)

    def is_valid(self, action: int) -> bool:
        if not 0 <= action < self.window_cfg.size:
            return False
        pos = self.window.slots[action]
        return pos is not None and self.sim.fits(pos)

    def step(self, action: int) -> StepResult:
        if self.done:
            raise EpisodeFinishedError("episode is finished; call reset()")
        if not 0 <= action <= self.fwd_action:
            raise ValueError(f"action {action} outside 0..{self.fwd_action}")
        sim = self.sim
        self.metrics.record_window_stats(len(sim.queue), self.window_cfg.size)
        info = {"placed": None, "arrived": None, "invalid": False,
                "fwd": action == self.fwd_action, "time": sim.now, "advanced": 0.0}
        if self.is_valid(action):
            job = sim.place(self.window.slots[action])
            info["placed"] = job.id
            r = 0.0
            self.done = sim.placements >= self.placement_target or sim.done()
        else:
            info["invalid"] = not info["fwd"]
            r = self.current_reward()
            if sim.has_next_event():
                out = sim.forward()
                info["advanced"] = out.time_after - out.time_before
                info["arrived"] = out.arrived.id if out.arrived is not None else None
                self.maxima.update(sim.queue, sim.now)
                self.done = sim.done()
            else:
                # nothing left to wait for: the episode cannot progress
                self.done = True
        self.metrics.record_action(invalid=info["invalid"], fwd=info["fwd"])
        info["time"] = sim.now
        return StepResult(self._observe(), r, self.done, info)

    def report(self):
        return self.metrics.finalize()
