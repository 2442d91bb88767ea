"""Discrete-event model of a homogeneous cluster and its FIFO job queue."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np


class SimulationError(RuntimeError):
    """Simulator integrity violation (a bug in the caller, not an agent mistake)."""


class InsufficientCoresError(SimulationError):
    pass


class TimeRegressionError(SimulationError):
    pass


@dataclass
class Job:
    id: int
    submit_time: float
    cores: int
    runtime: float
    start_time: Optional[float] = None

    @property
    def wait(self) -> Optional[float]:
        if self.start_time is None:
            return None
        return self.start_time - self.submit_time

    def copy(self) -> "Job":
        return Job(self.id, self.submit_time, self.cores, self.runtime, self.start_time)


class ClusterState:
    """N identical cores; each allocation pins a job to the lowest-indexed free cores.

    ``free_at[i]`` is the instant core ``i`` becomes idle (``<= now`` when idle).
    """

    def __init__(self, total_cores: int, now: float = 0.0):
        if total_cores < 1:
            raise ValueError("total_cores must be positive")
        self.total_cores = int(total_cores)
        self.now = float(now)
        self.free_at = np.full(self.total_cores, -np.inf)
        self.core_owner = np.full(self.total_cores, -1, dtype=np.int64)
        self.in_use = 0
        self.allocations: dict[int, tuple[Job, float]] = {}
        self._heap: list[tuple[float, int]] = []

    def remaining_times(self) -> np.ndarray:
        """Per-core time until the core becomes available (0 for idle cores)."""
        return np.maximum(self.free_at - self.now, 0.0)

    def next_completion(self) -> Optional[float]:
        return self._heap[0][0] if self._heap else None

    def running_jobs(self) -> list[Job]:
        return [job for job, _ in self.allocations.values()]


def available_cores(cluster: ClusterState) -> int:
    return cluster.total_cores - cluster.in_use


def allocate(cluster: ClusterState, job: Job) -> ClusterState:
    """Start ``job`` now. Raises InsufficientCoresError if it does not fit."""
    if job.id in cluster.allocations:
        raise SimulationError(f"job {job.id} is already running")
    if job.cores > available_cores(cluster):
        raise InsufficientCoresError(
            f"job {job.id} needs {job.cores} cores, {available_cores(cluster)} available"
        )
    finish = cluster.now + job.runtime
    idle = np.flatnonzero(cluster.core_owner < 0)[: job.cores]
    cluster.free_at[idle] = finish
    cluster.core_owner[idle] = job.id
    cluster.in_use += job.cores
    job.start_time = cluster.now
    cluster.allocations[job.id] = (job, finish)
    heapq.heappush(cluster._heap, (finish, job.id))
    return cluster


def advance(cluster: ClusterState, to_time: float) -> list[Job]:
    """Move the clock to ``to_time`` and release every allocation finishing by then.

    Completed jobs come back ordered by finish time, ties by ascending id.
    """
    if to_time < cluster.now:
        raise TimeRegressionError(f"cannot advance from {cluster.now} back to {to_time}")
    done = []
    heap = cluster._heap
    while heap and heap[0][0] <= to_time:
        _, jid = heapq.heappop(heap)
        job, _ = cluster.allocations.pop(jid)
        cores = np.flatnonzero(cluster.core_owner == jid)
        cluster.core_owner[cores] = -1
        cluster.free_at[cores] = -np.inf
        cluster.in_use -= job.cores
        done.append(job)
    cluster.now = float(to_time)
    return done


class JobQueue:
    """Unbounded FIFO queue; removal happens only by explicit scheduling.

    Tracks the sum of submit times so the aggregate wait
    ``sum(t - s_j)`` is available in O(1).
    """

    def __init__(self, jobs: Iterable[Job] = ()):
        self.jobs: list[Job] = []
        self.submit_sum = 0.0
        for job in jobs:
            self.push(job)

    def __len__(self) -> int:
        return len(self.jobs)

    def __iter__(self):
        return iter(self.jobs)

    def __getitem__(self, i: int) -> Job:
        return self.jobs[i]

    def push(self, job: Job) -> None:
        self.jobs.append(job)
        self.submit_sum += job.submit_time

    def pop(self, index: int) -> Job:
        job = self.jobs.pop(index)
        self.submit_sum -= job.submit_time
        if not self.jobs:
            self.submit_sum = 0.0
        return job

    def total_wait(self, now: float) -> float:
        return len(self.jobs) * now - self.submit_sum


@dataclass
class EventClock:
    """Pending arrivals (time ordered) plus the cluster's completion stream."""

    arrivals: list[Job]
    cluster: ClusterState
    cursor: int = 0

    def next_arrival(self) -> Optional[float]:
        if self.cursor < len(self.arrivals):
            return self.arrivals[self.cursor].submit_time
        return None

    def pop_arrival(self) -> Job:
        job = self.arrivals[self.cursor]
        self.cursor += 1
        return job

    def exhausted(self) -> bool:
        return self.cursor >= len(self.arrivals) and not self.cluster.allocations


def next_event_time(clock: EventClock) -> Optional[float]:
    a = clock.next_arrival()
    c = clock.cluster.next_completion()
    if a is None:
        return c
    if c is None:
        return a
    return min(a, c)


@dataclass
class CycleOutcome:
    time_before: float
    time_after: float
    completed: list[Job] = field(default_factory=list)
    arrived: Optional[Job] = None


class Simulation:
    """Cluster + queue + event stream, driven one scheduling cycle at a time.

    A cycle is triggered by one arrival or by completions. Completions at a
    timestamp are processed before an arrival at the same timestamp, and
    simultaneous arrivals are serialized: each forward enqueues at most one.
    An optional metrics accumulator receives time intervals and placements.
    """

    def __init__(self, jobs: Iterable[Job], total_cores: int, metrics=None):
        arrivals = sorted((j.copy() for j in jobs), key=lambda j: (j.submit_time, j.id))
        for job in arrivals:
            job.start_time = None
            if job.cores > total_cores:
                raise ValueError(f"job {job.id} requests {job.cores} > {total_cores} cores")
        start = arrivals[0].submit_time if arrivals else 0.0
        self.cluster = ClusterState(total_cores, now=start)
        self.queue = JobQueue()
        self.clock = EventClock(arrivals, self.cluster)
        self.metrics = metrics
        self.placements = 0
        self.finished: list[Job] = []
        self.placed: list[Job] = []
        if arrivals:
            self._enqueue(self.clock.pop_arrival())

    @property
    def now(self) -> float:
        return self.cluster.now

    def _enqueue(self, job: Job) -> None:
        self.queue.push(job)
        if self.metrics is not None:
            self.metrics.record_arrival(job)

    def fits(self, index: int) -> bool:
        return self.queue[index].cores <= available_cores(self.cluster)

    def place(self, index: int) -> Job:
        """Start the job at queue position ``index`` (0-based) right now."""
        job = self.queue[index]
        allocate(self.cluster, job)
        self.queue.pop(index)
        self.placements += 1
        self.placed.append(job)
        if self.metrics is not None:
            self.metrics.record_placement(job)
        return job

    def has_next_event(self) -> bool:
        return next_event_time(self.clock) is not None

    def forward(self) -> CycleOutcome:
        """Advance to the next trigger event. No-op if no event remains."""
        t0 = self.now
        t1 = next_event_time(self.clock)
        if t1 is None:
            return CycleOutcome(t0, t0)
        if self.metrics is not None:
            self.metrics.record_interval(t0, t1, self.cluster.in_use, len(self.queue))
        completed = advance(self.cluster, t1)
        self.finished.extend(completed)
        arrived = None
        nxt = self.clock.next_arrival()
        if nxt is not None and nxt <= t1:
            arrived = self.clock.pop_arrival()
            self._enqueue(arrived)
        return CycleOutcome(t0, t1, completed, arrived)

    def done(self) -> bool:
        return self.clock.exhausted() and not self.queue
