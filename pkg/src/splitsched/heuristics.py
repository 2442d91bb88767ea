"""Baseline policies over the same simulator: FCFS, SJF, LCFS and EASY backfilling.

Selectors return a 0-based queue index to place now, or ``None`` to wait for
the next event. SJF keys on requested cores, not runtime.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

from .metrics import MetricsAccumulator
from .sim import ClusterState, Job, Simulation, available_cores

WAIT = None


def select_fcfs(queue: Sequence[Job], available: int) -> Optional[int]:
    if queue and queue[0].cores <= available:
        return 0
    return WAIT


def select_sjf(queue: Sequence[Job], available: int) -> Optional[int]:
    best = WAIT
    for i, job in enumerate(queue):
        if job.cores > available:
            continue
        if best is None or (job.cores, job.submit_time, job.id) < (
                queue[best].cores, queue[best].submit_time, queue[best].id):
            best = i
    return best


def select_lcfs(queue: Sequence[Job], available: int) -> Optional[int]:
    for i in range(len(queue) - 1, -1, -1):
        if queue[i].cores <= available:
            return i
    return WAIT


def easy_backfill(queue: Sequence[Job], cluster: ClusterState) -> list[Job]:
    """Jobs to start now under EASY backfilling, in the order they are placed.

    The head starts whenever it fits. Once it does not, it gets a reservation
    at the earliest instant enough cores free up; later jobs may start now if
    they fit and either end by that instant or only use cores the head will
    not need.
    """
    now = cluster.now
    avail = available_cores(cluster)
    releases = sorted((finish, job.id, job.cores) for job, finish in cluster.allocations.values())
    out = []
    k = 0
    while k < len(queue) and queue[k].cores <= avail:
        job = queue[k]
        out.append(job)
        avail -= job.cores
        releases.append((now + job.runtime, job.id, job.cores))
        k += 1
    if k >= len(queue):
        return out
    head = queue[k]
    releases.sort()
    free = avail
    shadow = extra = None
    for finish, _, cores in releases:
        if shadow is not None and finish > shadow:
            break
        free += cores
        if shadow is None and free >= head.cores:
            shadow = finish
    if shadow is None:
        return out
    extra = free - head.cores
    for job in queue[k + 1:]:
        if job.cores > avail:
            continue
        if now + job.runtime <= shadow:
            out.append(job)
            avail -= job.cores
        elif job.cores <= extra:
            out.append(job)
            avail -= job.cores
            extra -= job.cores
    return out


SELECTORS: dict[str, Callable] = {
    "fcfs": select_fcfs,
    "sjf": select_sjf,
    "lcfs": select_lcfs,
}
POLICIES = ("fcfs", "sjf", "lcfs", "fcfs-easy")


def run_policy(jobs: Sequence[Job], cores: int, policy: str,
               placements: Optional[int] = None, window_size: Optional[int] = None) -> Simulation:
    """Replay ``jobs`` under a heuristic, acting at every arrival and completion.

    Runs until every job has finished, or until ``placements`` jobs have been
    started. Returns the simulation; ``sim.metrics`` holds the accumulator.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown scheduler {policy!r}; expected one of {POLICIES}")
    metrics = MetricsAccumulator(cores)
    sim = Simulation(jobs, cores, metrics=metrics)
    select = SELECTORS.get(policy)
    target = placements if placements is not None else float("inf")

    while sim.placements < target:
        if window_size is not None:
            metrics.record_window_stats(len(sim.queue), window_size)
        if select is None:
            for job in easy_backfill(sim.queue.jobs, sim.cluster):
                sim.place(sim.queue.jobs.index(job))
                if sim.placements >= target:
                    break
        else:
            while sim.placements < target:
                idx = select(sim.queue.jobs, available_cores(sim.cluster))
                if idx is None:
                    break
                sim.place(idx)
        if sim.placements >= target or not sim.has_next_event():
            break
        sim.forward()
    return sim


def schedule(jobs: Sequence[Job], cores: int, policy: str) -> dict[int, float]:
    """Start time of every job under ``policy``."""
    sim = run_policy(jobs, cores, policy)
    return {job.id: job.start_time for job in sim.placed}
