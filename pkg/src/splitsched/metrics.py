"""Time-weighted and per-job scheduling metrics.

All times are seconds; utilization and ratios are dimensionless. The
accumulator is fed by :class:`splitsched.sim.Simulation` (intervals,
arrivals, placements) and by the environment (window and action stats).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional


class EmptyAccumulatorError(ValueError):
    pass


# column name -> unit, in CSV order
REPORT_COLUMNS = {
    "utilization": "ratio",
    "queue_length": "jobs",
    "wait_time": "s",
    "job_load": "core-s",
    "plain_load": "core-s/s",
    "invisible_jobs": "jobs",
    "partial_ratio": "ratio",
    "invalid_rate": "ratio",
    "fwd_rate": "ratio",
    "bounded_slowdown": "ratio",
    "placements": "jobs",
    "elapsed": "s",
}


@dataclass
class MetricsReport:
    utilization: float
    queue_length: float
    wait_time: float
    job_load: float
    plain_load: float
    invisible_jobs: float
    partial_ratio: float
    invalid_rate: float
    fwd_rate: float
    # non-normative, for comparison with other studies only
    bounded_slowdown: float
    placements: int
    elapsed: float

    def as_dict(self) -> dict:
        return asdict(self)


def core_bucket(cores: int) -> int:
    """Smallest power of two >= cores, so bucket 128 holds 65..128 cores."""
    return 1 << max(int(cores) - 1, 0).bit_length()


def runtime_bucket(runtime: float) -> float:
    """Upper half-decade exponent k/2 with runtime in (10**(k/2 - 0.5), 10**(k/2)]."""
    k = math.ceil(2.0 * math.log10(runtime) - 1e-9)
    return k / 2.0


@dataclass
class _Bucket:
    count: int = 0
    wait_sum: float = 0.0

    @property
    def mean_wait(self) -> float:
        return self.wait_sum / self.count if self.count else 0.0


@dataclass
class MetricsAccumulator:
    total_cores: int
    start_time: Optional[float] = None
    util_integral: float = 0.0
    queue_integral: float = 0.0
    elapsed: float = 0.0
    # job id -> [submit, cores, runtime, start or None]
    jobs: dict = field(default_factory=dict)
    invisible_sum: float = 0.0
    partial_count: int = 0
    window_samples: int = 0
    steps: int = 0
    invalid_steps: int = 0
    fwd_steps: int = 0
    buckets: dict = field(default_factory=dict)

    @property
    def end_time(self) -> float:
        return (self.start_time or 0.0) + self.elapsed

    def record_interval(self, t0, t1, cores_in_use, queue_len):
        if t1 < t0:
            raise ValueError(f"interval runs backwards: [{t0}, {t1}]")
        if self.start_time is None:
            self.start_time = t0
        dt = t1 - t0
        self.util_integral += dt * cores_in_use / self.total_cores
        self.queue_integral += dt * queue_len
        self.elapsed += dt
        return self

    def record_arrival(self, job):
        if self.start_time is None:
            self.start_time = job.submit_time
        self.jobs[job.id] = [job.submit_time, job.cores, job.runtime, None]

    def record_placement(self, job):
        rec = self.jobs.get(job.id)
        if rec is None:
            self.record_arrival(job)
            rec = self.jobs[job.id]
        rec[3] = job.start_time
        self.record_job_type(job, job.start_time - job.submit_time)

    def record_window_stats(self, queue_len, window_size):
        self.invisible_sum += max(0, queue_len - window_size)
        self.partial_count += queue_len > window_size
        self.window_samples += 1
        return self

    def record_action(self, invalid=False, fwd=False):
        self.steps += 1
        self.invalid_steps += bool(invalid)
        self.fwd_steps += bool(fwd)

    def record_job_type(self, job, wait):
        key = (core_bucket(job.cores), runtime_bucket(job.runtime))
        b = self.buckets.setdefault(key, _Bucket())
        b.count += 1
        b.wait_sum += wait
        return self

    def job_type_table(self) -> list[tuple[int, float, int, float]]:
        """Rows of (core bucket, runtime bucket exponent, placements, mean wait)."""
        return [(c, r, b.count, b.mean_wait) for (c, r), b in sorted(self.buckets.items())]

    def merge(self, other: "MetricsAccumulator") -> "MetricsAccumulator":
        """Combine with an accumulator covering the adjacent later interval."""
        out = MetricsAccumulator(self.total_cores, start_time=self.start_time)
        for name in ("util_integral", "queue_integral", "elapsed", "invisible_sum",
                     "partial_count", "window_samples", "steps", "invalid_steps", "fwd_steps"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.jobs = {**{k: list(v) for k, v in self.jobs.items()},
                    **{k: list(v) for k, v in other.jobs.items()}}
        for src in (self.buckets, other.buckets):
            for key, b in src.items():
                dst = out.buckets.setdefault(key, _Bucket())
                dst.count += b.count
                dst.wait_sum += b.wait_sum
        return out

    def waits(self, now: Optional[float] = None) -> list[float]:
        """W_j for every arrived job; still-queued jobs use their wait so far."""
        now = self.end_time if now is None else now
        return [(start if start is not None else now) - submit
                for submit, _, _, start in self.jobs.values()]

    def finalize(self) -> MetricsReport:
        if not self.jobs and self.elapsed <= 0:
            raise EmptyAccumulatorError("nothing recorded")
        t = self.elapsed
        now = self.end_time
        waits = self.waits(now)
        mean_wait = sum(waits) / len(waits) if waits else 0.0
        load = plain = 0.0
        slowdowns = []
        for (submit, cores, runtime, start), w in zip(self.jobs.values(), waits):
            load += w * cores * runtime
            plain += cores * runtime
            if start is not None:
                slowdowns.append(max(1.0, (w + runtime) / max(runtime, 10.0)))
        samples = self.window_samples
        return MetricsReport(
            utilization=self.util_integral / t if t > 0 else 0.0,
            queue_length=self.queue_integral / t if t > 0 else 0.0,
            wait_time=mean_wait,
            job_load=load / t if t > 0 else 0.0,
            plain_load=plain / t if t > 0 else 0.0,
            invisible_jobs=self.invisible_sum / samples if samples else 0.0,
            partial_ratio=self.partial_count / samples if samples else 0.0,
            invalid_rate=self.invalid_steps / self.steps if self.steps else 0.0,
            fwd_rate=self.fwd_steps / self.steps if self.steps else 0.0,
            bounded_slowdown=sum(slowdowns) / len(slowdowns) if slowdowns else 0.0,
            placements=sum(1 for rec in self.jobs.values() if rec[3] is not None),
            elapsed=t,
        )
