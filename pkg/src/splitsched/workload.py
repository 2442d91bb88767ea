"""Job streams: SWF trace ingestion, a calibrated synthetic generator, episode sampling."""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, TextIO

import numpy as np
from scipy import stats

from .sim import Job

log = logging.getLogger(__name__)

SWF_FIELDS = 18
SWF_CANCELLED = 5


class MalformedLineError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class TraceTooShortError(ValueError):
    pass


@dataclass
class Trace:
    jobs: list[Job]
    max_cores: int
    max_runtime: float
    skipped: int = 0
    source: str = "memory"

    def __len__(self):
        return len(self.jobs)

    def offered_load(self) -> float:
        """Submitted core-seconds per second of trace span."""
        span = self.jobs[-1].submit_time - self.jobs[0].submit_time
        return sum(j.cores * j.runtime for j in self.jobs) / span


def _num(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise MalformedLineError(lineno, f"non-numeric field {tok!r}") from None


def parse_swf(stream: TextIO | str, source: str = "swf") -> Trace:
    """Read an 18-field Standard Workload Format trace.

    Cores come from the requested-processors field, falling back to the
    allocated count; runtime from the requested time, falling back to the
    actual run time. Cancelled jobs and jobs whose cores or runtime cannot be
    resolved are skipped and counted.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    jobs = []
    skipped = 0
    header: dict[str, str] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(";"):
            key, sep, value = line[1:].partition(":")
            if sep:
                header[key.strip()] = value.strip()
            continue
        toks = line.split()
        if len(toks) != SWF_FIELDS:
            raise MalformedLineError(lineno, f"expected {SWF_FIELDS} fields, got {len(toks)}")
        f = [_num(t, lineno) for t in toks]
        cores = f[7] if f[7] > 0 else f[4]
        runtime = f[8] if f[8] >= 0 else f[3]
        if cores <= 0 or runtime < 0 or int(f[10]) == SWF_CANCELLED:
            skipped += 1
            continue
        jobs.append(Job(int(f[0]), f[1], int(cores), max(runtime, 1.0)))
    if skipped:
        log.warning("skipped %d SWF job(s) with unresolvable resources or cancelled status", skipped)
    jobs.sort(key=lambda j: j.submit_time)
    max_cores = int(float(header.get("MaxProcs", 0))) or max((j.cores for j in jobs), default=1)
    max_runtime = float(header.get("MaxRuntime", 0)) or max((j.runtime for j in jobs), default=1.0)
    return Trace(jobs, max_cores, max_runtime, skipped=skipped, source=source)


def read_swf(path) -> Trace:
    with open(path) as fh:
        return parse_swf(fh, source=str(path))


def write_swf(trace: Trace, stream: TextIO, comment: Iterable[str] = ()) -> None:
    for line in comment:
        stream.write(f"; {line}\n")
    stream.write(f"; MaxProcs: {trace.max_cores}\n")
    stream.write(f"; MaxRuntime: {_fmt(trace.max_runtime)}\n")
    for j in trace.jobs:
        fields = [j.id, _fmt(j.submit_time), -1, _fmt(j.runtime), j.cores, -1, -1,
                  j.cores, _fmt(j.runtime), -1, 1, -1, -1, -1, -1, -1, -1, -1]
        stream.write(" ".join(str(x) for x in fields) + "\n")


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


@dataclass(frozen=True)
class SyntheticParams:
    """Generator settings.

    Runtimes are log-normal (``runtime_mu``/``runtime_sigma`` in log-seconds),
    rounded to whole seconds and clamped to ``[1, runtime_max]``. Core counts
    pick an octave ``2**k`` uniformly; with probability ``pow2_bias`` the job
    takes exactly ``2**k`` cores, otherwise a uniform count inside the octave.
    """

    cores: int = 256
    runtime_mu: float = 6.4359
    runtime_sigma: float = 2.0
    runtime_max: float = 124707.0
    pow2_bias: float = 0.75
    arrival_rate: float = 271.5 / 209278.0
    seed: int = 0

    def __post_init__(self):
        if self.cores < 1 or self.runtime_max < 1:
            raise ValueError("caps must be positive")
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be positive")
        if not 0.0 <= self.pow2_bias <= 1.0:
            raise ValueError("pow2_bias must be in [0, 1]")


def core_pmf(cores: int, pow2_bias: float) -> np.ndarray:
    """Probability of each core count 1..cores (index 0 is one core)."""
    top = max(math.ceil(math.log2(cores)), 0)
    pmf = np.zeros(cores)
    for k in range(top + 1):
        pk = 1.0 / (top + 1)
        hi = 2 ** k
        lo = 2 ** (k - 1) + 1 if k > 0 else 1
        pmf[min(hi, cores) - 1] += pk * pow2_bias
        width = hi - lo + 1
        for c in range(lo, hi + 1):
            pmf[min(c, cores) - 1] += pk * (1 - pow2_bias) / width
    return pmf


def expected_runtime(mu: float, sigma: float, runtime_max: float) -> float:
    """Mean of a log-normal clamped to [1, runtime_max] (rounding ignored)."""
    dist = stats.lognorm(s=sigma, scale=math.exp(mu))
    lo, hi = 1.0, runtime_max
    # E[X; lo < X < hi] for a log-normal via the shifted normal CDF
    z = lambda x: (math.log(x) - mu - sigma ** 2) / sigma
    inner = math.exp(mu + sigma ** 2 / 2) * (stats.norm.cdf(z(hi)) - stats.norm.cdf(z(lo)))
    return lo * dist.cdf(lo) + inner + hi * dist.sf(hi)


def expected_core_seconds(params: SyntheticParams) -> float:
    pmf = core_pmf(params.cores, params.pow2_bias)
    mean_cores = float(np.dot(pmf, np.arange(1, params.cores + 1)))
    return mean_cores * expected_runtime(params.runtime_mu, params.runtime_sigma, params.runtime_max)


def with_load(params: SyntheticParams, load: float) -> SyntheticParams:
    """Same shape, arrival rate chosen for ``load`` offered core-seconds per second."""
    return replace(params, arrival_rate=float(load / expected_core_seconds(params)))


# 256 cores, runtimes up to 34.6 h, mean core-time per job ~209,278 s and
# ~271.5 submitted core-seconds per second (offered load ~1.06).
FULL_PARAMS = SyntheticParams()

# 16-core desk profile with the same ~1.06 overload and runtimes short
# enough that normalized per-core remaining times are informative.
DESK_PARAMS = with_load(
    SyntheticParams(cores=16, runtime_mu=6.0, runtime_sigma=1.0, runtime_max=3600.0, pow2_bias=0.75),
    load=16 * 1.06,
)


def generate_synthetic(params: SyntheticParams, count: int) -> Trace:
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(params.seed)
    gaps = rng.exponential(1.0 / params.arrival_rate, size=count)
    gaps[0] = 0.0
    submit = np.floor(np.cumsum(gaps))
    runtime = np.clip(np.rint(rng.lognormal(params.runtime_mu, params.runtime_sigma, size=count)),
                      1.0, params.runtime_max)
    pmf = core_pmf(params.cores, params.pow2_bias)
    cores = rng.choice(np.arange(1, params.cores + 1), size=count, p=pmf)
    jobs = [Job(i + 1, float(s), int(c), float(r))
            for i, (s, c, r) in enumerate(zip(submit, cores, runtime))]
    return Trace(jobs, params.cores, params.runtime_max, source=f"synthetic(seed={params.seed})")


def episode_offset(length: int, n_jobs: int, seed) -> int:
    if n_jobs > length:
        raise TraceTooShortError(f"trace has {length} jobs, episode needs {n_jobs}")
    return int(np.random.default_rng(seed).integers(0, length - n_jobs + 1))


def sample_episode(trace: Trace, seed, n_jobs: int) -> list[Job]:
    """Contiguous ``n_jobs`` slice from a random offset, re-based to start at t=0."""
    start = episode_offset(len(trace), n_jobs, seed)
    return rebase(trace.jobs[start:start + n_jobs])


def rebase(jobs: list[Job]) -> list[Job]:
    if not jobs:
        return []
    t0 = jobs[0].submit_time
    return [Job(j.id, j.submit_time - t0, j.cores, j.runtime) for j in jobs]
