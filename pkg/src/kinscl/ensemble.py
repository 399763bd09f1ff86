"""Chunked, order-preserving parallel map over Monte Carlo samples.

Samples are split into fixed-size chunks that do not depend on the number of
workers, and results come back in sample order, so every output is identical
for any ``jobs`` value.
"""
import os
from concurrent.futures import ProcessPoolExecutor

from .errors import ConfigurationError

CHUNK = 25


def resolve_jobs(jobs=None) -> int:
    """Explicit value, else ``KINSCL_JOBS``, else 1."""
    if jobs is None:
        env = os.environ.get("KINSCL_JOBS")
        if env is None or env.strip() == "":
            return 1
        try:
            jobs = int(env)
        except ValueError:
            raise ConfigurationError(f"KINSCL_JOBS must be an integer, got {env!r}") from None
    if int(jobs) < 1:
        raise ConfigurationError(f"jobs must be >= 1, got {jobs}")
    return int(jobs)


def chunks(samples, size: int = CHUNK) -> list:
    samples = list(samples)
    return [samples[i:i + size] for i in range(0, len(samples), size)]


def map_chunks(fn, payload, samples, jobs=None, size: int = CHUNK) -> list:
    """``[fn(payload, chunk) for chunk in chunks(samples)]``, possibly in worker processes.

    ``fn`` must be a module-level function.  The result list is in chunk order.
    """
    parts = chunks(samples, size)
    n = min(resolve_jobs(jobs), len(parts)) if parts else 1
    if n <= 1:
        return [fn(payload, c) for c in parts]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, [payload] * len(parts), parts))
