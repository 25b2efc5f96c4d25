"""Single-server FCFS queue with per-request expiration at the SA.

Requests arrive (Poisson by default) at rate c_k / t_SF and each needs a
fixed service time t_SF. A request succeeds when its waiting time plus
service fits within t_exp of its arrival.

Deadline policies:

``abandon`` (default)
    a request whose deadline passes while it is still queued leaves without
    being served; once started it holds the server to completion even if
    it finishes late.
``admit-if-feasible``
    the server only starts requests that can still finish in time.
``serve-all``
    every request is served; late ones simply count as failures.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

POLICIES = ("abandon", "admit-if-feasible", "serve-all")
ARRIVALS = ("poisson", "deterministic")


@dataclass(frozen=True)
class QueueConfig:
    scaled_rate: float = 1.0
    service_ms: float = 208.5
    t_exp_ms: float = math.inf
    requests: int = 100_000
    seed: int = 0
    arrivals: str = "poisson"
    policy: str = "abandon"

    def __post_init__(self):
        if not 0 < self.scaled_rate <= 1:
            raise ValueError(f"scaled arrival rate c_k must be in (0, 1], got {self.scaled_rate}")
        if not self.t_exp_ms > 0:
            raise ValueError("t_exp must be > 0")
        if self.service_ms <= 0:
            raise ValueError("service time must be > 0")
        if self.requests < 1:
            raise ValueError("requests must be >= 1")
        if self.arrivals not in ARRIVALS:
            raise ValueError(f"arrivals must be one of {ARRIVALS}")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")

    @property
    def arrival_rate(self):
        """lambda_k in requests per ms."""
        return self.scaled_rate / self.service_ms


@dataclass(frozen=True)
class QueueReport:
    config: QueueConfig
    success_rate: float
    mean_wait_ms: float
    mean_total_ms: float
    served: int
    abandoned: int
    late: int

    @property
    def scaled_total(self):
        """Mean total SA time over successes, in units of t_SF (c_2)."""
        return self.mean_total_ms / self.config.service_ms

    def as_row(self):
        return {
            "c_k": self.config.scaled_rate,
            "t_exp": self.config.t_exp_ms,
            "success_rate": self.success_rate,
            "mean_wait_ms": self.mean_wait_ms,
            "mean_total_ms": self.mean_total_ms,
        }

    def as_dict(self):
        d = asdict(self)
        d["scaled_total"] = self.scaled_total
        return d


def arrival_times(config):
    n = config.requests
    if config.arrivals == "deterministic":
        gaps = np.full(n, 1.0 / config.arrival_rate)
    else:
        # standard exponentials scaled by 1/lambda: a fixed seed gives common
        # random numbers across arrival rates
        gaps = np.random.default_rng(config.seed).standard_exponential(n) / config.arrival_rate
    return np.cumsum(gaps)


def simulate_queue(config):
    s = float(config.service_ms)
    t_exp = float(config.t_exp_ms)
    policy = config.policy
    free_at = 0.0
    ok = served = abandoned = late = 0
    wait_sum = 0.0
    for a in arrival_times(config).tolist():
        start = a if a > free_at else free_at
        deadline = a + t_exp
        if policy == "abandon" and start > deadline:
            abandoned += 1
            continue
        if policy == "admit-if-feasible" and start + s > deadline:
            abandoned += 1
            continue
        free_at = start + s
        served += 1
        if start + s <= deadline:
            ok += 1
            wait_sum += start - a
        else:
            late += 1
    n = config.requests
    mean_wait = wait_sum / ok if ok else math.nan
    return QueueReport(config, ok / n, mean_wait, mean_wait + s if ok else math.nan, served, abandoned, late)


def md1_mean_wait(rho, service_ms):
    """Pollaczek-Khinchine mean queueing delay for M/D/1."""
    if not 0 <= rho < 1:
        raise ValueError("M/D/1 mean wait needs 0 <= rho < 1")
    return rho * service_ms / (2.0 * (1.0 - rho))


def sweep(c_values, t_exp_values, base=None, workers=1):
    """Run every (c_k, t_exp) grid point; output order is c-major, t_exp-minor."""
    base = base or QueueConfig()
    configs = [replace(base, scaled_rate=float(c), t_exp_ms=float(t)) for c in c_values for t in t_exp_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(simulate_queue, configs))
    return [simulate_queue(cfg) for cfg in configs]
