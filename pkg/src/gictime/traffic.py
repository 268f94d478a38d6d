"""Synthetic time-server traffic and the adversary's vulnerability study.

The adversary sits beside a public time server and sees, for every request,
its own arrival time and whatever the client put in the send-time field.  It
keeps requests whose apparent offset falls within a sanity window, flags the
ones lagging by more than half of Theta even after allowing for transit, and
fits a Poisson model to the times at which flagged clients show up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adversary import PoissonFit, poisson_mle
from .config import POPULATIONS, OffsetDistribution, TrafficConfig

# ground-truth population codes; vulnerable clients always send the true reading
FAITHFUL, NULL, INTEGER, RANDOM, VULNERABLE = range(5)
POPULATION_NAMES = (*POPULATIONS, "vulnerable")
EPOCH_S = 1_000_000.0  # provider time of the first request; keeps null fields far outside the window


@dataclass(frozen=True)
class Traffic:
    """Per-request arrays, all sorted by arrival time at the adversary."""

    t2a: np.ndarray        # adversary receipt time, s
    tau1_field: np.ndarray # value in the request's send-time field, s
    theta: np.ndarray      # true client offset, s (simulator only)
    transit: np.ndarray    # true client-to-adversary transit, s (simulator only)
    population: np.ndarray

    def __len__(self) -> int:
        return self.t2a.size

    @property
    def apparent_offset(self) -> np.ndarray:
        """``-(t2A - tau1)``, what the adversary reads off each request."""
        return self.tau1_field - self.t2a


def _draw_offsets(dist: OffsetDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    if dist.kind == "uniform":
        return rng.uniform(dist.low, dist.high, n)
    return rng.normal(dist.mean, dist.std, n)


def generate_traffic(config: TrafficConfig) -> Traffic:
    rng = np.random.default_rng(config.seed)

    gaps = rng.exponential(config.vulnerable_mean_interarrival, config.vulnerable_events)
    vuln_send = EPOCH_S + np.cumsum(gaps)
    vuln_theta = _draw_offsets(config.vulnerable_theta, vuln_send.size, rng)
    span = float(vuln_send[-1] - EPOCH_S) if vuln_send.size else 0.0

    n_background = rng.poisson(config.background_rate * span) if span > 0 else 0
    back_send = EPOCH_S + np.sort(rng.uniform(0.0, span, n_background))
    back_theta = _draw_offsets(config.background_theta, n_background, rng)
    weights = np.array([config.populations.get(p, 0.0) for p in POPULATIONS])
    back_pop = rng.choice(len(POPULATIONS), size=n_background, p=weights / weights.sum())

    send = np.concatenate([vuln_send, back_send])
    theta = np.concatenate([vuln_theta, back_theta])
    population = np.concatenate([np.full(vuln_send.size, VULNERABLE), back_pop])
    transit = rng.uniform(config.transit_low, config.transit_high, send.size)

    reading = send + theta
    tau1 = reading.copy()
    tau1[population == NULL] = 0.0
    tau1[population == INTEGER] = np.floor(reading[population == INTEGER])
    garbage = population == RANDOM
    tau1[garbage] = rng.uniform(0.0, 2.0**32, int(garbage.sum()))

    t2a = send + transit
    order = np.argsort(t2a, kind="stable")
    return Traffic(t2a[order], tau1[order], theta[order], transit[order], population[order])


def flag_vulnerable(apparent: np.ndarray, epsilon_bound: float, theta_big: float) -> np.ndarray:
    """Elementwise legacy-mode rule: ``-(t2A - tau1) + bound < -Theta/2``."""
    return apparent + epsilon_bound < -theta_big / 2


@dataclass(frozen=True)
class StudyReport:
    requests: int
    by_population: dict[str, int]
    in_window: int
    flagged: int
    flagged_by_population: dict[str, int]
    false_accusations: int
    threshold: float
    histogram_edges: np.ndarray
    histogram_counts: np.ndarray
    fit: PoissonFit | None

    def to_dict(self) -> dict:
        fit = None
        if self.fit is not None:
            fit = {
                "mean_interarrival_s": round(self.fit.mean_interarrival, 9),
                "rate_per_s": round(self.fit.rate, 9),
                "expected_wait_s": round(self.fit.expected_wait, 9),
                "events": self.fit.count,
            }
        return {
            "requests": self.requests,
            "by_population": self.by_population,
            "in_window": self.in_window,
            "flagged": self.flagged,
            "flagged_by_population": self.flagged_by_population,
            "false_accusations": self.false_accusations,
            "threshold_s": self.threshold,
            "histogram": {
                "edges_s": [round(float(e), 9) for e in self.histogram_edges],
                "counts": [int(c) for c in self.histogram_counts],
            },
            "poisson_fit": fit,
        }


def _count(population: np.ndarray) -> dict[str, int]:
    return {name: int((population == code).sum()) for code, name in enumerate(POPULATION_NAMES)}


def run_study(config: TrafficConfig, traffic: Traffic | None = None) -> StudyReport:
    traffic = traffic if traffic is not None else generate_traffic(config)
    apparent = traffic.apparent_offset
    in_window = np.abs(apparent) <= config.window
    flagged = in_window & flag_vulnerable(apparent, config.epsilon_bound, config.theta_big)
    # ground truth, available only because this is a simulation
    false_accusations = int((flagged & (traffic.theta >= -config.theta_big / 2)).sum())

    counts, edges = np.histogram(
        apparent[in_window], bins=config.histogram_bins, range=(config.histogram_low, config.histogram_high)
    )
    flagged_times = traffic.t2a[flagged]
    fit = poisson_mle(flagged_times) if flagged_times.size >= 2 else None
    return StudyReport(
        requests=len(traffic),
        by_population=_count(traffic.population),
        in_window=int(in_window.sum()),
        flagged=int(flagged.sum()),
        flagged_by_population=_count(traffic.population[flagged]),
        false_accusations=false_accusations,
        threshold=-config.theta_big / 2 - config.epsilon_bound,
        histogram_edges=edges,
        histogram_counts=counts,
        fit=fit,
    )
