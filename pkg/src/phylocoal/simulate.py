"""Genealogy simulation under a given population size trajectory.

Coalescent waiting times are generated by time rescaling: with l extant
lineages the cumulative hazard binom(l,2)/N_e(t) is integrated by the
trapezoid rule on a fine step and inverted by bisection against a unit
exponential draw. Sampling events interrupt the integration and add
lineages; the residual exponential carries over (memorylessness).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonterminatingCoalescent
from .genealogy import Genealogy, validate

MAX_HAZARD_STEPS = 10**6


@dataclass(frozen=True)
class Trajectory:
    """Strictly positive effective population size as a function of time."""

    kind: str
    fn: Callable[[float], float]

    def __call__(self, t) -> float | np.ndarray:
        if np.ndim(t) == 0:
            return self.fn(float(t))
        return np.array([self.fn(float(v)) for v in np.asarray(t).ravel()]).reshape(
            np.shape(t)
        )


def _logistic(t: float) -> float:
    tm = t % 12.0
    if tm <= 6.0:
        return 10.0 + 90.0 / (1.0 + math.exp(2.0 * (3.0 - tm)))
    return 10.0 + 90.0 / (1.0 + math.exp(2.0 * (-9.0 + tm)))


def _expgrowth(t: float) -> float:
    return 1000.0 * math.exp(-t)


def _boombust(t: float) -> float:
    if t <= 2.0:
        return 1000.0 * math.exp(t - 2.0)
    return 1000.0 * math.exp(-t + 2.0)


def logistic_trajectory() -> Trajectory:
    return Trajectory("logistic", _logistic)


def expgrowth_trajectory() -> Trajectory:
    return Trajectory("expgrowth", _expgrowth)


def boombust_trajectory() -> Trajectory:
    return Trajectory("boombust", _boombust)


def constant_trajectory(value: float = 1.0) -> Trajectory:
    if value <= 0:
        raise ValueError("population size must be positive")
    return Trajectory("constant", lambda t: value)


def piecewise_constant_trajectory(breaks, values) -> Trajectory:
    """Steps on (breaks[j], breaks[j+1]]; extended by the terminal value."""
    breaks = np.asarray(breaks, dtype=float)
    values = np.asarray(values, dtype=float)
    if breaks.size != values.size + 1 or np.any(np.diff(breaks) <= 0):
        raise ValueError("need ascending breaks with len(breaks) == len(values)+1")
    if np.any(values <= 0):
        raise ValueError("population sizes must be positive")

    def fn(t: float) -> float:
        if t <= breaks[0]:
            return float(values[0])
        if t > breaks[-1]:
            return float(values[-1])
        j = int(np.searchsorted(breaks, t, side="left")) - 1
        return float(values[min(j, values.size - 1)])

    return Trajectory("piecewise_constant", fn)


def custom_trajectory(fn: Callable[[float], float]) -> Trajectory:
    return Trajectory("custom", fn)


TRAJECTORIES: dict[str, Callable[[], Trajectory]] = {
    "logistic": logistic_trajectory,
    "expgrowth": expgrowth_trajectory,
    "boombust": boombust_trajectory,
    "constant": constant_trajectory,
}


def isochronous_design(n: int) -> list[tuple[float, int]]:
    return [(0.0, n)]


def simulate_genealogy(
    traj: Trajectory,
    design: list[tuple[float, int]],
    rng: np.random.Generator,
    sim_resolution: float | None = None,
) -> Genealogy:
    """Draw a genealogy for the sampling design under the trajectory.

    sim_resolution is the trapezoid integration step; the default scales
    with the expected tree height at the initial population size.
    """
    design = sorted((float(s), int(c)) for s, c in design)
    if not design or design[0][0] != 0.0:
        raise ValueError("sampling design must start at time 0")
    if any(c < 1 for _, c in design):
        raise ValueError("sampling counts must be positive")
    n = sum(c for _, c in design)
    if n < 2:
        raise ValueError("need at least two samples")

    if sim_resolution is None:
        harmonic = sum(2.0 / (k * (k - 1)) for k in range(2, n + 1))
        span_guess = design[-1][0] + 4.0 * traj(0.0) * harmonic + 1.0
        sim_resolution = span_guess / 1e5
    if sim_resolution <= 0:
        raise ValueError("sim_resolution must be positive")

    coal_times: list[float] = []
    pending = list(design)
    active = 0
    t = 0.0
    rate_at_t = 0.0
    target = rng.exponential()  # residual unit-exponential hazard budget
    steps_without_event = 0

    def rate(u: float, lineages: int) -> float:
        return lineages * (lineages - 1) / 2.0 / traj(u)

    while len(coal_times) < n - 1:
        next_s = pending[0][0] if pending else math.inf
        if active < 2:
            if not pending:
                raise NonterminatingCoalescent(
                    "fewer than two lineages remain with no samples pending"
                )
            t = next_s
            active += pending.pop(0)[1]
            rate_at_t = rate(t, active)
            continue
        if t == next_s:
            active += pending.pop(0)[1]
            rate_at_t = rate(t, active)
            continue

        t_next = min(t + sim_resolution, next_s)
        r0 = rate_at_t
        r1 = rate(t_next, active)
        inc = 0.5 * (r0 + r1) * (t_next - t)
        if inc >= target:
            # invert the trapezoid hazard within this step by bisection
            lo, hi = t, t_next
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                part = 0.5 * (r0 + rate(mid, active)) * (mid - t)
                if part >= target:
                    hi = mid
                else:
                    lo = mid
            t = 0.5 * (lo + hi)
            coal_times.append(t)
            active -= 1
            rate_at_t = rate(t, active)
            target = rng.exponential()
            steps_without_event = 0
        else:
            target -= inc
            t = t_next
            rate_at_t = r1
            steps_without_event += 1
            if steps_without_event > MAX_HAZARD_STEPS:
                raise NonterminatingCoalescent(
                    f"hazard integral stalled after {steps_without_event} steps"
                )

    return validate(Genealogy(tuple(coal_times), tuple(design)))
