"""Effective sample size, time-normalized efficiency, trajectory summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSeries
from .gridlik import Grid
from .samplers import Trace


def _autocorrelations(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample autocorrelations gamma(0..max_lag) via FFT."""
    x = series - series.mean()
    n = x.size
    nfft = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(spec * np.conj(spec), nfft)[: max_lag + 1].real / n
    return acov / acov[0]


def ess(series: np.ndarray) -> float:
    """Effective sample size by the initial monotone sequence estimator.

    Autocorrelations are summed over consecutive pairs; the sum is truncated
    at the first non-positive pair and forced non-increasing. Lags are
    capped at half the series length.
    """
    series = np.asarray(series, dtype=float)
    n = series.size
    if n < 10:
        raise ValueError("need at least 10 samples")
    if np.ptp(series) == 0 or np.var(series) == 0:
        raise DegenerateSeries("constant series")

    max_lag = n // 2
    gamma = _autocorrelations(series, max_lag)
    pair_sum = 0.0
    prev = np.inf
    m = 0
    while 2 * m + 1 <= max_lag:
        pair = gamma[2 * m] + gamma[2 * m + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        pair_sum += pair
        prev = pair
        m += 1
    iat = max(2.0 * pair_sum - 1.0, 1e-12)
    return float(np.clip(n / iat, 1e-12, n))


@dataclass
class EfficiencyReport:
    sampler: str
    acceptance: float
    sec_per_iter: float
    ess_f: np.ndarray
    ess_tau: float
    min_ess_f: float
    min_ess_f_per_sec: float
    ess_tau_per_sec: float
    speedup_f: float = 1.0
    speedup_tau: float = 1.0

    CSV_HEADER = "method,AP,s_iter,minESS_f_per_s,spdup_f,ESS_tau_per_s,spdup_tau"

    def csv_row(self) -> str:
        return (
            f"{self.sampler},{self.acceptance:.4f},{self.sec_per_iter:.3e},"
            f"{self.min_ess_f_per_sec:.4g},{self.speedup_f:.2f},"
            f"{self.ess_tau_per_sec:.4g},{self.speedup_tau:.2f}"
        )


def efficiency_report(trace: Trace, baseline: EfficiencyReport | None = None) -> EfficiencyReport:
    """Table row of ESS-based efficiency; speedups relative to a baseline."""
    if trace.n_rows < 100:
        raise ValueError("need at least 100 post-burn-in samples")
    ess_f = []
    for d in range(trace.dim - 1):
        try:
            ess_f.append(ess(trace.thetas[:, d]))
        except DegenerateSeries:
            ess_f.append(np.nan)
    ess_f = np.asarray(ess_f)
    if np.all(np.isnan(ess_f)):
        raise DegenerateSeries("all f coordinates are constant")
    ess_tau = ess(trace.thetas[:, -1])

    sampling_cpu = max(float(trace.cpu_s[-1] - trace.cpu_burnin), 1e-12)
    total_cpu = max(float(trace.cpu_s[-1]), 1e-12)
    min_ess = float(np.nanmin(ess_f))
    report = EfficiencyReport(
        sampler=trace.sampler,
        acceptance=trace.acceptance_rate,
        sec_per_iter=total_cpu / trace.iters,
        ess_f=ess_f,
        ess_tau=ess_tau,
        min_ess_f=min_ess,
        min_ess_f_per_sec=min_ess / sampling_cpu,
        ess_tau_per_sec=ess_tau / sampling_cpu,
    )
    if baseline is not None:
        report.speedup_f = report.min_ess_f_per_sec / baseline.min_ess_f_per_sec
        report.speedup_tau = report.ess_tau_per_sec / baseline.ess_tau_per_sec
    return report


def format_report_table(reports: list[EfficiencyReport]) -> str:
    header = ["method", "AP", "s/iter", "minESS(f)/s", "spdup(f)", "ESS(tau)/s", "spdup(tau)"]
    rows = [header]
    for r in reports:
        rows.append(
            [
                r.sampler,
                f"{r.acceptance:.2f}",
                f"{r.sec_per_iter:.2e}",
                f"{r.min_ess_f_per_sec:.3g}",
                f"{r.speedup_f:.2f}",
                f"{r.ess_tau_per_sec:.3g}",
                f"{r.speedup_tau:.2f}",
            ]
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)


@dataclass
class TrajectorySummary:
    """Pointwise posterior quantiles of N_e at grid midpoints."""

    times: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    truth: np.ndarray | None = None

    @property
    def coverage(self) -> float | None:
        if self.truth is None:
            return None
        inside = (self.lower <= self.truth) & (self.truth <= self.upper)
        return float(np.mean(inside))

    def write_csv(self, path: str) -> None:
        cols = "t,med,lo,hi" + (",truth" if self.truth is not None else "")
        with open(path, "w") as fh:
            fh.write(cols + "\n")
            for i in range(self.times.size):
                row = [
                    repr(float(self.times[i])),
                    repr(float(self.median[i])),
                    repr(float(self.lower[i])),
                    repr(float(self.upper[i])),
                ]
                if self.truth is not None:
                    row.append(repr(float(self.truth[i])))
                fh.write(",".join(row) + "\n")


def trajectory_summary(
    trace: Trace, grid: Grid, truth=None, level: float = 0.95
) -> TrajectorySummary:
    """Median and central credible band of N_e = exp(f) per midpoint."""
    if trace.n_rows < 1:
        raise ValueError("empty trace")
    f = trace.thetas[:, :-1]
    if f.shape[1] != grid.n_cells:
        raise ValueError("trace dimension does not match the grid")
    half = (1.0 - level) / 2.0
    # quantiles on f, exponentiated afterwards; identical by monotonicity
    lo, med, hi = np.quantile(f, [half, 0.5, 1.0 - half], axis=0)
    truth_vals = None
    if truth is not None:
        truth_vals = np.asarray(
            [truth(t) for t in grid.midpoints]
            if callable(truth)
            else truth,
            dtype=float,
        )
    return TrajectorySummary(
        times=grid.midpoints.copy(),
        median=np.exp(med),
        lower=np.exp(lo),
        upper=np.exp(hi),
        truth=truth_vals,
    )
