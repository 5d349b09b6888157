"""Regular-grid discretization of the coalescent likelihood.

The likelihood factorizes over sub-intervals obtained by cutting the
lineage-count intervals at grid cell boundaries; each sub-interval behaves
like a Poisson observation with intensity coal_factor * width / N_e(cell).
An exact piecewise-constant evaluator serves as an independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, DegenerateSpan, DimensionMismatch
from .genealogy import EndEvent, Genealogy, interval_decomposition


@dataclass(frozen=True)
class Grid:
    """Equally spaced grid from time 0 to the root time."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size < 3:
            raise DegenerateSpan("grid needs at least 3 points")
        deltas = np.diff(pts)
        if np.any(deltas <= 0):
            raise DegenerateSpan("grid points must be strictly ascending")
        if np.ptp(deltas) > 1e-12 * pts[-1]:
            raise DegenerateSpan("grid must be regular")
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self) -> int:
        return self.points.size

    @property
    def n_cells(self) -> int:
        return self.points.size - 1

    @property
    def width(self) -> float:
        return (self.points[-1] - self.points[0]) / self.n_cells

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.points[:-1] + self.points[1:])


@dataclass(frozen=True)
class SuffStats:
    """Per-sub-interval records plus per-cell aggregates.

    cell[a] is the grid cell containing sub-interval a; y[a] is 1 when the
    sub-interval ends with a coalescent event; coal_factor[a] = binom(l, 2)
    for its lineage count l; width[a] is its length. per_cell_y and
    per_cell_w aggregate y and coal_factor*width over each cell.
    """

    n_cells: int
    cell: np.ndarray
    y: np.ndarray
    coal_factor: np.ndarray
    width: np.ndarray
    per_cell_y: np.ndarray = field(init=False)
    per_cell_w: np.ndarray = field(init=False)
    log_factor_const: float = field(init=False)

    def __post_init__(self):
        py = np.bincount(self.cell, weights=self.y, minlength=self.n_cells)
        pw = np.bincount(
            self.cell, weights=self.coal_factor * self.width, minlength=self.n_cells
        )
        ends = self.y > 0  # coalescent-ending records always have factor >= 1
        const = float(np.sum(np.log(self.coal_factor[ends])))
        object.__setattr__(self, "per_cell_y", py)
        object.__setattr__(self, "per_cell_w", pw)
        object.__setattr__(self, "log_factor_const", const)

    def dump_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("cell,y,coal_factor,width\n")
            for d, y, c, w in zip(self.cell, self.y, self.coal_factor, self.width):
                fh.write(f"{d},{int(y)},{int(c)},{w!r}\n")


def build_grid(g: Genealogy, n_points: int) -> Grid:
    """Regular grid with x_1 = 0 and x_D = root time."""
    if n_points < 3:
        raise DegenerateSpan("need at least 3 grid points")
    span = g.root_time
    if span <= 0:
        raise DegenerateSpan("genealogy spans no positive interval")
    return Grid(np.linspace(0.0, span, n_points))


def sufficient_stats(g: Genealogy, grid: Grid) -> SuffStats:
    """Cut lineage intervals at grid boundaries and collect Poisson records."""
    records = interval_decomposition(g)
    delta = grid.width
    n_cells = grid.n_cells
    cells: list[int] = []
    ys: list[int] = []
    cs: list[int] = []
    ws: list[float] = []
    for rec in records:
        d_lo = min(n_cells - 1, int(rec.start / delta))
        d_hi = min(n_cells - 1, int(math.ceil(rec.end / delta)) - 1)
        for d in range(d_lo, d_hi + 1):
            lo = max(rec.start, grid.points[d])
            hi = min(rec.end, grid.points[d + 1])
            if hi <= lo:
                continue
            # classify by sub-interval midpoint, robust at cell boundaries
            mid_cell = min(n_cells - 1, int((0.5 * (lo + hi)) / delta))
            cells.append(mid_cell)
            ys.append(
                1 if (hi == rec.end and rec.end_event is EndEvent.COALESCENT) else 0
            )
            cs.append(rec.coal_factor)
            ws.append(hi - lo)
    return SuffStats(
        n_cells=n_cells,
        cell=np.asarray(cells, dtype=int),
        y=np.asarray(ys, dtype=float),
        coal_factor=np.asarray(cs, dtype=float),
        width=np.asarray(ws, dtype=float),
    )


def log_likelihood(
    stats: SuffStats, f: np.ndarray, include_constant: bool = False
) -> float:
    """Discretized log-likelihood of log population values f at cell midpoints.

    With include_constant the sum of y*log(coal_factor) terms is added so
    the value matches the exact piecewise-constant likelihood.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (stats.n_cells,):
        raise DimensionMismatch(f"expected f of length {stats.n_cells}, got {f.shape}")
    val = -float(stats.per_cell_y @ f + stats.per_cell_w @ np.exp(-f))
    if include_constant:
        val += stats.log_factor_const
    return val


def score(stats: SuffStats, f: np.ndarray) -> np.ndarray:
    """Gradient of the discretized log-likelihood with respect to f."""
    f = np.asarray(f, dtype=float)
    if f.shape != (stats.n_cells,):
        raise DimensionMismatch(f"expected f of length {stats.n_cells}, got {f.shape}")
    return -stats.per_cell_y + stats.per_cell_w * np.exp(-f)


def exact_log_likelihood_pc(
    g: Genealogy, breakpoints: np.ndarray, values: np.ndarray
) -> float:
    """Exact coalescent log-likelihood for piecewise-constant N_e.

    N_e(t) = values[j] on (breakpoints[j], breakpoints[j+1]]. The hazard
    integrals have closed form, so no discretization error is introduced.
    """
    breakpoints = np.asarray(breakpoints, dtype=float)
    values = np.asarray(values, dtype=float)
    if breakpoints.ndim != 1 or breakpoints.size != values.size + 1:
        raise CoverageError("need len(breakpoints) == len(values) + 1")
    if np.any(np.diff(breakpoints) <= 0):
        raise CoverageError("breakpoints must be strictly ascending")
    if np.any(values <= 0):
        raise CoverageError("population sizes must be positive")
    if breakpoints[0] > 0 or breakpoints[-1] < g.root_time:
        raise CoverageError("breakpoints must cover (0, root_time]")

    records = interval_decomposition(g)
    total = 0.0
    for rec in records:
        lo = np.maximum(breakpoints[:-1], rec.start)
        hi = np.minimum(breakpoints[1:], rec.end)
        overlap = np.clip(hi - lo, 0.0, None)
        total -= rec.coal_factor * float(overlap @ (1.0 / values))
        if rec.end_event is EndEvent.COALESCENT:
            j = int(np.searchsorted(breakpoints, rec.end, side="left")) - 1
            j = min(max(j, 0), values.size - 1)
            total += math.log(rec.coal_factor) - math.log(values[j])
    return total
