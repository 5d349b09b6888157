"""Heterochronous genealogies: validation, interval decomposition, Newick I/O.

A genealogy is reduced to its event times: coalescent times (ascending,
measured backward from the most recent sampling time) and sampling events
(time, number of sequences). The likelihood depends on nothing else.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum

from .errors import (
    CountMismatch,
    LineageDeficit,
    NegativeBranch,
    NonAscendingTimes,
    ParseError,
    PolytomyError,
)

FILE_HEADER = "phylocoal-genealogy v1"

# default tolerance for merging near-equal tip times from Newick input
TIP_TIME_TOL = 1e-9


class EndEvent(Enum):
    COALESCENT = "coalescent"
    SAMPLING = "sampling"


@dataclass(frozen=True)
class Genealogy:
    """Event times of a timed genealogy.

    coalescent_times: ascending positive reals, one per merger (n-1 of them).
    sampling_events: ascending (time, count) pairs; the first time must be 0.
    """

    coalescent_times: tuple[float, ...]
    sampling_events: tuple[tuple[float, int], ...]

    @property
    def n_samples(self) -> int:
        return sum(c for _, c in self.sampling_events)

    @property
    def root_time(self) -> float:
        return self.coalescent_times[-1]

    @property
    def is_isochronous(self) -> bool:
        return len(self.sampling_events) == 1


@dataclass(frozen=True)
class IntervalRecord:
    """Half-open interval (start, end] with a constant number of lineages."""

    start: float
    end: float
    lineages: int
    coal_factor: int
    end_event: EndEvent


def validate(g: Genealogy) -> Genealogy:
    """Check genealogy invariants; return the genealogy unchanged.

    Raises NonAscendingTimes, CountMismatch or LineageDeficit.
    """
    coal = g.coalescent_times
    samp = g.sampling_events
    if not coal:
        raise CountMismatch("genealogy has no coalescent events")
    if not samp:
        raise CountMismatch("genealogy has no sampling events")
    if any(t <= 0 for t in coal):
        raise NonAscendingTimes("coalescent times must be positive")
    if any(b <= a for a, b in zip(coal, coal[1:])):
        raise NonAscendingTimes("coalescent times must be strictly ascending")
    if samp[0][0] != 0:
        raise NonAscendingTimes("first sampling time must be 0")
    times = [s for s, _ in samp]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise NonAscendingTimes("sampling times must be strictly ascending")
    if any(c < 1 for _, c in samp):
        raise CountMismatch("sampling counts must be positive")
    n = g.n_samples
    if n != len(coal) + 1:
        raise CountMismatch(
            f"{n} samples require {n - 1} coalescent events, got {len(coal)}"
        )
    # replay checks lineage legality and that the final count is one
    _replay(g)
    return g


def interval_decomposition(g: Genealogy) -> list[IntervalRecord]:
    """Decompose (0, root_time] into intervals of constant lineage count.

    Exactly n-1 records end with a coalescent event and at most m-1 with a
    sampling event (coincident event times produce zero-length intervals,
    which are dropped).
    """
    validate(g)
    return _replay(g)


def _replay(g: Genealogy) -> list[IntervalRecord]:
    # sampling sorts before coalescent at equal times: lineages are added
    # before any merger at that instant, keeping retained intervals non-empty
    events = [(t, 0, c) for t, c in g.sampling_events]
    events += [(t, 1, -1) for t in g.coalescent_times]
    events.sort()

    records: list[IntervalRecord] = []
    active = 0
    current = 0.0
    for time, kind, delta in events:
        if time > current:
            records.append(
                IntervalRecord(
                    start=current,
                    end=time,
                    lineages=active,
                    coal_factor=active * (active - 1) // 2,
                    end_event=EndEvent.SAMPLING if kind == 0 else EndEvent.COALESCENT,
                )
            )
            current = time
        if kind == 0:
            active += delta
        else:
            if active < 2:
                raise LineageDeficit(
                    f"coalescent event at t={time} with {active} extant lineage(s)"
                )
            active -= 1
    if active != 1:
        raise LineageDeficit(f"{active} lineages remain past the root")
    return records


# -- Newick ------------------------------------------------------------------

_TOKEN = re.compile(r"\s*([(),;:]|[^\s(),;:]+)")


def parse_newick(text: str, tip_time_tol: float = TIP_TIME_TOL) -> Genealogy:
    """Build a genealogy from a binary Newick string with branch lengths.

    Tip times are root-to-leaf distances subtracted from the largest such
    distance, so the most recent tip sits at time 0. Tips whose times agree
    within `tip_time_tol` merge into one sampling event.
    """
    tokens = _TOKEN.findall(text)
    if not tokens:
        raise ParseError("empty Newick input")
    pos = 0

    def peek() -> str | None:
        return tokens[pos] if pos < len(tokens) else None

    def take() -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of Newick input")
        tok = tokens[pos]
        pos += 1
        return tok

    leaf_depths: list[float] = []
    node_depths: list[float] = []

    def parse_clade(depth: float) -> None:
        tok = peek()
        if tok == "(":
            take()
            children = 1
            parse_branch(depth)
            while peek() == ",":
                take()
                children += 1
                parse_branch(depth)
            if take() != ")":
                raise ParseError("expected ')'")
            if children != 2:
                raise PolytomyError(f"internal node with {children} children")
            node_depths.append(depth)
            if peek() not in ("(", ")", ",", ";", ":", None):
                take()  # internal node label, ignored
        else:
            if tok in (None, ")", ",", ";", ":"):
                raise ParseError(f"expected a clade, got {tok!r}")
            take()  # leaf label
            leaf_depths.append(depth)

    def parse_branch(parent_depth: float) -> None:
        # parse the subtree at provisional depth 0, then shift by branch length
        length = 0.0
        marker_leaf = len(leaf_depths)
        marker_node = len(node_depths)
        parse_clade(0.0)
        if peek() == ":":
            take()
            num = take()
            try:
                length = float(num)
            except ValueError:
                raise ParseError(f"bad branch length {num!r}") from None
            if length < 0:
                raise NegativeBranch(f"negative branch length {length}")
        shift = parent_depth + length
        for i in range(marker_leaf, len(leaf_depths)):
            leaf_depths[i] += shift
        for i in range(marker_node, len(node_depths)):
            node_depths[i] += shift

    parse_clade(0.0)
    if peek() == ":":
        raise ParseError("root may not carry a branch length")
    if peek() == ";":
        take()
    if peek() is not None:
        raise ParseError(f"trailing input after tree: {peek()!r}")
    if len(leaf_depths) < 2:
        raise ParseError("tree must have at least two tips")

    height = max(leaf_depths)
    tip_times = sorted(height - d for d in leaf_depths)
    coal = sorted(height - d for d in node_depths)

    # cluster tip times within tolerance into sampling events
    events: list[tuple[float, int]] = []
    for t in tip_times:
        if events and t - events[-1][0] <= tip_time_tol:
            events[-1] = (events[-1][0], events[-1][1] + 1)
        else:
            events.append((t, 1))
    # pin the most recent event to exactly 0
    events[0] = (0.0, events[0][1])

    return validate(Genealogy(tuple(coal), tuple(events)))


def serialize_newick(g: Genealogy) -> str:
    """Write one binary tree realizing the genealogy's event times.

    The topology is arbitrary (the two oldest active lineages merge at each
    coalescent event); only the event times are meaningful.
    """
    validate(g)
    events = [(t, 0, c) for t, c in g.sampling_events]
    events += [(t, 1, -1) for t in g.coalescent_times]
    events.sort()

    active: list[tuple[str, float]] = []  # (subtree text, node height)
    label = 0
    for time, kind, delta in events:
        if kind == 0:
            for _ in range(delta):
                label += 1
                active.append((f"L{label}", time))
        else:
            (a, ha), (b, hb) = active[0], active[1]
            del active[0:2]
            joined = f"({a}:{_fmt(time - ha)},{b}:{_fmt(time - hb)})"
            active.insert(0, (joined, time))
    assert len(active) == 1
    return active[0][0] + ";"


def _fmt(x: float) -> str:
    return repr(float(x))


# -- genealogy file format ---------------------------------------------------

def write_genealogy(path: str, g: Genealogy) -> None:
    validate(g)
    lines = [
        FILE_HEADER,
        "coalescent: " + " ".join(_fmt(t) for t in g.coalescent_times),
        "sampling: " + " ".join(f"{_fmt(s)}:{c}" for s, c in g.sampling_events),
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_genealogy(path: str) -> Genealogy:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != FILE_HEADER:
        raise ParseError(f"missing '{FILE_HEADER}' header in {path}")
    coal: tuple[float, ...] | None = None
    samp: tuple[tuple[float, int], ...] | None = None
    for line in lines[1:]:
        key, _, rest = line.partition(":")
        key = key.strip()
        if key == "coalescent":
            try:
                coal = tuple(float(x) for x in rest.split())
            except ValueError as exc:
                raise ParseError(f"bad coalescent line: {exc}") from None
        elif key == "sampling":
            pairs = []
            for item in rest.split():
                s, _, c = item.partition(":")
                try:
                    pairs.append((float(s), int(c)))
                except ValueError as exc:
                    raise ParseError(f"bad sampling entry {item!r}: {exc}") from None
            samp = tuple(pairs)
        else:
            raise ParseError(f"unknown line {key!r} in genealogy file")
    if coal is None or samp is None:
        raise ParseError("genealogy file needs 'coalescent:' and 'sampling:' lines")
    return validate(Genealogy(coal, samp))


def total_tree_length(g: Genealogy) -> float:
    """Sum of lineage-weighted interval lengths (total branch length)."""
    return math.fsum(r.lineages * (r.end - r.start) for r in interval_decomposition(g))
