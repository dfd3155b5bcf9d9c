"""Batch aggregation: fatality probability, F-N exceedance and dose histograms."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .engine import SimulationOutcome
from .fireenv import Health, health_effect

FED_BIN_EDGES = (0.0, 0.01, 0.3, 1.0, math.inf)
Z95 = 1.96


class EmptyBatchError(ValueError):
    pass


def _check(outcomes: Sequence[SimulationOutcome]) -> None:
    if not outcomes:
        raise EmptyBatchError("batch has no outcomes")


def risk_probability(outcomes: Sequence[SimulationOutcome]) -> tuple[float, float]:
    _check(outcomes)
    n = len(outcomes)
    p = sum(1 for o in outcomes if o.fatalities >= 1) / n
    return p, Z95 * math.sqrt(p * (1 - p) / n)


def fn_curve(outcomes: Sequence[SimulationOutcome]) -> list[tuple[int, float]]:
    """(N, share of simulations with at least N fatalities) for each observed N >= 1."""
    _check(outcomes)
    n = len(outcomes)
    counts = sorted({o.fatalities for o in outcomes if o.fatalities >= 1})
    return [(k, sum(1 for o in outcomes if o.fatalities >= k) / n) for k in counts]


def fed_histogram(values: Sequence[float], edges: Sequence[float] = FED_BIN_EDGES) -> list[int]:
    """Counts per left-closed bin ``[edges[i], edges[i+1])``."""
    counts = [0] * (len(edges) - 1)
    for v in values:
        for i in range(len(edges) - 1):
            if edges[i] <= v < edges[i + 1]:
                counts[i] += 1
                break
    return counts


@dataclass
class BatchSummary:
    n: int
    p_hat: float
    ci_half_width: float
    fn_points: list[tuple[int, float]]
    rset_samples: list[float]
    fed_bin_edges: list[float]
    fed_histogram: list[int]
    health_counts: dict[str, int]
    unresolved: int
    fatalities: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        d = dict(vars(self))
        d["fed_bin_edges"] = [e if math.isfinite(e) else "inf" for e in self.fed_bin_edges]
        d["fn_points"] = [list(p) for p in self.fn_points]
        return d


def summarize(outcomes: Sequence[SimulationOutcome]) -> BatchSummary:
    """Aggregate a batch. Order of ``outcomes`` does not matter."""
    _check(outcomes)
    ordered = sorted(outcomes, key=lambda o: o.seed)
    p, ci = risk_probability(ordered)
    feds = [a.fed_total for o in ordered for a in o.agents]
    health = Counter(health_effect(v).value for v in feds)
    return BatchSummary(
        n=len(ordered),
        p_hat=p,
        ci_half_width=ci,
        fn_points=fn_curve(ordered),
        rset_samples=sorted(o.rset for o in ordered if o.rset is not None),
        fed_bin_edges=list(FED_BIN_EDGES),
        fed_histogram=fed_histogram(feds),
        health_counts={h.value: health.get(h.value, 0) for h in Health},
        unresolved=sum(1 for o in ordered for a in o.agents if a.unresolved),
        fatalities=sorted(o.fatalities for o in ordered),
    )


def fn_csv(summary: BatchSummary) -> str:
    """Columns: ``N`` (fatalities), ``F`` (share of simulations with >= N)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "F"])
    w.writerows(summary.fn_points)
    return buf.getvalue()


def rset_csv(outcomes: Sequence[SimulationOutcome]) -> str:
    """Columns: ``seed``, ``rset_s`` (empty when nobody escaped)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "rset_s"])
    for o in sorted(outcomes, key=lambda o: o.seed):
        w.writerow([o.seed, "" if o.rset is None else repr(o.rset)])
    return buf.getvalue()
