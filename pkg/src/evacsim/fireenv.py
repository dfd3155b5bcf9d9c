"""Two-zone fire history store, smoke-speed model and fractional effective dose."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

COLUMNS = (
    "t_s", "comp", "h_layer_m", "T_up_C", "T_low_C", "OD_up", "OD_low",
    "CO_up_ppm", "CO_low_ppm", "HCN_up_ppm", "HCN_low_ppm", "HCl_up_ppm", "HCl_low_ppm",
    "CO2_up_pct", "CO2_low_pct", "O2_up_pct", "O2_low_pct",
)
_NUMERIC = tuple(c for c in COLUMNS if c != "comp")
_IDX = {c: k for k, c in enumerate(_NUMERIC)}
_NONNEG = [c for c in _NUMERIC if c not in ("t_s", "T_up_C", "T_low_C")]

AMBIENT_O2 = 20.9
DEFAULT_BREATHING_HEIGHT = 1.8


class FireHistoryError(ValueError):
    pass


@dataclass(frozen=True)
class LocalConditions:
    Ks: float
    temp: float
    CO: float
    HCN: float
    HCl: float
    CO2: float
    O2: float


AMBIENT = LocalConditions(0.0, 20.0, 0.0, 0.0, 0.0, 0.0, AMBIENT_O2)


@dataclass(frozen=True)
class FedState:
    fed_co: float = 0.0
    fed_hcn: float = 0.0
    fed_hcl: float = 0.0
    fed_o2: float = 0.0
    fed_total: float = 0.0


@dataclass(frozen=True)
class SmokeSpeedParams:
    alpha: float
    beta: float


class Health(str, Enum):
    MINOR = "Minor"
    LOW = "Low"
    HEAVY = "Heavy"
    LETHAL = "Lethal"


class FireHistory:
    """Per-compartment time series, linearly interpolated and clamped at both ends."""

    def __init__(self, series: dict[str, np.ndarray]):
        self._series = series
        self._times = {c: a[:, 0] for c, a in series.items()}

    @property
    def compartments(self) -> list[str]:
        return sorted(self._series)

    def end_time(self, compartment: str | None = None) -> float:
        if compartment is not None:
            return float(self._times[compartment][-1])
        return min((float(t[-1]) for t in self._times.values()), default=0.0)

    def __contains__(self, compartment: str) -> bool:
        return compartment in self._series

    def record(self, compartment: str, t: float) -> dict[str, float]:
        """All numeric columns for ``compartment`` interpolated at ``t``."""
        if compartment not in self._series:
            raise KeyError(f"compartment {compartment!r} not in fire history")
        arr = self._series[compartment]
        times = self._times[compartment]
        if t <= times[0]:
            row = arr[0]
        elif t >= times[-1]:
            row = arr[-1]
        else:
            k = int(np.searchsorted(times, t, side="right"))
            t0, t1 = times[k - 1], times[k]
            w = (t - t0) / (t1 - t0)
            row = arr[k - 1] + w * (arr[k] - arr[k - 1])
        return {c: float(row[i]) for c, i in _IDX.items()}


def ingest_history(source: str | Path | io.TextIOBase) -> FireHistory:
    """Read a fire-history CSV (path, text stream, or raw text containing a newline)."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        with open(source, newline="", encoding="utf-8") as fh:
            return _read(fh)
    if isinstance(source, str):
        return _read(io.StringIO(source))
    return _read(source)


def _read(fh) -> FireHistory:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FireHistoryError("empty fire history") from None
    if tuple(header) != COLUMNS:
        missing = [c for c in COLUMNS if c not in header]
        raise FireHistoryError(f"bad header; expected {','.join(COLUMNS)}"
                               + (f" (missing {', '.join(missing)})" if missing else ""))
    rows: dict[str, list[list[float]]] = {}
    for lineno, raw in enumerate(reader, start=2):
        if not raw or all(not x.strip() for x in raw):
            continue
        if len(raw) != len(COLUMNS):
            raise FireHistoryError(f"line {lineno}: expected {len(COLUMNS)} fields, got {len(raw)}")
        comp = raw[1].strip()
        try:
            vals = [float(raw[0])] + [float(x) for x in raw[2:]]
        except ValueError as exc:
            raise FireHistoryError(f"line {lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in vals):
            raise FireHistoryError(f"line {lineno}: non-finite value")
        for c in _NONNEG:
            if vals[_IDX[c]] < 0:
                raise FireHistoryError(f"line {lineno}: negative {c}")
        if vals[0] < 0:
            raise FireHistoryError(f"line {lineno}: negative time")
        for c in ("O2_up_pct", "O2_low_pct"):
            if vals[_IDX[c]] > AMBIENT_O2 + 1e-9:
                raise FireHistoryError(f"line {lineno}: {c} above {AMBIENT_O2}")
        series = rows.setdefault(comp, [])
        if series and vals[0] <= series[-1][0]:
            raise FireHistoryError(f"line {lineno}: time not increasing for {comp!r}")
        series.append(vals)
    if not rows:
        raise FireHistoryError("fire history has no records")
    return FireHistory({c: np.array(v, dtype=float) for c, v in rows.items()})


def conditions_at(history: FireHistory, compartment: str, t: float,
                  breathing_height: float = DEFAULT_BREATHING_HEIGHT) -> LocalConditions:
    r = history.record(compartment, t)
    lay = "up" if breathing_height >= r["h_layer_m"] else "low"
    return LocalConditions(
        Ks=extinction(r[f"OD_{lay}"]),
        temp=r[f"T_{lay}_C"],
        CO=r[f"CO_{lay}_ppm"],
        HCN=r[f"HCN_{lay}_ppm"],
        HCl=r[f"HCl_{lay}_ppm"],
        CO2=r[f"CO2_{lay}_pct"],
        O2=r[f"O2_{lay}_pct"],
    )


def extinction(od: float) -> float:
    if od < 0:
        raise ValueError("optical density must be non-negative")
    return od / math.log10(math.e)


def walking_speed(v_pref: float, Ks: float, params: SmokeSpeedParams) -> float:
    if params.alpha == 0:
        raise ValueError("alpha must be non-zero")
    return max(0.1 * v_pref, v_pref * (1.0 + params.beta / params.alpha * Ks))


# per-minute dose rates

def rate_co(c: float) -> float:
    return 2.764e-5 * c ** 1.036 if c > 0 else 0.0


def rate_hcn(c: float) -> float:
    # zero concentration means zero dose; the fitted curve is not anchored at 0
    if c <= 0:
        return 0.0
    return max(0.0, math.exp(c / 43.0) / 220.0 - 0.0045)


def rate_hcl(c: float) -> float:
    return c / 1900.0


def hyperventilation(co2: float) -> float:
    return math.exp(0.1903 * co2 + 2.0004) / 7.1


def o2_increment(o2: float, dt_s: float) -> float:
    return dt_s / (60.0 * math.exp(8.13 - 0.54 * (AMBIENT_O2 - o2)))


def fed_increment(state: FedState, c: LocalConditions, dt: float) -> FedState:
    """Advance the dose by ``dt`` seconds of exposure to ``c`` (rectangle rule)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    m = dt / 60.0
    co = state.fed_co + rate_co(c.CO) * m
    hcn = state.fed_hcn + rate_hcn(c.HCN) * m
    hcl = state.fed_hcl + rate_hcl(c.HCl) * m
    o2 = state.fed_o2 + o2_increment(c.O2, dt)
    total = (co + hcn + hcl) * hyperventilation(c.CO2) + o2
    return FedState(co, hcn, hcl, o2, total)


def health_effect(fed_total: float) -> Health:
    if fed_total < 0.01:
        return Health.MINOR
    if fed_total < 0.3:
        return Health.LOW
    if fed_total < 1.0:
        return Health.HEAVY
    return Health.LETHAL
