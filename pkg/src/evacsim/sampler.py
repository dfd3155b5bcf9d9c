"""Seeded scenario sampling: occupant placement and per-agent parameters.

Every variate is produced by inverse-CDF transform of one uniform double from
numpy's PCG64 stream, so a (seed, plan, library) triple reproduces the same
sample on any platform.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import NormalDist

import numpy as np

from .geometry import DEFAULT_WALL_THICKNESS, FloorPlan

LIBRARY_VERSION = 1
DEFAULT_RADIUS = 0.25
PLACEMENT_TRIES = 1000
DENSITY_RETRIES = 100
TRUNCATION_SIGMAS = 3.0

ROWS = (
    "density_rooms", "density_corridors", "density_stairways",
    "location_x", "location_y", "alarm_time",
    "pre_evac_fire_origin", "pre_evac_other",
    "speed_horizontal", "speed_vertical", "alpha", "beta", "alternative_route",
)
# draws that must come out strictly positive (redrawn otherwise)
POSITIVE = frozenset({"density_rooms", "density_corridors", "density_stairways",
                      "speed_horizontal", "speed_vertical", "alpha"})

EXEMPLARY = {
    "density_rooms": {"kind": "normal", "p1": 5.0, "p2": 2.0},
    "density_corridors": {"kind": "normal", "p1": 20.0, "p2": 3.0},
    "density_stairways": {"kind": "normal", "p1": 50.0, "p2": 3.0},
    "location_x": {"kind": "uniform", "p1": 0.0, "p2": 1.0},
    "location_y": {"kind": "uniform", "p1": 0.0, "p2": 1.0},
    "alarm_time": {"kind": "lognormal", "p1": 0.7, "p2": 0.2},
    "pre_evac_fire_origin": {"kind": "uniform", "p1": 0.0, "p2": 30.0},
    "pre_evac_other": {"kind": "lognormal", "p1": 3.04, "p2": 0.142},
    "speed_horizontal": {"kind": "normal", "p1": 1.2, "p2": 0.2},
    "speed_vertical": {"kind": "normal", "p1": 0.7, "p2": 0.2},
    "alpha": {"kind": "normal", "p1": 0.706, "p2": 0.069},
    "beta": {"kind": "normal", "p1": -0.057, "p2": 0.015},
    "alternative_route": {"kind": "binomial", "p1": 0.03, "p2": 0.97},
}

_STD = NormalDist()


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class DistributionSpec:
    kind: str
    p1: float
    p2: float
    truncation: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind in ("normal", "lognormal"):
            if not self.p2 > 0:
                raise SamplerError(f"{self.kind} needs p2 (sigma) > 0")
        elif self.kind == "uniform":
            if self.p1 > self.p2:
                raise SamplerError("uniform needs p1 <= p2")
        elif self.kind == "binomial":
            if not (0 <= self.p1 <= 1 and abs(self.p1 + self.p2 - 1) < 1e-9):
                raise SamplerError("binomial needs p1 in [0, 1] and p1 + p2 = 1")
        else:
            raise SamplerError(f"unknown distribution kind {self.kind!r}")
        if self.truncation is not None and not self.truncation[0] < self.truncation[1]:
            raise SamplerError("empty truncation interval")

    @classmethod
    def from_dict(cls, d: dict) -> "DistributionSpec":
        unknown = set(d) - {"kind", "p1", "p2", "truncation"}
        if unknown:
            raise SamplerError(f"unknown distribution fields {sorted(unknown)}")
        trunc = d.get("truncation")
        return cls(str(d["kind"]), float(d["p1"]), float(d["p2"]),
                   None if trunc is None else (float(trunc[0]), float(trunc[1])))

    def bounds(self) -> tuple[float, float]:
        """Support after truncation (normal: 3 sigma unless overridden)."""
        if self.kind == "normal":
            lo, hi = (self.p1 - TRUNCATION_SIGMAS * self.p2, self.p1 + TRUNCATION_SIGMAS * self.p2)
        elif self.kind == "lognormal":
            lo, hi = 0.0, math.inf
        elif self.kind == "uniform":
            lo, hi = self.p1, self.p2
        else:
            lo, hi = 0.0, 1.0
        if self.truncation is not None:
            lo, hi = max(lo, self.truncation[0]), min(hi, self.truncation[1])
        return lo, hi

    def cdf(self, x: float) -> float:
        """Analytic CDF of what :func:`draw` produces."""
        lo, hi = self.bounds()
        if self.kind == "binomial":
            return 0.0 if x < 0 else (self.p2 if x < 1 else 1.0)
        if x < lo:
            return 0.0
        if x >= hi:
            return 1.0
        if self.kind == "uniform":
            return (x - lo) / (hi - lo)
        base = self._base_cdf
        return (base(x) - base(lo)) / (base(hi) - base(lo))

    def _base_cdf(self, x: float) -> float:
        if self.kind == "normal":
            return _STD.cdf((x - self.p1) / self.p2)
        if x <= 0:
            return 0.0
        return _STD.cdf((math.log(x) - self.p1) / self.p2) if math.isfinite(x) else 1.0

    def quantile(self, u: float) -> float:
        if self.kind == "binomial":
            return 1.0 if u < self.p1 else 0.0
        lo, hi = self.bounds()
        if self.kind == "uniform":
            return lo + (hi - lo) * u
        a, b = self._base_cdf(lo), self._base_cdf(hi)
        v = a + (b - a) * u
        v = min(max(v, 1e-300), 1 - 1e-16)
        z = _STD.inv_cdf(v)
        x = self.p1 + self.p2 * z
        return math.exp(x) if self.kind == "lognormal" else x


def draw(dist: DistributionSpec, rng: np.random.Generator) -> float:
    return dist.quantile(float(rng.random()))


@dataclass(frozen=True)
class Library:
    rows: dict[str, DistributionSpec]
    preset: str = "exemplary"

    def __getitem__(self, row: str) -> DistributionSpec:
        return self.rows[row]


def default_library() -> Library:
    return Library({k: DistributionSpec.from_dict(v) for k, v in EXEMPLARY.items()})


def library_document() -> dict:
    return {"version": LIBRARY_VERSION, "default": "exemplary", "presets": {"exemplary": EXEMPLARY}}


def load_library(path: str | Path, preset: str | None = None) -> Library:
    """Read a distribution library file; see README for the schema."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SamplerError(f"malformed distribution library: {exc}") from exc
    return parse_library(doc, preset)


def parse_library(doc: dict, preset: str | None = None) -> Library:
    if doc.get("version") != LIBRARY_VERSION:
        raise SamplerError(f"unsupported library version {doc.get('version')!r}")
    presets = doc.get("presets") or {}
    name = preset or doc.get("default")
    if name not in presets:
        raise SamplerError(f"preset {name!r} not in library (have {sorted(presets)})")
    raw = presets[name]
    missing = [r for r in ROWS if r not in raw]
    if missing:
        raise SamplerError(f"preset {name!r} lacks rows {missing}")
    extra = sorted(set(raw) - set(ROWS))
    if extra:
        raise SamplerError(f"preset {name!r} has unknown rows {extra}")
    return Library({r: DistributionSpec.from_dict(raw[r]) for r in ROWS}, name)


@dataclass(frozen=True)
class AgentSpec:
    id: int
    position: tuple[float, float]
    compartment: str
    pre_evac_time: float
    v_horizontal: float
    v_vertical: float
    alpha: float
    beta: float
    alternative_route: bool
    radius: float


@dataclass(frozen=True)
class ScenarioSample:
    seed: int
    alarm_time: float
    fire_origin: str
    agents: tuple[AgentSpec, ...]
    densities: dict[str, float] = field(default_factory=dict)
    stairway_density: float = 0.0

    def to_json(self) -> dict:
        d = asdict(self)
        d["agents"] = [asdict(a) for a in self.agents]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ScenarioSample":
        agents = tuple(AgentSpec(**{**a, "position": tuple(a["position"])}) for a in d["agents"])
        return cls(int(d["seed"]), float(d["alarm_time"]), d["fire_origin"], agents,
                   dict(d.get("densities", {})), float(d.get("stairway_density", 0.0)))


def _positive(lib: Library, row: str, rng) -> float:
    spec = lib[row]
    for _ in range(10000):
        x = draw(spec, rng)
        if row not in POSITIVE or x > 0:
            return x
    raise SamplerError(f"row {row} keeps drawing non-positive values")


def sample_scenario(seed: int, plan: FloorPlan, library: Library, fire_origin: str,
                    radius: float = DEFAULT_RADIUS,
                    wall_thickness: float = DEFAULT_WALL_THICKNESS,
                    max_agents: int | None = None) -> ScenarioSample:
    """Draw a full scenario; ``max_agents`` optionally caps each compartment's count."""
    ids = [c.id for c in plan.compartments]
    if fire_origin not in ids:
        raise SamplerError(f"fire origin {fire_origin!r} is not a compartment")
    rng = np.random.Generator(np.random.PCG64(seed))
    alarm = 60.0 * _positive(library, "alarm_time", rng)
    stair = _positive(library, "density_stairways", rng)
    inset = wall_thickness / 2 + radius
    placed: list[tuple[str, tuple[float, float]]] = []
    densities: dict[str, float] = {}
    ux, uy = library["location_x"], library["location_y"]
    for comp in plan.compartments:
        row = "density_rooms" if comp.kind == "ROOM" else "density_corridors"
        x0, y0, x1, y1 = comp.box.footprint
        lo_x, hi_x, lo_y, hi_y = x0 + inset, x1 - inset, y0 + inset, y1 - inset
        for _ in range(DENSITY_RETRIES):
            dens = _positive(library, row, rng)
            count = max(0, math.floor(comp.box.area / dens))
            if max_agents is not None:
                count = min(count, max_agents)
            if count and (lo_x > hi_x or lo_y > hi_y):
                continue
            pts = _place(rng, count, (lo_x, hi_x, lo_y, hi_y), ux, uy, radius)
            if pts is not None:
                break
        else:
            raise SamplerError(f"cannot place occupants in {comp.id}")
        densities[comp.id] = dens
        placed += [(comp.id, p) for p in pts]
    agents = []
    for k, (cid, p) in enumerate(placed):
        pre_row = "pre_evac_fire_origin" if cid == fire_origin else "pre_evac_other"
        pre = draw(library[pre_row], rng)
        vh = _positive(library, "speed_horizontal", rng)
        vv = _positive(library, "speed_vertical", rng)
        alpha = _positive(library, "alpha", rng)
        beta = draw(library["beta"], rng)
        alt = draw(library["alternative_route"], rng) >= 1.0
        agents.append(AgentSpec(k, p, cid, pre, vh, vv, alpha, beta, alt, radius))
    return ScenarioSample(seed, alarm, fire_origin, tuple(agents), densities, stair)


def _place(rng, count, box, ux: DistributionSpec, uy: DistributionSpec, radius):
    """Rejection sampling of non-overlapping discs; None if a disc cannot be placed."""
    lo_x, hi_x, lo_y, hi_y = box
    pts: list[tuple[float, float]] = []
    min2 = (2 * radius) ** 2
    # rows 4-5 give the fraction of the usable width/depth
    sx = (ux.p2 - ux.p1) or 1.0
    sy = (uy.p2 - uy.p1) or 1.0
    for _ in range(count):
        for _ in range(PLACEMENT_TRIES):
            fx = (draw(ux, rng) - ux.p1) / sx
            fy = (draw(uy, rng) - uy.p1) / sy
            p = (lo_x + (hi_x - lo_x) * fx, lo_y + (hi_y - lo_y) * fy)
            if all((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 >= min2 for q in pts):
                pts.append(p)
                break
        else:
            return None
    return pts
