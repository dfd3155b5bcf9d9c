"""Floor-plan parsing and the conversion of room-interior boxes into wall rectangles.

A floor-plan document is JSON: a map from floor label to a map of entity keys
(``ROOM``, ``COR``, ``D``, ``W``, ``HOLE``) to lists of ``[[x0, y0, z0], [x1, y1, z1]]``
boxes in meters.  Rooms and corridors are compartments; doors, windows and holes
are vents sitting in a compartment face.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

ENTITY_KEYS = ("ROOM", "COR", "D", "W", "HOLE")
COMPARTMENT_KEYS = ("ROOM", "COR")
VENT_KEYS = ("D", "W", "HOLE")
DEFAULT_WALL_THICKNESS = 0.2
TOL = 1e-6

Point = tuple[float, float]


class FloorPlanError(ValueError):
    """Raised for malformed or geometrically inconsistent floor plans."""


@dataclass(frozen=True)
class Box3:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    @classmethod
    def from_corners(cls, a: Sequence[float], b: Sequence[float]) -> "Box3":
        if len(a) != 3 or len(b) != 3:
            raise FloorPlanError(f"box corners must be 3D triplets, got {a!r}, {b!r}")
        a = tuple(float(v) for v in a)
        b = tuple(float(v) for v in b)
        lo = tuple(min(p, q) for p, q in zip(a, b))
        hi = tuple(max(p, q) for p, q in zip(a, b))
        return cls(lo, hi)  # type: ignore[arg-type]

    @property
    def extent(self) -> tuple[float, float, float]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))  # type: ignore[return-value]

    @property
    def footprint(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) of the box projected on the floor."""
        return (self.lo[0], self.lo[1], self.hi[0], self.hi[1])

    @property
    def area(self) -> float:
        return (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])

    @property
    def center2d(self) -> Point:
        return (0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1]))

    def to_json(self) -> list[list[float]]:
        return [list(self.lo), list(self.hi)]


@dataclass(frozen=True)
class Compartment:
    id: str
    kind: str  # "ROOM" or "COR"
    box: Box3


@dataclass(frozen=True)
class FloorPlan:
    floor_id: str
    rooms: tuple[Box3, ...] = ()
    corridors: tuple[Box3, ...] = ()
    doors: tuple[Box3, ...] = ()
    windows: tuple[Box3, ...] = ()
    holes: tuple[Box3, ...] = ()

    @property
    def compartments(self) -> list[Compartment]:
        """Rooms then corridors; the order doubles as the boundary tie-break."""
        out = [Compartment(f"ROOM_{i}", "ROOM", b) for i, b in enumerate(self.rooms)]
        out += [Compartment(f"COR_{i}", "COR", b) for i, b in enumerate(self.corridors)]
        return out

    def compartment(self, cid: str) -> Compartment:
        for c in self.compartments:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def entities(self) -> dict[str, tuple[Box3, ...]]:
        return {"ROOM": self.rooms, "COR": self.corridors, "D": self.doors,
                "W": self.windows, "HOLE": self.holes}


@dataclass(frozen=True)
class Vent:
    """A door, window or hole resolved against the compartment faces it sits in."""

    id: str
    kind: str
    box: Box3
    normal_axis: int  # 0: the vent lies in a plane x = const, 1: y = const
    plane: float
    span: tuple[float, float]  # extent along the other horizontal axis
    compartments: tuple[str, ...]  # compartments having this vent in a face

    @property
    def is_exit(self) -> bool:
        return self.kind in ("D", "HOLE") and len(self.compartments) == 1


@dataclass(frozen=True)
class ExitGap:
    """Opening of an exit door on the outside face of the wall."""

    id: str
    compartment: str
    a: Point
    b: Point
    outward: Point  # unit normal pointing away from the building

    @property
    def midpoint(self) -> Point:
        return (0.5 * (self.a[0] + self.b[0]), 0.5 * (self.a[1] + self.b[1]))

    @property
    def width(self) -> float:
        return abs(self.b[0] - self.a[0]) + abs(self.b[1] - self.a[1])


@dataclass(frozen=True)
class ObstacleSet:
    rectangles: tuple[tuple[float, float, float, float], ...]  # (x0, y0, x1, y1)
    corner_bag: tuple[Point, ...]
    exits: tuple[ExitGap, ...] = ()
    wall_thickness: float = DEFAULT_WALL_THICKNESS
    vents: tuple[Vent, ...] = field(default=(), repr=False)

    def edges(self) -> list[tuple[Point, Point]]:
        """All rectangle sides as segments."""
        out = []
        for x0, y0, x1, y1 in self.rectangles:
            out += [((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)),
                    ((x1, y1), (x0, y1)), ((x0, y1), (x0, y0))]
        return out


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def parse_floor_plans(text: str) -> dict[str, FloorPlan]:
    """Parse every floor of a document; floors are independent of each other."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FloorPlanError(f"malformed floor-plan document: {exc}") from exc
    if not isinstance(doc, dict):
        raise FloorPlanError("floor-plan document must map floor labels to entity maps")
    return {str(label): _parse_floor(str(label), body) for label, body in doc.items()}


def parse_floor_plan(text: str, floor: str | None = None) -> FloorPlan:
    floors = parse_floor_plans(text)
    if floor is not None:
        if floor not in floors:
            raise FloorPlanError(f"no floor {floor!r} in document")
        return floors[floor]
    if len(floors) != 1:
        raise FloorPlanError(
            f"document has {len(floors)} floors; pass floor= to pick one")
    return next(iter(floors.values()))


def _parse_floor(label: str, body) -> FloorPlan:
    if not isinstance(body, dict):
        raise FloorPlanError(f"floor {label!r}: entity map expected")
    lists: dict[str, list[Box3]] = {k: [] for k in ENTITY_KEYS}
    for key, boxes in body.items():
        if key not in ENTITY_KEYS:
            raise FloorPlanError(f"floor {label!r}: unknown entity key {key!r}")
        if not isinstance(boxes, list):
            raise FloorPlanError(f"floor {label!r}: {key} must be a list of boxes")
        for raw in boxes:
            if not (isinstance(raw, list) and len(raw) == 2):
                raise FloorPlanError(f"floor {label!r}: {key} entry {raw!r} is not a corner pair")
            try:
                lists[key].append(Box3.from_corners(raw[0], raw[1]))
            except (TypeError, ValueError) as exc:
                raise FloorPlanError(f"floor {label!r}: bad {key} entry {raw!r}") from exc
    plan = FloorPlan(label, tuple(lists["ROOM"]), tuple(lists["COR"]), tuple(lists["D"]),
                     tuple(lists["W"]), tuple(lists["HOLE"]))
    _validate(plan)
    return plan


def _validate(plan: FloorPlan) -> None:
    comps = plan.compartments
    for c in comps:
        if min(c.box.extent) <= 0:
            raise FloorPlanError(f"compartment {c.id} has zero volume")
    for i, a in enumerate(comps):
        for b in comps[i + 1:]:
            if all(a.box.lo[k] < b.box.hi[k] - TOL and b.box.lo[k] < a.box.hi[k] - TOL
                   for k in range(3)):
                raise FloorPlanError(f"compartments {a.id} and {b.id} overlap")
    for kind in VENT_KEYS:
        for i, v in enumerate(plan.entities()[kind]):
            dx, dy, dz = v.extent
            if dz <= TOL:
                raise FloorPlanError(
                    f"vent {kind}_{i} is horizontal; inter-floor connections are not supported")
            if dx <= TOL and dy <= TOL:
                raise FloorPlanError(f"vent {kind}_{i} is degenerate in both horizontal axes")


def dump_floor_plan(plan: FloorPlan) -> str:
    body = {k: [b.to_json() for b in boxes] for k, boxes in plan.entities().items() if boxes}
    return json.dumps({plan.floor_id: body}, indent=2)


# ---------------------------------------------------------------------------
# vents
# ---------------------------------------------------------------------------

def resolve_vents(plan: FloorPlan) -> tuple[list[Vent], list[str]]:
    """Match each vent with the compartment faces it lies in.

    Returns the resolved vents and a list of problems (vents on no face).
    """
    vents: list[Vent] = []
    problems: list[str] = []
    comps = plan.compartments
    for kind in VENT_KEYS:
        for i, box in enumerate(plan.entities()[kind]):
            vid = f"{kind}_{i}"
            dx, dy, _ = box.extent
            axis = 1 if dy <= dx else 0
            other = 1 - axis
            plane = 0.5 * (box.lo[axis] + box.hi[axis])
            span = (box.lo[other], box.hi[other])
            touching = []
            for c in comps:
                on_face = (abs(c.box.lo[axis] - plane) <= TOL or abs(c.box.hi[axis] - plane) <= TOL)
                inside = (c.box.lo[other] - TOL <= span[0] and span[1] <= c.box.hi[other] + TOL)
                if on_face and inside:
                    touching.append(c.id)
            if not touching:
                problems.append(f"{vid}: vent not on any compartment face")
            vents.append(Vent(vid, kind, box, axis, plane, span, tuple(touching)))
    return vents, problems


# ---------------------------------------------------------------------------
# type-a -> type-b conversion
# ---------------------------------------------------------------------------

def to_obstacles(plan: FloorPlan, wall_thickness: float = DEFAULT_WALL_THICKNESS) -> ObstacleSet:
    """Build wall rectangles centered on every compartment face.

    Doors and holes cut the wall band across its whole thickness, windows do
    not.  The wall region is rasterized on the grid of all relevant coordinates
    and merged back into maximal rectangles, so rectangles never overlap.
    """
    if wall_thickness <= 0:
        raise FloorPlanError("wall_thickness must be positive")
    h = 0.5 * wall_thickness
    vents, _ = resolve_vents(plan)
    cutting = [v for v in vents if v.kind in ("D", "HOLE")]
    bad = [f"{v.id}: door not coincident with any compartment face"
           for v in cutting if not v.compartments]
    if bad:
        raise FloorPlanError("; ".join(bad))

    comps = plan.compartments
    xs: set[float] = set()
    ys: set[float] = set()
    for c in comps:
        x0, y0, x1, y1 = c.box.footprint
        xs.update((x0 - h, x0 + h, x1 - h, x1 + h))
        ys.update((y0 - h, y0 + h, y1 - h, y1 + h))
    cuts = []
    for v in cutting:
        lo, hi = _clear_span(plan, v, h)
        if hi <= lo:
            continue
        if v.normal_axis == 1:
            cut = (lo, v.plane - h, hi, v.plane + h)
        else:
            cut = (v.plane - h, lo, v.plane + h, hi)
        cuts.append(cut)
        xs.update((cut[0], cut[2]))
        ys.update((cut[1], cut[3]))
    gx = sorted(xs)
    gy = sorted(ys)

    def is_wall(cx: float, cy: float) -> bool:
        in_band = False
        for c in comps:
            x0, y0, x1, y1 = c.box.footprint
            if x0 - h < cx < x1 + h and y0 - h < cy < y1 + h:
                if not (x0 + h < cx < x1 - h and y0 + h < cy < y1 - h):
                    in_band = True
                    break
        if not in_band:
            return False
        return not any(a < cx < c and b < cy < d for a, b, c, d in cuts)

    rects = _merge_cells(gx, gy, is_wall)
    corners = sorted({p for r in rects for p in _rect_corners(r)})

    exits = []
    for v in cutting:
        lo, hi = _clear_span(plan, v, h)
        if not v.is_exit or hi <= lo:
            continue
        comp = plan.compartment(v.compartments[0]).box
        ax = v.normal_axis
        # outside is the side of the plane away from the compartment
        sign = -1.0 if abs(comp.lo[ax] - v.plane) <= TOL else 1.0
        off = v.plane + sign * h
        if ax == 1:
            a, b, n = (lo, off), (hi, off), (0.0, sign)
        else:
            a, b, n = (off, lo), (off, hi), (sign, 0.0)
        exits.append(ExitGap(v.id, v.compartments[0], a, b, n))
    return ObstacleSet(tuple(rects), tuple(corners), tuple(exits), wall_thickness, tuple(vents))


def _clear_span(plan: FloorPlan, v: Vent, h: float) -> tuple[float, float]:
    """Vent span clipped so the perpendicular walls of its compartments stay intact."""
    other = 1 - v.normal_axis
    lo, hi = v.span
    for cid in v.compartments:
        box = plan.compartment(cid).box
        lo = max(lo, box.lo[other] + h)
        hi = min(hi, box.hi[other] - h)
    return lo, hi


def _merge_cells(gx: list[float], gy: list[float], is_wall) -> list[tuple[float, float, float, float]]:
    open_runs: dict[tuple[int, int], int] = {}  # (i0, i1) -> row where the rectangle started
    rects = []
    for j in range(len(gy) - 1):
        cy = 0.5 * (gy[j] + gy[j + 1])
        runs = []
        i = 0
        while i < len(gx) - 1:
            if is_wall(0.5 * (gx[i] + gx[i + 1]), cy):
                k = i
                while k + 1 < len(gx) - 1 and is_wall(0.5 * (gx[k + 1] + gx[k + 2]), cy):
                    k += 1
                runs.append((i, k + 1))
                i = k + 1
            else:
                i += 1
        still_open = {}
        for run in runs:
            still_open[run] = open_runs.pop(run, j)
        for (i0, i1), j0 in open_runs.items():
            rects.append((gx[i0], gy[j0], gx[i1], gy[j]))
        open_runs = still_open
    for (i0, i1), j0 in open_runs.items():
        rects.append((gx[i0], gy[j0], gx[i1], gy[len(gy) - 1]))
    return sorted(rects)


def _rect_corners(r: tuple[float, float, float, float]) -> Iterable[Point]:
    x0, y0, x1, y1 = r
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def locate_compartment(plan: FloorPlan, p: Point) -> str | None:
    """Compartment whose footprint contains ``p``; rooms win over corridors on shared edges."""
    x, y = p
    for c in plan.compartments:
        x0, y0, x1, y1 = c.box.footprint
        if x0 <= x <= x1 and y0 <= y <= y1:
            return c.id
    return None


def point_in_rect_strict(p: Point, r: tuple[float, float, float, float]) -> bool:
    return r[0] < p[0] < r[2] and r[1] < p[1] < r[3]
