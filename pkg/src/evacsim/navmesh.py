"""Navigation mesh: triangulation, traversable pruning, portal graph and routing.

The base triangulation is Delaunay over the obstacle corner bag.  Obstacle sides
and exit lines are then recovered as constrained edges by edge flipping, so no
triangle straddles a wall and the centroid test classifies triangles exactly.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .geometry import ExitGap, ObstacleSet, point_in_rect_strict

Point = tuple[float, float]


class NavMeshError(ValueError):
    pass


class NoRouteError(NavMeshError):
    """No exit is reachable from the query node (blocked egress)."""


# ---------------------------------------------------------------------------
# predicates
# ---------------------------------------------------------------------------

def orient(a: Sequence[float], b: Sequence[float], c: Sequence[float]) -> float:
    """Twice the signed area of abc; positive when c is left of a->b."""
    det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    scale = abs((b[0] - a[0]) * (c[1] - a[1])) + abs((b[1] - a[1]) * (c[0] - a[0]))
    if abs(det) > 1e-12 * scale:
        return det
    fa = [Fraction(v) for v in a[:2]]
    fb = [Fraction(v) for v in b[:2]]
    fc = [Fraction(v) for v in c[:2]]
    exact = (fb[0] - fa[0]) * (fc[1] - fa[1]) - (fb[1] - fa[1]) * (fc[0] - fa[0])
    return float(exact) if exact else 0.0


def incircle(a, b, c, d) -> float:
    """Positive when d lies strictly inside the circumcircle of CCW triangle abc."""
    rows = [(p[0] - d[0], p[1] - d[1]) for p in (a, b, c)]
    terms = [(x * x + y * y) for x, y in rows]
    det = (rows[0][0] * (rows[1][1] * terms[2] - terms[1] * rows[2][1])
           - rows[0][1] * (rows[1][0] * terms[2] - terms[1] * rows[2][0])
           + terms[0] * (rows[1][0] * rows[2][1] - rows[1][1] * rows[2][0]))
    scale = sum(abs(t) for t in terms) * max(abs(v) for r in rows for v in r) ** 2
    if abs(det) > 1e-10 * scale:
        return det
    fr = [(Fraction(p[0]) - Fraction(d[0]), Fraction(p[1]) - Fraction(d[1])) for p in (a, b, c)]
    ft = [x * x + y * y for x, y in fr]
    exact = (fr[0][0] * (fr[1][1] * ft[2] - ft[1] * fr[2][1])
             - fr[0][1] * (fr[1][0] * ft[2] - ft[1] * fr[2][0])
             + ft[0] * (fr[1][0] * fr[2][1] - fr[1][1] * fr[2][0]))
    return float(exact) if exact else 0.0


def _crosses(p, q, a, b) -> bool:
    """Proper crossing of segments pq and ab (interiors meet at one point)."""
    d1 = orient(p, q, a)
    d2 = orient(p, q, b)
    d3 = orient(a, b, p)
    d4 = orient(a, b, q)
    return d1 * d2 < 0 and d3 * d4 < 0


# ---------------------------------------------------------------------------
# triangulation
# ---------------------------------------------------------------------------

@dataclass
class TriMesh:
    vertices: np.ndarray  # (n, 2), lexicographically sorted
    triangles: np.ndarray  # (m, 3), counter-clockwise
    traversable: np.ndarray  # (m,) bool
    constrained: frozenset[tuple[int, int]] = frozenset()

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def edge_triangles(self) -> dict[tuple[int, int], list[int]]:
        out: dict[tuple[int, int], list[int]] = {}
        for t, tri in enumerate(self.triangles.tolist()):
            for k in range(3):
                e = _ekey(tri[k], tri[(k + 1) % 3])
                out.setdefault(e, []).append(t)
        return out


def _ekey(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


def triangulate(points: Iterable[Sequence[float]],
                segments: Iterable[tuple[Sequence[float], Sequence[float]]] = ()) -> TriMesh:
    """Delaunay triangulation of ``points``, optionally constrained by ``segments``.

    Points are sorted lexicographically first so degenerate (cocircular) input
    triangulates the same way on every run.  Segment endpoints must be input
    points.  Without segments the result has the empty-circumcircle property.
    """
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) < 3:
        raise NavMeshError("triangulation needs at least 3 distinct points")
    verts = np.array(pts, dtype=float)
    try:
        dt = Delaunay(verts)
    except QhullError as exc:
        raise NavMeshError("points are collinear") from exc
    if len(dt.coplanar):
        raise NavMeshError("triangulation dropped near-coincident points")
    tris = []
    for a, b, c in dt.simplices.tolist():
        if orient(pts[a], pts[b], pts[c]) < 0:
            b, c = c, b
        tris.append([a, b, c])
    tris.sort()
    index = {p: i for i, p in enumerate(pts)}
    cons = []
    for p, q in segments:
        try:
            i, j = index[(float(p[0]), float(p[1]))], index[(float(q[0]), float(q[1]))]
        except KeyError as exc:
            raise NavMeshError(f"segment endpoint {exc} is not a mesh point") from exc
        if i != j:
            cons.extend(_split_on_points(i, j, verts))
    constrained = frozenset()
    if cons:
        tris, constrained = _insert_constraints(pts, tris, cons)
    arr = np.array(sorted(tris), dtype=np.int64).reshape(-1, 3)
    return TriMesh(verts, arr, np.ones(len(arr), dtype=bool), constrained)


def _split_on_points(i: int, j: int, verts: np.ndarray) -> list[tuple[int, int]]:
    """Split segment ij at every input point lying on its interior."""
    p, q = verts[i], verts[j]
    d = q - p
    length2 = float(d @ d)
    rel = verts - p
    cross = d[0] * rel[:, 1] - d[1] * rel[:, 0]
    t = (rel @ d) / length2
    cand = np.nonzero((np.abs(cross) <= 1e-12 * length2) & (t > 1e-12) & (t < 1 - 1e-12))[0]
    chain = [i] + [int(k) for k in sorted(cand, key=lambda k: t[k])
                   if orient(p, q, verts[k]) == 0.0] + [j]
    return [(chain[k], chain[k + 1]) for k in range(len(chain) - 1)]


def _insert_constraints(pts, tris, cons):
    """Recover constraint edges by flipping (Sloan 1993), then re-legalize."""
    tris = [list(t) for t in tris]
    emap: dict[tuple[int, int], int] = {}
    for t, (a, b, c) in enumerate(tris):
        emap[(a, b)] = t
        emap[(b, c)] = t
        emap[(c, a)] = t

    def third(t: int, u: int, v: int) -> int:
        for w in tris[t]:
            if w != u and w != v:
                return w
        raise AssertionError

    def flip(a: int, b: int) -> tuple[int, int]:
        t1, t2 = emap[(a, b)], emap[(b, a)]
        c, d = third(t1, a, b), third(t2, a, b)
        del emap[(a, b)], emap[(b, a)]
        tris[t1] = [a, d, c]
        tris[t2] = [d, b, c]
        for t in (t1, t2):
            x, y, z = tris[t]
            emap[(x, y)] = t
            emap[(y, z)] = t
            emap[(z, x)] = t
        return c, d

    fixed: set[tuple[int, int]] = set()
    new_edges: list[tuple[int, int]] = []
    for u, v in cons:
        key = _ekey(u, v)
        fixed.add(key)
        if (u, v) in emap or (v, u) in emap:
            continue
        pu, pv = pts[u], pts[v]
        queue = [(a, b) for (a, b) in emap if a < b and u not in (a, b) and v not in (a, b)
                 and _crosses(pu, pv, pts[a], pts[b])]
        guard = 0
        while queue:
            guard += 1
            if guard > 100000:
                raise NavMeshError("constraint recovery did not converge")
            a, b = queue.pop(0)
            if (a, b) not in emap:
                a, b = b, a
            c, d = third(emap[(a, b)], a, b), third(emap[(b, a)], a, b)
            # flip only strictly convex quads a, d, b, c
            if orient(pts[c], pts[d], pts[a]) * orient(pts[c], pts[d], pts[b]) < 0 \
                    and orient(pts[a], pts[b], pts[c]) * orient(pts[a], pts[b], pts[d]) < 0:
                c, d = flip(a, b)
                if u not in (c, d) and v not in (c, d) and _crosses(pu, pv, pts[c], pts[d]):
                    queue.append((c, d))
                else:
                    new_edges.append(_ekey(c, d))
            else:
                queue.append((a, b))
    # restore the Delaunay property on unconstrained edges created above
    changed = True
    while changed:
        changed = False
        for k, (a, b) in enumerate(new_edges):
            if (a, b) in fixed or (a, b) not in emap or (b, a) not in emap:
                continue
            t1 = emap[(a, b)]
            c, d = third(t1, a, b), third(emap[(b, a)], a, b)
            if incircle(pts[a], pts[b], pts[c], pts[d]) > 0:
                c2, d2 = flip(a, b)
                new_edges[k] = _ekey(c2, d2)
                changed = True
    for u, v in fixed:
        if (u, v) not in emap and (v, u) not in emap:
            raise NavMeshError(f"constraint edge {u}-{v} could not be recovered")
    canon = []
    for a, b, c in tris:
        m = min(range(3), key=lambda k: (a, b, c)[k])
        canon.append([(a, b, c)[m], (a, b, c)[(m + 1) % 3], (a, b, c)[(m + 2) % 3]])
    return canon, frozenset(fixed)


def prune_interior(mesh: TriMesh, obstacles: ObstacleSet) -> TriMesh:
    """Mark triangles whose centroid is strictly inside an obstacle as non-traversable."""
    cent = mesh.centroids()
    keep = np.ones(len(cent), dtype=bool)
    if obstacles.rectangles and len(cent):
        r = np.array(obstacles.rectangles, dtype=float)
        inside = ((cent[:, None, 0] > r[None, :, 0]) & (cent[:, None, 0] < r[None, :, 2])
                  & (cent[:, None, 1] > r[None, :, 1]) & (cent[:, None, 1] < r[None, :, 3]))
        keep = ~inside.any(axis=1)
    return TriMesh(mesh.vertices, mesh.triangles, keep, mesh.constrained)


def prune_exterior(mesh: TriMesh) -> TriMesh:
    """Drop free triangles reachable from the hull without crossing a constrained edge.

    Those lie outside the building; walls and exit lines are constrained, so
    the flood cannot leak indoors.
    """
    et = mesh.edge_triangles()
    keep = mesh.traversable.copy()
    stack = [t for e, ts in et.items() if len(ts) == 1 and e not in mesh.constrained
             for t in ts if keep[t]]
    while stack:
        t = stack.pop()
        if not keep[t]:
            continue
        keep[t] = False
        tri = mesh.triangles[t].tolist()
        for k in range(3):
            e = _ekey(tri[k], tri[(k + 1) % 3])
            if e in mesh.constrained:
                continue
            stack.extend(u for u in et[e] if u != t and keep[u])
    return TriMesh(mesh.vertices, mesh.triangles, keep, mesh.constrained)


# ---------------------------------------------------------------------------
# portal graph
# ---------------------------------------------------------------------------

@dataclass
class NavGraph:
    """Portal adjacency graph over a pruned mesh.

    Base nodes are integers ``0..n-1`` indexing ``portals``; transient nodes
    (attached query points) get ids ``>= n`` and live in an overlay that never
    touches the base adjacency.
    """

    mesh: TriMesh
    portals: list[tuple[int, int]]
    adjacency: list[list[tuple[int, float]]]
    exits: frozenset[int]
    exit_gap: dict[int, str]
    portal_triangles: list[tuple[int, ...]]
    triangle_portals: dict[int, tuple[int, ...]]
    _transient: dict[int, tuple[Point, int, list[tuple[int, float]]]] = field(default_factory=dict)
    _next_id: int = -1

    @property
    def n_base(self) -> int:
        return len(self.portals)

    def midpoint(self, node: int) -> Point:
        if node in self._transient:
            return self._transient[node][0]
        i, j = self.portals[node]
        v = self.mesh.vertices
        return (float(0.5 * (v[i, 0] + v[j, 0])), float(0.5 * (v[i, 1] + v[j, 1])))

    def width(self, node: int) -> float:
        i, j = self.portals[node]
        v = self.mesh.vertices
        return float(math.hypot(*(v[i] - v[j])))

    def neighbors(self, node: int) -> list[tuple[int, float]]:
        if node in self._transient:
            return self._transient[node][2]
        return self.adjacency[node]

    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def locate(self, p: Point) -> int | None:
        """Index of the traversable triangle containing ``p`` (lowest index on shared edges)."""
        v = self.mesh.vertices
        t = self.mesh.triangles
        a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        px, py = p

        def side(u, w):
            return (w[:, 0] - u[:, 0]) * (py - u[:, 1]) - (w[:, 1] - u[:, 1]) * (px - u[:, 0])

        eps = -1e-12
        inside = (side(a, b) >= eps) & (side(b, c) >= eps) & (side(c, a) >= eps)
        inside &= self.mesh.traversable
        hits = np.nonzero(inside)[0]
        return int(hits[0]) if len(hits) else None


def build_graph(mesh: TriMesh, exits: Sequence[ExitGap] = ()) -> NavGraph:
    """Portal graph: shared edges of traversable triangles plus exit edges."""
    trav = np.nonzero(mesh.traversable)[0]
    if len(trav) == 0:
        raise NavMeshError("mesh has no traversable triangles")
    et = mesh.edge_triangles()
    v = mesh.vertices
    exit_edges: dict[tuple[int, int], str] = {}
    for gap in exits:
        on = _vertices_on_segment(v, gap.a, gap.b)
        for e, ts in et.items():
            if e[0] in on and e[1] in on and any(mesh.traversable[t] for t in ts):
                exit_edges[e] = gap.id
    nodes = []
    for e, ts in et.items():
        travs = [t for t in ts if mesh.traversable[t]]
        if len(travs) == 2 or e in exit_edges:
            nodes.append(e)
    nodes.sort()
    node_id = {e: k for k, e in enumerate(nodes)}
    portal_tris = [tuple(t for t in et[e] if mesh.traversable[t]) for e in nodes]
    tri_portals: dict[int, list[int]] = {}
    for k, ts in enumerate(portal_tris):
        for t in ts:
            tri_portals.setdefault(t, []).append(k)
    mids = np.array([0.5 * (v[i] + v[j]) for i, j in nodes]) if nodes else np.zeros((0, 2))
    adjacency: list[list[tuple[int, float]]] = [[] for _ in nodes]
    for t in sorted(tri_portals):
        ps = sorted(tri_portals[t])
        for x in range(len(ps)):
            for y in range(x + 1, len(ps)):
                a, b = ps[x], ps[y]
                w = float(math.hypot(*(mids[a] - mids[b])))
                adjacency[a].append((b, w))
                adjacency[b].append((a, w))
    for lst in adjacency:
        lst.sort()
    ex = {node_id[e]: gid for e, gid in exit_edges.items()}
    return NavGraph(mesh, nodes, adjacency, frozenset(ex), ex, portal_tris,
                    {t: tuple(sorted(ps)) for t, ps in tri_portals.items()}, {}, len(nodes))


def _vertices_on_segment(v: np.ndarray, a: Point, b: Point) -> set[int]:
    out = set()
    for k, p in enumerate(v.tolist()):
        if orient(a, b, p) == 0.0 and min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) \
                and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]):
            out.add(k)
    return out


def attach_point(graph: NavGraph, p: Point) -> int:
    """Add a transient node at ``p`` wired to the portals of its triangle."""
    t = graph.locate(p)
    if t is None:
        raise NavMeshError(f"point {p} is not inside a traversable triangle")
    nid = graph._next_id
    graph._next_id += 1
    links = []
    for k in graph.triangle_portals.get(t, ()):
        m = graph.midpoint(k)
        links.append((k, float(math.hypot(m[0] - p[0], m[1] - p[1]))))
    graph._transient[nid] = ((float(p[0]), float(p[1])), t, links)
    return nid


def detach_point(graph: NavGraph, node: int) -> None:
    del graph._transient[node]


# ---------------------------------------------------------------------------
# routing
# ---------------------------------------------------------------------------

@dataclass
class PortalRoute:
    origin: Point
    goal: Point
    portals: list[tuple[Point, Point]]  # (left, right) as seen by the walker
    nodes: tuple[int, ...]
    length: float  # graph weight of the route
    exit_id: str | None = None


def shortest_route(graph: NavGraph, start: int, exits: Iterable[int] | None = None,
                   min_width: float = 0.0) -> PortalRoute:
    """Minimum-weight portal sequence from ``start`` to the nearest node of ``exits``.

    Equal-weight alternatives resolve to the lexicographically smaller node
    sequence.  Portals narrower than ``min_width`` are skipped.
    """
    targets = graph.exits if exits is None else frozenset(exits)
    if not targets:
        raise NoRouteError("no exits available")
    if min_width > 0:
        def nbrs(node):
            return [(x, w) for x, w in graph.neighbors(node) if graph.width(x) >= min_width]
    else:
        nbrs = graph.neighbors
    found = lexicographic_dijkstra(nbrs, start, targets)
    if found is None:
        raise NoRouteError(f"no exit reachable from node {start}")
    d, path = found
    return _make_route(graph, path, d)


def lexicographic_dijkstra(neighbors, start, targets) -> tuple[float, tuple[int, ...]] | None:
    """Cheapest path from ``start`` to any node of ``targets``.

    Labels are ``(distance, node path)`` tuples, so among equal distances the
    lexicographically smaller node sequence wins.
    """
    best: dict[int, tuple[float, tuple[int, ...]]] = {start: (0.0, (start,))}
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (start,))]
    done: set[int] = set()
    while heap:
        label = heapq.heappop(heap)
        d, path = label
        node = path[-1]
        if node in done:
            continue
        done.add(node)
        if node in targets:
            return label
        for nbr, w in neighbors(node):
            if nbr in done:
                continue
            cand = (d + w, path + (nbr,))
            if nbr not in best or cand < best[nbr]:
                best[nbr] = cand
                heapq.heappush(heap, cand)
    return None


def _make_route(graph: NavGraph, path: tuple[int, ...], length: float) -> PortalRoute:
    v = graph.mesh.vertices
    start = path[0]
    transient = start in graph._transient
    nodes = path[1:] if transient else path
    origin = graph.midpoint(start)
    portals: list[tuple[Point, Point]] = []
    prev_tri = graph._transient[start][1] if transient else None
    prev_node = None if transient else None
    for k, node in enumerate(nodes):
        if k == 0 and transient:
            tri = prev_tri
        elif k == 0:
            if len(nodes) == 1:
                tri = graph.portal_triangles[node][0]
            else:
                tri = _common_triangle(graph, node, nodes[1], other=True)
        else:
            tri = _common_triangle(graph, prev_node, node)
        i, j = graph.portals[node]
        a, b, c = graph.mesh.triangles[tri].tolist()
        ccw = (i, j) in ((a, b), (b, c), (c, a))
        left, right = (j, i) if ccw else (i, j)
        portals.append(((float(v[left, 0]), float(v[left, 1])),
                        (float(v[right, 0]), float(v[right, 1]))))
        prev_node = node
    if not transient and portals:
        # a base start node is where the walker stands; it is not crossed
        portals = portals[1:]
    last = nodes[-1] if nodes else start
    goal = graph.midpoint(last)
    return PortalRoute(origin, goal, portals, tuple(nodes), length, graph.exit_gap.get(last))


def _common_triangle(graph: NavGraph, a: int, b: int, other: bool = False) -> int:
    ta, tb = graph.portal_triangles[a], graph.portal_triangles[b]
    common = [t for t in ta if t in tb]
    if not common:
        raise NavMeshError(f"portals {a} and {b} share no triangle")
    if other:
        # the triangle on the far side of ``a`` from ``b``: walker enters ``a`` from it
        rest = [t for t in ta if t != common[0]]
        return rest[0] if rest else common[0]
    return common[0]


def route_for_point(graph: NavGraph, p: Point, exits: Iterable[int] | None = None,
                    min_width: float = 0.0) -> PortalRoute:
    node = attach_point(graph, p)
    try:
        return shortest_route(graph, node, exits, min_width)
    finally:
        detach_point(graph, node)


# ---------------------------------------------------------------------------
# debug dump
# ---------------------------------------------------------------------------

def debug_dump(mesh: TriMesh, polylines: Sequence[Sequence[Point]] = ()) -> str:
    """Line-oriented listing: ``V i x y``, ``T i a b c trav``, ``L k x0 y0 x1 y1 ...``."""
    lines = [f"V {i} {x:.6f} {y:.6f}" for i, (x, y) in enumerate(mesh.vertices.tolist())]
    for i, (a, b, c) in enumerate(mesh.triangles.tolist()):
        lines.append(f"T {i} {a} {b} {c} {int(mesh.traversable[i])}")
    for k, line in enumerate(polylines):
        coords = " ".join(f"{x:.6f} {y:.6f}" for x, y in line)
        lines.append(f"L {k} {coords}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def build_navigation(obstacles: ObstacleSet) -> NavGraph:
    """Corner bag -> constrained triangulation -> pruning -> portal graph.

    For floor-plan obstacles the outdoor part of the hull is pruned as well.
    """
    segments = obstacles.edges() + [(g.a, g.b) for g in obstacles.exits]
    points = list(obstacles.corner_bag) + [p for g in obstacles.exits for p in (g.a, g.b)]
    mesh = prune_interior(triangulate(points, segments), obstacles)
    if obstacles.exits or obstacles.vents:
        mesh = prune_exterior(mesh)
    return build_graph(mesh, obstacles.exits)


def point_in_obstacle(p: Point, obstacles: ObstacleSet) -> bool:
    return any(point_in_rect_strict(p, r) for r in obstacles.rectangles)


# ---------------------------------------------------------------------------
# funnel
# ---------------------------------------------------------------------------

class FunnelError(NavMeshError):
    pass


def _cr(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _string_pull(origin: Point, portals: list[tuple[Point, Point]]) -> list[tuple[Point, int, int]]:
    """Zero-clearance funnel. Returns corners as (vertex, side, portal index); side +1 left, -1 right."""
    ports = list(portals)
    corners: list[tuple[Point, int, int]] = []
    apex = left = right = origin
    ai = li = ri = -1
    i = 0
    while i < len(ports):
        nl, nr = ports[i]
        if _cr(apex, right, nr) >= 0:
            if apex == right or _cr(apex, left, nr) < 0:
                right, ri = nr, i
            else:
                apex, ai = left, li
                corners.append((left, 1, li))
                left = right = apex
                i = li + 1
                li = ri = li
                continue
        if _cr(apex, left, nl) <= 0:
            if apex == left or _cr(apex, right, nl) > 0:
                left, li = nl, i
            else:
                apex, ai = right, ri
                corners.append((right, -1, ri))
                left = right = apex
                i = ri + 1
                li = ri = ri
                continue
        i += 1
    return corners


def _tangent_dir(cp, sp, rp, cq, sq, rq):
    """Unit direction of the tangent from circle P to circle Q with the given sides."""
    dx, dy = cq[0] - cp[0], cq[1] - cp[1]
    d2 = dx * dx + dy * dy
    k = sq * rq - sp * rp
    lam2 = d2 - k * k
    if lam2 <= 0 or d2 == 0:
        return None
    lam = math.sqrt(lam2)
    return ((lam * dx + k * dy) / d2, (lam * dy - k * dx) / d2)


def _seg_dist(p, a, b) -> float:
    ax, ay = b[0] - a[0], b[1] - a[1]
    l2 = ax * ax + ay * ay
    t = 0.0 if l2 == 0 else max(0.0, min(1.0, ((p[0] - a[0]) * ax + (p[1] - a[1]) * ay) / l2))
    return math.hypot(a[0] + t * ax - p[0], a[1] + t * ay - p[1])


def _on_segment(p, a, b) -> bool:
    if orient(a, b, p) != 0:
        return False
    return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))


def _wrap(origin, goal, corners, clearance, arc_step):
    """Taut path around clearance discs at ``corners``; arcs become circumscribed polylines."""
    nodes = [(origin, 0, 0.0)] + [(v, s, clearance) for v, s, _ in corners] + [(goal, 0, 0.0)]
    # shrink radii where tangents do not exist (a disc swallowing its neighbour)
    radii = [n[2] for n in nodes]
    for _ in range(60):
        ok = True
        for k in range(len(nodes) - 1):
            (cp, sp, _), (cq, sq, _) = nodes[k], nodes[k + 1]
            d = math.hypot(cq[0] - cp[0], cq[1] - cp[1])
            if abs(sq * radii[k + 1] - sp * radii[k]) >= 0.999 * d:
                ok = False
                lim = 0.49 * d if sp and sq and sp != sq else 0.98 * d
                radii[k] = min(radii[k], lim)
                radii[k + 1] = min(radii[k + 1], lim)
        if ok:
            break
    dirs = []
    for k in range(len(nodes) - 1):
        (cp, sp, _), (cq, sq, _) = nodes[k], nodes[k + 1]
        dirs.append(_tangent_dir(cp, sp, radii[k], cq, sq, radii[k + 1]))
    out = [origin]
    for k in range(1, len(nodes) - 1):
        c, s, _ = nodes[k]
        r = radii[k]
        din, dout = dirs[k - 1], dirs[k]
        if din is None or dout is None or r <= 0:
            out.append(c)
            continue
        # tangent point: centre sits at side s of the travel direction
        tin = (c[0] + s * r * din[1], c[1] - s * r * din[0])
        tout = (c[0] + s * r * dout[1], c[1] - s * r * dout[0])
        phi0 = math.atan2(tin[1] - c[1], tin[0] - c[0])
        phi1 = math.atan2(tout[1] - c[1], tout[0] - c[0])
        theta = (s * (phi1 - phi0)) % (2 * math.pi)
        turn = math.atan2(din[0] * dout[1] - din[1] * dout[0], din[0] * dout[0] + din[1] * dout[1])
        if s * turn <= 1e-12 or theta <= 1e-12 or theta > 2 * math.pi - 1e-9:
            out.append(tin)
            continue
        n = max(1, math.ceil(theta / arc_step - 1e-9))
        step = theta / n
        rr = r / math.cos(step / 2)
        for j in range(n):
            ang = phi0 + s * (j + 0.5) * step
            out.append((c[0] + rr * math.cos(ang), c[1] + rr * math.sin(ang)))
    out.append(goal)
    return out


def funnel(route: PortalRoute, clearance: float = 0.0,
           arc_step: float = math.pi / 8) -> list[Point]:
    """Smoothed waypoint list from ``route.origin`` to ``route.goal``.

    With positive clearance every corner the path wraps is kept at least
    ``clearance`` away by rolling a disc of that radius around it; the arc is
    emitted as a polyline whose vertices lie outside the disc.
    """
    if clearance < 0:
        raise FunnelError("clearance must be non-negative")
    origin, goal = route.origin, route.goal
    if origin == goal:
        return [goal]
    for left, right in route.portals:
        if math.hypot(left[0] - right[0], left[1] - right[1]) < 2 * clearance - 1e-12:
            raise FunnelError("portal narrower than the agent")
    # an origin lying on a portal has already crossed it (and every earlier one)
    skip = 0
    for k, (lp, rp) in enumerate(route.portals):
        if _on_segment(origin, lp, rp):
            skip = k + 1
    kept = list(route.portals[skip:])
    portals = kept + [(goal, goal)]
    corners = [(v, s, i + skip) for v, s, i in _string_pull(origin, portals)
               if v != goal and v != origin]
    if clearance == 0:
        return [origin] + [v for v, _, _ in corners] + [goal]
    # the clearance path can brush portal vertices the plain funnel did not wrap
    candidates = {}
    for idx, (lp, rp) in enumerate(route.portals):
        candidates.setdefault((lp, 1), idx)
        candidates.setdefault((rp, -1), idx)
    used = {(v, s) for v, s, _ in corners}
    for _ in range(len(candidates) + 1):
        path = _wrap(origin, goal, corners, clearance, arc_step)
        worst = None
        for (v, s), idx in candidates.items():
            if (v, s) in used or v == goal or v == origin:
                continue
            d = min(_seg_dist(v, path[k], path[k + 1]) for k in range(len(path) - 1))
            if d < clearance - 1e-9 and (worst is None or d < worst[0]):
                worst = (d, v, s, idx)
        if worst is None:
            return path
        _, v, s, idx = worst
        used.add((v, s))
        corners.append((v, s, idx))
        corners.sort(key=lambda c: c[2])
    return path
