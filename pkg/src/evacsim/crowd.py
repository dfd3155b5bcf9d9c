"""Local movement: ORCA collision avoidance and the target-disk state machine.

The ORCA kernels follow the RVO2 library's construction (agent half-planes with
the responsibility split in half, obstacle half-planes with full
responsibility, and the 3D linear-program fallback) and are compiled with numba.
New velocities are computed from a snapshot of the previous step and only then
committed, so results do not depend on agent iteration order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numba as nb
import numpy as np

EPS = 1e-5

ABSENT, DYNAMIC, STATIC = 0, 1, 2

TAU_AGENT = 2.0
TAU_OBSTACLE = 0.4
NEIGHBOR_DIST = 5.0
MAX_NEIGHBORS = 10
KEEP_RIGHT = 0.02  # rad; tiny clockwise bias of the preferred velocity near others
CONTACT_SKIN = 0.01  # m added to agent-agent contact radii (absorbs relaxed-LP overlap)


# ---------------------------------------------------------------------------
# obstacles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObstacleField:
    """Rectangles as RVO-style counter-clockwise vertex loops."""

    rects: np.ndarray  # (k, 4) xmin, ymin, xmax, ymax
    point: np.ndarray  # (m, 2)
    next: np.ndarray  # (m,)
    prev: np.ndarray  # (m,)
    unit_dir: np.ndarray  # (m, 2)
    convex: np.ndarray  # (m,) bool

    @classmethod
    def from_rectangles(cls, rects: Sequence[Sequence[float]]) -> "ObstacleField":
        r = np.asarray(rects, dtype=float).reshape(-1, 4)
        pts, nxt, prv = [], [], []
        for x0, y0, x1, y1 in r.tolist():
            base = len(pts)
            pts += [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
            nxt += [base + (k + 1) % 4 for k in range(4)]
            prv += [base + (k + 3) % 4 for k in range(4)]
        p = np.array(pts, dtype=float).reshape(-1, 2)
        n = np.array(nxt, dtype=np.int64)
        d = p[n] - p if len(p) else np.zeros((0, 2))
        if len(p):
            d = d / np.linalg.norm(d, axis=1)[:, None]
        return cls(r, p, n, np.array(prv, dtype=np.int64), d, np.ones(len(p), dtype=np.bool_))

    @classmethod
    def empty(cls) -> "ObstacleField":
        return cls.from_rectangles([])


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@nb.njit(cache=True)
def _det(ax, ay, bx, by):
    return ax * by - ay * bx


@nb.njit(cache=True)
def _lp1(lp, ld, line_no, radius, optx, opty, direction_opt, res):
    px, py = lp[line_no, 0], lp[line_no, 1]
    dx, dy = ld[line_no, 0], ld[line_no, 1]
    dot = px * dx + py * dy
    disc = dot * dot + radius * radius - (px * px + py * py)
    if disc < 0.0:
        return False
    sq = math.sqrt(disc)
    t_left = -dot - sq
    t_right = -dot + sq
    for i in range(line_no):
        denom = _det(dx, dy, ld[i, 0], ld[i, 1])
        numer = _det(ld[i, 0], ld[i, 1], px - lp[i, 0], py - lp[i, 1])
        if abs(denom) <= EPS:
            if numer < 0.0:
                return False
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return False
    if direction_opt:
        if optx * dx + opty * dy > 0.0:
            res[0] = px + t_right * dx
            res[1] = py + t_right * dy
        else:
            res[0] = px + t_left * dx
            res[1] = py + t_left * dy
    else:
        t = dx * (optx - px) + dy * (opty - py)
        if t < t_left:
            t = t_left
        elif t > t_right:
            t = t_right
        res[0] = px + t * dx
        res[1] = py + t * dy
    return True


@nb.njit(cache=True)
def _lp2(lp, ld, n, radius, optx, opty, direction_opt, res):
    if direction_opt:
        res[0] = optx * radius
        res[1] = opty * radius
    elif optx * optx + opty * opty > radius * radius:
        norm = math.sqrt(optx * optx + opty * opty)
        res[0] = optx / norm * radius
        res[1] = opty / norm * radius
    else:
        res[0] = optx
        res[1] = opty
    for i in range(n):
        if _det(ld[i, 0], ld[i, 1], lp[i, 0] - res[0], lp[i, 1] - res[1]) > 0.0:
            tx, ty = res[0], res[1]
            if not _lp1(lp, ld, i, radius, optx, opty, direction_opt, res):
                res[0] = tx
                res[1] = ty
                return i
    return n


@nb.njit(cache=True)
def _lp3(lp, ld, n, n_obst, begin, radius, res):
    distance = 0.0
    pp = np.empty((n, 2))
    pd = np.empty((n, 2))
    tmp = np.empty(2)
    for i in range(begin, n):
        if _det(ld[i, 0], ld[i, 1], lp[i, 0] - res[0], lp[i, 1] - res[1]) > distance:
            m = 0
            for j in range(n_obst):
                pp[m, 0] = lp[j, 0]
                pp[m, 1] = lp[j, 1]
                pd[m, 0] = ld[j, 0]
                pd[m, 1] = ld[j, 1]
                m += 1
            for j in range(n_obst, i):
                det_ij = _det(ld[i, 0], ld[i, 1], ld[j, 0], ld[j, 1])
                if abs(det_ij) <= EPS:
                    if ld[i, 0] * ld[j, 0] + ld[i, 1] * ld[j, 1] > 0.0:
                        continue
                    pp[m, 0] = 0.5 * (lp[i, 0] + lp[j, 0])
                    pp[m, 1] = 0.5 * (lp[i, 1] + lp[j, 1])
                else:
                    s = _det(ld[j, 0], ld[j, 1], lp[i, 0] - lp[j, 0], lp[i, 1] - lp[j, 1]) / det_ij
                    pp[m, 0] = lp[i, 0] + s * ld[i, 0]
                    pp[m, 1] = lp[i, 1] + s * ld[i, 1]
                ddx = ld[j, 0] - ld[i, 0]
                ddy = ld[j, 1] - ld[i, 1]
                nrm = math.sqrt(ddx * ddx + ddy * ddy)
                pd[m, 0] = ddx / nrm
                pd[m, 1] = ddy / nrm
                m += 1
            tmp[0] = res[0]
            tmp[1] = res[1]
            if _lp2(pp, pd, m, radius, -ld[i, 1], ld[i, 0], True, res) < m:
                res[0] = tmp[0]
                res[1] = tmp[1]
            distance = _det(ld[i, 0], ld[i, 1], lp[i, 0] - res[0], lp[i, 1] - res[1])


@nb.njit(cache=True)
def _agent_neighbors(pos, kind, neighbor_dist, max_neighbors):
    """(n, max_neighbors) neighbour ids ordered by (distance, id); -1 pads."""
    n = pos.shape[0]
    out = -np.ones((n, max_neighbors), dtype=np.int64)
    if n == 0 or max_neighbors == 0:
        return out
    cell = neighbor_dist if neighbor_dist > 0 else 1.0
    minx = np.inf
    miny = np.inf
    maxx = -np.inf
    maxy = -np.inf
    for i in range(n):
        if kind[i] != 0:
            minx = min(minx, pos[i, 0])
            miny = min(miny, pos[i, 1])
            maxx = max(maxx, pos[i, 0])
            maxy = max(maxy, pos[i, 1])
    if minx == np.inf:
        return out
    ncx = int((maxx - minx) / cell) + 1
    ncy = int((maxy - miny) / cell) + 1
    cx = np.empty(n, dtype=np.int64)
    cy = np.empty(n, dtype=np.int64)
    counts = np.zeros(ncx * ncy + 1, dtype=np.int64)
    for i in range(n):
        if kind[i] != 0:
            cx[i] = int((pos[i, 0] - minx) / cell)
            cy[i] = int((pos[i, 1] - miny) / cell)
            counts[cy[i] * ncx + cx[i] + 1] += 1
    for k in range(1, ncx * ncy + 1):
        counts[k] += counts[k - 1]
    fill = counts.copy()
    order = np.empty(n, dtype=np.int64)
    for i in range(n):
        if kind[i] != 0:
            key = cy[i] * ncx + cx[i]
            order[fill[key]] = i
            fill[key] += 1
    r2 = neighbor_dist * neighbor_dist
    best_d = np.empty(max_neighbors)
    for i in range(n):
        if kind[i] != DYNAMIC:
            continue
        cnt = 0
        for gy in range(max(0, cy[i] - 1), min(ncy, cy[i] + 2)):
            for gx in range(max(0, cx[i] - 1), min(ncx, cx[i] + 2)):
                key = gy * ncx + gx
                for s in range(counts[key], counts[key + 1]):
                    j = order[s]
                    if j == i:
                        continue
                    dx = pos[j, 0] - pos[i, 0]
                    dy = pos[j, 1] - pos[i, 1]
                    d = dx * dx + dy * dy
                    if d >= r2:
                        continue
                    if cnt == max_neighbors and (d > best_d[cnt - 1] or
                                                 (d == best_d[cnt - 1] and j > out[i, cnt - 1])):
                        continue
                    k = cnt if cnt < max_neighbors else max_neighbors - 1
                    while k > 0 and (best_d[k - 1] > d or (best_d[k - 1] == d and out[i, k - 1] > j)):
                        if k < max_neighbors:
                            best_d[k] = best_d[k - 1]
                            out[i, k] = out[i, k - 1]
                        k -= 1
                    best_d[k] = d
                    out[i, k] = j
                    if cnt < max_neighbors:
                        cnt += 1
    return out


@nb.njit(cache=True)
def _orca_step(pos, vel, pref, radius, max_speed, kind, neighbors,
               opt, onext, oprev, odir, oconvex,
               dt, tau, tau_obst, keep_right):
    n = pos.shape[0]
    m = opt.shape[0]
    max_nb = neighbors.shape[1]
    new_vel = np.zeros((n, 2))
    lp = np.empty((m + max_nb, 2))
    ld = np.empty((m + max_nb, 2))
    ob_idx = np.empty(m, dtype=np.int64)
    ob_d = np.empty(m)
    res = np.empty(2)
    inv_to = 1.0 / tau_obst
    inv_t = 1.0 / tau
    inv_dt = 1.0 / dt
    for a in range(n):
        if kind[a] != DYNAMIC:
            continue
        px, py = pos[a, 0], pos[a, 1]
        vx, vy = vel[a, 0], vel[a, 1]
        r = radius[a]
        r2 = r * r
        # obstacle neighbours, sorted by (distance, edge index)
        rng = tau_obst * max_speed[a] + r
        rng2 = rng * rng
        cnt = 0
        for e in range(m):
            e2 = onext[e]
            ax, ay = opt[e, 0], opt[e, 1]
            bx, by = opt[e2, 0], opt[e2, 1]
            left = _det(bx - ax, by - ay, px - ax, py - ay)
            if left >= 0.0:
                continue
            sx, sy = bx - ax, by - ay
            l2 = sx * sx + sy * sy
            if left * left / l2 >= rng2:
                continue
            t = ((px - ax) * sx + (py - ay) * sy) / l2
            if t < 0.0:
                d = (px - ax) ** 2 + (py - ay) ** 2
            elif t > 1.0:
                d = (px - bx) ** 2 + (py - by) ** 2
            else:
                d = (px - ax - t * sx) ** 2 + (py - ay - t * sy) ** 2
            if d >= rng2:
                continue
            k = cnt
            while k > 0 and ob_d[k - 1] > d:
                ob_d[k] = ob_d[k - 1]
                ob_idx[k] = ob_idx[k - 1]
                k -= 1
            ob_d[k] = d
            ob_idx[k] = e
            cnt += 1
        nl = 0
        for q in range(cnt):
            o1 = ob_idx[q]
            o2 = onext[o1]
            r1x, r1y = opt[o1, 0] - px, opt[o1, 1] - py
            r2x, r2y = opt[o2, 0] - px, opt[o2, 1] - py
            covered = False
            for j in range(nl):
                if (_det(inv_to * r1x - lp[j, 0], inv_to * r1y - lp[j, 1], ld[j, 0], ld[j, 1])
                        - inv_to * r >= -EPS
                        and _det(inv_to * r2x - lp[j, 0], inv_to * r2y - lp[j, 1], ld[j, 0], ld[j, 1])
                        - inv_to * r >= -EPS):
                    covered = True
                    break
            if covered:
                continue
            d1 = r1x * r1x + r1y * r1y
            d2 = r2x * r2x + r2y * r2y
            ovx, ovy = opt[o2, 0] - opt[o1, 0], opt[o2, 1] - opt[o1, 1]
            s = (-r1x * ovx - r1y * ovy) / (ovx * ovx + ovy * ovy)
            dlx, dly = -r1x - s * ovx, -r1y - s * ovy
            dline = dlx * dlx + dly * dly
            if s < 0.0 and d1 <= r2:
                if oconvex[o1]:
                    nrm = math.sqrt(d1)
                    lp[nl, 0] = 0.0
                    lp[nl, 1] = 0.0
                    ld[nl, 0] = -r1y / nrm
                    ld[nl, 1] = r1x / nrm
                    nl += 1
                continue
            elif s > 1.0 and d2 <= r2:
                if oconvex[o2] and _det(r2x, r2y, odir[o2, 0], odir[o2, 1]) >= 0.0:
                    nrm = math.sqrt(d2)
                    lp[nl, 0] = 0.0
                    lp[nl, 1] = 0.0
                    ld[nl, 0] = -r2y / nrm
                    ld[nl, 1] = r2x / nrm
                    nl += 1
                continue
            elif s >= 0.0 and s < 1.0 and dline <= r2:
                lp[nl, 0] = 0.0
                lp[nl, 1] = 0.0
                ld[nl, 0] = -odir[o1, 0]
                ld[nl, 1] = -odir[o1, 1]
                nl += 1
                continue
            if s < 0.0 and dline <= r2:
                if not oconvex[o1]:
                    continue
                o2 = o1
                leg = math.sqrt(d1 - r2)
                llx = (r1x * leg - r1y * r) / d1
                lly = (r1x * r + r1y * leg) / d1
                rlx = (r1x * leg + r1y * r) / d1
                rly = (-r1x * r + r1y * leg) / d1
            elif s > 1.0 and dline <= r2:
                if not oconvex[o2]:
                    continue
                o1 = o2
                leg = math.sqrt(d2 - r2)
                llx = (r2x * leg - r2y * r) / d2
                lly = (r2x * r + r2y * leg) / d2
                rlx = (r2x * leg + r2y * r) / d2
                rly = (-r2x * r + r2y * leg) / d2
            else:
                if oconvex[o1]:
                    leg = math.sqrt(d1 - r2)
                    llx = (r1x * leg - r1y * r) / d1
                    lly = (r1x * r + r1y * leg) / d1
                else:
                    llx, lly = -odir[o1, 0], -odir[o1, 1]
                if oconvex[o2]:
                    leg = math.sqrt(d2 - r2)
                    rlx = (r2x * leg + r2y * r) / d2
                    rly = (-r2x * r + r2y * leg) / d2
                else:
                    rlx, rly = odir[o1, 0], odir[o1, 1]
            lnb = oprev[o1]
            left_foreign = False
            right_foreign = False
            if oconvex[o1] and _det(llx, lly, -odir[lnb, 0], -odir[lnb, 1]) >= 0.0:
                llx, lly = -odir[lnb, 0], -odir[lnb, 1]
                left_foreign = True
            if oconvex[o2] and _det(rlx, rly, odir[o2, 0], odir[o2, 1]) <= 0.0:
                rlx, rly = odir[o2, 0], odir[o2, 1]
                right_foreign = True
            lcx, lcy = inv_to * (opt[o1, 0] - px), inv_to * (opt[o1, 1] - py)
            rcx, rcy = inv_to * (opt[o2, 0] - px), inv_to * (opt[o2, 1] - py)
            cvx, cvy = rcx - lcx, rcy - lcy
            same = o1 == o2
            if same:
                t = 0.5
            else:
                t = ((vx - lcx) * cvx + (vy - lcy) * cvy) / (cvx * cvx + cvy * cvy)
            t_left = (vx - lcx) * llx + (vy - lcy) * lly
            t_right = (vx - rcx) * rlx + (vy - rcy) * rly
            if (t < 0.0 and t_left < 0.0) or (same and t_left < 0.0 and t_right < 0.0):
                wx, wy = vx - lcx, vy - lcy
                nrm = math.sqrt(wx * wx + wy * wy)
                wx /= nrm
                wy /= nrm
                ld[nl, 0] = wy
                ld[nl, 1] = -wx
                lp[nl, 0] = lcx + r * inv_to * wx
                lp[nl, 1] = lcy + r * inv_to * wy
                nl += 1
                continue
            elif t > 1.0 and t_right < 0.0:
                wx, wy = vx - rcx, vy - rcy
                nrm = math.sqrt(wx * wx + wy * wy)
                wx /= nrm
                wy /= nrm
                ld[nl, 0] = wy
                ld[nl, 1] = -wx
                lp[nl, 0] = rcx + r * inv_to * wx
                lp[nl, 1] = rcy + r * inv_to * wy
                nl += 1
                continue
            inf = np.inf
            if t < 0.0 or t > 1.0 or same:
                dcut = inf
            else:
                dcut = (vx - lcx - t * cvx) ** 2 + (vy - lcy - t * cvy) ** 2
            dleft = inf if t_left < 0.0 else (vx - lcx - t_left * llx) ** 2 + (vy - lcy - t_left * lly) ** 2
            dright = inf if t_right < 0.0 else (vx - rcx - t_right * rlx) ** 2 + (vy - rcy - t_right * rly) ** 2
            if dcut <= dleft and dcut <= dright:
                dx, dy = -odir[o1, 0], -odir[o1, 1]
                ld[nl, 0] = dx
                ld[nl, 1] = dy
                lp[nl, 0] = lcx + r * inv_to * (-dy)
                lp[nl, 1] = lcy + r * inv_to * dx
                nl += 1
            elif dleft <= dright:
                if left_foreign:
                    continue
                ld[nl, 0] = llx
                ld[nl, 1] = lly
                lp[nl, 0] = lcx + r * inv_to * (-lly)
                lp[nl, 1] = lcy + r * inv_to * llx
                nl += 1
            else:
                if right_foreign:
                    continue
                dx, dy = -rlx, -rly
                ld[nl, 0] = dx
                ld[nl, 1] = dy
                lp[nl, 0] = rcx + r * inv_to * (-dy)
                lp[nl, 1] = rcy + r * inv_to * dx
                nl += 1
        n_obst = nl
        # agent lines
        n_agents = 0
        for k in range(max_nb):
            b = neighbors[a, k]
            if b < 0:
                break
            n_agents += 1
            rpx, rpy = pos[b, 0] - px, pos[b, 1] - py
            rvx, rvy = vx - vel[b, 0], vy - vel[b, 1]
            dist2 = rpx * rpx + rpy * rpy
            cr = r + radius[b] + CONTACT_SKIN
            cr2 = cr * cr
            if dist2 > cr2:
                wx, wy = rvx - inv_t * rpx, rvy - inv_t * rpy
                wl2 = wx * wx + wy * wy
                dot1 = wx * rpx + wy * rpy
                if dot1 < 0.0 and dot1 * dot1 > cr2 * wl2:
                    wl = math.sqrt(wl2)
                    uwx, uwy = wx / wl, wy / wl
                    dx, dy = uwy, -uwx
                    ux, uy = (cr * inv_t - wl) * uwx, (cr * inv_t - wl) * uwy
                else:
                    leg = math.sqrt(dist2 - cr2)
                    if _det(rpx, rpy, wx, wy) > 0.0:
                        dx = (rpx * leg - rpy * cr) / dist2
                        dy = (rpx * cr + rpy * leg) / dist2
                    else:
                        dx = -(rpx * leg + rpy * cr) / dist2
                        dy = -(-rpx * cr + rpy * leg) / dist2
                    dot2 = rvx * dx + rvy * dy
                    ux, uy = dot2 * dx - rvx, dot2 * dy - rvy
            else:
                wx, wy = rvx - inv_dt * rpx, rvy - inv_dt * rpy
                wl = math.sqrt(wx * wx + wy * wy)
                uwx, uwy = wx / wl, wy / wl
                dx, dy = uwy, -uwx
                ux, uy = (cr * inv_dt - wl) * uwx, (cr * inv_dt - wl) * uwy
            share = 0.5 if kind[b] == DYNAMIC else 1.0
            ld[nl, 0] = dx
            ld[nl, 1] = dy
            lp[nl, 0] = vx + share * ux
            lp[nl, 1] = vy + share * uy
            nl += 1
        optx, opty = pref[a, 0], pref[a, 1]
        if n_agents > 0 and keep_right != 0.0:
            c, s_ = math.cos(keep_right), math.sin(keep_right)
            optx, opty = c * optx + s_ * opty, -s_ * optx + c * opty
        fail = _lp2(lp, ld, nl, max_speed[a], optx, opty, False, res)
        if fail < nl:
            _lp3(lp, ld, nl, n_obst, fail, max_speed[a], res)
        new_vel[a, 0] = res[0]
        new_vel[a, 1] = res[1]
    return new_vel


@nb.njit(cache=True)
def _segment_hits_rect(ax, ay, bx, by, x0, y0, x1, y1):
    lo = -np.inf
    hi = np.inf
    dx = bx - ax
    dy = by - ay
    if dx == 0.0:
        if not (x0 < ax < x1):
            return False
    else:
        t0 = (x0 - ax) / dx
        t1 = (x1 - ax) / dx
        lo = max(lo, min(t0, t1))
        hi = min(hi, max(t0, t1))
    if dy == 0.0:
        if not (y0 < ay < y1):
            return False
    else:
        t0 = (y0 - ay) / dy
        t1 = (y1 - ay) / dy
        lo = max(lo, min(t0, t1))
        hi = min(hi, max(t0, t1))
    return lo < hi and lo < 1.0 and hi > 0.0


@nb.njit(cache=True)
def _los(ax, ay, bx, by, rects):
    for k in range(rects.shape[0]):
        if _segment_hits_rect(ax, ay, bx, by, rects[k, 0], rects[k, 1], rects[k, 2], rects[k, 3]):
            return False
    return True


def line_of_sight(a: Sequence[float], b: Sequence[float], obstacles) -> bool:
    """True iff segment ab meets no obstacle rectangle interior."""
    rects = obstacles.rects if isinstance(obstacles, ObstacleField) else \
        np.asarray(obstacles, dtype=float).reshape(-1, 4)
    return bool(_los(float(a[0]), float(a[1]), float(b[0]), float(b[1]), rects))


@dataclass
class AgentBody:
    id: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    radius: float
    pref_velocity: tuple[float, float]
    max_speed: float
    static: bool = False


def orca_velocities(agents: Sequence[AgentBody], obstacles: ObstacleField | None, dt: float,
                    tau_agent: float = TAU_AGENT, tau_obstacle: float = TAU_OBSTACLE,
                    neighbor_dist: float = NEIGHBOR_DIST, max_neighbors: int = MAX_NEIGHBORS,
                    keep_right: float = KEEP_RIGHT) -> np.ndarray:
    """New velocity per agent (rows follow ``agents``); static agents get zero."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not tau_agent >= tau_obstacle > 0:
        raise ValueError("need tau_agent >= tau_obstacle > 0")
    n = len(agents)
    pos = np.array([a.position for a in agents], dtype=float).reshape(n, 2)
    vel = np.array([a.velocity for a in agents], dtype=float).reshape(n, 2)
    pref = np.array([a.pref_velocity for a in agents], dtype=float).reshape(n, 2)
    rad = np.array([a.radius for a in agents], dtype=float)
    vmax = np.array([a.max_speed for a in agents], dtype=float)
    kind = np.array([STATIC if a.static else DYNAMIC for a in agents], dtype=np.int64)
    vel[kind == STATIC] = 0.0
    return orca_arrays(pos, vel, pref, rad, vmax, kind, obstacles or ObstacleField.empty(), dt,
                       tau_agent, tau_obstacle, neighbor_dist, max_neighbors, keep_right)


def orca_arrays(pos, vel, pref, radius, max_speed, kind, obstacles: ObstacleField, dt,
                tau_agent=TAU_AGENT, tau_obstacle=TAU_OBSTACLE, neighbor_dist=NEIGHBOR_DIST,
                max_neighbors=MAX_NEIGHBORS, keep_right=KEEP_RIGHT) -> np.ndarray:
    nbrs = _agent_neighbors(pos, kind, float(neighbor_dist), int(max_neighbors))
    return _orca_step(pos, vel, pref, radius, max_speed, kind, nbrs,
                     obstacles.point, obstacles.next, obstacles.prev, obstacles.unit_dir,
                     obstacles.convex, float(dt), float(tau_agent), float(tau_obstacle),
                     float(keep_right))


# ---------------------------------------------------------------------------
# target-disk state machine
# ---------------------------------------------------------------------------

class Command(str, Enum):
    ESCAPE = "escape"
    ADVANCE = "advance"  # look at the next waypoint (walk there too if visible)
    FOLLOW = "follow"  # walk towards the looked-at waypoint
    WAIT = "wait"  # stay near the reached waypoint until the next one shows
    LOOK_BACK = "look_back"  # look at the walking target again
    CONTINUE = "continue"
    REVERT = "revert"  # lost sight: both targets fall back one waypoint


@dataclass(frozen=True)
class FsmState:
    in_disk: bool
    walk_eq_look: bool
    can_see: bool
    at_final: bool


def _table() -> dict[tuple[bool, bool, bool, bool], Command]:
    out = {}
    for in_disk in (False, True):
        for eq in (False, True):
            for see in (False, True):
                for final in (False, True):
                    if final:
                        cmd = Command.ESCAPE
                    elif in_disk and eq:
                        cmd = Command.ADVANCE
                    elif not eq and see:
                        cmd = Command.FOLLOW
                    elif not eq and in_disk:
                        cmd = Command.WAIT
                    elif not eq:
                        cmd = Command.LOOK_BACK
                    elif see:
                        cmd = Command.CONTINUE
                    else:
                        cmd = Command.REVERT
                    out[(in_disk, eq, see, final)] = cmd
    return out


TRANSITIONS = _table()


@dataclass
class Targets:
    walk: int = 0
    look: int = 0


def fsm_step(position: Sequence[float], waypoints: Sequence[Sequence[float]], targets: Targets,
             disk_radius: float, sees: Callable[[Sequence[float], Sequence[float]], bool],
             final_center: Sequence[float] | None = None) -> tuple[FsmState, Command]:
    """Evaluate the four features, apply the transition, mutate ``targets``.

    ``final_center`` moves the last disk (e.g. past an exit line); sight to the
    last target is still checked against the waypoint itself.
    """
    last = len(waypoints) - 1

    def centre(k):
        return final_center if (k == last and final_center is not None) else waypoints[k]

    def inside(k):
        c = centre(k)
        return math.hypot(position[0] - c[0], position[1] - c[1]) <= disk_radius

    in_disk = inside(targets.walk)
    eq = targets.walk == targets.look
    see = sees(position, waypoints[targets.look])
    final = targets.look == last and inside(last)
    state = FsmState(in_disk, eq, see, final)
    cmd = TRANSITIONS[(in_disk, eq, see, final)]
    if cmd is Command.ADVANCE:
        if targets.look < last:
            targets.look += 1
            if sees(position, waypoints[targets.look]):
                targets.walk = targets.look
    elif cmd is Command.FOLLOW:
        targets.walk = targets.look
    elif cmd is Command.LOOK_BACK:
        targets.look = targets.walk
    elif cmd is Command.REVERT:
        targets.walk = targets.look = max(0, targets.walk - 1)
    return state, cmd
