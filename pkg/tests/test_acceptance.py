"""Numbered acceptance criteria; the terminal summary prints one PASS/FAIL line each."""

import itertools
import json
import math
import random
import time

import numpy as np
import pytest
from scipy import stats

from conftest import corridor_doc, l_corridor_doc, listing_variant, plan_of
from evacsim.cli import main
from evacsim.crowd import DYNAMIC, ObstacleField, orca_arrays
from evacsim.engine import EngineConfig, ExitEvent, Scene, export_frames, run_simulation
from evacsim.fireenv import (COLUMNS, FedState, Health, LocalConditions, SmokeSpeedParams,
                             extinction, fed_increment, health_effect, ingest_history,
                             walking_speed)
from evacsim.geometry import to_obstacles
from evacsim.navmesh import build_navigation, funnel, route_for_point, triangulate
from evacsim.results import risk_probability
from evacsim.sampler import (EXEMPLARY, AgentSpec, DistributionSpec, ScenarioSample, draw,
                             parse_library, sample_scenario)
from test_navmesh import delaunay_violations, l_corner_reference, polyline_length

ac = pytest.mark.acceptance
TABLE2 = SmokeSpeedParams(0.706, -0.057)


def person(i, x, y, comp, pre=0.0, v=1.2):
    return AgentSpec(i, (x, y), comp, pre, v, 0.7, 0.706, -0.057, False, 0.25)


def fire_csv(rows_by_comp, times):
    lines = [",".join(COLUMNS)]
    for t in times:
        for comp, fn in rows_by_comp.items():
            rec = {c: 0.0 for c in COLUMNS}
            rec.update({"t_s": t, "comp": comp, "h_layer_m": 2.5, "T_up_C": 20, "T_low_C": 20,
                        "O2_up_pct": 20.9, "O2_low_pct": 20.9})
            rec.update(fn(t))
            lines.append(",".join(repr(rec[c]) if isinstance(rec[c], float) else str(rec[c])
                                  for c in COLUMNS))
    return "\n".join(lines) + "\n"


# 1 -----------------------------------------------------------------------

@ac(1, "smoke walking speed point checks")
def test_ac01_walking_speed():
    assert abs(walking_speed(1.2, 0.0, TABLE2) - 1.2) <= 1e-9
    assert walking_speed(1.2, 0.0, TABLE2) == 1.2
    assert abs(walking_speed(1.2, 20.0, TABLE2) - 0.12) <= 1e-9


# 2 -----------------------------------------------------------------------

@ac(2, "extinction coefficient from optical density")
def test_ac02_extinction():
    assert abs(extinction(1.0) - math.log(10)) <= 1e-6


# 3 -----------------------------------------------------------------------

def fine_quadrature(segments, h=0.001):
    """Independent 1 ms rectangle sum of the dose rates (per minute) over piecewise-constant species."""
    co = hcn = hcl = o2 = 0.0
    for dur, c in segments:
        steps = round(dur / h)
        m = h / 60.0
        r_co = 2.764e-5 * c["CO"] ** 1.036 if c["CO"] > 0 else 0.0
        r_hcn = max(0.0, math.exp(c["HCN"] / 43) / 220 - 0.0045) if c["HCN"] > 0 else 0.0
        r_hcl = c["HCl"] / 1900
        r_o2 = 1 / (60 * math.exp(8.13 - 0.54 * (20.9 - c["O2"])))
        for _ in range(steps):
            co += r_co * m
            hcn += r_hcn * m
            hcl += r_hcl * m
            o2 += r_o2 * h
    hv = math.exp(0.1903 * segments[-1][1]["CO2"] + 2.0004) / 7.1
    return co, hcn, hcl, o2, (co + hcn + hcl) * hv + o2


@ac(3, "dose quadrature against a 1 ms reference; health thresholds")
def test_ac03_fed_quadrature():
    t0 = time.perf_counter()
    rnd = random.Random(2024)
    for _ in range(10):
        cuts = sorted(rnd.sample(range(1, 120), rnd.randint(2, 8)))
        bounds = [0] + cuts + [120]
        segments = []
        for a, b in zip(bounds, bounds[1:]):
            segments.append(((b - a) * 0.5, {
                "CO": rnd.uniform(0, 6000), "HCN": rnd.choice([0.0, rnd.uniform(0, 150)]),
                "HCl": rnd.uniform(0, 800), "CO2": rnd.uniform(0, 8), "O2": rnd.uniform(10, 20.9)}))
        state = FedState()
        for dur, c in segments:
            state = fed_increment(state, LocalConditions(0.0, 20.0, c["CO"], c["HCN"], c["HCl"],
                                                         c["CO2"], c["O2"]), dur)
        ref = fine_quadrature(segments)
        got = (state.fed_co, state.fed_hcn, state.fed_hcl, state.fed_o2, state.fed_total)
        for g, r in zip(got, ref):
            assert g == pytest.approx(r, rel=1e-6, abs=1e-300)
    for fed, cat in [(0.0099999, Health.MINOR), (0.01, Health.LOW), (0.2999999, Health.LOW),
                     (0.3, Health.HEAVY), (0.9999999, Health.HEAVY), (1.0, Health.LETHAL)]:
        assert health_effect(fed) is cat
    assert time.perf_counter() - t0 < 10


# 4 -----------------------------------------------------------------------

class _O:
    def __init__(self, f):
        self.fatalities = f


@ac(4, "confidence half-width of the fatality probability")
def test_ac04_confidence_interval():
    p, hw = risk_probability([_O(1)] * 50 + [_O(0)] * 50)
    assert p == 0.5 and abs(hw - 0.098) <= 1e-12
    for k, n in [(1, 10), (3, 7), (50, 100), (17, 250)]:
        _, a = risk_probability([_O(1)] * k + [_O(0)] * (n - k))
        _, b = risk_probability([_O(1)] * (2 * k) + [_O(0)] * (2 * (n - k)))
        assert abs(b / a - 1 / math.sqrt(2)) <= 1e-15


# 5 -----------------------------------------------------------------------

def reference(spec):
    if spec.kind == "uniform":
        return stats.uniform(spec.p1, spec.p2 - spec.p1)
    if spec.kind == "lognormal":
        return stats.lognorm(s=spec.p2, scale=math.exp(spec.p1))
    return stats.truncnorm(-3, 3, loc=spec.p1, scale=spec.p2)


@ac(5, "every distribution row passes KS / exact-proportion at 1e5 draws")
def test_ac05_distributions():
    t0 = time.perf_counter()
    n = 100_000
    for k, (row, raw) in enumerate(EXEMPLARY.items()):
        spec = DistributionSpec.from_dict(raw)
        rng = np.random.Generator(np.random.PCG64(1000 + k))
        x = np.fromiter((draw(spec, rng) for _ in range(n)), float, n)
        if spec.kind == "binomial":
            sigma = math.sqrt(n * spec.p1 * spec.p2)
            assert abs(x.sum() - n * spec.p1) <= 3 * sigma, row
        else:
            d = stats.kstest(x, reference(spec).cdf).statistic
            assert d < 0.01, (row, d)
    assert time.perf_counter() - t0 < 30


# 6 -----------------------------------------------------------------------

@ac(6, "single agent in a 40 m corridor")
def test_ac06_corridor_speed():
    scene = Scene.build(plan_of(corridor_doc(42.0)))
    sample = ScenarioSample(0, 0.0, "COR_0", (person(0, 2.1, 1.0, "COR_0"),))
    out = run_simulation(scene, None, sample)
    assert out.agents[0].status == "Escaped"
    assert abs(out.agents[0].egress_time - 40 / 1.2) <= 0.5


# 7 -----------------------------------------------------------------------

def seg_rect_distance(a, b, r):
    x0, y0, x1, y1 = r

    def inside(p):
        return x0 < p[0] < x1 and y0 < p[1] < y1

    def pt_seg(p, u, v):
        dx, dy = v[0] - u[0], v[1] - u[1]
        l2 = dx * dx + dy * dy
        t = 0 if l2 == 0 else max(0.0, min(1.0, ((p[0] - u[0]) * dx + (p[1] - u[1]) * dy) / l2))
        return math.hypot(u[0] + t * dx - p[0], u[1] + t * dy - p[1])

    def cross(p, q, u, v):
        def o(a_, b_, c_):
            return (b_[0] - a_[0]) * (c_[1] - a_[1]) - (b_[1] - a_[1]) * (c_[0] - a_[0])
        return o(p, q, u) * o(p, q, v) < 0 and o(u, v, p) * o(u, v, q) < 0

    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    if inside(a) or inside(b) or any(cross(a, b, corners[k], corners[(k + 1) % 4]) for k in range(4)):
        return 0.0
    return min([pt_seg(c, a, b) for c in corners] +
               [pt_seg(p, corners[k], corners[(k + 1) % 4]) for p in (a, b) for k in range(4)])


@ac(7, "L-corridor funnel length and clearance")
def test_ac07_movement_around_corner():
    obs = to_obstacles(plan_of(l_corridor_doc()))
    graph = build_navigation(obs)
    c = 0.3
    route = route_for_point(graph, (-8.0, 1.0))
    path = funnel(route, c)
    ref = l_corner_reference((-8.0, 1.0), route.goal, (0.1, 1.9), c)
    assert abs(polyline_length(path) - ref) <= 0.01 * ref
    for a, b in zip(path, path[1:]):
        for r in obs.rectangles:
            assert seg_rect_distance(a, b, r) >= c - 1e-6
    # the walked trajectory keeps the body radius off the walls as well
    scene = Scene.build(plan_of(l_corridor_doc()))
    out = run_simulation(scene, None, ScenarioSample(0, 0.0, "ROOM_0", (person(0, -8.0, 1.0, "ROOM_0"),)),
                         EngineConfig(retain_frames=True))
    assert out.agents[0].status == "Escaped"
    for fr in out.frames:
        p = fr["agents"][0][1:3]
        assert min(seg_rect_distance(p, p, r) for r in obs.rectangles) >= 0.25 - 1e-6


# 8 -----------------------------------------------------------------------

@ac(8, "incapacitation time and smoke speed trace")
def test_ac08_visibility_and_incapacitation():
    # constant CO in a sealed room
    ppm = 2500.0
    plan = plan_of({"F": {"ROOM": [[[0, 0, 0], [4, 4, 3]]]}})
    hist = ingest_history(fire_csv({"ROOM_0": lambda t: {"CO_low_ppm": ppm}}, (0.0, 3600.0)))
    out = run_simulation(Scene.build(plan), hist,
                         ScenarioSample(0, 0.0, "ROOM_0", (person(0, 2.0, 2.0, "ROOM_0"),)))
    rate = 2.764e-5 * ppm ** 1.036 * math.exp(2.0004) / 7.1 + 1 / math.exp(8.13)
    t_star = 0.3 * 60 / rate
    stride = EngineConfig().env_update_stride * EngineConfig().dt
    assert t_star <= out.agents[0].incapacitated_time <= t_star + stride

    # rising optical density along a corridor
    scene = Scene.build(plan_of(corridor_doc(42.0)))
    hist = ingest_history(fire_csv({"COR_0": lambda t: {"OD_low": 0.02 * t}}, (0.0, 3600.0)))
    cfg = EngineConfig(retain_frames=True)
    out = run_simulation(scene, hist, ScenarioSample(0, 0.0, "COR_0", (person(0, 2.1, 1.0, "COR_0"),)), cfg)
    xs = [2.1] + [fr["agents"][0][1] for fr in out.frames]
    n_stride = cfg.env_update_stride
    checked = 0
    for s in range(1, len(xs)):
        if xs[s] > 38.0:
            break
        t_upd = ((s - 1) // n_stride) * n_stride * cfg.dt
        expected = walking_speed(1.2, extinction(0.02 * t_upd), SmokeSpeedParams(0.706, -0.057))
        assert abs((xs[s] - xs[s - 1]) / cfg.dt - expected) <= 1e-9
        checked += 1
    assert checked > 20 * n_stride


# 9 -----------------------------------------------------------------------

def run_orca(starts, goals, steps, dt=0.05, speed=1.2):
    pos = np.array(starts, float)
    goals = np.array(goals, float)
    n = len(pos)
    vel = np.zeros((n, 2))
    trace = [pos.copy()]
    for _ in range(steps):
        d = goals - pos
        dist = np.linalg.norm(d, axis=1)
        pref = np.where(dist[:, None] > 1e-9, d / np.maximum(dist, 1e-12)[:, None]
                        * np.minimum(speed, dist / dt)[:, None], 0.0)
        vel = orca_arrays(pos, vel, pref, np.full(n, 0.25), np.full(n, 1.5),
                          np.full(n, DYNAMIC), ObstacleField.empty(), dt)
        pos = pos + vel * dt
        trace.append(pos.copy())
    return np.array(trace)


def min_gap(trace, mask=None):
    worst = math.inf
    for k, pts in enumerate(trace):
        idx = range(pts.shape[0]) if mask is None else [i for i in range(pts.shape[0]) if mask[k][i]]
        for i, j in itertools.combinations(idx, 2):
            worst = min(worst, math.dist(pts[i], pts[j]))
    return worst


@ac(9, "collision-free head-on, cross and doorway; mirror symmetry")
def test_ac09_orca_suite():
    t0 = time.perf_counter()
    head = run_orca([(-5, 0), (5, 0)], [(10, 0), (-10, 0)], 300)
    assert min_gap(head) >= 0.5 - 1e-6
    assert np.abs(head[:, 0] + head[:, 1]).max() <= 1e-9

    cross = run_orca([(-5, 0), (5, 0), (0, -5), (0, 5)], [(5, 0), (-5, 0), (0, 5), (0, -5)], 400)
    assert min_gap(cross) >= 0.5 - 1e-6
    assert np.linalg.norm(cross[-1] - [(5, 0), (-5, 0), (0, 5), (0, -5)], axis=1).max() < 0.1

    plan = plan_of({"F": {"ROOM": [[[0, 0, 0], [5, 5, 3]]], "D": [[[5, 2, 0], [5, 3, 2]]]}})
    people = tuple(person(k, 1.0 + 1.0 * (k % 4), 1.0 + 1.0 * (k // 4), "ROOM_0") for k in range(10))
    out = run_simulation(Scene.build(plan), None, ScenarioSample(0, 0.0, "ROOM_0", people),
                         EngineConfig(retain_frames=True))
    assert all(a.status == "Escaped" for a in out.agents)
    trace = np.array([[p[1:3] for p in fr["agents"]] for fr in out.frames])
    present = [[p[3] != "Escaped" for p in fr["agents"]] for fr in out.frames]
    assert min_gap(trace, present) >= 0.5 - 1e-6
    assert time.perf_counter() - t0 < 30


# 10 ----------------------------------------------------------------------

def fixed_density_library(density):
    rows = dict(EXEMPLARY)
    rows["density_rooms"] = {"kind": "uniform", "p1": density, "p2": density}
    return parse_library({"version": 1, "default": "x", "presets": {"x": rows}})


@pytest.mark.slow
@ac(10, "mean RSET does not fall when occupancy rises 20 -> 60")
def test_ac10_congestion():
    t0 = time.perf_counter()
    plan = plan_of({"F": {"ROOM": [[[0, 0, 0], [10, 8, 3]]], "D": [[[10, 3.5, 0], [10, 4.5, 2]]]}})
    scene = Scene.build(plan)
    means = {}
    for count, density in ((20, 4.0), (60, 1.33)):
        lib = fixed_density_library(density)
        rsets = []
        for seed in range(50):
            sample = sample_scenario(seed, plan, lib, "ROOM_0")
            assert len(sample.agents) == count
            out = run_simulation(scene, None, sample)
            assert all(a.status == "Escaped" for a in out.agents)
            rsets.append(out.rset)
        means[count] = sum(rsets) / len(rsets)
    assert means[60] >= means[20]
    assert time.perf_counter() - t0 < 300


# 11 ----------------------------------------------------------------------

@ac(11, "removing an exit mid-run reroutes affected agents")
def test_ac11_dynamic_exits():
    plan = plan_of({"F": {"COR": [[[0, 0, 0], [20, 3, 3]]],
                          "D": [[[20, 1, 0], [20, 2, 2]], [[0, 1, 0], [0, 2, 2]]]}})
    scene = Scene.build(plan)
    people = tuple(person(k, 11.0 + 1.0 * (k % 6), 0.6 + 0.9 * (k // 6), "COR_0") for k in range(18))
    sample = ScenarioSample(0, 0.0, "COR_0", people)
    free = run_simulation(scene, None, sample)
    assert all(a.exit_id == "D_0" for a in free.agents)
    t_cut = 3.0
    out = run_simulation(scene, None, sample, EngineConfig(retain_frames=True), [ExitEvent(t_cut, "D_0")])
    affected = [a for a in free.agents if a.egress_time > t_cut]
    assert affected
    for a in out.agents:
        assert a.status == "Escaped"
        if a.egress_time > t_cut:
            assert a.exit_id == "D_1"
    # after the cut nobody makes further progress towards the removed exit for long
    xs = np.array([[p[1] for p in fr["agents"]] for fr in out.frames])
    k = int(round(t_cut / 0.05))
    late = xs[k + 40:]
    assert (late.max(axis=0) <= xs[k] + 0.5).all()


# 12 ----------------------------------------------------------------------

def write_project(tmp_path):
    (tmp_path / "plan.json").write_text(json.dumps(listing_variant()))
    (tmp_path / "fire.csv").write_text(fire_csv({c: (lambda t: {"CO_low_ppm": 4.0 * t, "OD_low": 0.001 * t})
                                                for c in ("ROOM_0", "ROOM_1", "COR_0")},
                                               (0.0, 600.0, 1800.0)))
    (tmp_path / "project.json").write_text(json.dumps(
        {"floor_plan": "plan.json", "fire_history": "fire.csv", "fire_origin": "ROOM_1"}))
    return str(tmp_path / "project.json")


@ac(12, "determinism across worker counts; 100 agents x 1200 steps under 60 s")
def test_ac12_determinism_and_scaling(tmp_path):
    cfg = write_project(tmp_path)
    dirs = []
    for w in (1, 2):
        d = tmp_path / f"w{w}"
        assert main(["batch", "--config", cfg, "-n", "3", "--seed", "5", "--workers", str(w),
                     "--out", str(d), "--frames"]) == 0
        dirs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert dirs[0] == dirs[1]
    assert {"frames_5.jsonl", "frames_6.jsonl", "frames_7.jsonl"} <= set(dirs[0])
    for tag in ("r1", "r2"):
        assert main(["run", "--config", cfg, "--seed", "6", "--out", str(tmp_path / tag)]) == 0
    for name in ("outcome_6.json", "frames_6.jsonl", "sample_6.json"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    assert (tmp_path / "r1" / "frames_6.jsonl").read_bytes() == dirs[0]["frames_6.jsonl"]

    plan = plan_of({"F": {"ROOM": [[[0, 0, 0], [20, 20, 3]]], "D": [[[20, 9.5, 0], [20, 10.5, 2]]]}})
    scene = Scene.build(plan)
    people = tuple(person(k, 1.0 + 1.8 * (k % 10), 1.0 + 1.8 * (k // 10), "ROOM_0") for k in range(100))
    sample = ScenarioSample(0, 0.0, "ROOM_0", people)
    run_simulation(scene, None, ScenarioSample(0, 0.0, "ROOM_0", people[:2]), EngineConfig(max_sim_time=0.1))
    t0 = time.perf_counter()
    out = run_simulation(scene, None, sample, EngineConfig(max_sim_time=60.0))
    elapsed = time.perf_counter() - t0
    assert out.steps == 1200
    print(f"100 agents x 1200 steps: {elapsed:.1f} s")
    assert elapsed < 60


# 13 ----------------------------------------------------------------------

@ac(13, "empty-circumcircle property on random point sets")
def test_ac13_delaunay_oracle():
    rng = np.random.default_rng(13)
    for k in range(20):
        n = int(rng.integers(3, 201))
        pts = rng.random((n, 2)) * 10 if k % 2 else np.round(rng.random((n, 2)) * 8) / 2
        pts = np.unique(pts, axis=0)
        mesh = triangulate(pts)
        assert delaunay_violations(mesh, 1e-9) == 0
