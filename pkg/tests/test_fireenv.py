import math
import random

import pytest
from hypothesis import given, strategies as st

from evacsim.fireenv import (AMBIENT, COLUMNS, FedState, FireHistoryError, Health,
                             LocalConditions, SmokeSpeedParams, conditions_at, extinction,
                             fed_increment, health_effect, ingest_history, walking_speed)

HEADER = ",".join(COLUMNS)
TABLE2 = SmokeSpeedParams(0.706, -0.057)


def row(t, comp="ROOM_0", h=2.5, co=0.0, od=(0.0, 0.0), o2=20.9, **kw):
    vals = {"t_s": t, "comp": comp, "h_layer_m": h, "T_up_C": 20, "T_low_C": 20,
            "OD_up": od[0], "OD_low": od[1], "CO_up_ppm": co, "CO_low_ppm": co,
            "HCN_up_ppm": 0, "HCN_low_ppm": 0, "HCl_up_ppm": 0, "HCl_low_ppm": 0,
            "CO2_up_pct": 0, "CO2_low_pct": 0, "O2_up_pct": o2, "O2_low_pct": o2}
    vals.update(kw)
    return ",".join(str(vals[c]) for c in COLUMNS)


def csv_text(*rows):
    return "\n".join([HEADER, *rows]) + "\n"


def test_linear_interpolation_and_clamp():
    h = ingest_history(csv_text(row(0, co=0), row(10, co=1000)))
    assert conditions_at(h, "ROOM_0", 5.0).CO == 500.0
    assert conditions_at(h, "ROOM_0", 99.0).CO == 1000.0
    assert conditions_at(h, "ROOM_0", -1.0).CO == 0.0


def test_randomized_two_point_formula():
    rnd = random.Random(11)
    times = sorted(rnd.sample(range(0, 600), 8))
    values = [rnd.uniform(0, 5000) for _ in times]
    h = ingest_history(csv_text(*(row(t, co=v) for t, v in zip(times, values))))
    for _ in range(20):
        t = rnd.uniform(times[0], times[-1])
        k = max(i for i in range(len(times)) if times[i] <= t)
        k = min(k, len(times) - 2)
        t0, t1 = times[k], times[k + 1]
        expected = values[k] + (t - t0) / (t1 - t0) * (values[k + 1] - values[k])
        assert h.record("ROOM_0", t)["CO_low_ppm"] == pytest.approx(expected, abs=1e-12, rel=1e-12)


@pytest.mark.parametrize("text, msg", [
    ("a,b\n1,2\n", "header"),
    (csv_text(row(0, co=-1)), "negative"),
    (csv_text(row(5), row(5)), "not increasing"),
    (csv_text(row(5), row(2)), "not increasing"),
    (csv_text(row(0, o2=21.5)), "above"),
    (HEADER + "\n", "no records"),
])
def test_schema_errors(text, msg):
    with pytest.raises(FireHistoryError, match=msg):
        ingest_history(text)


@pytest.mark.parametrize("layer, upper", [(2.5, False), (1.0, True), (1.8, True)])
def test_breathing_height_selects_layer(layer, upper):
    h = ingest_history(csv_text(row(0, h=layer, od=(1.0, 0.0))))
    c = conditions_at(h, "ROOM_0", 0.0, 1.8)
    assert c.Ks == (pytest.approx(math.log(10)) if upper else 0.0)


def test_unknown_compartment():
    h = ingest_history(csv_text(row(0)))
    with pytest.raises(KeyError):
        conditions_at(h, "COR_9", 0.0)


@pytest.mark.parametrize("od, ks", [(0.0, 0.0), (1.0, 2.302585), (0.5, 1.151293)])
def test_extinction(od, ks):
    assert extinction(od) == pytest.approx(ks, abs=1e-6)


def test_extinction_rejects_negative():
    with pytest.raises(ValueError):
        extinction(-0.1)


def test_walking_speed_points():
    assert walking_speed(1.2, 0.0, TABLE2) == 1.2
    assert walking_speed(1.2, 3.0, TABLE2) == pytest.approx(1.2 * (1 - 0.057 / 0.706 * 3))
    assert 1 + (-0.057 / 0.706) * 20 < 0.1
    assert walking_speed(1.2, 20.0, TABLE2) == pytest.approx(0.12, abs=1e-12)
    with pytest.raises(ValueError):
        walking_speed(1.2, 1.0, SmokeSpeedParams(0.0, -0.05))


@given(st.floats(0.1, 3.0), st.floats(0.0, 50.0), st.floats(0.5, 1.0), st.floats(-0.1, -1e-4))
def test_walking_speed_bounds(v, ks, alpha, beta):
    s = walking_speed(v, ks, SmokeSpeedParams(alpha, beta))
    assert 0.1 * v - 1e-12 <= s <= v
    assert (s == v) == (ks == 0.0 or v * (1 + beta / alpha * ks) >= v)


def test_ambient_dose_is_only_oxygen_baseline():
    st_ = fed_increment(FedState(), AMBIENT, 1.0)
    assert st_.fed_co == st_.fed_hcn == st_.fed_hcl == 0.0
    assert st_.fed_total == pytest.approx(1 / (60 * math.exp(8.13)), rel=1e-12)


def test_constant_co_one_minute():
    c = LocalConditions(0.0, 20.0, 1000.0, 0.0, 0.0, 0.0, 20.9)
    s = FedState()
    for _ in range(60):
        s = fed_increment(s, c, 1.0)
    assert s.fed_co == pytest.approx(2.764e-5 * 1000 ** 1.036, rel=1e-12)


def test_hcn_dose_is_never_negative():
    for c in (0.0, 0.1, 1.0, 5.0):
        s = fed_increment(FedState(), LocalConditions(0, 20, 0, c, 0, 0, 20.9), 60.0)
        assert s.fed_hcn >= 0.0


def test_total_uses_current_hyperventilation():
    s = fed_increment(FedState(), LocalConditions(0, 20, 500, 0, 0, 0.0, 20.9), 60.0)
    s2 = fed_increment(s, LocalConditions(0, 20, 0, 0, 0, 5.0, 20.9), 1.0)
    hv = math.exp(0.1903 * 5 + 2.0004) / 7.1
    assert s2.fed_total == pytest.approx((s2.fed_co + s2.fed_hcn + s2.fed_hcl) * hv + s2.fed_o2)


conc = st.builds(LocalConditions, st.just(0.0), st.just(20.0), st.floats(0, 8000),
                 st.floats(0, 200), st.floats(0, 500), st.floats(0, 10), st.floats(5, 20.9))


@given(st.lists(conc, min_size=1, max_size=10))
def test_components_are_monotone(seq):
    s = FedState()
    for c in seq:
        nxt = fed_increment(s, c, 1.0)
        assert nxt.fed_co >= s.fed_co and nxt.fed_hcn >= s.fed_hcn
        assert nxt.fed_hcl >= s.fed_hcl and nxt.fed_o2 >= s.fed_o2
        s = nxt


def test_rectangle_rule_converges_linearly():
    def co(t):
        return 3000 * t / 120

    def run(dt):
        s = FedState()
        n = round(120 / dt)
        for k in range(n):
            s = fed_increment(s, LocalConditions(0, 20, co(k * dt), 0, 0, 0, 20.9), dt)
        return s.fed_co

    fine = run(0.01)
    e1, e2 = abs(run(2.0) - fine), abs(run(1.0) - fine)
    assert 1.7 < e1 / e2 < 2.3


@pytest.mark.parametrize("fed, cat", [
    (0.0, Health.MINOR), (0.005, Health.MINOR), (0.01, Health.LOW), (0.2999, Health.LOW),
    (0.3, Health.HEAVY), (0.999, Health.HEAVY), (1.0, Health.LETHAL), (7.0, Health.LETHAL)])
def test_health_effect(fed, cat):
    assert health_effect(fed) is cat
