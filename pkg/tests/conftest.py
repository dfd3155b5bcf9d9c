import json

import pytest

from evacsim.geometry import parse_floor_plan

REFERENCE_LISTING = """{
"FLOOR 1":
    {
      "ROOM": [
        [ [ 3.0 , 4.8 , 0.0 ] , [ 4.8 , 6.5 , 3.0 ] ] ,
        [ [ 3.0 , 6.5 , 0.0 ] , [ 6.8 , 7.4 , 3.0 ] ]
      ] ,
      "COR": [
        [ [ 6.2 , 0.2 , 0.0 ] , [ 7.6 , 4.8 , 3.0 ] ]
      ] ,
      "D": [
        [ [ 3.9 , 3.4 , 0.0 ] , [ 4.8 , 3.4 , 2.0 ] ]
      ] ,
      "W": [
        [ [ 1.2 , 3.4 , 1.0 ] , [ 2.2 , 3.4 , 2.0 ] ]
      ] ,
      "HOLE": [
        [ [ 3.0 , 6.5 , 0.0 ] , [ 4.8 , 6.5 , 3.0 ] ]
      ]
    }
}"""


def listing_variant():
    """The listing with its door on ROOM_0's south face plus an exit for the corridor."""
    doc = json.loads(REFERENCE_LISTING)
    doc["FLOOR 1"]["D"] = [[[3.9, 4.8, 0.0], [4.8, 4.8, 2.0]],
                           [[6.5, 0.2, 0.0], [7.3, 0.2, 2.0]]]
    return doc


def plan_of(doc):
    return parse_floor_plan(json.dumps(doc))


def corridor_doc(length=42.0, width=2.0):
    return {"F": {"COR": [[[0, 0, 0], [length, width, 3]]],
                  "D": [[[length, width / 2 - 0.5, 0], [length, width / 2 + 0.5, 2]]]}}


def l_corridor_doc():
    return {"F": {"ROOM": [[[-10, 0, 0], [2, 2, 3]], [[0, 2, 0], [2, 10, 3]]],
                  "HOLE": [[[0, 2, 0], [2, 2, 3]]],
                  "D": [[[0.5, 10, 0], [1.5, 10, 2]]]}}


# acceptance summary: one line per criterion
_AC = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): numbered acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    ac = getattr(report, "_ac", None)
    if ac is None:
        return
    n, title = ac
    prev = _AC.get(n, (title, True))
    _AC[n] = (title, prev[1] and report.outcome == "passed")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None:
        rep._ac = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _AC:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_AC):
        title, ok = _AC[n]
        terminalreporter.write_line(f"AC-{n:02d} {'PASS' if ok else 'FAIL'}  {title}")
