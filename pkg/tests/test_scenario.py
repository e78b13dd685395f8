import math
from pathlib import Path

import pytest

from platoonsim.scenario import (
    Scenario,
    ScenarioError,
    apply_overrides,
    build_scenario,
    fixture_path,
    load_scenario,
    parse_scenario_text,
)

MINIMAL = """\
scenario v1
name = demo
map = straight.lanemap
duration = 2.0
seed = 5

[vehicle leader]
start_arc = 1.2

[vehicle follower]
follows = leader
start_arc = 0.3

[leader_profile]
0.0 0.5
2.0 0.5
"""


def _build(text=MINIMAL, **over):
    raw = parse_scenario_text(text)
    if over:
        raw = apply_overrides(raw, over)
    return build_scenario(raw, base_dir=fixture_path("straight.lanemap").parent)


def test_parse_minimal():
    sc = _build()
    assert sc.name == "demo"
    assert sc.duration == 2.0
    assert [v.name for v in sc.vehicles] == ["leader", "follower"]
    assert sc.vehicles[1].controller is not None
    assert sc.profile == ((0.0, 0.5), (2.0, 0.5))


def test_defaults_applied():
    sc = _build()
    assert sc.channel.rate_hz == 20.0
    assert sc.channel.loss_prob == 0.05
    assert sc.sensors.gps_rate_hz == 2.0
    assert sc.switching.mode == "approximation_only"
    assert sc.pursuit.lookahead == 0.4
    assert sc.vehicles[0].params.tau == pytest.approx(0.0661)
    assert sc.vehicles[0].params.tau_d == pytest.approx(0.04)


def test_bad_header_rejected():
    with pytest.raises(ScenarioError):
        parse_scenario_text("scenario v2\nname = x\n")


def test_empty_file_rejected():
    with pytest.raises(ScenarioError):
        parse_scenario_text("   \n# just a comment\n")


def test_unknown_switching_mode_rejected():
    with pytest.raises(ScenarioError):
        _build(**{"switching.mode": "psychic"})


def test_missing_start_arc_rejected():
    text = MINIMAL.replace("start_arc = 1.2\n", "")
    with pytest.raises(ScenarioError):
        _build(text)


def test_missing_profile_rejected():
    text = MINIMAL.split("[leader_profile]")[0]
    with pytest.raises(ScenarioError):
        _build(text)


def test_band_parsing():
    sc = _build(**{"switching.band": "0.55 0.65", "switching.mode": "range_with_fallback"})
    assert sc.switching.band == (0.55, 0.65)
    assert _build(**{"switching.band": "none"}).switching.band is None


def test_profile_must_be_monotone_in_time():
    bad = MINIMAL.replace("0.0 0.5\n2.0 0.5", "2.0 0.5\n1.0 0.5")
    with pytest.raises(ScenarioError):
        _build(bad)


def test_profile_speeds_non_negative():
    bad = MINIMAL.replace("0.0 0.5", "0.0 -0.5")
    with pytest.raises(ScenarioError):
        _build(bad)


def test_leader_must_start_ahead():
    with pytest.raises(ScenarioError):
        _build(**{"vehicle leader.start_arc": "0.1"})


def test_leader_ahead_across_loop_seam():
    # on a closed map the leader may sit just past the seam, numerically
    # "behind" in raw arc but ahead along the path
    text = MINIMAL.replace("straight.lanemap", "oval.lanemap")
    sc = _build(text, **{"vehicle leader.start_arc": "0.2", "vehicle follower.start_arc": "18.2"})
    assert sc.vehicles[0].name == "leader"


def test_exactly_one_leader():
    text = MINIMAL.replace("follows = leader\n", "")
    with pytest.raises(ScenarioError):
        _build(text)


def test_unknown_predecessor_rejected():
    with pytest.raises(ScenarioError):
        _build(**{"vehicle follower.follows": "ghost"})


def test_override_top_level_and_nested():
    sc = _build(duration="7.5", **{"vehicle follower.kp": "3.5"})
    assert sc.duration == 7.5
    assert sc.vehicles[1].controller.kp == 3.5


def test_override_unknown_section_rejected():
    with pytest.raises(ScenarioError):
        _build(**{"nosuch.key": "1"})


def test_profile_interpolation():
    sc = _build()
    assert sc.profile_speed(-1.0) == 0.5
    assert sc.profile_speed(10.0) == 0.5
    sc2 = _build(MINIMAL.replace("0.0 0.5\n2.0 0.5", "0.0 0.0\n2.0 1.0"))
    assert sc2.profile_speed(0.5) == pytest.approx(0.25)
    assert sc2.profile_slope(0.5) == pytest.approx(0.5)
    assert sc2.profile_slope(3.0) == 0.0


def test_constant_profile():
    text = MINIMAL.replace("0.0 0.5\n2.0 0.5", "constant = 0.4")
    sc = _build(text)
    assert sc.profile_speed(0.0) == 0.4
    assert sc.profile_slope(1.0) == 0.0


def test_load_fixture_by_name_and_seed_override():
    sc = load_scenario("exp1_approx_only", seed=123)
    assert sc.name == "exp1_approx_only"
    assert sc.seed == 123
    assert sc.lane_map.closed


def test_load_missing_scenario_errors():
    with pytest.raises(ScenarioError):
        load_scenario("no_such_scenario_anywhere")


def test_all_shipped_fixtures_validate():
    for name in ("exp1_approx_only", "exp2_switching", "straight_line_sanity", "accuracy_sweep"):
        sc = load_scenario(name)
        assert sc.duration > 0
        assert sc.name == name
