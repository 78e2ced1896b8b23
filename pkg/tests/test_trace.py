import math

import pytest

from qcpto.errors import ConfigError, InvariantError, ParseError
from qcpto.model import VehicleState
from qcpto.trace import (CSV_HEADER, ScenarioConfig, SlotRecord, Trace,
                         load_trace, save_trace, synth_intersection)


def write(tmp_path, body):
    path = tmp_path / "trace.csv"
    path.write_text(body, encoding="utf-8")
    return path


def test_load_two_rows_one_vehicle(tmp_path):
    path = write(tmp_path, f"{CSV_HEADER}\n0,7,1.5,2.5,0.0,3.0\n1,7,4.5,2.5,0.0,3.0\n")
    trace = load_trace(path, delta=1.0)
    assert trace.n_slots == 2
    assert trace.records[0].states[0].user_id == 7
    assert trace.records[1].states[0].position == (4.5, 2.5)


def test_load_duplicate_row_raises_parse_error(tmp_path):
    path = write(tmp_path, f"{CSV_HEADER}\n0,7,1.0,2.0,0.0,3.0\n0,7,1.1,2.0,0.0,3.0\n")
    with pytest.raises(ParseError) as err:
        load_trace(path, delta=1.0)
    assert err.value.line == 3


def test_load_empty_file(tmp_path):
    path = write(tmp_path, "")
    assert load_trace(path, delta=1.0).n_slots == 0


def test_load_header_only(tmp_path):
    path = write(tmp_path, CSV_HEADER + "\n")
    assert load_trace(path, delta=1.0).n_slots == 0


def test_load_bad_field_count(tmp_path):
    path = write(tmp_path, f"{CSV_HEADER}\n0,7,1.0,2.0,0.0\n")
    with pytest.raises(ParseError):
        load_trace(path, delta=1.0)


def test_load_bad_header(tmp_path):
    path = write(tmp_path, "a,b,c\n")
    with pytest.raises(ParseError) as err:
        load_trace(path, delta=1.0)
    assert err.value.line == 1


def test_load_decreasing_slots_raise_invariant_error(tmp_path):
    path = write(tmp_path, f"{CSV_HEADER}\n1,7,1.0,2.0,0.0,3.0\n0,7,0.0,2.0,0.0,3.0\n")
    with pytest.raises(InvariantError):
        load_trace(path, delta=1.0)


def test_load_fills_interior_gap_with_empty_slot(tmp_path):
    path = write(tmp_path, f"{CSV_HEADER}\n0,1,1.0,1.0,0.0,2.0\n2,1,5.0,1.0,0.0,2.0\n")
    trace = load_trace(path, delta=1.0)
    assert trace.n_slots == 3
    assert trace.records[1].states == ()


def test_load_speed_consistency_check(tmp_path):
    path = write(tmp_path, f"{CSV_HEADER}\n0,1,0.0,0.0,0.0,2.0\n1,1,50.0,0.0,0.0,2.0\n")
    with pytest.raises(InvariantError):
        load_trace(path, delta=1.0, max_speed=10.0)


def test_save_load_round_trip(tmp_path):
    hand = Trace((
        SlotRecord(0, (VehicleState(0, (0.125, 7.0), 0.3, 4.0, 0),)),
        SlotRecord(1, (VehicleState(0, (1.375, 7.0), 0.3, 4.0, 1),
                       VehicleState(2, (9.0, -1.0), 5.9, 2.0, 1))),
    ))
    path = tmp_path / "rt.csv"
    save_trace(hand, path)
    assert load_trace(path, delta=1.0) == hand

    synth = synth_intersection(ScenarioConfig(n_vehicles=6), 4).trim()
    save_trace(synth, path)
    assert load_trace(path, delta=1.0) == synth


def test_duplicate_user_in_slot_record_rejected():
    with pytest.raises(InvariantError):
        SlotRecord(0, (VehicleState(1, (0, 0), 0, 1, 0),
                       VehicleState(1, (1, 0), 0, 1, 0)))


def test_trace_requires_contiguous_slots():
    with pytest.raises(InvariantError):
        Trace((SlotRecord(0, ()), SlotRecord(2, ())))


def test_synth_is_deterministic():
    cfg = ScenarioConfig(n_vehicles=10)
    assert synth_intersection(cfg, 42) == synth_intersection(cfg, 42)
    assert synth_intersection(cfg, 42) != synth_intersection(cfg, 43)


def test_synth_zero_vehicles_gives_empty_slots():
    trace = synth_intersection(ScenarioConfig(n_vehicles=0), 1)
    assert trace.n_slots == 60
    assert all(rec.states == () for rec in trace.records)


def test_synth_right_turn_heading_change():
    cfg = ScenarioConfig(n_vehicles=1, turn_probs=(0, 1, 0), recirculate=False)
    trace = synth_intersection(cfg, 7)
    states = [s for rec in trace.records for s in rec.states]
    assert states
    diff = ((states[-1].heading - states[0].heading + math.pi) % (2 * math.pi)
            - math.pi)
    assert diff == pytest.approx(-math.pi / 2, abs=0.1)


def test_synth_respects_speed_limit():
    cfg = ScenarioConfig(n_vehicles=20)
    trace = synth_intersection(cfg, 9)
    assert all(s.speed <= cfg.max_speed + 1e-9
               for rec in trace.records for s in rec.states)
    assert trace.speed_violations(cfg.max_speed, cfg.delta) == []


def test_synth_positions_stay_in_region():
    cfg = ScenarioConfig(n_vehicles=25)
    trace = synth_intersection(cfg, 13)
    for rec in trace.records:
        for s in rec.states:
            assert -1e-9 <= s.position[0] <= cfg.region_w + 1e-9
            assert -1e-9 <= s.position[1] <= cfg.region_h + 1e-9


def test_scenario_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        ScenarioConfig(region_w=-5.0)
    with pytest.raises(ConfigError):
        ScenarioConfig(duration=0.0)
