import json

import pytest

from neckmotion.chintuck_engine import DEFAULT_LEVELS, ChinTuckConfig
from neckmotion.errors import (
    ConfigParseError,
    ConfigurationError,
    InvalidArgumentError,
    LogIntegrityError,
    SchemaVersionError,
    StreamOrderError,
)
from neckmotion.events import EventKind, make_event
from neckmotion.pose_core import UnitQuat, Vec3
from neckmotion.rom_engine import Direction, LateralMapping, RomConfig, Side
from neckmotion.session import replay
from neckmotion.session_io import (
    build_log,
    config_to_dict,
    dumps_canonical,
    dumps_log,
    load_config,
    loads_log,
    log_filename,
    parse_config,
    read_calibration,
    read_log,
    read_trace,
    read_trace_lines,
    sample_to_record,
    summarize,
    wave_outcomes,
    write_calibration,
    write_config,
    write_log,
    write_trace,
)
from neckmotion.trace_synth import synth_chintuck, synth_rom
from conftest import pose

STARTED_AT = "2025-01-01T12:00:00+00:00"


# ========== 规范化 JSON ==========

def test_floats_have_six_decimals():
    assert dumps_canonical({"a": 1.5, "b": 2, "c": 1e-7}, indent=None) == '{"a": 1.500000, "b": 2, "c": 0.000000}'


def test_negative_zero_is_normalized():
    assert dumps_canonical([-0.0, -0.0000001], indent=None) == "[0.000000, 0.000000]"


def test_non_finite_float_rejected():
    with pytest.raises(InvalidArgumentError):
        dumps_canonical({"x": float("inf")})


def test_canonical_is_stable_through_parse():
    value = {"t": 0.1, "nested": {"xs": [1.25, -3.0], "name": "头"}, "flag": True, "none": None}
    text = dumps_canonical(value)
    assert dumps_canonical(json.loads(text)) == text


# ========== 配置 ==========

def test_empty_object_gives_defaults():
    assert parse_config({}, "chintuck") == ChinTuckConfig()
    assert parse_config({}, "rom") == RomConfig()


def test_empty_levels_violation():
    with pytest.raises(ConfigurationError) as e:
        parse_config({"levels": []}, "chintuck")
    assert "levels: non-empty required" in e.value.violations


def test_unknown_keys_are_listed():
    with pytest.raises(ConfigurationError) as e:
        parse_config({"hp": 10, "levels": [{"hold_duration": 1.0, "wave_count": 1, "extra": 0}]}, "chintuck")
    assert "hp: unknown key" in e.value.violations
    assert "levels[0].extra: unknown key" in e.value.violations


def test_non_integer_wave_count():
    with pytest.raises(ConfigurationError) as e:
        parse_config({"levels": [{"hold_duration": 1.0, "wave_count": 1.5}]}, "chintuck")
    assert any("levels[0].wave_count" in v for v in e.value.violations)


def test_rom_enums_parsed():
    config = parse_config(
        {"lateral_mapping": "GameplayRollMax", "first_side": "Right", "path_order": ["Down", "Up", "Left", "Right", "TopLeft", "BottomRight"]},
        "rom",
    )
    assert config.lateral_mapping is LateralMapping.GAMEPLAY_ROLL_MAX
    assert config.first_side is Side.RIGHT
    assert config.path_order[0] is Direction.DOWN


def test_rom_bad_enum_value():
    with pytest.raises(ConfigurationError) as e:
        parse_config({"first_side": "Up"}, "rom")
    assert e.value.violations[0].startswith("first_side:")


def test_unknown_game():
    with pytest.raises(InvalidArgumentError):
        parse_config({}, "pong")


def test_config_parse_error_has_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "hp_max": 100,\n  "rest_duration": \n}\n', encoding="utf-8")
    with pytest.raises(ConfigParseError) as e:
        load_config(str(path), "chintuck")
    assert e.value.line == 4
    assert e.value.column == 1


def test_config_file_round_trip(tmp_path):
    config = ChinTuckConfig(rest_duration=4.0, levels=DEFAULT_LEVELS[:2])
    path = str(tmp_path / "config.json")
    write_config(config, path)
    assert load_config(path, "chintuck") == config
    assert config_to_dict(config)["levels"][1] == {"hold_duration": 7.0, "wave_count": 5, "perfect_to_win": None}


# ========== 轨迹 ==========

def test_trace_round_trip(tmp_path):
    samples = [
        pose(0.0),
        pose(0.1, position=Vec3(0.0, 1.2, 0.01)),
        pose(0.2, orientation=UnitQuat.from_axis_angle(Vec3(0, 1, 0), 12.0), button="A"),
    ]
    path = str(tmp_path / "trace.jsonl")
    assert write_trace(samples, path) == 3
    loaded = list(read_trace(path))
    assert [s.t for s in loaded] == [0.0, 0.1, 0.2]
    assert loaded[2].button == "A"
    assert loaded[0].button is None
    assert loaded[1].position.z == pytest.approx(0.01)
    assert sample_to_record(loaded[2])["qw"] == pytest.approx(samples[2].orientation.w, abs=1e-6)


def test_decreasing_timestamp_reports_index():
    lines = [json.dumps(sample_to_record(pose(t))) for t in (0.0, 0.1, 0.05)]
    with pytest.raises(StreamOrderError) as e:
        list(read_trace_lines(lines))
    assert e.value.index == 2


def test_empty_trace(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert list(read_trace(str(path))) == []


def test_blank_lines_are_skipped():
    lines = ["", json.dumps(sample_to_record(pose(0.0))), "   "]
    assert len(list(read_trace_lines(lines))) == 1


def test_quaternion_outside_tolerance_rejected():
    record = sample_to_record(pose(0.0))
    record["qw"] = 1.01
    with pytest.raises(InvalidArgumentError):
        list(read_trace_lines([json.dumps(record)]))


def test_quaternion_within_tolerance_is_renormalized():
    record = sample_to_record(pose(0.0))
    record["qw"] = 1.0005
    sample = next(read_trace_lines([json.dumps(record)]))
    assert sample.orientation.norm() == pytest.approx(1.0)


def test_missing_field_rejected():
    record = sample_to_record(pose(0.0))
    del record["pz"]
    with pytest.raises(InvalidArgumentError):
        list(read_trace_lines([json.dumps(record)]))


# ========== 会话日志 ==========

@pytest.fixture
def chintuck_log(short_config, compliant):
    session = replay(short_config, synth_chintuck(compliant, short_config).samples, started_at=STARTED_AT)
    return session.finalize()


def test_log_round_trip(tmp_path, chintuck_log):
    path = str(tmp_path / "log.json")
    write_log(chintuck_log, path)
    loaded = read_log(path)
    assert [e.kind for e in loaded.events] == [e.kind for e in chintuck_log.events]
    assert dumps_log(loaded) == dumps_log(chintuck_log)


def test_log_header_fields(chintuck_log):
    header = json.loads(dumps_log(chintuck_log))["header"]
    assert header["game_id"] == "chintuck"
    assert header["schema_version"] == "1.0"
    assert header["started_at"] == STARTED_AT
    assert "calibration" not in header


def test_log_schema_version_mismatch(chintuck_log):
    data = json.loads(dumps_log(chintuck_log))
    data["header"]["schema_version"] = "0.9"
    with pytest.raises(SchemaVersionError):
        loads_log(json.dumps(data))


def test_log_tampered_summary(chintuck_log):
    data = json.loads(dumps_log(chintuck_log))
    data["summary"]["perfect_per_level"][0] += 1
    with pytest.raises(LogIntegrityError):
        loads_log(json.dumps(data))


def test_log_missing_header():
    with pytest.raises(InvalidArgumentError):
        loads_log('{"events": [], "summary": {}}')


def test_rom_log_carries_calibration(tmp_path, short_rom_config, compliant):
    session = replay(short_rom_config, synth_rom(compliant, short_rom_config).samples, started_at=STARTED_AT)
    path = str(tmp_path / "rom.json")
    write_log(session.finalize(), path)
    calibration = read_calibration(path)
    assert set(calibration.points) == set(Direction)


# ========== 摘要 ==========

def test_summarize_empty():
    summary = summarize([], "chintuck", 3)
    assert summary["perfect_per_level"] == [0, 0, 0]
    assert summary["waves_failed"] == 0
    assert summary["duration_s"] == 0.0
    assert summary["outcome"] == "in_progress"


def test_summarize_empty_rom():
    summary = summarize([], "rom")
    assert summary["angles"]["flexion"] == 0.0
    assert summary["tilts_left"] == summary["tilts_right"] == 0


def test_summarize_infers_game():
    events = [
        make_event(3.0, EventKind.CALIBRATED, samples=11),
        make_event(6.0, EventKind.WAVE_START, level=0, wave=0),
        make_event(12.0, EventKind.TUCK_PERFECT, level=0, wave=0, hold=5.0, perfect_count=1),
    ]
    summary = summarize(events)
    assert summary["game"] == "chintuck"
    assert summary["perfect_per_level"] == [1]
    assert summary["duration_s"] == pytest.approx(9.0)
    assert summary["completion_min"] == pytest.approx(0.15)


def test_wave_outcomes_marks_pending():
    events = [
        make_event(6.0, EventKind.WAVE_START, level=0, wave=0),
        make_event(8.0, EventKind.TUCK_PARTIAL, level=0, wave=0, hold=2.0),
        make_event(14.0, EventKind.WAVE_FAILED, level=0, wave=0, hp=80),
        make_event(27.0, EventKind.WAVE_START, level=0, wave=1),
    ]
    assert wave_outcomes(events) == [
        {"level": 0, "wave": 0, "outcome": "partial"},
        {"level": 0, "wave": 1, "outcome": "pending"},
    ]


# ========== 校准文件 ==========

def test_calibration_file_round_trip(tmp_path, short_rom_config, compliant):
    session = replay(short_rom_config, synth_rom(compliant, short_rom_config).samples)
    path = str(tmp_path / "calibration.json")
    write_calibration(session.calibration(), path)
    loaded = read_calibration(path)
    for direction in Direction:
        original = session.calibration().points[direction].forward
        assert loaded.points[direction].forward.as_tuple() == pytest.approx(original.as_tuple(), abs=1e-6)


def test_chintuck_log_has_no_calibration(tmp_path, chintuck_log):
    path = str(tmp_path / "log.json")
    write_log(chintuck_log, path)
    with pytest.raises(InvalidArgumentError):
        read_calibration(path)


def test_log_filename():
    assert log_filename("rom", STARTED_AT, 7) == "rom-20250101T1200000000-0007.json"


def test_build_log_level_count_from_config(short_config):
    log = build_log("chintuck", short_config, STARTED_AT, [])
    assert log.summary["perfect_per_level"] == [0, 0]
