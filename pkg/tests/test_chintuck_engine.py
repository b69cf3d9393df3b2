import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neckmotion.chintuck_engine import (
    TERMINAL_PHASES,
    ChinTuckConfig,
    ChinTuckEngine,
    ChinTuckPhase,
    LevelSpec,
    Outcome,
    new_engine,
)
from neckmotion.errors import ConfigurationError, EngineStateError, InvalidArgumentError, StreamOrderError
from neckmotion.events import EventKind
from neckmotion.pose_core import REFERENCE_UP, Vec3
from conftest import about, backward, pose

RATE = 10
# 默认配置下：t=3 校准完成，倒计时到 t=6，第一个波次 [6, 14)
FIRST_WAVE = 6.0


def run(engine, depth_at, until):
    events = []
    for k in range(int(until * RATE) + 1):
        t = k / RATE
        events += engine.step(pose(t, position=backward(depth_at(t))))
        if engine.phase in TERMINAL_PHASES:
            break
    return events


def kinds(events, *wanted):
    return [e.kind for e in events if e.kind in wanted]


def hold_between(start, end, depth=0.05):
    return lambda t: depth if start <= t < end else 0.0


def test_new_engine_state():
    state = new_engine().snapshot()
    assert state.phase is ChinTuckPhase.AWAITING_CALIBRATION
    assert state.hp == 100
    assert state.shield_intensity == 0.0
    assert state.perfect_counts == (0, 0, 0)


def test_empty_levels_rejected():
    with pytest.raises(ConfigurationError) as e:
        ChinTuckEngine(ChinTuckConfig(levels=()))
    assert "levels: non-empty required" in e.value.violations


def test_damage_above_hp_rejected():
    with pytest.raises(ConfigurationError):
        ChinTuckConfig(hp_max=10, damage_per_failed_wave=20).validate()


def test_perfect_to_win_only_on_final_level():
    config = ChinTuckConfig(levels=(LevelSpec(5.0, 5, perfect_to_win=3), LevelSpec(7.0, 5)))
    assert any("only allowed on the final level" in v for v in config.violations())


def test_calibration_and_first_countdown():
    engine = new_engine()
    events = run(engine, lambda t: 0.0, 3.0)
    assert [e.kind for e in events] == [EventKind.CALIBRATED, EventKind.COUNTDOWN_START]
    assert events[0].t == pytest.approx(3.0)
    assert events[0].payload["samples"] == 11
    assert engine.phase is ChinTuckPhase.COUNTDOWN


def test_five_second_hold_is_one_perfect():
    engine = new_engine()
    events = run(engine, hold_between(7.0, 12.5), 15.0)
    wave0 = [e for e in events if e.payload.get("level") == 0 and e.payload.get("wave") == 0]
    assert kinds(wave0, EventKind.SHIELD_ACTIVATED) == [EventKind.SHIELD_ACTIVATED]
    perfect = [e for e in wave0 if e.kind is EventKind.TUCK_PERFECT]
    assert len(perfect) == 1
    assert perfect[0].t == pytest.approx(12.0)
    assert perfect[0].payload["perfect_count"] == 1
    assert not kinds(events, EventKind.WAVE_FAILED, EventKind.TUCK_PARTIAL)


def test_two_second_hold_is_partial():
    engine = new_engine()
    events = run(engine, hold_between(7.0, 9.0), 15.0)
    partial = [e for e in events if e.kind is EventKind.TUCK_PARTIAL]
    assert len(partial) == 1
    assert partial[0].payload["hold"] == pytest.approx(2.0)
    assert not kinds(events, EventKind.TUCK_PERFECT)
    assert kinds(events, EventKind.WAVE_FAILED) == [EventKind.WAVE_FAILED]


def test_short_hold_below_partial_minimum_scores_nothing():
    engine = new_engine()
    events = run(engine, hold_between(7.0, 7.5), 15.0)
    assert not kinds(events, EventKind.TUCK_PARTIAL, EventKind.TUCK_PERFECT)


def test_still_player_loses_after_five_waves():
    engine = new_engine()
    events = run(engine, lambda t: 0.0, 120.0)
    assert kinds(events, EventKind.WAVE_FAILED, EventKind.GAME_LOST) == [EventKind.WAVE_FAILED] * 5 + [
        EventKind.GAME_LOST
    ]
    assert [e.payload["hp"] for e in events if e.kind is EventKind.WAVE_FAILED] == [80, 60, 40, 20, 0]
    assert engine.outcome() is Outcome.LOST
    assert events[-1].t == pytest.approx(98.0)


def test_step_after_terminal_phase():
    engine = new_engine()
    run(engine, lambda t: 0.0, 120.0)
    with pytest.raises(EngineStateError):
        engine.step(pose(200.0))


def test_decreasing_timestamp():
    engine = new_engine()
    engine.step(pose(1.0))
    with pytest.raises(StreamOrderError):
        engine.step(pose(0.5))


def test_equal_timestamps_are_accepted():
    engine = new_engine()
    engine.step(pose(1.0))
    assert engine.step(pose(1.0)) == []


def test_non_finite_sample():
    engine = new_engine()
    with pytest.raises(InvalidArgumentError):
        engine.step(pose(float("nan")))


def test_shield_intensity_mid_hold():
    engine = new_engine()
    run(engine, hold_between(7.0, 20.0), 9.5)
    state = engine.snapshot()
    assert state.shield_active
    assert state.hold_elapsed == pytest.approx(2.5)
    assert state.shield_intensity == pytest.approx(0.5)


def test_shield_intensity_is_monotone_during_hold():
    engine = new_engine()
    run(engine, lambda t: 0.0, 6.9)
    seen = []
    for k in range(70, 130):
        engine.step(pose(k / RATE, position=backward(0.05)))
        seen.append(engine.snapshot().shield_intensity)
    assert seen == sorted(seen)
    assert seen[-1] == 1.0


# ========== 姿态判定 ==========

def _calibrated():
    engine = new_engine()
    run(engine, lambda t: 0.0, 3.0)
    return engine


def test_classify_within_tolerances():
    engine = _calibrated()
    sample = pose(3.1, position=backward(0.05) + Vec3(0.005, 0.0, 0.0), orientation=about(REFERENCE_UP, 2.0))
    assert engine.classify(sample).is_valid


def test_classify_neutral_is_invalid():
    assert not _calibrated().classify(pose(3.1)).is_valid


def test_classify_rejects_rotation():
    engine = _calibrated()
    sample = pose(3.1, position=backward(0.05), orientation=about(REFERENCE_UP, 30.0))
    assert not engine.classify(sample).is_valid


def test_classify_before_calibration():
    with pytest.raises(EngineStateError):
        new_engine().classify(pose(0.0))


# ========== 重新校准 ==========

def test_recalibrate_during_rest_keeps_phase():
    engine = new_engine()
    run(engine, lambda t: 0.0, 15.0)
    assert engine.phase is ChinTuckPhase.REST
    hp = engine.snapshot().hp
    event = engine.recalibrate(engine.recent_window())
    assert event.kind is EventKind.RECALIBRATED
    assert event.t == pytest.approx(15.0)
    assert engine.phase is ChinTuckPhase.REST
    assert engine.snapshot().hp == hp


def test_recalibrate_mid_hold_resets_hold():
    engine = new_engine()
    run(engine, hold_between(7.0, 20.0), 9.0)
    assert engine.snapshot().hold_elapsed > 0
    engine.recalibrate(engine.recent_window())
    assert engine.snapshot().hold_elapsed == 0.0


def test_recalibrate_rejects_empty_window():
    with pytest.raises(InvalidArgumentError):
        _calibrated().recalibrate([])


def test_recalibrate_before_auto_calibration():
    engine = new_engine()
    engine.step(pose(0.0))
    with pytest.raises(EngineStateError):
        engine.recalibrate([pose(0.0)])


def test_recent_window_spans_capture_window():
    engine = _calibrated()
    window = engine.recent_window()
    assert window[0].t == pytest.approx(2.0)
    assert window[-1].t == pytest.approx(3.0)


# ========== 胜负 ==========

def test_short_game_win_by_final_level_quota(short_config):
    engine = ChinTuckEngine(short_config)
    # 每个波次都从开始后 0.5 秒起保持到波次结束
    schedule = []
    clock = 3.0
    for level in short_config.levels:
        for _ in range(level.wave_count):
            start = clock + short_config.countdown_duration
            end = start + level.hold_duration + short_config.wave_grace
            schedule.append((start + 0.5, end - 0.2))
            clock = end + short_config.rest_duration

    def depth(t):
        return 0.05 if any(a <= t < b for a, b in schedule) else 0.0

    events = run(engine, depth, clock + 5.0)
    assert engine.outcome() is Outcome.WON
    assert kinds(events, EventKind.LEVEL_COMPLETE) == [EventKind.LEVEL_COMPLETE]
    final = [e for e in events if e.kind is EventKind.TUCK_PERFECT and e.payload["level"] == 1]
    assert len(final) == 3
    assert events[-1].kind is EventKind.GAME_WON
    assert events[-1].payload == {"level": 1, "perfect_count": 3}


@given(samples=st.integers(min_value=0, max_value=70))
@settings(max_examples=40, deadline=None)
def test_hold_length_decides_wave_result(samples):
    engine = new_engine()
    start = 70
    events = run(engine, lambda t: 0.05 if start <= round(t * RATE) < start + samples else 0.0, 15.0)
    perfect = kinds(events, EventKind.TUCK_PERFECT)
    partial = kinds(events, EventKind.TUCK_PARTIAL)
    failed = kinds(events, EventKind.WAVE_FAILED)
    if samples >= 50:
        assert (len(perfect), len(partial), len(failed)) == (1, 0, 0)
    elif samples >= 10:
        assert (len(perfect), len(partial), len(failed)) == (0, 1, 1)
    else:
        assert (len(perfect), len(partial), len(failed)) == (0, 0, 1)
