import json

import numpy as np
import pytest

from neckmotion.chintuck_engine import ChinTuckConfig
from neckmotion.errors import ConfigurationError, InvalidArgumentError
from neckmotion.events import EventKind
from neckmotion.rom_engine import RomConfig, compute_max_angles
from neckmotion.session import replay
from neckmotion.session_io import format_trace_line, read_trace, wave_outcomes
from neckmotion.trace_synth import (
    COHORT_EXTENTS,
    CohortDistribution,
    UserProfile,
    intent_path_for,
    profile_from_dict,
    synth_chintuck,
    synth_cohort,
    synth_rom,
)


def count(events, kind, **payload):
    return sum(1 for e in events if e.kind is kind and all(e.payload.get(k) == v for k, v in payload.items()))


# ========== 下巴后缩 ==========

PROFILE_GRID = [
    UserProfile(
        seed=1000 + i,
        tuck_depth=(0.0, 0.02, 0.05)[i % 3],
        hold_slack=(0.0, 0.5, 1.0)[(i // 3) % 3],
        tuck_reaction=(0.0, 1.0)[(i // 9) % 2],
        sample_rate=10.0,
    )
    for i in range(50)
]


@pytest.mark.parametrize("profile", PROFILE_GRID, ids=lambda p: f"seed{p.seed}")
def test_chintuck_intent_matches_engine(short_config, profile):
    result = synth_chintuck(profile, short_config)
    session = replay(short_config, result.samples)
    summary = session.finalize().summary
    assert result.intent["exact"] is True
    assert wave_outcomes(session.events) == result.intent["waves"]
    assert session.outcome == result.intent["outcome"]
    assert summary["perfect_per_level"] == result.intent["perfect_per_level"]
    assert summary["partial_per_level"] == result.intent["partial_per_level"]


def test_compliant_player_wins_default_game(compliant):
    result = synth_chintuck(compliant)
    session = replay(ChinTuckConfig(), result.samples)
    assert session.outcome == "won"
    assert result.intent["outcome"] == "won"
    assert count(session.events, EventKind.TUCK_PERFECT, level=2) == 10
    assert count(session.events, EventKind.WAVE_FAILED) == 0
    assert session.events[-1].kind is EventKind.GAME_WON


def test_shallow_player_loses_after_five_waves():
    result = synth_chintuck(UserProfile(seed=1, tuck_depth=0.0, sample_rate=10.0))
    session = replay(ChinTuckConfig(), result.samples)
    assert session.outcome == "lost"
    assert result.intent["outcome"] == "lost"
    assert len(result.intent["waves"]) == 5
    assert count(session.events, EventKind.WAVE_FAILED) == 5


def test_slack_player_scores_partials(short_config):
    result = synth_chintuck(UserProfile(seed=5, hold_slack=1.0, sample_rate=10.0), short_config)
    assert {w["outcome"] for w in result.intent["waves"]} == {"partial"}
    assert result.intent["outcome"] == "lost"


def test_reaction_longer_than_grace_rejected():
    with pytest.raises(InvalidArgumentError):
        synth_chintuck(UserProfile(tuck_reaction=2.9, sample_rate=10.0))


def test_same_seed_same_trace(short_config):
    profile = UserProfile(seed=11, hold_slack=0.5, positional_noise=0.002, sample_rate=10.0)
    first = synth_chintuck(profile, short_config)
    second = synth_chintuck(profile, short_config)
    assert first.lines() == second.lines()
    assert first.intent == second.intent
    assert first.intent["exact"] is False


def test_noise_depends_on_seed(short_config):
    a = synth_chintuck(UserProfile(seed=1, positional_noise=0.002, sample_rate=10.0), short_config)
    b = synth_chintuck(UserProfile(seed=2, positional_noise=0.002, sample_rate=10.0), short_config)
    assert a.lines() != b.lines()


def test_write_produces_trace_and_intent(tmp_path, short_config, compliant):
    result = synth_chintuck(compliant, short_config)
    path = str(tmp_path / "trace.jsonl")
    intent_path = result.write(path)
    assert intent_path == str(tmp_path / "trace.intent.json")
    assert intent_path_for(path) == intent_path
    assert [format_trace_line(s) for s in read_trace(path)] == result.lines()
    with open(intent_path, encoding="utf-8") as f:
        assert json.load(f)["waves"] == result.intent["waves"]


# ========== ROM ==========

def test_compliant_player_completes_default_rom(compliant):
    result = synth_rom(compliant)
    session = replay(RomConfig(), result.samples)
    assert session.outcome == "complete"
    assert count(session.events, EventKind.SET_COMPLETE) == 3
    assert count(session.events, EventKind.CONSTELLATION_UNLOCKED) == 3
    assert count(session.events, EventKind.TILT_LEFT) == 10
    assert count(session.events, EventKind.TILT_RIGHT) == 10
    summary = session.finalize().summary
    for key in ("sets_completed", "constellations_unlocked", "tilts_left", "tilts_right", "outcome"):
        assert summary[key] == result.intent[key]


def test_calibrated_angles_match_profile(short_rom_config):
    profile = UserProfile(
        seed=3,
        sample_rate=10.0,
        rom_extents={"Up": 40.0, "Down": 55.5, "Left": 61.0, "Right": 38.2, "TopLeft": 33.0, "BottomRight": 47.9},
    )
    result = synth_rom(profile, short_rom_config)
    session = replay(short_rom_config, result.samples)
    angles = compute_max_angles(session.calibration(), short_rom_config).to_dict()
    for key, expected in result.intent["angles"].items():
        assert angles[key] == pytest.approx(expected, abs=0.1)


def test_no_fixation_means_no_progress(short_rom_config):
    result = synth_rom(UserProfile(sample_rate=10.0, fixation_accuracy=0.0), short_rom_config)
    session = replay(short_rom_config, result.samples)
    assert count(session.events, EventKind.FIXATION_COMPLETE) == 0
    assert result.intent["sets_completed"] == 0
    assert result.intent["outcome"] == "in_progress"
    assert session.outcome == "in_progress"


def test_partial_fixation_still_matches_intent(short_rom_config):
    result = synth_rom(UserProfile(seed=9, sample_rate=10.0, fixation_accuracy=0.7), short_rom_config)
    summary = replay(short_rom_config, result.samples).finalize().summary
    for key in ("sets_completed", "constellations_unlocked", "tilts_left", "tilts_right", "outcome"):
        assert summary[key] == result.intent[key]
    assert summary["fixations_completed"] > 0


def test_rom_rejects_low_sample_rate():
    with pytest.raises(InvalidArgumentError):
        synth_rom(UserProfile(sample_rate=2.0))


# ========== 画像 ==========

def test_profile_from_dict_fills_defaults():
    profile = profile_from_dict({"seed": 4, "rom_extents": {"Up": 30.0}})
    assert profile.seed == 4
    assert profile.rom_extents["Up"] == 30.0
    assert profile.rom_extents["Down"] == pytest.approx(62.47)


def test_profile_unknown_key():
    with pytest.raises(ConfigurationError) as e:
        profile_from_dict({"bogus": 1})
    assert e.value.violations == ["bogus: unknown key"]


@pytest.mark.parametrize(
    "data",
    [
        {"hold_slack": 1.5},
        {"fixation_accuracy": -0.1},
        {"tuck_depth": -0.01},
        {"sample_rate": 0},
        {"rom_extents": {"Sideways": 30.0}},
        {"rom_extents": {"Up": 190.0}},
    ],
)
def test_profile_validation(data):
    with pytest.raises(ConfigurationError):
        profile_from_dict(data)


# ========== 队列 ==========

def test_empty_cohort():
    assert synth_cohort(0) == []


def test_negative_cohort_size():
    with pytest.raises(InvalidArgumentError):
        synth_cohort(-1)


def test_cohort_is_reproducible(short_config, short_rom_config):
    distribution = CohortDistribution(sample_rate=10.0)
    kwargs = dict(distribution=distribution, seed=42, chintuck_config=short_config, rom_config=short_rom_config)
    first = synth_cohort(2, **kwargs)
    second = synth_cohort(2, **kwargs)
    assert [r.game for r in first] == ["chintuck", "rom", "chintuck", "rom"]
    assert [r.intent for r in first] == [r.intent for r in second]
    assert [r.lines() for r in first] == [r.lines() for r in second]
    assert first[0].profile == first[1].profile
    assert first[0].profile != first[2].profile


def test_cohort_rejects_unknown_game():
    with pytest.raises(InvalidArgumentError):
        synth_cohort(1, games=("pong",))


def test_cohort_extents_follow_measured_cohort():
    assert COHORT_EXTENTS["Left"] == (45.18, 20.75)
    assert COHORT_EXTENTS["TopLeft"] == (43.26, 6.90)

    distribution = CohortDistribution(extent_bounds=(-1000.0, 1000.0))
    rng = np.random.default_rng(5)
    drawn = [distribution.draw(rng, seed).rom_extents for seed in range(4000)]
    for label, (mean, sd) in COHORT_EXTENTS.items():
        values = np.array([extents[label] for extents in drawn])
        assert values.mean() == pytest.approx(mean, abs=0.1 * sd)
        assert values.std(ddof=1) == pytest.approx(sd, rel=0.05)
