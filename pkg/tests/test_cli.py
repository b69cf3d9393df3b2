import json
import os

import pytest

from neckmotion.cli import EXIT_IO, EXIT_LOST, EXIT_OK, EXIT_USAGE, main
from neckmotion.session_io import write_config


def write_json(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def run_json(capsys, argv):
    code = main(argv + ["--json"])
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


def synth(capsys, tmp_path, game, name, profile=None, config=None):
    profile_path = write_json(tmp_path / f"{name}.profile.json", {"sample_rate": 10.0, **(profile or {})})
    trace = str(tmp_path / f"{name}.jsonl")
    argv = ["synth", "--game", game, "--profile", profile_path, "--out", trace]
    if config is not None:
        argv += ["--config", config]
    code, data = run_json(capsys, argv)
    assert code == EXIT_OK
    return trace, data


def test_replay_compliant_player(capsys, tmp_path):
    trace, data = synth(capsys, tmp_path, "chintuck", "good")
    assert data["intent"]["outcome"] == "won"
    assert os.path.exists(data["intent_path"])

    out = str(tmp_path / "good.log.json")
    code, result = run_json(capsys, ["replay", "--game", "chintuck", "--trace", trace, "--out", out])
    assert code == EXIT_OK
    assert result["outcome"] == "won"
    assert result["summary"]["perfect_per_level"][-1] == 10
    assert os.path.exists(out)


def test_replay_lost_game_exit_code(capsys, tmp_path):
    trace, _ = synth(capsys, tmp_path, "chintuck", "still", profile={"tuck_depth": 0.0})
    code = main(["replay", "--game", "chintuck", "--trace", trace])
    assert code == EXIT_LOST
    assert "outcome: lost" in capsys.readouterr().out
    assert len(os.listdir(os.environ["NECKMOTION_LOG_DIR"])) == 1


def test_replay_with_config(capsys, tmp_path, short_config):
    config = str(tmp_path / "short.json")
    write_config(short_config, config)
    trace, _ = synth(capsys, tmp_path, "chintuck", "short", config=config)
    code, result = run_json(capsys, ["replay", "--game", "chintuck", "--config", config, "--trace", trace])
    assert code == EXIT_OK
    assert result["summary"]["perfect_per_level"] == [3, 3]


def test_replay_missing_trace(tmp_path):
    assert main(["replay", "--game", "chintuck", "--trace", str(tmp_path / "nope.jsonl")]) == EXIT_IO


def test_replay_invalid_config(capsys, tmp_path):
    config = write_json(tmp_path / "bad.json", {"levels": []})
    trace = str(tmp_path / "unused.jsonl")
    code = main(["replay", "--game", "chintuck", "--config", config, "--trace", trace])
    assert code == EXIT_USAGE
    assert "levels: non-empty required" in capsys.readouterr().err


def test_unknown_flag():
    assert main(["replay", "--bogus"]) == EXIT_USAGE


def test_missing_subcommand():
    assert main([]) == EXIT_USAGE


def test_help_exits_cleanly(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "replay" in capsys.readouterr().out


def test_synth_seed_override(capsys, tmp_path):
    _, first = synth(capsys, tmp_path, "chintuck", "a", profile={"hold_slack": 0.5})
    profile = write_json(tmp_path / "b.profile.json", {"sample_rate": 10.0, "hold_slack": 0.5})
    code, second = run_json(
        capsys, ["synth", "--game", "chintuck", "--profile", profile, "--seed", "99", "--out", str(tmp_path / "b.jsonl")]
    )
    assert code == EXIT_OK
    assert second["intent"]["seed"] == 99
    assert first["intent"]["seed"] == 0


def test_rom_replay_then_angles(capsys, tmp_path, short_rom_config):
    config = str(tmp_path / "rom.json")
    write_config(short_rom_config, config)
    trace, data = synth(capsys, tmp_path, "rom", "rom", config=config)
    out = str(tmp_path / "rom.log.json")
    code, result = run_json(capsys, ["replay", "--game", "rom", "--config", config, "--trace", trace, "--out", out])
    assert code == EXIT_OK
    assert result["outcome"] == "complete"

    code, angles = run_json(capsys, ["angles", "--calibration", out])
    assert code == EXIT_OK
    for key, expected in data["intent"]["angles"].items():
        assert angles[key] == pytest.approx(expected, abs=0.1)


def test_analyze_session(capsys, tmp_path, short_config):
    config = str(tmp_path / "short.json")
    write_config(short_config, config)
    logs = []
    for seed in (1, 2):
        trace, _ = synth(capsys, tmp_path, "chintuck", f"p{seed}", profile={"seed": seed}, config=config)
        out = str(tmp_path / f"p{seed}.log.json")
        code, _ = run_json(capsys, ["replay", "--game", "chintuck", "--config", config, "--trace", trace, "--out", out])
        assert code == EXIT_OK
        logs.append(out)

    assert main(["analyze", "session"] + logs) == EXIT_OK
    text = capsys.readouterr().out
    assert "Chin tuck game (n=2)" in text
    assert "# Perfect chin tucks (2 sec)" in text
    assert "3.00 ± 0.00" in text


def test_analyze_sus_all_neutral(capsys, tmp_path):
    path = tmp_path / "sus.csv"
    header = ",".join(f"q{i}" for i in range(1, 11))
    path.write_text(header + "\n" + "\n".join([",".join(["3"] * 10)] * 3) + "\n", encoding="utf-8")
    assert main(["analyze", "sus", str(path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "50.0" in out
    assert "n/a" in out


def test_analyze_sus_with_groups_and_items(capsys, tmp_path):
    path = tmp_path / "sus.csv"
    rows = [
        "q1,q2,q3,q4,q5,q6,q7,q8,q9,q10,pain",
        "5,1,5,1,5,1,5,1,5,1,no",
        "4,2,4,2,4,2,4,2,4,2,no",
        "4,2,5,1,4,2,5,1,4,2,no",
        "3,3,4,2,3,3,4,2,3,3,yes",
        "4,2,3,3,4,2,3,3,4,2,yes",
    ]
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    code, data = run_json(capsys, ["analyze", "sus", str(path), "--group-column", "pain", "--items"])
    assert code == EXIT_OK
    assert data["scores"] == [100.0, 75.0, 85.0, 60.0, 65.0]
    assert [g["label"] for g in data["groups"]["groups"]] == ["no", "yes"]
    assert data["groups"]["test"]["method"] == "ExactEnumeration"
    assert len(data["items"]["items"]) == 10


def test_analyze_likert(capsys, tmp_path):
    path = tmp_path / "ux.csv"
    path.write_text("q1,q2\n4,3\n4,3\n5,3\n4,3\n5,3\n", encoding="utf-8")
    code, data = run_json(capsys, ["analyze", "likert", str(path)])
    assert code == EXIT_OK
    assert data["items"][0]["test"]["p_value"] == pytest.approx(0.0625)
    assert data["items"][1]["test"] is None


def test_analyze_missing_csv(tmp_path):
    assert main(["analyze", "sus", str(tmp_path / "missing.csv")]) == EXIT_IO
