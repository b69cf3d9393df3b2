"""
外部格式：配置 JSON、姿态轨迹（JSON Lines）、会话日志 JSON

核心函数：
- load_config(path, game) / parse_config(data, game) / write_config(config, path)
- write_log(log, path) / read_log(path)
- read_trace(path) / write_trace(samples, path)
- summarize(events, game, level_count) - 由事件重新计算会话摘要
- write_calibration(calibration, path) / read_calibration(path)

规范化序列化：键顺序固定，浮点数统一 6 位小数，文件以换行结尾，
因此相同的日志逐字节相同，且 serialize∘parse∘serialize = serialize。
"""

import json
import logging
import math
import os
from dataclasses import dataclass, fields
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Union

from .chintuck_engine import ChinTuckConfig, LevelSpec
from .errors import (
    ConfigParseError,
    ConfigurationError,
    InvalidArgumentError,
    LogIntegrityError,
    SchemaVersionError,
    StreamOrderError,
)
from .events import EventKind, GameEvent
from .pose_core import NeutralFrame, PoseSample, UnitQuat, Vec3
from .rom_engine import (
    CALIBRATION_ORDER,
    CalibrationPoint,
    Direction,
    LateralMapping,
    RomCalibration,
    RomConfig,
    Side,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
GAMES = ("chintuck", "rom")
FLOAT_DECIMALS = 6
QUAT_NORM_TOLERANCE = 1e-3

GameConfig = Union[ChinTuckConfig, RomConfig]


# ========== 规范化 JSON ==========

def _format_float(value: float) -> str:
    if not math.isfinite(value):
        raise InvalidArgumentError(f"无法序列化非有限浮点数: {value}")
    text = f"{value:.{FLOAT_DECIMALS}f}"
    if text.startswith("-") and float(text) == 0.0:
        text = text[1:]
    return text


def _encode(value: Any, indent: Optional[int], level: int) -> str:
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _format_float(value)
    if isinstance(value, Mapping):
        items = [(json.dumps(str(k), ensure_ascii=False), _encode(v, indent, level + 1)) for k, v in value.items()]
        if not items:
            return "{}"
        if indent is None:
            return "{" + ", ".join(f"{k}: {v}" for k, v in items) + "}"
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        return "{\n" + ",\n".join(f"{pad}{k}: {v}" for k, v in items) + "\n" + end + "}"
    if isinstance(value, (list, tuple)):
        parts = [_encode(v, indent, level + 1) for v in value]
        if not parts:
            return "[]"
        if indent is None or all(not isinstance(v, (Mapping, list, tuple)) for v in value):
            return "[" + ", ".join(parts) + "]"
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        return "[\n" + ",\n".join(f"{pad}{p}" for p in parts) + "\n" + end + "]"
    raise InvalidArgumentError(f"无法序列化类型 {type(value).__name__}")


def dumps_canonical(value: Any, indent: Optional[int] = 2) -> str:
    """规范化 JSON 文本（不含结尾换行）"""
    return _encode(value, indent, 0)


def _write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _parse_json(text: str, source: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(f"{source}: {e.msg}", e.lineno, e.colno) from e


# ========== 配置 ==========

def _check_number(key: str, value: Any, integer: bool, problems: List[str]) -> Any:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"{key}: expected a number (got {value!r})")
        return None
    if integer:
        if isinstance(value, float) and not value.is_integer():
            problems.append(f"{key}: expected an integer (got {value!r})")
            return None
        return int(value)
    return float(value)


def _parse_levels(raw: Any, problems: List[str]) -> Optional[tuple]:
    if not isinstance(raw, list):
        problems.append("levels: expected a list")
        return None
    levels = []
    allowed = {"hold_duration", "wave_count", "perfect_to_win"}
    for i, item in enumerate(raw):
        if not isinstance(item, Mapping):
            problems.append(f"levels[{i}]: expected an object")
            continue
        for key in sorted(set(item) - allowed):
            problems.append(f"levels[{i}].{key}: unknown key")
        missing = [key for key in ("hold_duration", "wave_count") if key not in item]
        for key in missing:
            problems.append(f"levels[{i}].{key}: required")
        if missing:
            continue
        hold = _check_number(f"levels[{i}].hold_duration", item["hold_duration"], False, problems)
        count = _check_number(f"levels[{i}].wave_count", item["wave_count"], True, problems)
        win = item.get("perfect_to_win")
        if win is not None:
            win = _check_number(f"levels[{i}].perfect_to_win", win, True, problems)
        if hold is not None and count is not None:
            levels.append(LevelSpec(hold_duration=hold, wave_count=count, perfect_to_win=win))
    return tuple(levels)


_CHINTUCK_INTS = {"hp_max", "damage_per_failed_wave"}
_ROM_INTS = {"sets_required", "tilts_per_side"}


def _parse_chintuck(data: Mapping[str, Any]) -> ChinTuckConfig:
    problems: List[str] = []
    known = {f.name for f in fields(ChinTuckConfig)}
    for key in sorted(set(data) - known):
        problems.append(f"{key}: unknown key")
    values: Dict[str, Any] = {}
    for key, raw in data.items():
        if key not in known:
            continue
        if key == "levels":
            parsed = _parse_levels(raw, problems)
        else:
            parsed = _check_number(key, raw, key in _CHINTUCK_INTS, problems)
        if parsed is not None:
            values[key] = parsed
    if problems:
        raise ConfigurationError(problems)
    config = ChinTuckConfig(**values)
    config.validate()
    return config


def _parse_rom(data: Mapping[str, Any]) -> RomConfig:
    problems: List[str] = []
    known = {f.name for f in fields(RomConfig)}
    for key in sorted(set(data) - known):
        problems.append(f"{key}: unknown key")
    values: Dict[str, Any] = {}
    for key, raw in data.items():
        if key not in known:
            continue
        try:
            if key == "path_order":
                if not isinstance(raw, list):
                    raise ValueError("expected a list of direction labels")
                values[key] = tuple(Direction(label) for label in raw)
            elif key == "lateral_mapping":
                values[key] = LateralMapping(raw)
            elif key == "first_side":
                values[key] = Side(raw)
            else:
                parsed = _check_number(key, raw, key in _ROM_INTS, problems)
                if parsed is not None:
                    values[key] = parsed
        except ValueError as e:
            problems.append(f"{key}: {e}")
    if problems:
        raise ConfigurationError(problems)
    config = RomConfig(**values)
    config.validate()
    return config


def parse_config(data: Any, game: str) -> GameConfig:
    """把 JSON 对象解析为游戏配置；缺省键取默认值，未知键报错"""
    if game not in GAMES:
        raise InvalidArgumentError(f"未知游戏: {game}，支持 {list(GAMES)}")
    if not isinstance(data, Mapping):
        raise ConfigurationError(["config: expected a JSON object"])
    return _parse_chintuck(data) if game == "chintuck" else _parse_rom(data)


def load_config(path: str, game: str) -> GameConfig:
    """读取并校验配置文件

    Raises:
        ConfigParseError: JSON 语法错误（带行列号）
        ConfigurationError: 键或取值不合法
    """
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return parse_config(_parse_json(text, path), game)


def config_to_dict(config: GameConfig) -> Dict[str, Any]:
    return config.to_dict()


def write_config(config: GameConfig, path: str) -> None:
    _write_text(path, dumps_canonical(config_to_dict(config)) + "\n")


def game_of(config: GameConfig) -> str:
    return "chintuck" if isinstance(config, ChinTuckConfig) else "rom"


# ========== 轨迹文件 ==========

def sample_to_record(sample: PoseSample) -> Dict[str, Any]:
    record: Dict[str, Any] = {
        "t": sample.t,
        "px": sample.position.x,
        "py": sample.position.y,
        "pz": sample.position.z,
        "qw": sample.orientation.w,
        "qx": sample.orientation.x,
        "qy": sample.orientation.y,
        "qz": sample.orientation.z,
    }
    if sample.button:
        record["button"] = sample.button
    return record


def sample_from_record(record: Mapping[str, Any], index: Optional[int] = None) -> PoseSample:
    """由记录构造样本；四元数在读入时重新归一化"""
    where = f"记录 {index}" if index is not None else "记录"
    try:
        values = {key: float(record[key]) for key in ("t", "px", "py", "pz", "qw", "qx", "qy", "qz")}
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidArgumentError(f"{where} 字段缺失或不是数字: {e}") from e
    if not all(math.isfinite(v) for v in values.values()):
        raise InvalidArgumentError(f"{where} 含非有限数值")
    q = UnitQuat(values["qw"], values["qx"], values["qy"], values["qz"])
    if abs(q.norm() - 1.0) > QUAT_NORM_TOLERANCE:
        raise InvalidArgumentError(f"{where} 的四元数不是单位四元数 (模长 {q.norm():.6f})")
    button = record.get("button")
    return PoseSample(
        t=values["t"],
        position=Vec3(values["px"], values["py"], values["pz"]),
        orientation=q.normalized(),
        button=str(button) if button else None,
    )


def format_trace_line(sample: PoseSample) -> str:
    return dumps_canonical(sample_to_record(sample), indent=None)


def read_trace_lines(lines: Iterable[str]) -> Iterator[PoseSample]:
    """逐行解析轨迹；空行跳过

    Raises:
        StreamOrderError: 第 k 条记录的时间戳小于前一条（index = k，从 0 计）
    """
    previous: Optional[float] = None
    index = 0
    for line in lines:
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise InvalidArgumentError(f"记录 {index} 不是合法 JSON: {e.msg}") from e
        sample = sample_from_record(record, index)
        if previous is not None and sample.t < previous:
            raise StreamOrderError(
                f"记录 {index} 的时间戳 {sample.t} 小于前一条 {previous}", index=index, t=sample.t
            )
        previous = sample.t
        yield sample
        index += 1


def read_trace(path: str) -> Iterator[PoseSample]:
    with open(path, "r", encoding="utf-8") as f:
        yield from read_trace_lines(f)


def write_trace(samples: Iterable[PoseSample], path: str) -> int:
    """写出轨迹文件，返回记录数"""
    lines = [format_trace_line(s) for s in samples]
    _write_text(path, "".join(line + "\n" for line in lines))
    return len(lines)


# ========== 校准文件 ==========

def calibration_to_dict(calibration: RomCalibration) -> Dict[str, Any]:
    neutral = calibration.neutral
    return {
        "neutral": {
            "position": list(neutral.position.as_tuple()),
            "orientation": list(neutral.orientation.as_tuple()),
        },
        "points": {
            label.value: {
                "position": list(calibration.points[label].position.as_tuple()),
                "forward": list(calibration.points[label].forward.as_tuple()),
            }
            for label in CALIBRATION_ORDER
            if label in calibration.points
        },
    }


def calibration_from_dict(data: Mapping[str, Any]) -> RomCalibration:
    try:
        neutral_raw = data["neutral"]
        orientation = UnitQuat(*(float(v) for v in neutral_raw["orientation"])).normalized()
        neutral = NeutralFrame.from_pose(Vec3.from_iterable(neutral_raw["position"]), orientation)
        points = {}
        for label, raw in data["points"].items():
            points[Direction(label)] = CalibrationPoint(
                position=Vec3.from_iterable(raw["position"]),
                forward=Vec3.from_iterable(raw["forward"]).normalized(),
            )
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidArgumentError(f"校准数据格式错误: {e}") from e
    return RomCalibration(neutral=neutral, points=points)


def write_calibration(calibration: RomCalibration, path: str) -> None:
    _write_text(path, dumps_canonical(calibration_to_dict(calibration)) + "\n")


def read_calibration(path: str) -> RomCalibration:
    with open(path, "r", encoding="utf-8") as f:
        data = _parse_json(f.read(), path)
    if isinstance(data, Mapping) and "header" in data:
        # 也接受直接传入 ROM 会话日志
        data = data["header"].get("calibration")
        if data is None:
            raise InvalidArgumentError(f"{path} 中没有校准数据")
    return calibration_from_dict(data)


# ========== 摘要 ==========

_CHINTUCK_KINDS = {
    EventKind.CALIBRATED,
    EventKind.COUNTDOWN_START,
    EventKind.WAVE_START,
    EventKind.SHIELD_ACTIVATED,
    EventKind.TUCK_PERFECT,
    EventKind.TUCK_PARTIAL,
    EventKind.WAVE_FAILED,
    EventKind.REST_START,
    EventKind.LEVEL_COMPLETE,
    EventKind.GAME_WON,
    EventKind.GAME_LOST,
}


def infer_game(events: Sequence[GameEvent]) -> Optional[str]:
    for event in events:
        if event.kind in _CHINTUCK_KINDS:
            return "chintuck"
        if event.kind is EventKind.CALIBRATION_POINT_CONFIRMED or event.kind is EventKind.ANGLES_COMPUTED:
            return "rom"
    return None


def _duration(events: Sequence[GameEvent]) -> float:
    if len(events) < 2:
        return 0.0
    return events[-1].t - events[0].t


def summarize(
    events: Sequence[GameEvent],
    game: Optional[str] = None,
    level_count: Optional[int] = None,
) -> Dict[str, Any]:
    """对事件序列做纯折叠，得到会话摘要（队列统计表的各项指标都从这里来）

    Args:
        events: 按时间排序的事件
        game: "chintuck" 或 "rom"，为 None 时由事件种类推断
        level_count: 下巴后缩的关卡数；为 None 时取事件中出现的最大关卡序号 + 1

    Returns:
        dict: 下巴后缩为各关 perfect/partial 计数、失败波次、结果与时长；
              ROM 为最大角度、侧屈计数、完成组数、结果与时长
    """
    game = game or infer_game(events)
    duration = _duration(events)
    base = {"game": game, "events": len(events), "duration_s": duration, "completion_min": duration / 60.0}
    if game == "chintuck":
        return {**base, **_summarize_chintuck(events, level_count)}
    if game == "rom":
        return {**base, **_summarize_rom(events)}
    return base


def _summarize_chintuck(events: Sequence[GameEvent], level_count: Optional[int]) -> Dict[str, Any]:
    if level_count is None:
        levels_seen = [e.payload["level"] for e in events if "level" in e.payload]
        level_count = max(levels_seen) + 1 if levels_seen else 0
    perfect = [0] * level_count
    partial = [0] * level_count
    failed = 0
    recalibrations = 0
    outcome = "in_progress"
    for event in events:
        if event.kind is EventKind.TUCK_PERFECT:
            perfect[event.payload["level"]] += 1
        elif event.kind is EventKind.TUCK_PARTIAL:
            partial[event.payload["level"]] += 1
        elif event.kind is EventKind.WAVE_FAILED:
            failed += 1
        elif event.kind is EventKind.RECALIBRATED:
            recalibrations += 1
        elif event.kind is EventKind.GAME_WON:
            outcome = "won"
        elif event.kind is EventKind.GAME_LOST:
            outcome = "lost"
    return {
        "perfect_per_level": perfect,
        "partial_per_level": partial,
        "waves_failed": failed,
        "recalibrations": recalibrations,
        "outcome": outcome,
    }


def _summarize_rom(events: Sequence[GameEvent]) -> Dict[str, Any]:
    angles = {
        "flexion": 0.0,
        "extension": 0.0,
        "rotation_left": 0.0,
        "rotation_right": 0.0,
        "lateral_flexion_left": 0.0,
        "lateral_flexion_right": 0.0,
    }
    left = right = sets = constellations = fixations = 0
    outcome = "in_progress"
    for event in events:
        if event.kind is EventKind.ANGLES_COMPUTED:
            angles = dict(event.payload)
        elif event.kind is EventKind.TILT_LEFT:
            left += 1
        elif event.kind is EventKind.TILT_RIGHT:
            right += 1
        elif event.kind is EventKind.SET_COMPLETE:
            sets += 1
        elif event.kind is EventKind.CONSTELLATION_UNLOCKED:
            constellations += 1
        elif event.kind is EventKind.FIXATION_COMPLETE:
            fixations += 1
        elif event.kind is EventKind.SESSION_COMPLETE:
            outcome = "complete"
    return {
        "angles": angles,
        "tilts_left": left,
        "tilts_right": right,
        "sets_completed": sets,
        "constellations_unlocked": constellations,
        "fixations_completed": fixations,
        "outcome": outcome,
    }


def wave_outcomes(events: Sequence[GameEvent]) -> List[Dict[str, Any]]:
    """按波次给出 perfect / partial / failed 结果，供与合成意图对照"""
    outcomes: List[Dict[str, Any]] = []
    current: Optional[Dict[str, Any]] = None
    for event in events:
        if event.kind is EventKind.WAVE_START:
            current = {"level": event.payload["level"], "wave": event.payload["wave"], "outcome": "pending"}
            outcomes.append(current)
        elif current is None:
            continue
        elif event.kind is EventKind.TUCK_PERFECT:
            current["outcome"] = "perfect"
        elif event.kind is EventKind.TUCK_PARTIAL and current["outcome"] == "pending":
            current["outcome"] = "partial"
        elif event.kind is EventKind.WAVE_FAILED and current["outcome"] == "pending":
            current["outcome"] = "failed"
    return outcomes


# ========== 会话日志 ==========

@dataclass
class SessionLog:
    game_id: str
    config: Dict[str, Any]
    started_at: str
    events: List[GameEvent]
    summary: Dict[str, Any]
    calibration: Optional[Dict[str, Any]] = None
    schema_version: str = SCHEMA_VERSION

    def header(self) -> Dict[str, Any]:
        header: Dict[str, Any] = {
            "game_id": self.game_id,
            "schema_version": self.schema_version,
            "started_at": self.started_at,
            "config": self.config,
        }
        if self.calibration is not None:
            header["calibration"] = self.calibration
        return header

    def to_record(self) -> Dict[str, Any]:
        return {
            "header": self.header(),
            "events": [e.to_record() for e in self.events],
            "summary": self.summary,
        }


def level_count_of(game: str, config: Mapping[str, Any]) -> Optional[int]:
    if game == "chintuck":
        return len(config.get("levels", [])) or None
    return None


def build_log(
    game: str,
    config: GameConfig,
    started_at: str,
    events: Sequence[GameEvent],
    calibration: Optional[RomCalibration] = None,
) -> SessionLog:
    config_dict = config_to_dict(config)
    return SessionLog(
        game_id=game,
        config=config_dict,
        started_at=started_at,
        events=list(events),
        summary=summarize(events, game, level_count_of(game, config_dict)),
        calibration=calibration_to_dict(calibration) if calibration is not None else None,
    )


def dumps_log(log: SessionLog) -> str:
    return dumps_canonical(log.to_record()) + "\n"


def write_log(log: SessionLog, path: str) -> None:
    _write_text(path, dumps_log(log))
    logger.info(f"会话日志已写入 {path}（{len(log.events)} 个事件）")


def _same_summary(a: Any, b: Any) -> bool:
    if isinstance(a, Mapping) and isinstance(b, Mapping):
        return set(a) == set(b) and all(_same_summary(a[k], b[k]) for k in a)
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(_same_summary(x, y) for x, y in zip(a, b))
    if isinstance(a, (int, float)) and isinstance(b, (int, float)) and not isinstance(a, bool):
        return math.isclose(a, b, rel_tol=0.0, abs_tol=1e-5)
    return a == b


def loads_log(text: str, source: str = "<log>") -> SessionLog:
    data = _parse_json(text, source)
    try:
        header = data["header"]
        version = header["schema_version"]
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(f"{source}: schema_version {version!r} 与当前版本 {SCHEMA_VERSION!r} 不一致")
        events = [GameEvent.from_record(r) for r in data["events"]]
        log = SessionLog(
            game_id=header["game_id"],
            config=header["config"],
            started_at=header["started_at"],
            events=events,
            summary=data["summary"],
            calibration=header.get("calibration"),
            schema_version=version,
        )
    except (KeyError, TypeError) as e:
        raise InvalidArgumentError(f"{source}: 日志结构缺少字段 {e}") from e

    recomputed = summarize(events, log.game_id, level_count_of(log.game_id, log.config))
    if not _same_summary(recomputed, log.summary):
        raise LogIntegrityError(f"{source}: 摘要与事件重新计算的结果不一致")
    return log


def read_log(path: str) -> SessionLog:
    """读取并校验会话日志

    Raises:
        SchemaVersionError: schema_version 不匹配
        LogIntegrityError: 摘要与事件不一致
    """
    with open(path, "r", encoding="utf-8") as f:
        return loads_log(f.read(), path)


def log_filename(game: str, started_at: str, sequence: int) -> str:
    stamp = "".join(ch for ch in started_at if ch.isalnum())
    return f"{game}-{stamp}-{sequence:04d}.json"
