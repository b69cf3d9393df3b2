"""
游戏事件：引擎唯一的输出

每种事件的载荷字段在 EVENT_SCHEMA 中固定（字段名、类型与顺序），
序列化时按该顺序输出，保证同样的事件序列得到逐字节相同的日志。
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Mapping, Tuple

from .errors import InvalidArgumentError


class EventKind(str, Enum):
    CALIBRATED = "Calibrated"
    RECALIBRATED = "Recalibrated"
    CALIBRATION_POINT_CONFIRMED = "CalibrationPointConfirmed"
    COUNTDOWN_START = "CountdownStart"
    WAVE_START = "WaveStart"
    SHIELD_ACTIVATED = "ShieldActivated"
    TUCK_PERFECT = "TuckPerfect"
    TUCK_PARTIAL = "TuckPartial"
    WAVE_FAILED = "WaveFailed"
    REST_START = "RestStart"
    LEVEL_COMPLETE = "LevelComplete"
    GAME_WON = "GameWon"
    GAME_LOST = "GameLost"
    FIXATION_START = "FixationStart"
    FIXATION_BROKEN = "FixationBroken"
    FIXATION_COMPLETE = "FixationComplete"
    SET_COMPLETE = "SetComplete"
    CONSTELLATION_UNLOCKED = "ConstellationUnlocked"
    TILT_LEFT = "TiltLeft"
    TILT_RIGHT = "TiltRight"
    ANGLES_COMPUTED = "AnglesComputed"
    SESSION_COMPLETE = "SessionComplete"
    WARNING = "Warning"


_WAVE = (("level", int), ("wave", int))
_STEP = (("set", int), ("step", int))

EVENT_SCHEMA: Dict[EventKind, Tuple[Tuple[str, type], ...]] = {
    EventKind.CALIBRATED: (("samples", int),),
    EventKind.RECALIBRATED: (("samples", int),),
    EventKind.CALIBRATION_POINT_CONFIRMED: (
        ("label", str),
        ("index", int),
        ("fx", float),
        ("fy", float),
        ("fz", float),
    ),
    EventKind.COUNTDOWN_START: _WAVE,
    EventKind.WAVE_START: _WAVE,
    EventKind.SHIELD_ACTIVATED: _WAVE,
    EventKind.TUCK_PERFECT: _WAVE + (("hold", float), ("perfect_count", int)),
    EventKind.TUCK_PARTIAL: _WAVE + (("hold", float),),
    EventKind.WAVE_FAILED: _WAVE + (("hp", int),),
    EventKind.REST_START: _WAVE,
    EventKind.LEVEL_COMPLETE: (("level", int), ("perfect_count", int)),
    EventKind.GAME_WON: (("level", int), ("perfect_count", int)),
    EventKind.GAME_LOST: _WAVE,
    EventKind.FIXATION_START: _STEP,
    EventKind.FIXATION_BROKEN: _STEP,
    EventKind.FIXATION_COMPLETE: _STEP + (("target", str), ("dwell", float)),
    EventKind.SET_COMPLETE: (("set", int),),
    EventKind.CONSTELLATION_UNLOCKED: (("set", int),),
    EventKind.TILT_LEFT: (("count", int), ("roll", float)),
    EventKind.TILT_RIGHT: (("count", int), ("roll", float)),
    EventKind.ANGLES_COMPUTED: (
        ("flexion", float),
        ("extension", float),
        ("rotation_left", float),
        ("rotation_right", float),
        ("lateral_flexion_left", float),
        ("lateral_flexion_right", float),
    ),
    EventKind.SESSION_COMPLETE: (("left", int), ("right", int)),
    EventKind.WARNING: (("code", str), ("message", str)),
}


@dataclass(frozen=True)
class GameEvent:
    t: float
    kind: EventKind
    payload: Dict[str, Any] = field(default_factory=dict)

    def to_record(self) -> Dict[str, Any]:
        return {"t": self.t, "kind": self.kind.value, "payload": dict(self.payload)}

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "GameEvent":
        try:
            kind = EventKind(record["kind"])
            return make_event(float(record["t"]), kind, **dict(record.get("payload", {})))
        except (KeyError, ValueError, TypeError) as e:
            raise InvalidArgumentError(f"事件记录无效: {record!r} ({e})") from e


def make_event(t: float, kind: EventKind, **payload: Any) -> GameEvent:
    """按 schema 校验并排序载荷后构造事件"""
    schema = EVENT_SCHEMA[kind]
    expected = [name for name, _ in schema]
    if sorted(payload) != sorted(expected):
        raise InvalidArgumentError(f"{kind.value} 的载荷字段应为 {expected}，实际为 {sorted(payload)}")
    ordered: Dict[str, Any] = {}
    for name, kind_type in schema:
        value = payload[name]
        if kind_type is float:
            value = float(value)
        elif kind_type is int:
            if isinstance(value, float) and not value.is_integer():
                raise InvalidArgumentError(f"{kind.value}.{name} 必须是整数: {value}")
            value = int(value)
        else:
            value = str(value)
        ordered[name] = value
    return GameEvent(t=float(t), kind=kind, payload=ordered)
