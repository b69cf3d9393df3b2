"""
NeckMotion 包
VR 颈部康复游戏引擎：下巴后缩与颈部活动度两款游戏、轨迹合成、实时网关与评估统计
"""

__version__ = "1.0.0"

from .chintuck_engine import ChinTuckConfig, ChinTuckEngine
from .events import EventKind, GameEvent
from .pose_core import NeutralFrame, PoseSample, UnitQuat, Vec3
from .rom_engine import RomConfig, RomEngine
from .session import GameSession, replay

__all__ = [
    "ChinTuckConfig",
    "ChinTuckEngine",
    "EventKind",
    "GameEvent",
    "GameSession",
    "NeutralFrame",
    "PoseSample",
    "RomConfig",
    "RomEngine",
    "UnitQuat",
    "Vec3",
    "replay",
]
