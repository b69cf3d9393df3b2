"""
会话驱动：离线重放与实时网关共用的输入路由

同一条姿态流无论来自轨迹文件还是网络连接，都经过 GameSession.feed，
因此两条路径产生的事件序列完全一致。
"""

import logging
from datetime import datetime, timezone
from typing import Iterable, List, Optional

from .chintuck_engine import TERMINAL_PHASES, ChinTuckConfig, ChinTuckEngine, ChinTuckPhase
from .errors import EngineStateError, InvalidArgumentError, StreamOrderError
from .events import GameEvent
from .pose_core import PoseSample
from .rom_engine import RomEngine, RomPhase
from .session_io import GameConfig, SessionLog, build_log, game_of

logger = logging.getLogger(__name__)

BUTTON_A = "A"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class GameSession:
    """包装一个引擎实例，按游戏与阶段分发姿态和手柄按键

    下巴后缩：姿态进入 step；A 键用最近一个校准窗口重新校准。
    ROM：校准阶段第一帧作为中立姿态，A 键确认当前方向；校准完成后姿态进入 step。
    终局之后的输入一律忽略。
    """

    def __init__(self, config: GameConfig, started_at: Optional[str] = None):
        self.config = config
        self.game = game_of(config)
        self.started_at = started_at or utc_now()
        self.events: List[GameEvent] = []
        self._last: Optional[PoseSample] = None
        if isinstance(config, ChinTuckConfig):
            self.engine = ChinTuckEngine(config)
        else:
            self.engine = RomEngine(config)

    @property
    def finished(self) -> bool:
        if isinstance(self.engine, ChinTuckEngine):
            return self.engine.phase in TERMINAL_PHASES
        return self.engine.phase is RomPhase.COMPLETE

    @property
    def outcome(self) -> str:
        """"won" / "lost" / "complete" / "in_progress" """
        if isinstance(self.engine, ChinTuckEngine):
            return {ChinTuckPhase.WON: "won", ChinTuckPhase.LOST: "lost"}.get(self.engine.phase, "in_progress")
        return "complete" if self.engine.phase is RomPhase.COMPLETE else "in_progress"

    @property
    def last_t(self) -> Optional[float]:
        return self._last.t if self._last else None

    def feed(self, sample: PoseSample) -> List[GameEvent]:
        """处理一帧姿态；样本带 button 时在姿态之后立即处理按键"""
        if self.finished:
            return []
        if self._last is not None and sample.t < self._last.t:
            raise StreamOrderError(f"时间戳倒退: {sample.t} < {self._last.t}", t=sample.t)

        events = self._route_pose(sample)
        self._last = sample
        if sample.button and not self.finished:
            events.extend(self._route_button(sample.button))
        self.events.extend(events)
        return events

    def press(self, name: str) -> List[GameEvent]:
        """单独的按键消息，作用于最近一帧姿态"""
        if self.finished:
            return []
        events = self._route_button(name)
        self.events.extend(events)
        return events

    def snapshot(self) -> dict:
        state = self.engine.snapshot().to_dict()
        state["game"] = self.game
        return state

    def calibration(self):
        if isinstance(self.engine, RomEngine):
            return self.engine.calibration
        return None

    def finalize(self) -> SessionLog:
        return build_log(self.game, self.config, self.started_at, self.events, self.calibration())

    # ---------- 路由 ----------

    def _route_pose(self, sample: PoseSample) -> List[GameEvent]:
        engine = self.engine
        if isinstance(engine, ChinTuckEngine):
            return engine.step(sample)
        if engine.phase is RomPhase.CALIBRATING:
            if not engine.has_neutral:
                engine.begin_calibration(sample)
            return []
        return engine.step(sample)

    def _route_button(self, name: str) -> List[GameEvent]:
        if name != BUTTON_A:
            raise InvalidArgumentError(f"未知按键: {name!r}")
        engine = self.engine
        if isinstance(engine, ChinTuckEngine):
            if engine.phase is ChinTuckPhase.AWAITING_CALIBRATION:
                logger.debug("自动校准尚未完成，忽略 A 键")
                return []
            return [engine.recalibrate(engine.recent_window())]
        if engine.phase is not RomPhase.CALIBRATING:
            logger.debug(f"{engine.phase.value} 阶段忽略 A 键")
            return []
        if self._last is None:
            raise EngineStateError("尚未收到任何姿态，无法确认校准点")
        return engine.confirm_point(self._last)


def replay(config: GameConfig, samples: Iterable[PoseSample], started_at: Optional[str] = None) -> GameSession:
    """把整条姿态流离线送入新会话，终局后剩余样本被忽略"""
    session = GameSession(config, started_at=started_at)
    for sample in samples:
        if session.finished:
            break
        session.feed(sample)
    logger.info(f"重放结束: {session.game} {session.outcome}，共 {len(session.events)} 个事件")
    return session


def exit_code_for(outcome: str) -> int:
    return 2 if outcome == "lost" else 0
