"""
下巴后缩（chin tuck）游戏引擎 - 基于时间戳的确定性状态机

核心特性：
1. ✅ 自动中立校准：延迟后取一段窗口，位置求平均，朝向取时间中位样本
2. ✅ 姿态判定：沿中立前向轴向后位移超过阈值，且侧向/竖向位移与旋转偏差在容差内
3. ✅ 波次/关卡推进：倒计时 → 波次 → 休息 → 倒计时 ...
4. ✅ 生命值：未出现 perfect 的波次扣血，扣到 0 判负
5. ✅ perfect / partial 计分，护盾强度信号供前端渲染
6. ✅ 只依赖样本时间戳，从不读取墙钟（可重放）

时间语义：
- 相邻样本之间的区间 (t_prev, t] 沿用 t_prev 样本的姿态（零阶保持）
- 计划中的阶段切换（校准结束、倒计时结束、波次结束、休息结束）按计划时刻打时间戳
- 姿态事件按样本时刻打时间戳；TuckPerfect 按保持时长恰好达标的时刻打时间戳
"""

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple

from .errors import ConfigurationError, EngineStateError, InvalidArgumentError, StreamOrderError
from .events import EventKind, GameEvent, make_event
from .pose_core import FrameDisplacement, NeutralFrame, PoseSample, displacement_in, neutral_from_window

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LevelSpec:
    hold_duration: float
    wave_count: int
    perfect_to_win: Optional[int] = None


DEFAULT_LEVELS: Tuple[LevelSpec, ...] = (
    LevelSpec(hold_duration=5.0, wave_count=5),
    LevelSpec(hold_duration=7.0, wave_count=5),
    LevelSpec(hold_duration=10.0, wave_count=10, perfect_to_win=10),
)


@dataclass(frozen=True)
class ChinTuckConfig:
    """下巴后缩游戏配置，所有字段都可以在配置 JSON 中覆盖

    阈值缺省值按成人头部尺度选取；关卡缺省为 5 秒 / 7 秒 / 10 秒三档。
    """

    backward_threshold: float = 0.03
    lateral_tolerance: float = 0.03
    rotation_tolerance: float = 10.0
    partial_min_hold: float = 1.0
    levels: Tuple[LevelSpec, ...] = DEFAULT_LEVELS
    hp_max: int = 100
    damage_per_failed_wave: int = 20
    rest_duration: float = 10.0
    countdown_duration: float = 3.0
    wave_grace: float = 3.0
    neutral_capture_delay: float = 2.0
    neutral_capture_window: float = 1.0

    def violations(self) -> List[str]:
        problems: List[str] = []
        positive = {
            "backward_threshold": self.backward_threshold,
            "lateral_tolerance": self.lateral_tolerance,
            "rotation_tolerance": self.rotation_tolerance,
            "partial_min_hold": self.partial_min_hold,
            "rest_duration": self.rest_duration,
            "countdown_duration": self.countdown_duration,
            "wave_grace": self.wave_grace,
            "neutral_capture_delay": self.neutral_capture_delay,
            "neutral_capture_window": self.neutral_capture_window,
        }
        for name, value in positive.items():
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
                problems.append(f"{name}: must be > 0 (got {value!r})")

        if not self.levels:
            problems.append("levels: non-empty required")
        previous_hold = 0.0
        for i, level in enumerate(self.levels):
            if not level.hold_duration > 0:
                problems.append(f"levels[{i}].hold_duration: must be > 0")
            elif level.hold_duration <= previous_hold:
                problems.append(f"levels[{i}].hold_duration: must be strictly increasing")
            else:
                previous_hold = level.hold_duration
            if level.wave_count < 1:
                problems.append(f"levels[{i}].wave_count: must be >= 1")
            if level.perfect_to_win is not None:
                if level.perfect_to_win < 1:
                    problems.append(f"levels[{i}].perfect_to_win: must be >= 1")
                if i != len(self.levels) - 1:
                    problems.append(f"levels[{i}].perfect_to_win: only allowed on the final level")

        if self.hp_max <= 0:
            problems.append("hp_max: must be > 0")
        elif not 0 < self.damage_per_failed_wave <= self.hp_max:
            problems.append("damage_per_failed_wave: must be in (0, hp_max]")
        return problems

    def validate(self) -> None:
        problems = self.violations()
        if problems:
            raise ConfigurationError(problems)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["levels"] = [asdict(level) for level in self.levels]
        return data


class ChinTuckPhase(str, Enum):
    AWAITING_CALIBRATION = "AwaitingCalibration"
    COUNTDOWN = "Countdown"
    WAVE = "Wave"
    REST = "Rest"
    WON = "Won"
    LOST = "Lost"


class Outcome(str, Enum):
    IN_PROGRESS = "InProgress"
    WON = "Won"
    LOST = "Lost"


TERMINAL_PHASES = (ChinTuckPhase.WON, ChinTuckPhase.LOST)


@dataclass(frozen=True)
class TuckPosture:
    displacement: FrameDisplacement
    is_valid: bool


@dataclass(frozen=True)
class ChinTuckState:
    phase: ChinTuckPhase
    level_index: int
    wave_index: int
    hp: int
    hold_elapsed: float
    shield_active: bool
    shield_intensity: float
    perfect_counts: Tuple[int, ...]
    partial_counts: Tuple[int, ...]
    clock: Optional[float] = None
    phase_deadline: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["phase"] = self.phase.value
        data["perfect_counts"] = list(self.perfect_counts)
        data["partial_counts"] = list(self.partial_counts)
        return data


class ChinTuckEngine:
    """单会话的下巴后缩状态机；一个实例同一时刻只允许一个调用方"""

    def __init__(self, config: ChinTuckConfig):
        config.validate()
        self.config = config
        self._phase = ChinTuckPhase.AWAITING_CALIBRATION
        self._frame: Optional[NeutralFrame] = None
        self._last_t: Optional[float] = None
        self._cursor: Optional[float] = None
        self._deadline: Optional[float] = None
        self._capture_started: Optional[float] = None
        self._capture: List[PoseSample] = []
        self._recent: Deque[PoseSample] = deque()

        self._level = 0
        self._wave = 0
        self._hp = config.hp_max
        self._perfect = [0] * len(config.levels)
        self._partial = [0] * len(config.levels)

        self._valid = False
        self._hold_start: Optional[float] = None
        self._wave_perfect = False

    # ---------- 公共接口 ----------

    @property
    def neutral_frame(self) -> Optional[NeutralFrame]:
        return self._frame

    @property
    def phase(self) -> ChinTuckPhase:
        return self._phase

    def step(self, sample: PoseSample) -> List[GameEvent]:
        """推进时钟到 sample.t 并处理该样本，返回期间产生的事件

        Raises:
            EngineStateError: 已处于终局阶段
            StreamOrderError: 时间戳倒退
            InvalidArgumentError: 样本含非有限分量
        """
        if self._phase in TERMINAL_PHASES:
            raise EngineStateError(f"游戏已结束 ({self._phase.value})，不能继续 step")
        if not sample.is_finite():
            raise InvalidArgumentError(f"样本含非有限分量: t={sample.t}")
        if self._last_t is not None and sample.t < self._last_t:
            raise StreamOrderError(f"时间戳倒退: {sample.t} < {self._last_t}", t=sample.t)
        self._last_t = sample.t
        self._remember(sample)

        events: List[GameEvent] = []
        if self._phase is ChinTuckPhase.AWAITING_CALIBRATION:
            self._capture_neutral(sample, events)
            if self._phase is ChinTuckPhase.AWAITING_CALIBRATION:
                self._cursor = sample.t
                return events

        self._advance_to(sample.t, events)
        if self._phase is ChinTuckPhase.WAVE:
            self._apply_posture(sample, events)
        return events

    def recalibrate(self, window: Sequence[PoseSample]) -> GameEvent:
        """按校准规则重建中立坐标系；不改变生命值、计分与阶段，只清零保持计时"""
        if not window:
            raise InvalidArgumentError("重新校准窗口不能为空")
        for previous, current in zip(window, window[1:]):
            if current.t < previous.t:
                raise StreamOrderError(f"重新校准窗口时间倒退: {current.t} < {previous.t}", t=current.t)
        if self._phase is ChinTuckPhase.AWAITING_CALIBRATION:
            raise EngineStateError("自动校准尚未完成，不能手动重新校准")
        if self._phase in TERMINAL_PHASES:
            raise EngineStateError(f"游戏已结束 ({self._phase.value})，不能重新校准")

        self._frame = neutral_from_window(window)
        self._valid = False
        self._hold_start = None
        logger.debug(f"重新校准完成，窗口样本数 {len(window)}")
        return make_event(self._cursor, EventKind.RECALIBRATED, samples=len(window))

    def recent_window(self) -> List[PoseSample]:
        """最近 neutral_capture_window 秒内的样本，供手柄 A 键重新校准使用"""
        return list(self._recent)

    def classify(self, sample: PoseSample) -> TuckPosture:
        if self._frame is None:
            raise EngineStateError("尚未校准，无法判定姿态")
        d = displacement_in(self._frame, sample)
        cfg = self.config
        valid = (
            d.backward >= cfg.backward_threshold
            and d.lateral <= cfg.lateral_tolerance
            and d.vertical <= cfg.lateral_tolerance
            and d.rotation_dev <= cfg.rotation_tolerance
        )
        return TuckPosture(displacement=d, is_valid=valid)

    def snapshot(self) -> ChinTuckState:
        hold = self._hold_elapsed()
        duration = self._current_level().hold_duration
        return ChinTuckState(
            phase=self._phase,
            level_index=self._level,
            wave_index=self._wave,
            hp=self._hp,
            hold_elapsed=hold,
            shield_active=self._valid and self._phase is ChinTuckPhase.WAVE,
            shield_intensity=max(0.0, min(1.0, hold / duration)),
            perfect_counts=tuple(self._perfect),
            partial_counts=tuple(self._partial),
            clock=self._cursor,
            phase_deadline=self._deadline,
        )

    def outcome(self) -> Outcome:
        if self._phase is ChinTuckPhase.WON:
            return Outcome.WON
        if self._phase is ChinTuckPhase.LOST:
            return Outcome.LOST
        return Outcome.IN_PROGRESS

    # ---------- 内部实现 ----------

    def _current_level(self) -> LevelSpec:
        return self.config.levels[self._level]

    def _is_final_level(self) -> bool:
        return self._level == len(self.config.levels) - 1

    def _hold_elapsed(self) -> float:
        if not self._valid or self._hold_start is None or self._cursor is None:
            return 0.0
        return min(self._cursor - self._hold_start, self._current_level().hold_duration)

    def _remember(self, sample: PoseSample) -> None:
        self._recent.append(sample)
        horizon = sample.t - self.config.neutral_capture_window
        while self._recent and self._recent[0].t < horizon:
            self._recent.popleft()

    def _capture_neutral(self, sample: PoseSample, events: List[GameEvent]) -> None:
        if self._capture_started is None:
            self._capture_started = sample.t
        start = self._capture_started + self.config.neutral_capture_delay
        end = start + self.config.neutral_capture_window
        if start <= sample.t <= end:
            self._capture.append(sample)
        if sample.t < end:
            return

        window = self._capture or [sample]
        self._frame = neutral_from_window(window)
        self._capture = []
        self._cursor = end
        events.append(make_event(end, EventKind.CALIBRATED, samples=len(window)))
        logger.debug(f"自动校准完成 t={end:.3f}，窗口样本数 {len(window)}")
        self._begin_countdown(events)

    def _begin_countdown(self, events: List[GameEvent]) -> None:
        self._phase = ChinTuckPhase.COUNTDOWN
        self._deadline = self._cursor + self.config.countdown_duration
        events.append(make_event(self._cursor, EventKind.COUNTDOWN_START, level=self._level, wave=self._wave))

    def _advance_to(self, t: float, events: List[GameEvent]) -> None:
        while self._phase not in TERMINAL_PHASES:
            if self._phase is ChinTuckPhase.WAVE and self._valid and not self._wave_perfect:
                crossing = self._hold_start + self._current_level().hold_duration
                if crossing <= min(t, self._deadline):
                    self._cursor = crossing
                    self._award_perfect(events)
                    continue
            if self._deadline > t:
                break
            self._cursor = self._deadline
            self._fire_deadline(events)
        if self._phase not in TERMINAL_PHASES:
            self._cursor = t

    def _award_perfect(self, events: List[GameEvent]) -> None:
        level = self._current_level()
        self._wave_perfect = True
        self._perfect[self._level] += 1
        count = self._perfect[self._level]
        events.append(
            make_event(
                self._cursor,
                EventKind.TUCK_PERFECT,
                level=self._level,
                wave=self._wave,
                hold=level.hold_duration,
                perfect_count=count,
            )
        )
        if self._is_final_level() and level.perfect_to_win is not None and count >= level.perfect_to_win:
            self._finish(ChinTuckPhase.WON, events)

    def _fire_deadline(self, events: List[GameEvent]) -> None:
        if self._phase is ChinTuckPhase.COUNTDOWN:
            self._phase = ChinTuckPhase.WAVE
            level = self._current_level()
            self._deadline = self._cursor + level.hold_duration + self.config.wave_grace
            self._valid = False
            self._hold_start = None
            self._wave_perfect = False
            events.append(make_event(self._cursor, EventKind.WAVE_START, level=self._level, wave=self._wave))
        elif self._phase is ChinTuckPhase.WAVE:
            self._end_wave(events)
        elif self._phase is ChinTuckPhase.REST:
            self._begin_countdown(events)

    def _end_wave(self, events: List[GameEvent]) -> None:
        cfg = self.config
        if not self._wave_perfect:
            if self._valid:
                held = self._cursor - self._hold_start
                if held >= cfg.partial_min_hold:
                    self._record_partial(held, events)
            self._hp = max(0, self._hp - cfg.damage_per_failed_wave)
            events.append(
                make_event(self._cursor, EventKind.WAVE_FAILED, level=self._level, wave=self._wave, hp=self._hp)
            )
            if self._hp <= 0:
                self._finish(ChinTuckPhase.LOST, events)
                return
        self._valid = False
        self._hold_start = None

        level = self._current_level()
        last_wave = self._wave >= level.wave_count - 1
        if last_wave and not self._is_final_level():
            events.append(
                make_event(
                    self._cursor,
                    EventKind.LEVEL_COMPLETE,
                    level=self._level,
                    perfect_count=self._perfect[self._level],
                )
            )
        elif last_wave and level.perfect_to_win is None:
            self._finish(ChinTuckPhase.WON, events)
            return

        events.append(make_event(self._cursor, EventKind.REST_START, level=self._level, wave=self._wave))
        if last_wave and not self._is_final_level():
            self._level += 1
            self._wave = 0
        else:
            # 末关设置了 perfect_to_win 时，波次超出 wave_count 也继续
            self._wave += 1
        self._phase = ChinTuckPhase.REST
        self._deadline = self._cursor + cfg.rest_duration

    def _record_partial(self, held: float, events: List[GameEvent]) -> None:
        self._partial[self._level] += 1
        events.append(
            make_event(self._cursor, EventKind.TUCK_PARTIAL, level=self._level, wave=self._wave, hold=held)
        )

    def _apply_posture(self, sample: PoseSample, events: List[GameEvent]) -> None:
        posture = self.classify(sample)
        if posture.is_valid and not self._valid:
            self._valid = True
            self._hold_start = sample.t
            events.append(make_event(sample.t, EventKind.SHIELD_ACTIVATED, level=self._level, wave=self._wave))
        elif not posture.is_valid and self._valid:
            held = sample.t - self._hold_start
            if not self._wave_perfect and self.config.partial_min_hold <= held < self._current_level().hold_duration:
                self._record_partial(held, events)
            self._valid = False
            self._hold_start = None

    def _finish(self, phase: ChinTuckPhase, events: List[GameEvent]) -> None:
        self._phase = phase
        self._valid = False
        self._hold_start = None
        self._deadline = None
        if phase is ChinTuckPhase.WON:
            events.append(
                make_event(
                    self._cursor,
                    EventKind.GAME_WON,
                    level=self._level,
                    perfect_count=self._perfect[self._level],
                )
            )
        else:
            events.append(make_event(self._cursor, EventKind.GAME_LOST, level=self._level, wave=self._wave))
        logger.debug(f"游戏结束: {phase.value} t={self._cursor:.3f}")


def new_engine(config: Optional[ChinTuckConfig] = None) -> ChinTuckEngine:
    """创建处于 AwaitingCalibration 阶段的新引擎，满血、计数全为零"""
    return ChinTuckEngine(config or ChinTuckConfig())
