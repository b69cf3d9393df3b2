"""
颈部活动度（ROM）游戏引擎 - 太空主题的确定性状态机

核心特性：
1. ✅ 六方向校准：上、下、左、右、左上、右下，按 A 键确认，记录位置与前向
2. ✅ 飞船目标脚本：极限点停留 → 滑向中点 → 中点停留 → 滑向下一点
3. ✅ 注视计时：头部前向射线命中飞船时才累计停留/推进滑行，丢失注视即暂停
4. ✅ 完成一组动作解锁一个星座（环境奖励）
5. ✅ 侧屈计数：绕中立前向轴的滚转角超过阈值计一次，回到中立带后才能计下一次
6. ✅ 由校准方向计算六个方向的最大活动角度

注视与推进采用零阶保持：区间 (t_prev, t] 只有在 t_prev 样本注视命中时才推进脚本。
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from .errors import ConfigurationError, EngineStateError, InvalidArgumentError, StreamOrderError
from .events import EventKind, GameEvent, make_event
from .pose_core import (
    NeutralFrame,
    PoseSample,
    Vec3,
    angle_between,
    forward_of,
    ray_hits_sphere,
    roll_about,
)

logger = logging.getLogger(__name__)

DEGENERATE_SPREAD = 1.0


class Direction(str, Enum):
    UP = "Up"
    DOWN = "Down"
    LEFT = "Left"
    RIGHT = "Right"
    TOP_LEFT = "TopLeft"
    BOTTOM_RIGHT = "BottomRight"


CALIBRATION_ORDER: Tuple[Direction, ...] = (
    Direction.UP,
    Direction.DOWN,
    Direction.LEFT,
    Direction.RIGHT,
    Direction.TOP_LEFT,
    Direction.BOTTOM_RIGHT,
)


class LateralMapping(str, Enum):
    DIAGONAL_CALIBRATION = "DiagonalCalibration"
    GAMEPLAY_ROLL_MAX = "GameplayRollMax"


class Side(str, Enum):
    LEFT = "Left"
    RIGHT = "Right"

    def other(self) -> "Side":
        return Side.RIGHT if self is Side.LEFT else Side.LEFT


@dataclass(frozen=True)
class RomConfig:
    """ROM 游戏配置

    停留时长缺省：极限点 7.5 秒，中点 2 秒；侧屈阈值 20°、中立带 5°、每侧 10 次。
    """

    dwell_extreme: float = 7.5
    dwell_mid: float = 2.0
    segment_travel_time: float = 4.0
    target_radius: float = 0.2
    target_distance: float = 2.0
    sets_required: int = 3
    tilt_threshold: float = 20.0
    neutral_band: float = 5.0
    tilts_per_side: int = 10
    path_order: Tuple[Direction, ...] = CALIBRATION_ORDER
    lateral_mapping: LateralMapping = LateralMapping.DIAGONAL_CALIBRATION
    first_side: Side = Side.LEFT

    def violations(self) -> List[str]:
        problems: List[str] = []
        positive = {
            "dwell_extreme": self.dwell_extreme,
            "dwell_mid": self.dwell_mid,
            "segment_travel_time": self.segment_travel_time,
            "target_radius": self.target_radius,
            "target_distance": self.target_distance,
            "neutral_band": self.neutral_band,
        }
        for name, value in positive.items():
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
                problems.append(f"{name}: must be > 0 (got {value!r})")
        if not self.tilt_threshold > self.neutral_band:
            problems.append("tilt_threshold: must be > neutral_band")
        if self.sets_required < 1:
            problems.append("sets_required: must be >= 1")
        if self.tilts_per_side < 1:
            problems.append("tilts_per_side: must be >= 1")
        if len(self.path_order) != len(CALIBRATION_ORDER) or set(self.path_order) != set(CALIBRATION_ORDER):
            problems.append("path_order: must be a permutation of the six direction labels")
        return problems

    def validate(self) -> None:
        problems = self.violations()
        if problems:
            raise ConfigurationError(problems)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dwell_extreme": self.dwell_extreme,
            "dwell_mid": self.dwell_mid,
            "segment_travel_time": self.segment_travel_time,
            "target_radius": self.target_radius,
            "target_distance": self.target_distance,
            "sets_required": self.sets_required,
            "tilt_threshold": self.tilt_threshold,
            "neutral_band": self.neutral_band,
            "tilts_per_side": self.tilts_per_side,
            "path_order": [d.value for d in self.path_order],
            "lateral_mapping": self.lateral_mapping.value,
            "first_side": self.first_side.value,
        }


@dataclass(frozen=True)
class CalibrationPoint:
    position: Vec3
    forward: Vec3


@dataclass(frozen=True)
class RomCalibration:
    neutral: NeutralFrame
    points: Mapping[Direction, CalibrationPoint]


@dataclass(frozen=True)
class RomAngles:
    flexion: float
    extension: float
    rotation_left: float
    rotation_right: float
    lateral_flexion_left: float
    lateral_flexion_right: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "flexion": self.flexion,
            "extension": self.extension,
            "rotation_left": self.rotation_left,
            "rotation_right": self.rotation_right,
            "lateral_flexion_left": self.lateral_flexion_left,
            "lateral_flexion_right": self.lateral_flexion_right,
        }


def compute_max_angles(
    calibration: RomCalibration,
    config: RomConfig,
    gameplay_roll_extrema: Optional[Tuple[float, float]] = None,
) -> RomAngles:
    """由校准方向计算最大活动角度

    屈曲/伸展/左右旋转取对应校准前向与中立前向的夹角。侧屈按
    config.lateral_mapping：DiagonalCalibration 用左上/右下两个对角方向，
    GameplayRollMax 用侧屈阶段观测到的每侧最大 |roll|（gameplay_roll_extrema = (左, 右)）。

    Raises:
        InvalidArgumentError: 校准缺少方向，或 GameplayRollMax 未提供极值
    """
    missing = [d.value for d in CALIBRATION_ORDER if d not in calibration.points]
    if missing:
        raise InvalidArgumentError(f"校准缺少方向: {missing}")
    neutral_forward = calibration.neutral.forward

    def angle_to(direction: Direction) -> float:
        return angle_between(neutral_forward, calibration.points[direction].forward)

    if config.lateral_mapping is LateralMapping.GAMEPLAY_ROLL_MAX:
        if gameplay_roll_extrema is None:
            raise InvalidArgumentError("GameplayRollMax 需要提供侧屈阶段的滚转极值")
        lateral_left, lateral_right = (abs(float(v)) for v in gameplay_roll_extrema)
    else:
        lateral_left = angle_to(Direction.TOP_LEFT)
        lateral_right = angle_to(Direction.BOTTOM_RIGHT)

    return RomAngles(
        flexion=angle_to(Direction.DOWN),
        extension=angle_to(Direction.UP),
        rotation_left=angle_to(Direction.LEFT),
        rotation_right=angle_to(Direction.RIGHT),
        lateral_flexion_left=lateral_left,
        lateral_flexion_right=lateral_right,
    )


class StepKind(str, Enum):
    HOLD = "Hold"
    GLIDE = "Glide"


@dataclass(frozen=True)
class ScriptStep:
    kind: StepKind
    duration: float
    start: Vec3
    end: Vec3
    target: str

    def position_at(self, progress: float) -> Vec3:
        if self.kind is StepKind.HOLD:
            return self.start
        fraction = max(0.0, min(1.0, progress / self.duration))
        return self.start + (self.end - self.start) * fraction


class TargetScript:
    """一组动作的飞船脚本，按 path_order 的相邻点对展开"""

    def __init__(self, steps: Sequence[ScriptStep]):
        self.steps: Tuple[ScriptStep, ...] = tuple(steps)

    @classmethod
    def build(cls, calibration: RomCalibration, config: RomConfig) -> "TargetScript":
        targets = {
            label: point.position + point.forward * config.target_distance
            for label, point in calibration.points.items()
        }
        half = config.segment_travel_time / 2.0
        steps: List[ScriptStep] = []
        for a, b in zip(config.path_order, config.path_order[1:]):
            pa, pb = targets[a], targets[b]
            mid = (pa + pb) * 0.5
            steps.append(ScriptStep(StepKind.HOLD, config.dwell_extreme, pa, pa, a.value))
            steps.append(ScriptStep(StepKind.GLIDE, half, pa, mid, f"{a.value}->mid"))
            steps.append(ScriptStep(StepKind.HOLD, config.dwell_mid, mid, mid, f"mid:{a.value}-{b.value}"))
            steps.append(ScriptStep(StepKind.GLIDE, half, mid, pb, f"mid->{b.value}"))
        return cls(steps)

    @property
    def total_duration(self) -> float:
        return sum(step.duration for step in self.steps)

    def locate(self, elapsed: float) -> Tuple[int, float]:
        """脚本时间 elapsed 对应的 (步骤序号, 步内进度)；超出末尾时停在最后一步终点"""
        remaining = elapsed
        for index, step in enumerate(self.steps):
            if remaining < step.duration:
                return index, remaining
            remaining -= step.duration
        return len(self.steps) - 1, self.steps[-1].duration

    def position(self, index: int, progress: float) -> Vec3:
        return self.steps[index].position_at(progress)


class RomPhase(str, Enum):
    CALIBRATING = "Calibrating"
    TARGET_SCRIPT = "TargetScript"
    LATERAL_FLEXION = "LateralFlexion"
    COMPLETE = "Complete"


@dataclass(frozen=True)
class RomState:
    phase: RomPhase
    next_label: Optional[Direction]
    set_index: int
    script_index: int
    dwell_elapsed: float
    spaceship_position: Optional[Vec3]
    fixating: bool
    side_prompted: Optional[Side]
    left_count: int
    right_count: int
    tilt_armed: bool
    constellations_unlocked: int
    sets_required: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "phase": self.phase.value,
            "next_label": self.next_label.value if self.next_label else None,
            "set_index": self.set_index,
            "script_index": self.script_index,
            "dwell_elapsed": self.dwell_elapsed,
            "spaceship_position": list(self.spaceship_position.as_tuple()) if self.spaceship_position else None,
            "fixating": self.fixating,
            "side_prompted": self.side_prompted.value if self.side_prompted else None,
            "left_count": self.left_count,
            "right_count": self.right_count,
            "tilt_armed": self.tilt_armed,
            "constellations_unlocked": self.constellations_unlocked,
            "sets_required": self.sets_required,
        }


class RomEngine:
    """单会话的 ROM 状态机；调用须严格串行"""

    def __init__(self, config: RomConfig):
        config.validate()
        self.config = config
        self._phase = RomPhase.CALIBRATING
        self._last_t: Optional[float] = None
        self._neutral_pose: Optional[PoseSample] = None
        self._points: Dict[Direction, CalibrationPoint] = {}
        self._calibration: Optional[RomCalibration] = None
        self._script: Optional[TargetScript] = None

        self._cursor: Optional[float] = None
        self._set = 0
        self._index = 0
        self._progress = 0.0
        self._fixating = False
        self._constellations = 0

        self._prompted = config.first_side
        self._counts = {Side.LEFT: 0, Side.RIGHT: 0}
        self._armed = True
        self._roll_extrema = {Side.LEFT: 0.0, Side.RIGHT: 0.0}

    # ---------- 公共接口 ----------

    @property
    def phase(self) -> RomPhase:
        return self._phase

    @property
    def calibration(self) -> Optional[RomCalibration]:
        return self._calibration

    @property
    def has_neutral(self) -> bool:
        return self._neutral_pose is not None

    @property
    def roll_extrema(self) -> Tuple[float, float]:
        return self._roll_extrema[Side.LEFT], self._roll_extrema[Side.RIGHT]

    def begin_calibration(self, sample: PoseSample) -> None:
        """记录校准开始时的姿态作为中立姿态"""
        if self._phase is not RomPhase.CALIBRATING:
            raise EngineStateError(f"当前阶段 {self._phase.value} 不能开始校准")
        if self._neutral_pose is not None:
            raise EngineStateError("中立姿态已记录")
        self._check_sample(sample)
        forward_of(sample.orientation)
        self._neutral_pose = sample

    def confirm_point(self, sample: PoseSample) -> List[GameEvent]:
        """按固定顺序确认一个校准方向

        返回本次确认产生的事件，第一个总是 CalibrationPointConfirmed；
        第六次确认后还会附带 Warning（校准退化时）和 AnglesComputed，并进入目标脚本阶段。

        Raises:
            EngineStateError: 不在校准阶段，或尚未记录中立姿态
        """
        if self._phase is not RomPhase.CALIBRATING:
            raise EngineStateError(f"当前阶段 {self._phase.value} 不接受校准确认")
        if self._neutral_pose is None:
            raise EngineStateError("尚未记录中立姿态，请先调用 begin_calibration")
        self._check_sample(sample)

        index = len(self._points)
        label = CALIBRATION_ORDER[index]
        forward = forward_of(sample.orientation)
        self._points[label] = CalibrationPoint(position=sample.position, forward=forward)
        events = [
            make_event(
                sample.t,
                EventKind.CALIBRATION_POINT_CONFIRMED,
                label=label.value,
                index=index,
                fx=forward.x,
                fy=forward.y,
                fz=forward.z,
            )
        ]
        logger.debug(f"校准点 {label.value} 已确认 t={sample.t:.3f}")
        if len(self._points) == len(CALIBRATION_ORDER):
            self._finish_calibration(sample.t, events)
        return events

    def step(self, sample: PoseSample) -> List[GameEvent]:
        """处理一帧姿态（目标脚本或侧屈阶段）

        Raises:
            EngineStateError: 校准未完成或会话已完成
            StreamOrderError: 时间戳倒退
        """
        if self._phase is RomPhase.COMPLETE:
            raise EngineStateError("会话已完成，不能继续 step")
        if self._phase is RomPhase.CALIBRATING:
            raise EngineStateError("校准尚未完成，不能 step")
        self._check_sample(sample)

        events: List[GameEvent] = []
        if self._phase is RomPhase.TARGET_SCRIPT:
            if self._fixating:
                self._advance_script(sample.t, events)
            self._cursor = sample.t
            if self._phase is RomPhase.TARGET_SCRIPT:
                self._update_fixation(sample, events)
        if self._phase is RomPhase.LATERAL_FLEXION:
            self._cursor = sample.t
            self._apply_tilt(sample, events)
        return events

    def max_angles(self) -> RomAngles:
        if self._calibration is None:
            raise EngineStateError("校准尚未完成")
        extrema = self.roll_extrema if self.config.lateral_mapping is LateralMapping.GAMEPLAY_ROLL_MAX else None
        return compute_max_angles(self._calibration, self.config, extrema)

    def snapshot(self) -> RomState:
        in_script = self._phase is RomPhase.TARGET_SCRIPT
        in_lateral = self._phase is RomPhase.LATERAL_FLEXION
        return RomState(
            phase=self._phase,
            next_label=CALIBRATION_ORDER[len(self._points)] if self._phase is RomPhase.CALIBRATING else None,
            set_index=self._set,
            script_index=self._index,
            dwell_elapsed=self._progress if in_script else 0.0,
            spaceship_position=self._ship_position() if in_script else None,
            fixating=self._fixating,
            side_prompted=self._prompted if in_lateral else None,
            left_count=self._counts[Side.LEFT],
            right_count=self._counts[Side.RIGHT],
            tilt_armed=self._armed,
            constellations_unlocked=self._constellations,
            sets_required=self.config.sets_required,
        )

    # ---------- 内部实现 ----------

    def _check_sample(self, sample: PoseSample) -> None:
        if not sample.is_finite():
            raise InvalidArgumentError(f"样本含非有限分量: t={sample.t}")
        if self._last_t is not None and sample.t < self._last_t:
            raise StreamOrderError(f"时间戳倒退: {sample.t} < {self._last_t}", t=sample.t)
        self._last_t = sample.t

    def _finish_calibration(self, t: float, events: List[GameEvent]) -> None:
        neutral = NeutralFrame.from_pose(self._neutral_pose.position, self._neutral_pose.orientation)
        self._calibration = RomCalibration(neutral=neutral, points=dict(self._points))

        spread = max(angle_between(neutral.forward, p.forward) for p in self._points.values())
        if spread < DEGENERATE_SPREAD:
            message = f"六个校准方向与中立前向的最大夹角仅 {spread:.3f}°"
            logger.warning(message)
            events.append(make_event(t, EventKind.WARNING, code="degenerate_calibration", message=message))

        extrema = (0.0, 0.0) if self.config.lateral_mapping is LateralMapping.GAMEPLAY_ROLL_MAX else None
        angles = compute_max_angles(self._calibration, self.config, extrema)
        events.append(make_event(t, EventKind.ANGLES_COMPUTED, **angles.to_dict()))

        self._script = TargetScript.build(self._calibration, self.config)
        self._phase = RomPhase.TARGET_SCRIPT
        self._cursor = t
        self._set = 0
        self._index = 0
        self._progress = 0.0
        self._fixating = False
        logger.debug(f"校准完成 t={t:.3f}，进入目标脚本阶段")

    def _ship_position(self) -> Vec3:
        return self._script.position(self._index, self._progress)

    def _advance_script(self, t: float, events: List[GameEvent]) -> None:
        now = self._cursor
        remaining = t - self._cursor
        while remaining > 0.0 and self._phase is RomPhase.TARGET_SCRIPT:
            step = self._script.steps[self._index]
            left = step.duration - self._progress
            if remaining < left:
                self._progress += remaining
                return
            remaining -= left
            now = min(now + left, t)
            self._progress = step.duration
            self._complete_step(now, events)
            if self._index == 0:
                # 新一组从第一个目标重新开始，本帧剩余时间不计入
                return

    def _complete_step(self, t: float, events: List[GameEvent]) -> None:
        step = self._script.steps[self._index]
        if step.kind is StepKind.HOLD:
            events.append(
                make_event(
                    t,
                    EventKind.FIXATION_COMPLETE,
                    set=self._set,
                    step=self._index,
                    target=step.target,
                    dwell=step.duration,
                )
            )
        self._index += 1
        self._progress = 0.0
        if self._index < len(self._script.steps):
            return

        events.append(make_event(t, EventKind.SET_COMPLETE, set=self._set))
        events.append(make_event(t, EventKind.CONSTELLATION_UNLOCKED, set=self._set))
        self._constellations += 1
        self._set += 1
        self._index = 0
        logger.debug(f"第 {self._set} 组完成 t={t:.3f}")
        if self._set >= self.config.sets_required:
            self._phase = RomPhase.LATERAL_FLEXION
            self._fixating = False
            self._armed = True

    def _update_fixation(self, sample: PoseSample, events: List[GameEvent]) -> None:
        hit = ray_hits_sphere(
            sample.position,
            forward_of(sample.orientation),
            self._ship_position(),
            self.config.target_radius,
        )
        if hit and not self._fixating:
            events.append(make_event(sample.t, EventKind.FIXATION_START, set=self._set, step=self._index))
        elif not hit and self._fixating:
            events.append(make_event(sample.t, EventKind.FIXATION_BROKEN, set=self._set, step=self._index))
        self._fixating = hit

    def _apply_tilt(self, sample: PoseSample, events: List[GameEvent]) -> None:
        cfg = self.config
        roll = roll_about(self._calibration.neutral, sample.orientation)
        side = Side.LEFT if roll < 0 else Side.RIGHT
        if abs(roll) > self._roll_extrema[side]:
            self._roll_extrema[side] = abs(roll)

        if abs(roll) <= cfg.neutral_band:
            self._armed = True
        if not self._armed or abs(roll) < cfg.tilt_threshold or side is not self._prompted:
            return

        self._counts[side] += 1
        self._armed = False
        kind = EventKind.TILT_LEFT if side is Side.LEFT else EventKind.TILT_RIGHT
        events.append(make_event(sample.t, kind, count=self._counts[side], roll=roll))

        other = side.other()
        if self._counts[other] < cfg.tilts_per_side:
            self._prompted = other
        if all(count >= cfg.tilts_per_side for count in self._counts.values()):
            if cfg.lateral_mapping is LateralMapping.GAMEPLAY_ROLL_MAX:
                angles = compute_max_angles(self._calibration, cfg, self.roll_extrema)
                events.append(make_event(sample.t, EventKind.ANGLES_COMPUTED, **angles.to_dict()))
            events.append(
                make_event(
                    sample.t,
                    EventKind.SESSION_COMPLETE,
                    left=self._counts[Side.LEFT],
                    right=self._counts[Side.RIGHT],
                )
            )
            self._phase = RomPhase.COMPLETE
            logger.debug(f"会话完成 t={sample.t:.3f}")


def new_engine(config: Optional[RomConfig] = None) -> RomEngine:
    """创建处于 Calibrating(Up) 阶段的新引擎"""
    return RomEngine(config or RomConfig())
