"""
合成姿态轨迹生成器 - 不戴头显也能复现引擎的每一种结果

核心特性：
1. ✅ 用户画像 UserProfile：后缩深度、反应时间、提前放松概率、噪声、采样率、ROM 极限角度、注视准确率
2. ✅ synth_chintuck：按引擎的波次时间表生成后缩动作，并给出每个波次的预期结果（意图记录）
3. ✅ synth_rom：六方向校准 → 跟随飞船 → 按提示侧屈
4. ✅ synth_cohort：按画像分布生成一个队列
5. ✅ 相同 (画像, 配置, 种子) 生成逐字节相同的轨迹

随机数：numpy PCG64，由 SeedSequence(seed) 派生两个独立流，分别驱动行为决策和噪声。
噪声为每轴独立高斯噪声，经 2 Hz 二阶巴特沃斯低通滤波后缩放到目标标准差。
意图记录只对零噪声画像保证与引擎观测完全一致。
"""

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from .chintuck_engine import ChinTuckConfig
from .errors import ConfigurationError, InvalidArgumentError
from .pose_core import (
    IDENTITY,
    REFERENCE_FORWARD,
    NeutralFrame,
    PoseSample,
    UnitQuat,
    Vec3,
    forward_of,
    look_rotation,
)
from .rom_engine import CALIBRATION_ORDER, CalibrationPoint, Direction, RomCalibration, RomConfig, Side, TargetScript
from .session_io import dumps_canonical, format_trace_line, sample_from_record, write_trace

logger = logging.getLogger(__name__)

HEAD_POSITION = Vec3(0.0, 1.2, 0.0)
NOISE_CUTOFF_HZ = 2.0
TUCK_RAMP = 0.3
RAMP_CEILING = 0.9
TAIL_SECONDS = 1.0

# 队列均值 ± 标准差（度）
COHORT_EXTENTS: Dict[str, Tuple[float, float]] = {
    Direction.UP.value: (49.80, 13.57),
    Direction.DOWN.value: (62.47, 17.58),
    Direction.LEFT.value: (45.18, 20.75),
    Direction.RIGHT.value: (44.95, 16.06),
    Direction.TOP_LEFT.value: (43.26, 6.90),
    Direction.BOTTOM_RIGHT.value: (44.36, 9.01),
}

_SQRT_HALF = math.sqrt(0.5)
CALIBRATION_AXES: Dict[Direction, Tuple[Vec3, float]] = {
    Direction.UP: (Vec3(1.0, 0.0, 0.0), 1.0),
    Direction.DOWN: (Vec3(1.0, 0.0, 0.0), -1.0),
    Direction.LEFT: (Vec3(0.0, 1.0, 0.0), 1.0),
    Direction.RIGHT: (Vec3(0.0, 1.0, 0.0), -1.0),
    Direction.TOP_LEFT: (Vec3(_SQRT_HALF, _SQRT_HALF, 0.0), 1.0),
    Direction.BOTTOM_RIGHT: (Vec3(-_SQRT_HALF, -_SQRT_HALF, 0.0), 1.0),
}


def _default_extents() -> Dict[str, float]:
    return {label: mean for label, (mean, _) in COHORT_EXTENTS.items()}


@dataclass(frozen=True)
class UserProfile:
    """合成用户画像

    rom_extents 以方向标签为键（Up/Down/Left/Right/TopLeft/BottomRight），单位为度；
    TopLeft / BottomRight 同时作为左右侧屈的峰值滚转角。
    """

    seed: int = 0
    tuck_depth: float = 0.05
    tuck_reaction: float = 0.5
    hold_slack: float = 0.0
    positional_noise: float = 0.0
    rotational_noise: float = 0.0
    sample_rate: float = 72.0
    rom_extents: Mapping[str, float] = field(default_factory=_default_extents)
    fixation_accuracy: float = 1.0

    def violations(self) -> List[str]:
        problems: List[str] = []
        for name in ("tuck_depth", "tuck_reaction", "positional_noise", "rotational_noise"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                problems.append(f"{name}: must be >= 0 (got {value!r})")
        for name in ("hold_slack", "fixation_accuracy"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                problems.append(f"{name}: must be in [0, 1] (got {value!r})")
        if not self.sample_rate > 0 or not math.isfinite(self.sample_rate):
            problems.append(f"sample_rate: must be > 0 (got {self.sample_rate!r})")
        expected = {d.value for d in CALIBRATION_ORDER}
        for key in sorted(set(self.rom_extents) - expected):
            problems.append(f"rom_extents.{key}: unknown direction")
        for key in sorted(expected - set(self.rom_extents)):
            problems.append(f"rom_extents.{key}: required")
        for key, value in self.rom_extents.items():
            if key in expected and not 0.0 < value < 180.0:
                problems.append(f"rom_extents.{key}: must be in (0, 180)")
        return problems

    def validate(self) -> None:
        problems = self.violations()
        if problems:
            raise ConfigurationError(problems)

    @property
    def is_noise_free(self) -> bool:
        return self.positional_noise == 0.0 and self.rotational_noise == 0.0

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["rom_extents"] = {d.value: float(self.rom_extents[d.value]) for d in CALIBRATION_ORDER if d.value in self.rom_extents}
        return data


def profile_from_dict(data: Mapping[str, Any]) -> UserProfile:
    """由 JSON 对象构造画像；缺省键取默认值，未知键报错"""
    if not isinstance(data, Mapping):
        raise ConfigurationError(["profile: expected a JSON object"])
    known = {f.name for f in fields(UserProfile)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError([f"{key}: unknown key" for key in unknown])
    values = dict(data)
    if "rom_extents" in values:
        extents = _default_extents()
        extents.update({str(k): float(v) for k, v in values["rom_extents"].items()})
        values["rom_extents"] = extents
    profile = UserProfile(**values)
    profile.validate()
    return profile


def load_profile(path: str) -> UserProfile:
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError([f"{path} 第 {e.lineno} 行第 {e.colno} 列: {e.msg}"]) from e
    return profile_from_dict(data)


@dataclass
class SynthResult:
    game: str
    profile: UserProfile
    samples: List[PoseSample]
    intent: Dict[str, Any]

    def lines(self) -> List[str]:
        return [format_trace_line(s) for s in self.samples]

    def write(self, path: str) -> str:
        """写出轨迹，并在旁边写 <stem>.intent.json；返回意图文件路径"""
        write_trace(self.samples, path)
        intent_path = intent_path_for(path)
        with open(intent_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(dumps_canonical(self.intent) + "\n")
        logger.info(f"合成轨迹已写入 {path}（{len(self.samples)} 帧），意图记录 {intent_path}")
        return intent_path


def intent_path_for(trace_path: str) -> str:
    stem, _ = os.path.splitext(trace_path)
    return stem + ".intent.json"


# ========== 公共工具 ==========

def _seed_streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    behaviour, noise = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(behaviour)), np.random.Generator(np.random.PCG64(noise))


def _roundtrip(sample: PoseSample) -> PoseSample:
    """经过一次 6 位小数序列化，使内存中的样本与文件中的样本完全一致"""
    return sample_from_record(json.loads(format_trace_line(sample)))


def _time_of(k: int, rate: float) -> float:
    return k / rate


def _lowpass_noise(rng: np.random.Generator, count: int, sigma: float, rate: float) -> np.ndarray:
    white = rng.standard_normal((count, 3))
    if sigma == 0.0 or count == 0:
        return np.zeros((count, 3))
    if rate > 2.0 * NOISE_CUTOFF_HZ * 1.05:
        b, a = signal.butter(2, NOISE_CUTOFF_HZ, btype="low", fs=rate)
        white = signal.lfilter(b, a, white, axis=0)
    std = white.std(axis=0)
    std[std == 0.0] = 1.0
    return white / std * sigma


def _apply_noise(samples: Sequence[PoseSample], profile: UserProfile, rng: np.random.Generator) -> List[PoseSample]:
    if profile.is_noise_free:
        return list(samples)
    count = len(samples)
    position_noise = _lowpass_noise(rng, count, profile.positional_noise, profile.sample_rate)
    rotation_noise = _lowpass_noise(rng, count, profile.rotational_noise, profile.sample_rate)
    noisy: List[PoseSample] = []
    for sample, dp, dr in zip(samples, position_noise, rotation_noise):
        orientation = sample.orientation
        angle = float(np.linalg.norm(dr))
        if angle > 0.0:
            jitter = UnitQuat.from_axis_angle(Vec3.from_iterable(dr), angle)
            orientation = (jitter * orientation).normalized()
        noisy.append(
            _roundtrip(replace(sample, position=sample.position + Vec3.from_iterable(dp), orientation=orientation))
        )
    return noisy


# ========== 下巴后缩 ==========

@dataclass(frozen=True)
class _Tuck:
    ramp_start: float
    plateau_start: float
    plateau_end: float


def _tuck_depth_at(t: float, tucks: Sequence[_Tuck], depth: float, threshold: float) -> float:
    ramp_peak = RAMP_CEILING * min(depth, threshold)
    for tuck in tucks:
        if t < tuck.ramp_start:
            break
        if t < tuck.plateau_start:
            return ramp_peak * (t - tuck.ramp_start) / TUCK_RAMP
        if t < tuck.plateau_end:
            return depth
        if t < tuck.plateau_end + TUCK_RAMP:
            return ramp_peak * (1.0 - (t - tuck.plateau_end) / TUCK_RAMP)
    return 0.0


def synth_chintuck(profile: UserProfile, config: Optional[ChinTuckConfig] = None) -> SynthResult:
    """生成一局下巴后缩轨迹及其意图记录

    每个波次开始 tuck_reaction 秒后开始后缩，经 0.3 秒过渡到 tuck_depth；
    以 hold_slack 的概率在 [partial_min_hold, hold) 内提前放松，否则保持满时长。
    过渡段的位移始终低于阈值，因此有效姿态恰好是平台段。

    Raises:
        ConfigurationError: 画像或配置不合法
        InvalidArgumentError: 反应时间过长，保持满时长也来不及在波次结束前完成
    """
    config = config or ChinTuckConfig()
    config.validate()
    profile.validate()
    dt = 1.0 / profile.sample_rate
    if profile.tuck_reaction + TUCK_RAMP + 3.0 * dt > config.wave_grace:
        raise InvalidArgumentError(
            f"tuck_reaction={profile.tuck_reaction} 加上过渡时间后超过 wave_grace={config.wave_grace}"
        )
    if config.rest_duration + config.countdown_duration <= TUCK_RAMP + 2.0 * dt:
        raise InvalidArgumentError("休息 + 倒计时太短，放松动作会延续到下一个波次")

    behaviour, noise = _seed_streams(profile.seed)
    reaches = profile.tuck_depth >= config.backward_threshold

    levels = config.levels
    level = wave = 0
    hp = config.hp_max
    perfect = [0] * len(levels)
    partial = [0] * len(levels)
    waves: List[Dict[str, Any]] = []
    tucks: List[_Tuck] = []
    clock = config.neutral_capture_delay + config.neutral_capture_window
    outcome = "in_progress"
    end_time = clock

    while True:
        spec = levels[level]
        final = level == len(levels) - 1
        wave_start = clock + config.countdown_duration
        wave_end = wave_start + spec.hold_duration + config.wave_grace
        plateau_start = wave_start + profile.tuck_reaction + TUCK_RAMP

        lo = config.partial_min_hold + 1.5 * dt
        hi = spec.hold_duration - 1.5 * dt
        releases_early = behaviour.random() < profile.hold_slack and lo <= hi
        if releases_early:
            held = float(behaviour.uniform(lo, hi))
            plateau_end = plateau_start + held
        else:
            plateau_end = plateau_start + spec.hold_duration + 2.5 * dt
        tucks.append(_Tuck(plateau_start - TUCK_RAMP, plateau_start, plateau_end))

        if reaches and not releases_early:
            result = "perfect"
        elif reaches:
            result = "partial"
        else:
            result = "failed"
        waves.append({"level": level, "wave": wave, "outcome": result})

        if result == "perfect":
            perfect[level] += 1
            if final and spec.perfect_to_win is not None and perfect[level] >= spec.perfect_to_win:
                outcome, end_time = "won", plateau_end
                break
        else:
            if result == "partial":
                partial[level] += 1
            hp = max(0, hp - config.damage_per_failed_wave)
            if hp <= 0:
                outcome, end_time = "lost", wave_end
                break

        last_wave = wave >= spec.wave_count - 1
        if last_wave and not final:
            level, wave = level + 1, 0
        elif last_wave and spec.perfect_to_win is None:
            outcome, end_time = "won", wave_end
            break
        else:
            wave += 1
        clock = wave_end + config.rest_duration

    count = int(math.ceil((end_time + TAIL_SECONDS) * profile.sample_rate)) + 1
    samples: List[PoseSample] = []
    for k in range(count):
        t = _time_of(k, profile.sample_rate)
        depth = _tuck_depth_at(t, tucks, profile.tuck_depth, config.backward_threshold)
        position = HEAD_POSITION + (-REFERENCE_FORWARD) * depth
        samples.append(_roundtrip(PoseSample(t=t, position=position, orientation=IDENTITY)))
    samples = _apply_noise(samples, profile, noise)

    intent = {
        "game": "chintuck",
        "seed": profile.seed,
        "waves": waves,
        "perfect_per_level": perfect,
        "partial_per_level": partial,
        "outcome": outcome,
        "exact": profile.is_noise_free,
    }
    logger.debug(f"合成下巴后缩轨迹: seed={profile.seed} 波次 {len(waves)} 结果 {outcome}")
    return SynthResult(game="chintuck", profile=profile, samples=samples, intent=intent)


# ========== ROM ==========

def calibration_rotation(direction: Direction, degrees: float) -> UnitQuat:
    """把中立朝向转到某个校准方向、偏离中立前向 degrees 度的旋转"""
    axis, sign = CALIBRATION_AXES[direction]
    return UnitQuat.from_axis_angle(axis, sign * degrees)


def tilt_rotation(side: Side, degrees: float) -> UnitQuat:
    """绕参考前向轴的侧屈旋转；右侧为正滚转"""
    signed = degrees if side is Side.RIGHT else -degrees
    return UnitQuat.from_axis_angle(REFERENCE_FORWARD, signed)


class _RomTrace:
    def __init__(self, rate: float):
        self.rate = rate
        self.samples: List[PoseSample] = []

    @property
    def next_t(self) -> float:
        return _time_of(len(self.samples), self.rate)

    def emit(self, orientation: UnitQuat, button: Optional[str] = None) -> PoseSample:
        sample = _roundtrip(PoseSample(self.next_t, HEAD_POSITION, orientation.normalized(), button))
        self.samples.append(sample)
        return sample

    def hold(self, orientation: UnitQuat, seconds: float) -> None:
        end = self.next_t + seconds
        while self.next_t < end:
            self.emit(orientation)


def _scaled(rotation: UnitQuat, fraction: float) -> UnitQuat:
    """旋转角按比例缩放（同轴）"""
    half = math.acos(max(-1.0, min(1.0, rotation.w)))
    if half == 0.0:
        return IDENTITY
    axis = Vec3(rotation.x, rotation.y, rotation.z)
    return UnitQuat.from_axis_angle(axis, math.degrees(2.0 * half * fraction))


def _move(trace: _RomTrace, rotation: UnitQuat, seconds: float, reverse: bool = False) -> None:
    start = trace.next_t
    while trace.next_t < start + seconds:
        fraction = (trace.next_t - start) / seconds
        trace.emit(_scaled(rotation, 1.0 - fraction if reverse else fraction))


def synth_rom(
    profile: UserProfile,
    config: Optional[RomConfig] = None,
    calibration: Optional[RomCalibration] = None,
) -> SynthResult:
    """生成一局 ROM 轨迹及其意图记录

    1. 中立姿态一帧，随后按校准顺序转到每个方向的 rom_extents 角度并按 A 键
    2. 跟随飞船：每个 1 秒周期内前 fixation_accuracy 比例的时间注视飞船，其余时间看向反方向
    3. 按提示侧屈，峰值滚转为 TopLeft / BottomRight 极限角

    calibration 为 None 时由轨迹自身的校准帧推导（与引擎一致）；传入时只用于飞船脚本。

    Raises:
        ConfigurationError: 画像或配置不合法
        InvalidArgumentError: 采样率过低，无法在停留段内落点
    """
    config = config or RomConfig()
    config.validate()
    profile.validate()
    if profile.sample_rate < 4.0:
        raise InvalidArgumentError("ROM 合成需要 sample_rate >= 4 Hz")
    _, noise = _seed_streams(profile.seed)
    trace = _RomTrace(profile.sample_rate)

    # 1. 校准
    neutral = trace.emit(IDENTITY)
    points: Dict[Direction, CalibrationPoint] = {}
    for direction in CALIBRATION_ORDER:
        rotation = calibration_rotation(direction, profile.rom_extents[direction.value])
        trace.hold(IDENTITY, 0.5)
        _move(trace, rotation, 1.0)
        trace.hold(rotation, 0.25)
        confirmed = trace.emit(rotation, button="A")
        points[direction] = CalibrationPoint(position=confirmed.position, forward=forward_of(confirmed.orientation))
        if direction is not CALIBRATION_ORDER[-1]:
            _move(trace, rotation, 0.5, reverse=True)
    derived = RomCalibration(NeutralFrame.from_pose(neutral.position, neutral.orientation), points)
    script = TargetScript.build(calibration or derived, config)

    # 2. 目标脚本（零阶保持：上一帧注视命中时脚本才前进）
    required = script.total_duration * config.sets_required
    cap = required / max(profile.fixation_accuracy, 0.25) + 5.0
    phase_start = trace.next_t
    elapsed = 0.0
    previous_t: Optional[float] = None
    previous_looking = False
    while elapsed < required and trace.next_t - phase_start < cap:
        t = trace.next_t
        if previous_looking and previous_t is not None:
            # 与引擎一致：跨过一组的终点时截断，剩余时间不带入下一组
            boundary = (math.floor(elapsed / script.total_duration + 1e-9) + 1) * script.total_duration
            elapsed = min(elapsed + (t - previous_t), boundary)
        if elapsed < required:
            into_set = max(0.0, elapsed - script.total_duration * math.floor(elapsed / script.total_duration + 1e-9))
        else:
            into_set = script.total_duration
        index, progress = script.locate(into_set)
        target = script.position(index, progress)
        looking = ((t - phase_start) % 1.0) < profile.fixation_accuracy
        direction = target - HEAD_POSITION if looking else HEAD_POSITION - target
        trace.emit(look_rotation(direction))
        previous_t, previous_looking = t, looking
    sets_completed = min(config.sets_required, int(elapsed / script.total_duration + 1e-9))
    if elapsed >= required:
        sets_completed = config.sets_required
        # 留一点余量，保证引擎在同一帧或下一帧完成最后一步
        final_target = script.position(len(script.steps) - 1, script.steps[-1].duration)
        trace.hold(look_rotation(final_target - HEAD_POSITION), 0.5)
        trace.hold(IDENTITY, 0.5)

    # 3. 侧屈
    counts = {Side.LEFT: 0, Side.RIGHT: 0}
    peaks = {
        Side.LEFT: profile.rom_extents[Direction.TOP_LEFT.value],
        Side.RIGHT: profile.rom_extents[Direction.BOTTOM_RIGHT.value],
    }
    if sets_completed >= config.sets_required:
        prompted = config.first_side
        attempts = 0
        max_attempts = 4 * config.tilts_per_side
        while attempts < max_attempts and min(counts.values()) < config.tilts_per_side:
            rotation = tilt_rotation(prompted, peaks[prompted])
            _move(trace, rotation, 0.75)
            trace.hold(rotation, 0.25)
            _move(trace, rotation, 0.75, reverse=True)
            trace.hold(IDENTITY, 0.25)
            attempts += 1
            if peaks[prompted] >= config.tilt_threshold:
                counts[prompted] += 1
                if counts[prompted.other()] < config.tilts_per_side:
                    prompted = prompted.other()
        trace.hold(IDENTITY, TAIL_SECONDS)

    complete = all(c >= config.tilts_per_side for c in counts.values())
    samples = _apply_noise(trace.samples, profile, noise)
    intent = {
        "game": "rom",
        "seed": profile.seed,
        "sets_completed": sets_completed,
        "constellations_unlocked": sets_completed,
        "tilts_left": counts[Side.LEFT],
        "tilts_right": counts[Side.RIGHT],
        "angles": {
            "flexion": profile.rom_extents[Direction.DOWN.value],
            "extension": profile.rom_extents[Direction.UP.value],
            "rotation_left": profile.rom_extents[Direction.LEFT.value],
            "rotation_right": profile.rom_extents[Direction.RIGHT.value],
            "lateral_flexion_left": profile.rom_extents[Direction.TOP_LEFT.value],
            "lateral_flexion_right": profile.rom_extents[Direction.BOTTOM_RIGHT.value],
        },
        "outcome": "complete" if complete else "in_progress",
        "exact": profile.is_noise_free,
    }
    logger.debug(f"合成 ROM 轨迹: seed={profile.seed} 组数 {sets_completed} 侧屈 {counts[Side.LEFT]}/{counts[Side.RIGHT]}")
    return SynthResult(game="rom", profile=profile, samples=samples, intent=intent)


# ========== 队列 ==========

@dataclass(frozen=True)
class CohortDistribution:
    """队列画像分布；ROM 极限角按 COHORT_EXTENTS 的均值 ± 标准差抽样"""

    tuck_depth: Tuple[float, float] = (0.045, 0.01)
    tuck_reaction: Tuple[float, float] = (0.3, 1.2)
    hold_slack: Tuple[float, float] = (0.0, 0.3)
    fixation_accuracy: Tuple[float, float] = (0.8, 1.0)
    extent_bounds: Tuple[float, float] = (25.0, 85.0)
    sample_rate: float = 20.0
    positional_noise: float = 0.0
    rotational_noise: float = 0.0

    def draw(self, rng: np.random.Generator, seed: int) -> UserProfile:
        lo, hi = self.extent_bounds
        extents = {
            label: float(np.clip(rng.normal(mean, sd), lo, hi)) for label, (mean, sd) in COHORT_EXTENTS.items()
        }
        return UserProfile(
            seed=seed,
            tuck_depth=float(max(0.0, rng.normal(*self.tuck_depth))),
            tuck_reaction=float(rng.uniform(*self.tuck_reaction)),
            hold_slack=float(rng.uniform(*self.hold_slack)),
            positional_noise=self.positional_noise,
            rotational_noise=self.rotational_noise,
            sample_rate=self.sample_rate,
            rom_extents=extents,
            fixation_accuracy=float(rng.uniform(*self.fixation_accuracy)),
        )


def synth_cohort(
    n: int,
    distribution: Optional[CohortDistribution] = None,
    seed: int = 0,
    chintuck_config: Optional[ChinTuckConfig] = None,
    rom_config: Optional[RomConfig] = None,
    games: Sequence[str] = ("chintuck", "rom"),
) -> List[SynthResult]:
    """为 n 名合成受试者各生成每款游戏一条轨迹，按受试者顺序排列"""
    if n < 0:
        raise InvalidArgumentError(f"n 必须 >= 0: {n}")
    distribution = distribution or CohortDistribution()
    rng = np.random.Generator(np.random.PCG64(seed))
    results: List[SynthResult] = []
    for participant in range(n):
        participant_seed = int(rng.integers(0, 2**31 - 1))
        profile = distribution.draw(rng, participant_seed)
        for game in games:
            if game == "chintuck":
                results.append(synth_chintuck(profile, chintuck_config))
            elif game == "rom":
                results.append(synth_rom(profile, rom_config))
            else:
                raise InvalidArgumentError(f"未知游戏: {game}")
    logger.info(f"合成队列: {n} 人，{len(results)} 条轨迹")
    return results
