"""
头部姿态几何内核

两款游戏共用的纯函数与不可变值：向量、单位四元数、中立坐标系投影和角度计算。

坐标约定（全库只在这里定义一次）：
- 世界坐标为右手系，+Y 朝上
- 头显局部前向轴为 (0, 0, -1)，局部上方 (0, 1, 0)，局部右方 (1, 0, 0)
- 四元数分量顺序为 (w, x, y, z)，q 与 -q 表示同一旋转

核心函数：
- forward_of(q) - 四元数作用于参考前向轴
- angle_between(u, v) - 两向量夹角（度）
- displacement_in(frame, pose) - 相对中立坐标系的位移与旋转偏差
- roll_about(frame, q) - 绕中立前向轴的扭转角（swing-twist 分解）
- ray_hits_sphere(origin, dir, center, radius) - 前向射线与球体命中判定
"""

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError

UNIT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, scalar: float) -> "Vec3":
        return Vec3(self.x * scalar, self.y * scalar, self.z * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        length = self.norm()
        if length == 0.0 or not math.isfinite(length):
            raise InvalidArgumentError(f"无法归一化长度为 {length} 的向量")
        return Vec3(self.x / length, self.y / length, self.z / length)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)

    def as_tuple(self) -> tuple:
        return (self.x, self.y, self.z)

    @classmethod
    def from_iterable(cls, values: Iterable[float]) -> "Vec3":
        x, y, z = (float(v) for v in values)
        return cls(x, y, z)


REFERENCE_FORWARD = Vec3(0.0, 0.0, -1.0)
REFERENCE_UP = Vec3(0.0, 1.0, 0.0)
REFERENCE_RIGHT = Vec3(1.0, 0.0, 0.0)


@dataclass(frozen=True)
class UnitQuat:
    w: float
    x: float
    y: float
    z: float

    def __mul__(self, other: "UnitQuat") -> "UnitQuat":
        """Hamilton 积：先施加 other，再施加 self"""
        return UnitQuat(
            self.w * other.w - self.x * other.x - self.y * other.y - self.z * other.z,
            self.w * other.x + self.x * other.w + self.y * other.z - self.z * other.y,
            self.w * other.y - self.x * other.z + self.y * other.w + self.z * other.x,
            self.w * other.z + self.x * other.y - self.y * other.x + self.z * other.w,
        )

    def __neg__(self) -> "UnitQuat":
        return UnitQuat(-self.w, -self.x, -self.y, -self.z)

    def dot(self, other: "UnitQuat") -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def conjugate(self) -> "UnitQuat":
        return UnitQuat(self.w, -self.x, -self.y, -self.z)

    def normalized(self) -> "UnitQuat":
        length = self.norm()
        if length == 0.0 or not math.isfinite(length):
            raise InvalidArgumentError(f"无法归一化模长为 {length} 的四元数")
        return UnitQuat(self.w / length, self.x / length, self.y / length, self.z / length)

    def is_finite(self) -> bool:
        return all(math.isfinite(c) for c in (self.w, self.x, self.y, self.z))

    def rotate(self, v: Vec3) -> Vec3:
        # v' = v + 2w(u×v) + 2u×(u×v)
        u = Vec3(self.x, self.y, self.z)
        uv = u.cross(v)
        uuv = u.cross(uv)
        return v + uv * (2.0 * self.w) + uuv * 2.0

    def as_tuple(self) -> tuple:
        return (self.w, self.x, self.y, self.z)

    @classmethod
    def from_axis_angle(cls, axis: Vec3, degrees: float) -> "UnitQuat":
        unit = axis.normalized()
        half = math.radians(degrees) / 2.0
        s = math.sin(half)
        return cls(math.cos(half), unit.x * s, unit.y * s, unit.z * s)


IDENTITY = UnitQuat(1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PoseSample:
    """一帧带时间戳的 6 自由度头部姿态；button 为该帧随附的手柄按键（如 "A"）"""

    t: float
    position: Vec3
    orientation: UnitQuat
    button: Optional[str] = None

    def is_finite(self) -> bool:
        return math.isfinite(self.t) and self.position.is_finite() and self.orientation.is_finite()


@dataclass(frozen=True)
class NeutralFrame:
    position: Vec3
    orientation: UnitQuat
    forward: Vec3
    up: Vec3
    right: Vec3

    @classmethod
    def from_pose(cls, position: Vec3, orientation: UnitQuat) -> "NeutralFrame":
        """由中立姿态确定性地推导前/上/右三个正交单位轴"""
        require_unit(orientation)
        return cls(
            position=position,
            orientation=orientation,
            forward=orientation.rotate(REFERENCE_FORWARD),
            up=orientation.rotate(REFERENCE_UP),
            right=orientation.rotate(REFERENCE_RIGHT),
        )


@dataclass(frozen=True)
class FrameDisplacement:
    backward: float
    lateral: float
    vertical: float
    rotation_dev: float


def require_unit(q: UnitQuat) -> None:
    if not q.is_finite():
        raise InvalidArgumentError(f"四元数含非有限分量: {q}")
    if abs(q.norm() - 1.0) > UNIT_TOLERANCE:
        raise InvalidArgumentError(f"四元数不是单位四元数 (模长 {q.norm():.12f})")


def forward_of(q: UnitQuat) -> Vec3:
    """返回 q 作用于参考前向轴 (0, 0, -1) 的结果（单位向量）

    Raises:
        InvalidArgumentError: q 含非有限分量或不是单位四元数

    示例:
        >>> forward_of(IDENTITY)
        Vec3(x=0.0, y=0.0, z=-1.0)
    """
    require_unit(q)
    return q.rotate(REFERENCE_FORWARD)


def angle_between(u: Vec3, v: Vec3) -> float:
    """两向量夹角，单位为度，范围 [0, 180]

    Raises:
        InvalidArgumentError: 任一向量长度为零
    """
    nu = u.norm()
    nv = v.norm()
    if nu == 0.0 or nv == 0.0:
        raise InvalidArgumentError("angle_between 不接受零向量")
    cosine = max(-1.0, min(1.0, u.dot(v) / (nu * nv)))
    return math.degrees(math.acos(cosine))


def rotation_deviation(a: UnitQuat, b: UnitQuat) -> float:
    """两个朝向之间的测地角（度）"""
    return math.degrees(2.0 * math.acos(min(1.0, abs(a.dot(b)))))


def displacement_in(frame: NeutralFrame, pose: PoseSample) -> FrameDisplacement:
    """在中立坐标系下度量当前姿态

    backward 为沿 -forward 的有符号位移（正值表示向后），lateral / vertical
    为右方轴与上方轴方向的位移绝对值，rotation_dev 为测地角偏差。
    """
    delta = pose.position - frame.position
    return FrameDisplacement(
        backward=delta.dot(-frame.forward),
        lateral=abs(delta.dot(frame.right)),
        vertical=abs(delta.dot(frame.up)),
        rotation_dev=rotation_deviation(pose.orientation, frame.orientation),
    )


def roll_about(frame: NeutralFrame, q: UnitQuat) -> float:
    """相对中立朝向的扭转角，绕 frame.forward 度量

    正值表示头向用户右侧倾斜（从脑后看为顺时针），取值范围 (-180, 180]。
    扭转角通过把相对旋转的虚部投影到前向轴得到（swing-twist 分解）。
    """
    relative = q * frame.orientation.conjugate()
    axis = frame.forward
    projection = relative.x * axis.x + relative.y * axis.y + relative.z * axis.z
    if projection == 0.0 and relative.w == 0.0:
        # 180° 的纯 swing，扭转分量无定义
        return 0.0
    angle = math.degrees(2.0 * math.atan2(projection, relative.w))
    while angle <= -180.0:
        angle += 360.0
    while angle > 180.0:
        angle -= 360.0
    return angle


def ray_hits_sphere(origin: Vec3, direction: Vec3, center: Vec3, radius: float) -> bool:
    """前向射线是否命中球体，边界（距离恰好等于半径）算命中"""
    if direction.norm() == 0.0:
        raise InvalidArgumentError("射线方向不能为零向量")
    if radius <= 0.0:
        raise InvalidArgumentError(f"球体半径必须为正: {radius}")
    unit = direction.normalized()
    to_center = center - origin
    along = to_center.dot(unit)
    if along < 0.0:
        return False
    perpendicular = to_center - unit * along
    return perpendicular.norm() <= radius


def look_rotation(direction: Vec3) -> UnitQuat:
    """把参考前向轴转到 direction 的最短弧旋转

    旋转轴垂直于参考前向轴，因此相对单位朝向的扭转角恒为 0。
    """
    unit = direction.normalized()
    axis = REFERENCE_FORWARD.cross(unit)
    cosine = max(-1.0, min(1.0, REFERENCE_FORWARD.dot(unit)))
    if axis.norm() < 1e-12:
        return IDENTITY if cosine > 0 else UnitQuat.from_axis_angle(REFERENCE_UP, 180.0)
    return UnitQuat.from_axis_angle(axis, math.degrees(math.acos(cosine)))


def neutral_from_window(samples: Sequence[PoseSample]) -> NeutralFrame:
    """由一段采样窗口建立中立坐标系

    位置取窗口内平均值；朝向取时间中位样本的朝向，避免对四元数求平均。
    """
    if not samples:
        raise InvalidArgumentError("校准窗口不能为空")
    positions = np.array([s.position.as_tuple() for s in samples], dtype=float)
    mean = positions.mean(axis=0)
    median_sample = samples[len(samples) // 2]
    return NeutralFrame.from_pose(Vec3.from_iterable(mean), median_sample.orientation)
