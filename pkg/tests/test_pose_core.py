import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neckmotion.errors import InvalidArgumentError
from neckmotion.pose_core import (
    IDENTITY,
    REFERENCE_FORWARD,
    REFERENCE_RIGHT,
    REFERENCE_UP,
    NeutralFrame,
    UnitQuat,
    Vec3,
    angle_between,
    displacement_in,
    forward_of,
    look_rotation,
    neutral_from_window,
    ray_hits_sphere,
    roll_about,
)
from conftest import about, backward, pose
from neckmotion.trace_synth import HEAD_POSITION


def _close(v, expected, tol=1e-9):
    return all(math.isclose(a, b, abs_tol=tol) for a, b in zip(v.as_tuple(), expected))


NEUTRAL = NeutralFrame.from_pose(HEAD_POSITION, IDENTITY)


# ========== forward_of ==========

def test_forward_of_identity():
    assert _close(forward_of(IDENTITY), (0.0, 0.0, -1.0))


def test_forward_of_half_turn_about_up():
    assert _close(forward_of(about(REFERENCE_UP, 180.0)), (0.0, 0.0, 1.0))


def test_forward_of_quarter_turn_about_x():
    assert _close(forward_of(about(REFERENCE_RIGHT, 90.0)), (0.0, 1.0, 0.0))


@pytest.mark.parametrize(
    "q",
    [
        UnitQuat(2.0, 0.0, 0.0, 0.0),
        UnitQuat(float("nan"), 0.0, 0.0, 0.0),
        UnitQuat(0.0, 0.0, 0.0, 0.0),
    ],
)
def test_forward_of_rejects_bad_quaternions(q):
    with pytest.raises(InvalidArgumentError):
        forward_of(q)


# ========== angle_between ==========

def test_angle_between_orthogonal():
    assert angle_between(Vec3(1, 0, 0), Vec3(0, 1, 0)) == pytest.approx(90.0)


def test_angle_between_same_vector():
    v = Vec3(0.3, -0.2, 0.9)
    assert angle_between(v, v) == pytest.approx(0.0, abs=1e-6)


def test_angle_between_constructed_45():
    s = math.sin(math.radians(45))
    c = math.cos(math.radians(45))
    assert angle_between(Vec3(0, 0, -1), Vec3(0, s, -c)) == pytest.approx(45.0)


def test_angle_between_rejects_zero_vector():
    with pytest.raises(InvalidArgumentError):
        angle_between(Vec3(0, 0, 0), Vec3(1, 0, 0))


# ========== displacement_in ==========

def test_displacement_of_neutral_pose_is_zero():
    d = displacement_in(NEUTRAL, pose(0.0))
    assert (d.backward, d.lateral, d.vertical, d.rotation_dev) == pytest.approx((0.0, 0.0, 0.0, 0.0))


def test_displacement_backward_along_frame_axis():
    d = displacement_in(NEUTRAL, pose(0.0, position=backward(0.05)))
    assert d.backward == pytest.approx(0.05)
    assert d.lateral == pytest.approx(0.0)
    assert d.vertical == pytest.approx(0.0)
    assert d.rotation_dev == pytest.approx(0.0)


def test_displacement_rotation_deviation():
    d = displacement_in(NEUTRAL, pose(0.0, orientation=about(REFERENCE_UP, 10.0)))
    assert d.rotation_dev == pytest.approx(10.0, abs=1e-6)
    assert d.backward == pytest.approx(0.0)


def test_displacement_follows_rotated_frame():
    # 中立朝向左转 90° 后，"向后" 变成 +X 方向
    frame = NeutralFrame.from_pose(HEAD_POSITION, about(REFERENCE_UP, 90.0))
    moved = HEAD_POSITION + Vec3(0.04, 0.0, 0.0)
    d = displacement_in(frame, pose(0.0, position=moved, orientation=frame.orientation))
    assert d.backward == pytest.approx(0.04)
    assert d.lateral == pytest.approx(0.0, abs=1e-12)


# ========== roll_about ==========

def test_roll_of_neutral_is_zero():
    assert roll_about(NEUTRAL, IDENTITY) == pytest.approx(0.0)


def test_roll_of_rightward_twist():
    assert roll_about(NEUTRAL, about(REFERENCE_FORWARD, 25.0)) == pytest.approx(25.0)


def test_roll_of_leftward_twist_is_negative():
    assert roll_about(NEUTRAL, about(REFERENCE_FORWARD, -25.0)) == pytest.approx(-25.0)


def test_roll_ignores_pure_yaw():
    assert roll_about(NEUTRAL, about(REFERENCE_UP, 25.0)) == pytest.approx(0.0, abs=1e-6)


angles = st.floats(min_value=-170.0, max_value=170.0, allow_nan=False)


@given(twist=angles, swing=angles, heading=st.floats(min_value=0.0, max_value=360.0))
@settings(max_examples=200, deadline=None)
def test_roll_recovers_twist_under_any_swing(twist, swing, heading):
    # swing 轴垂直于前向轴，twist 绕前向轴
    axis = Vec3(math.cos(math.radians(heading)), math.sin(math.radians(heading)), 0.0)
    q = about(axis, swing) * about(REFERENCE_FORWARD, twist)
    assert roll_about(NEUTRAL, q) == pytest.approx(twist, abs=1e-6)


@given(
    x=st.floats(-1.0, 1.0),
    y=st.floats(-1.0, 1.0),
    z=st.floats(-1.0, 1.0),
)
@settings(max_examples=200, deadline=None)
def test_look_rotation_points_forward_without_twist(x, y, z):
    direction = Vec3(x, y, z)
    if direction.norm() < 1e-3:
        return
    q = look_rotation(direction)
    assert angle_between(forward_of(q), direction) == pytest.approx(0.0, abs=1e-4)
    if angle_between(REFERENCE_FORWARD, direction) < 179.0:
        assert roll_about(NEUTRAL, q) == pytest.approx(0.0, abs=1e-6)


# ========== ray_hits_sphere ==========

ORIGIN = Vec3(0.0, 0.0, 0.0)


def test_ray_through_center_hits():
    assert ray_hits_sphere(ORIGIN, REFERENCE_FORWARD, Vec3(0, 0, -2), 0.2)


def test_sphere_behind_origin_misses():
    assert not ray_hits_sphere(ORIGIN, REFERENCE_FORWARD, Vec3(0, 0, 2), 0.2)


def test_tangent_ray_counts_as_hit():
    assert ray_hits_sphere(ORIGIN, REFERENCE_FORWARD, Vec3(0.5, 0, -2), 0.5)


def test_ray_rejects_zero_direction():
    with pytest.raises(InvalidArgumentError):
        ray_hits_sphere(ORIGIN, Vec3(0, 0, 0), Vec3(0, 0, -2), 0.2)


# ========== neutral_from_window ==========

def test_neutral_from_identical_window():
    p = Vec3(0.1, 1.3, -0.2)
    q = about(REFERENCE_UP, 15.0)
    frame = neutral_from_window([pose(t / 10, position=p, orientation=q) for t in range(5)])
    assert _close(frame.position, p.as_tuple())
    assert frame.orientation == q


def test_neutral_from_window_averages_position_and_takes_median_orientation():
    samples = [
        pose(0.0, position=Vec3(0, 1, 0), orientation=about(REFERENCE_UP, 1.0)),
        pose(0.1, position=Vec3(0, 2, 0), orientation=about(REFERENCE_UP, 2.0)),
        pose(0.2, position=Vec3(0, 3, 0), orientation=about(REFERENCE_UP, 3.0)),
    ]
    frame = neutral_from_window(samples)
    assert frame.position.y == pytest.approx(2.0)
    assert frame.orientation == samples[1].orientation


def test_neutral_from_empty_window():
    with pytest.raises(InvalidArgumentError):
        neutral_from_window([])
