import pytest

from neckmotion.chintuck_engine import ChinTuckConfig, LevelSpec
from neckmotion.pose_core import IDENTITY, PoseSample, UnitQuat, Vec3
from neckmotion.rom_engine import RomConfig
from neckmotion.trace_synth import HEAD_POSITION, UserProfile

# 短关卡配置，让重放在毫秒级完成
SHORT_LEVELS = (
    LevelSpec(hold_duration=2.0, wave_count=3),
    LevelSpec(hold_duration=3.0, wave_count=3, perfect_to_win=3),
)


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path):
    monkeypatch.setenv("NECKMOTION_LOG_DIR", str(tmp_path / "session_logs"))
    monkeypatch.delenv("NECKMOTION_LISTEN", raising=False)
    monkeypatch.delenv("NECKMOTION_STATE_INTERVAL", raising=False)


@pytest.fixture
def short_config():
    return ChinTuckConfig(levels=SHORT_LEVELS, rest_duration=2.0, countdown_duration=1.0, wave_grace=2.0)


@pytest.fixture
def short_rom_config():
    return RomConfig(dwell_extreme=1.0, dwell_mid=0.5, segment_travel_time=1.0, sets_required=2, tilts_per_side=3)


@pytest.fixture
def compliant():
    return UserProfile(seed=7, sample_rate=10.0)


def pose(t, position=HEAD_POSITION, orientation=IDENTITY, button=None):
    return PoseSample(t=t, position=position, orientation=orientation, button=button)


def backward(depth):
    """沿参考前向轴的反方向（+Z）平移后的头部位置"""
    return Vec3(HEAD_POSITION.x, HEAD_POSITION.y, HEAD_POSITION.z + depth)


def about(axis, degrees):
    return UnitQuat.from_axis_angle(axis, degrees)
