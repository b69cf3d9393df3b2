"""
康复会话复盘代理

核心特性：
1. ✅ 无默认参数 - 每个参数都由 LLM 显式给出
2. ✅ 统一日志格式 - "--- Tool: function_name called/completed/failed ---"
3. ✅ 标准化返回值 - status/data/error_message/metadata 结构
4. ✅ 读取的日志全部经过 schema 版本与摘要一致性校验

核心工具函数：
- summarize_session_log(log_path) - 单个会话日志的摘要与逐波结果
- cohort_report(log_dir) - 目录下全部会话日志的队列统计
- rom_angles_from_calibration(calibration_path) - 由校准文件计算最大活动角度
"""

import logging
import os
import time
from typing import Any, Dict, List

from google.adk.agents import Agent

from neckmotion.analytics import cohort_summary
from neckmotion.errors import NeckMotionError
from neckmotion.rom_engine import LateralMapping, RomConfig, compute_max_angles
from neckmotion.session_io import read_calibration, read_log, wave_outcomes
from neckmotion.settings import load_settings

logger = logging.getLogger(__name__)


def summarize_session_log(log_path: str) -> Dict[str, Any]:
    """读取一个会话日志并返回摘要。

    日志会被完整校验：schema_version 必须为当前版本，摘要必须与事件重新计算的结果一致。
    下巴后缩游戏额外返回每一波的结果（perfect/partial/failed/pending）。

    Args:
        log_path (str): 会话日志 JSON 文件路径，如 './session_logs/chintuck-20250101T120000-0001.json'

    Returns:
        dict:
            - status (str): 'success' 或 'error'
            - data (dict): 成功时包含
                - game (str): 'chintuck' 或 'rom'
                - started_at (str): 会话开始时间
                - summary (dict): 会话摘要（完成时间、各等级完美次数、活动角度等）
                - waves (list): 仅下巴后缩游戏，逐波结果
            - error_message (str): 失败时的错误说明
            - metadata (dict): 元信息

    示例:
        >>> result = summarize_session_log("./session_logs/chintuck-20250101T120000-0001.json")
        >>> result["data"]["summary"]["outcome"]
        'won'
    """
    print(f"--- Tool: summarize_session_log called with log_path={log_path} ---")

    if not log_path or not log_path.strip():
        return {"status": "error", "error_message": "日志路径不能为空"}

    path = log_path.strip()
    try:
        log = read_log(path)
    except OSError as e:
        error_msg = f"无法读取日志文件: {e}"
        print(f"--- Tool: summarize_session_log failed - {error_msg} ---")
        return {"status": "error", "error_message": error_msg, "metadata": {"log_path": path}}
    except NeckMotionError as e:
        error_msg = f"日志校验失败 ({type(e).__name__}): {e}"
        print(f"--- Tool: summarize_session_log failed - {error_msg} ---")
        return {"status": "error", "error_message": error_msg, "metadata": {"log_path": path}}

    data: Dict[str, Any] = {
        "game": log.game_id,
        "started_at": log.started_at,
        "summary": log.summary,
    }
    if log.game_id == "chintuck":
        data["waves"] = wave_outcomes(log.events)

    print(f"--- Tool: summarize_session_log completed successfully for {path} ---")
    return {
        "status": "success",
        "data": data,
        "metadata": {
            "log_path": path,
            "events": len(log.events),
            "schema_version": log.schema_version,
            "timestamp": time.time(),
        },
    }


def cohort_report(log_dir: str) -> Dict[str, Any]:
    """汇总一个目录下所有会话日志，给出队列层面的 均值 ± 标准差。

    目录中无法通过校验的日志会被跳过，并在 metadata.skipped 中列出原因。

    Args:
        log_dir (str): 会话日志目录；传 'default' 使用 NECKMOTION_LOG_DIR

    Returns:
        dict:
            - status (str): 'success' 或 'error'
            - data (dict): 成功时为队列报告
                - rows (list): 每行包含 section、label、mean、sd、n
            - error_message (str): 失败时的错误说明
            - metadata (dict): 读取的日志数与被跳过的文件

    示例:
        >>> result = cohort_report("./session_logs")
        >>> [r["label"] for r in result["data"]["rows"]][:2]
        ['# Perfect chin tucks (5 sec)', '# Perfect chin tucks (7 sec)']
    """
    print(f"--- Tool: cohort_report called with log_dir={log_dir} ---")

    if not log_dir or not log_dir.strip():
        return {"status": "error", "error_message": "日志目录不能为空"}

    directory = load_settings().log_dir if log_dir.strip() == "default" else log_dir.strip()
    if not os.path.isdir(directory):
        error_msg = f"目录不存在: {directory}"
        print(f"--- Tool: cohort_report failed - {error_msg} ---")
        return {"status": "error", "error_message": error_msg, "metadata": {"log_dir": directory}}

    logs = []
    skipped: List[Dict[str, str]] = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".json") or name.endswith(".intent.json"):
            continue
        path = os.path.join(directory, name)
        try:
            logs.append(read_log(path))
        except (OSError, NeckMotionError) as e:
            logger.warning(f"跳过日志 {path}: {e}")
            skipped.append({"file": name, "reason": str(e)})

    if not logs:
        error_msg = f"{directory} 中没有可用的会话日志"
        print(f"--- Tool: cohort_report failed - {error_msg} ---")
        return {
            "status": "error",
            "error_message": error_msg,
            "metadata": {"log_dir": directory, "skipped": skipped},
        }

    report = cohort_summary(logs)
    print(f"--- Tool: cohort_report completed successfully with {len(logs)} logs ---")
    return {
        "status": "success",
        "data": report.to_dict(),
        "metadata": {
            "log_dir": directory,
            "logs": len(logs),
            "skipped": skipped,
            "timestamp": time.time(),
        },
    }


def rom_angles_from_calibration(calibration_path: str) -> Dict[str, Any]:
    """由 ROM 校准文件（或带校准信息的 ROM 会话日志）计算六个最大活动角度（度）。

    侧屈取对角校准点（左上 / 右下）的前向与中立前向之间的夹角。

    Args:
        calibration_path (str): 校准 JSON 文件或 ROM 会话日志路径

    Returns:
        dict:
            - status (str): 'success' 或 'error'
            - data (dict): flexion、extension、rotation_left、rotation_right、
              lateral_flexion_left、lateral_flexion_right
            - error_message (str): 失败时的错误说明
            - metadata (dict): 元信息
    """
    print(f"--- Tool: rom_angles_from_calibration called with calibration_path={calibration_path} ---")

    if not calibration_path or not calibration_path.strip():
        return {"status": "error", "error_message": "校准文件路径不能为空"}

    path = calibration_path.strip()
    try:
        calibration = read_calibration(path)
        angles = compute_max_angles(calibration, RomConfig(lateral_mapping=LateralMapping.DIAGONAL_CALIBRATION))
    except (OSError, NeckMotionError) as e:
        error_msg = f"计算活动角度失败: {e}"
        print(f"--- Tool: rom_angles_from_calibration failed - {error_msg} ---")
        return {"status": "error", "error_message": error_msg, "metadata": {"calibration_path": path}}

    print(f"--- Tool: rom_angles_from_calibration completed successfully for {path} ---")
    return {
        "status": "success",
        "data": angles.to_dict(),
        "metadata": {"calibration_path": path, "unit": "degrees", "timestamp": time.time()},
    }


session_review_agent = Agent(
    name="session_review_agent",
    model=load_settings().agent_model,
    description=(
        "康复会话复盘代理，读取 VR 颈部康复游戏（下巴后缩、颈部活动度）的会话日志，"
        "给出单次会话摘要、逐波结果、队列统计以及由校准数据计算的最大活动角度。"
    ),
    instruction=(
        "你是康复治疗师的会话复盘助手，负责解读颈部康复游戏的会话日志。\n\n"
        "## 工具\n"
        "- **summarize_session_log(log_path)**: 单次会话摘要。下巴后缩游戏会给出每个等级的完美/部分完成次数、"
        "失败波数、重新校准次数和胜负；活动度游戏会给出六个最大角度、左右侧屈次数和完成的组数。\n"
        "- **cohort_report(log_dir)**: 目录下全部日志的 均值 ± 标准差。log_dir 传 'default' 表示默认日志目录。\n"
        "- **rom_angles_from_calibration(calibration_path)**: 由校准文件计算屈曲、伸展、左右旋转、左右侧屈角度（度）。\n\n"
        "## 要求\n"
        "- 角度保留两位小数并注明单位（度）。\n"
        "- 工具返回 status='error' 时，原样转述 error_message，不要猜测数据。\n"
        "- 只陈述日志中的数据，不做临床诊断。"
    ),
    tools=[summarize_session_log, cohort_report, rom_angles_from_calibration],
)
