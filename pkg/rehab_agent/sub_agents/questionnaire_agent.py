"""
问卷统计代理

核心特性：
1. ✅ 无默认参数 - 阈值、分组列、中立分都由 LLM 显式给出
2. ✅ 统一日志格式 - "--- Tool: function_name called/completed/failed ---"
3. ✅ 标准化返回值 - status/data/error_message/metadata 结构
4. ✅ 小样本走精确分布，大样本走正态近似，方法写在结果里

核心工具函数：
- score_sus_csv(csv_path) - 逐人 SUS 分数
- sus_threshold_test(csv_path, threshold) - SUS 均值对阈值的单样本 t 检验
- compare_sus_groups(csv_path, group_column) - 两组 SUS 的 Mann-Whitney U 检验
- likert_item_summary(csv_path, neutral) - Likert 逐题对中立分的 Wilcoxon 检验
"""

import logging
import time
from typing import Any, Dict

from google.adk.agents import Agent

from neckmotion.analytics import (
    compare_groups,
    likert_summary,
    load_likert_csv,
    load_sus_csv,
    split_groups,
    sus_score,
    threshold_report,
)
from neckmotion.errors import NeckMotionError
from neckmotion.settings import load_settings

logger = logging.getLogger(__name__)


def _error(tool: str, message: str, metadata: Dict[str, Any]) -> Dict[str, Any]:
    print(f"--- Tool: {tool} failed - {message} ---")
    return {"status": "error", "error_message": message, "metadata": metadata}


def score_sus_csv(csv_path: str) -> Dict[str, Any]:
    """计算 CSV 中每位受访者的 SUS 分数（0-100）。

    Args:
        csv_path (str): 问卷 CSV 路径，列 q1..q10 取值 1-5，可选 respondent 列

    Returns:
        dict:
            - status (str): 'success' 或 'error'
            - data (dict):
                - scores (list): [{"respondent": "1", "score": 85.0}, ...]
            - error_message (str): 失败时的错误说明
            - metadata (dict): 受访人数
    """
    print(f"--- Tool: score_sus_csv called with csv_path={csv_path} ---")
    if not csv_path or not csv_path.strip():
        return {"status": "error", "error_message": "CSV 路径不能为空"}

    path = csv_path.strip()
    try:
        responses, table = load_sus_csv(path)
    except (OSError, NeckMotionError) as e:
        return _error("score_sus_csv", f"读取问卷失败: {e}", {"csv_path": path})

    scores = [
        {"respondent": respondent, "score": sus_score(response)}
        for respondent, response in zip(table.respondents, responses)
    ]
    print(f"--- Tool: score_sus_csv completed successfully with {len(scores)} respondents ---")
    return {
        "status": "success",
        "data": {"scores": scores},
        "metadata": {"csv_path": path, "respondents": len(scores), "timestamp": time.time()},
    }


def sus_threshold_test(csv_path: str, threshold: float) -> Dict[str, Any]:
    """SUS 均值 ± 标准差，以及对阈值（通常 68）的单样本 t 检验。

    p < 0.05 且均值高于阈值时 passed 为 True。所有分数相同时无法检验，
    test 为空并在 error 中说明。

    Args:
        csv_path (str): 问卷 CSV 路径（列 q1..q10）
        threshold (float): 可用性阈值，行业常用 68

    Returns:
        dict:
            - status (str): 'success' 或 'error'
            - data (dict): n、mean、sd、threshold、test（statistic/p_value/method/df）、passed
            - error_message (str): 失败时的错误说明
            - metadata (dict): 元信息，含文本版报告
    """
    print(f"--- Tool: sus_threshold_test called with csv_path={csv_path}, threshold={threshold} ---")
    if not csv_path or not csv_path.strip():
        return {"status": "error", "error_message": "CSV 路径不能为空"}

    path = csv_path.strip()
    try:
        responses, _ = load_sus_csv(path)
        report = threshold_report([sus_score(r) for r in responses], float(threshold))
    except (OSError, NeckMotionError) as e:
        return _error("sus_threshold_test", f"阈值检验失败: {e}", {"csv_path": path, "threshold": threshold})

    print(f"--- Tool: sus_threshold_test completed successfully, passed={report.passed} ---")
    return {
        "status": "success",
        "data": report.to_dict(),
        "metadata": {"csv_path": path, "text": report.render_text(), "timestamp": time.time()},
    }


def compare_sus_groups(csv_path: str, group_column: str) -> Dict[str, Any]:
    """按分组列把受访者分成两组，比较 SUS 分数（Mann-Whitney U）。

    典型用法是比较有颈痛与无颈痛的两组。分组列必须恰好有两个取值。

    Args:
        csv_path (str): 问卷 CSV 路径（列 q1..q10 加分组列）
        group_column (str): 分组列名，如 'pain'

    Returns:
        dict:
            - status (str): 'success' 或 'error'
            - data (dict):
                - groups (list): 两组各自的 label、mean、sd
                - test (dict): U 统计量、p 值、方法（ExactEnumeration/NormalApprox）
            - error_message (str): 失败时的错误说明
            - metadata (dict): 元信息
    """
    print(f"--- Tool: compare_sus_groups called with csv_path={csv_path}, group_column={group_column} ---")
    if not csv_path or not csv_path.strip():
        return {"status": "error", "error_message": "CSV 路径不能为空"}
    if not group_column or not group_column.strip():
        return {"status": "error", "error_message": "分组列名不能为空"}

    path = csv_path.strip()
    column = group_column.strip()
    try:
        responses, table = load_sus_csv(path, column)
        labels, a, b = split_groups([sus_score(r) for r in responses], table.groups or [])
        comparison = compare_groups(a, b, labels)
    except (OSError, NeckMotionError) as e:
        return _error("compare_sus_groups", f"分组比较失败: {e}", {"csv_path": path, "group_column": column})

    print(f"--- Tool: compare_sus_groups completed successfully, p={comparison.test.p_value:.4f} ---")
    return {
        "status": "success",
        "data": comparison.to_dict(),
        "metadata": {
            "csv_path": path,
            "group_column": column,
            "sizes": [len(a), len(b)],
            "timestamp": time.time(),
        },
    }


def likert_item_summary(csv_path: str, neutral: float) -> Dict[str, Any]:
    """Likert 问卷逐题 均值 ± 标准差，并对中立分做 Wilcoxon 符号秩检验。

    Args:
        csv_path (str): 问卷 CSV 路径（列 q1..qN，取值 1-5）
        neutral (float): 中立分，五级量表一般为 3

    Returns:
        dict:
            - status (str): 'success' 或 'error'
            - data (dict): neutral 与 items 列表（每题 item、mean、sd、test）
            - error_message (str): 失败时的错误说明
            - metadata (dict): 元信息
    """
    print(f"--- Tool: likert_item_summary called with csv_path={csv_path}, neutral={neutral} ---")
    if not csv_path or not csv_path.strip():
        return {"status": "error", "error_message": "CSV 路径不能为空"}

    path = csv_path.strip()
    try:
        sets, _ = load_likert_csv(path)
        report = likert_summary(sets, float(neutral))
    except (OSError, NeckMotionError) as e:
        return _error("likert_item_summary", f"Likert 统计失败: {e}", {"csv_path": path})

    print(f"--- Tool: likert_item_summary completed successfully with {len(sets)} respondents ---")
    return {
        "status": "success",
        "data": report.to_dict(),
        "metadata": {"csv_path": path, "respondents": len(sets), "timestamp": time.time()},
    }


questionnaire_agent = Agent(
    name="questionnaire_agent",
    model=load_settings().agent_model,
    description=(
        "问卷统计代理，处理系统可用性量表（SUS）与 Likert 问卷："
        "计算 SUS 分数、对阈值做单样本 t 检验、两组 Mann-Whitney U 比较、逐题 Wilcoxon 检验。"
    ),
    instruction=(
        "你是康复研究的问卷统计助手。\n\n"
        "## 工具\n"
        "- **score_sus_csv(csv_path)**: 逐人 SUS 分数。\n"
        "- **sus_threshold_test(csv_path, threshold)**: 均值 ± 标准差与单样本 t 检验，用户未指定阈值时用 68。\n"
        "- **compare_sus_groups(csv_path, group_column)**: 两组比较，例如有无颈痛。\n"
        "- **likert_item_summary(csv_path, neutral)**: 逐题对中立分检验，五级量表中立分为 3。\n\n"
        "## 报告格式\n"
        "- 均值 ± 标准差保留一位小数，如 83.0±16.1。\n"
        "- 给出 p 值（四位小数）和检验方法；p < 0.05 视为显著。\n"
        "- 工具返回 status='error' 时转述 error_message。"
    ),
    tools=[score_sus_csv, sus_threshold_test, compare_sus_groups, likert_item_summary],
)
