"""
评估统计：SUS 评分、Likert 汇总、三种假设检验，以及会话日志的队列汇总

核心函数：
- sus_score(response) - SUS 0~100 分
- one_sample_t(sample, mu) - 单样本 t 检验（双侧）
- wilcoxon_signed_rank(sample, mu) - Wilcoxon 符号秩检验，m <= 20 时精确枚举
- mann_whitney_u(a, b) - Mann-Whitney U 检验，n_a + n_b <= 16 时精确枚举
- cohort_summary(logs) - 按量化指标表的行结构输出 均值 ± 标准差
- threshold_report(scores, threshold) - SUS 是否显著高于 68
- likert_summary / sus_item_report / compare_groups - 问卷逐题分析与组间比较

所有 p 值均为双侧：P(|S - E[S]| >= |s_obs - E[S]|)。
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from .errors import DegenerateSampleError, InvalidArgumentError
from .session_io import SessionLog

logger = logging.getLogger(__name__)

SUS_ITEMS = 10
SCALE_MIN = 1
SCALE_MAX = 5
SUS_THRESHOLD = 68.0
SIGNIFICANCE = 0.05
WILCOXON_EXACT_MAX = 20
MANN_WHITNEY_EXACT_MAX = 16


class Method(str, Enum):
    EXACT = "ExactEnumeration"
    NORMAL = "NormalApprox"
    STUDENT_T = "StudentT"


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    statistic: float
    p_value: float
    method: Method
    n: int
    n2: Optional[int] = None
    df: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method.value,
            "n": self.n,
        }
        if self.n2 is not None:
            data["n2"] = self.n2
        if self.df is not None:
            data["df"] = self.df
        return data

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE


def _check_item(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer, float, np.floating)):
        raise InvalidArgumentError(f"{where}: 必须是整数 (收到 {value!r})")
    if isinstance(value, (float, np.floating)) and not float(value).is_integer():
        raise InvalidArgumentError(f"{where}: 必须是整数 (收到 {value!r})")
    item = int(value)
    if not SCALE_MIN <= item <= SCALE_MAX:
        raise InvalidArgumentError(f"{where}: 取值必须在 [{SCALE_MIN}, {SCALE_MAX}] 内 (收到 {item})")
    return item


@dataclass(frozen=True)
class LikertSet:
    items: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(_check_item(v, f"item {i + 1}") for i, v in enumerate(self.items)))


@dataclass(frozen=True)
class SusResponse(LikertSet):
    def __post_init__(self):
        super().__post_init__()
        if len(self.items) != SUS_ITEMS:
            raise InvalidArgumentError(f"SUS 问卷必须恰好 {SUS_ITEMS} 题，收到 {len(self.items)} 题")


# ========== SUS ==========

def sus_score(response: Union[SusResponse, Sequence[int]]) -> float:
    """SUS 分数：奇数题（正向）贡献 item-1，偶数题（反向）贡献 5-item，总和 × 2.5

    示例:
        >>> sus_score([4, 2, 4, 2, 4, 2, 4, 2, 4, 2])
        75.0
    """
    if not isinstance(response, SusResponse):
        response = SusResponse(tuple(response))
    total = 0
    for index, item in enumerate(response.items):
        total += (item - 1) if index % 2 == 0 else (SCALE_MAX - item)
    return total * 2.5


# ========== 参数检验 ==========

def one_sample_t(sample: Sequence[float], mu: float) -> TestResult:
    """单样本 t 检验，双侧 p 值取自 Student-t 生存函数

    Raises:
        DegenerateSampleError: n < 2 或样本方差为 0
    """
    values = np.asarray(sample, dtype=float)
    n = len(values)
    if n < 2:
        raise DegenerateSampleError(f"t 检验至少需要 2 个样本，收到 {n} 个")
    sd = float(values.std(ddof=1))
    if sd == 0.0:
        raise DegenerateSampleError("样本方差为 0，t 检验无定义")
    t = (float(values.mean()) - mu) / (sd / math.sqrt(n))
    df = n - 1
    p = min(1.0, 2.0 * float(stats.t.sf(abs(t), df)))
    return TestResult(statistic=t, p_value=p, method=Method.STUDENT_T, n=n, df=df)


# ========== 秩检验 ==========

def _tie_term(values: np.ndarray) -> float:
    _, counts = np.unique(values, return_counts=True)
    return float(np.sum(counts.astype(float) ** 3 - counts))


def _normal_p(deviation: float, sd: float) -> float:
    if sd <= 0.0:
        return 1.0
    z = max(0.0, (abs(deviation) - 0.5) / sd)
    return min(1.0, 2.0 * float(stats.norm.sf(z)))


def wilcoxon_signed_rank(sample: Sequence[float], mu: float, exact: Optional[bool] = None) -> TestResult:
    """Wilcoxon 符号秩检验（相对 mu）

    差值为 0 的样本丢弃；并列取平均秩；统计量 W = min(W+, W-)。
    m <= 20 时对全部 2^m 种符号组合精确计数（按加倍后的整数秩做动态规划），
    否则使用带并列校正与连续性校正的正态近似。exact 可强制指定方法。

    Raises:
        DegenerateSampleError: 全部差值为 0
    """
    diffs = np.asarray(sample, dtype=float) - mu
    diffs = diffs[diffs != 0.0]
    m = len(diffs)
    if m == 0:
        raise DegenerateSampleError("所有差值都为 0，符号秩检验无定义")

    ranks = stats.rankdata(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    total = float(ranks.sum())
    statistic = min(w_plus, total - w_plus)
    use_exact = m <= WILCOXON_EXACT_MAX if exact is None else exact

    if use_exact:
        doubled = np.rint(ranks * 2).astype(int)
        counts = np.zeros(int(doubled.sum()) + 1, dtype=float)
        counts[0] = 1.0
        for r in doubled:
            shifted = np.zeros_like(counts)
            shifted[r:] = counts[: len(counts) - r]
            counts = counts + shifted
        observed = int(round(w_plus * 2))
        centre = int(doubled.sum())
        sums = np.arange(len(counts))
        extreme = np.abs(2 * sums - centre) >= abs(2 * observed - centre)
        p = float(counts[extreme].sum() / counts.sum())
        method = Method.EXACT
    else:
        mean = m * (m + 1) / 4.0
        var = m * (m + 1) * (2 * m + 1) / 24.0 - _tie_term(np.abs(diffs)) / 48.0
        p = _normal_p(w_plus - mean, math.sqrt(max(var, 0.0)))
        method = Method.NORMAL
    return TestResult(statistic=statistic, p_value=min(1.0, p), method=method, n=m)


def mann_whitney_u(a: Sequence[float], b: Sequence[float], exact: Optional[bool] = None) -> TestResult:
    """Mann-Whitney U 检验

    U = min(U_a, U_b)，并列取平均秩；n_a + n_b <= 16 时枚举全部秩分组精确计算，
    否则使用带并列校正的正态近似。

    Raises:
        InvalidArgumentError: 任一组为空
    """
    xa = np.asarray(a, dtype=float)
    xb = np.asarray(b, dtype=float)
    if len(xa) == 0 or len(xb) == 0:
        raise InvalidArgumentError("Mann-Whitney 检验的两组都不能为空")
    n1, n2 = len(xa), len(xb)
    n = n1 + n2
    pooled = np.concatenate([xa, xb])
    ranks = stats.rankdata(pooled)
    rank_sum = float(ranks[:n1].sum())
    u_a = rank_sum - n1 * (n1 + 1) / 2.0
    u_b = n1 * n2 - u_a
    statistic = min(u_a, u_b)
    use_exact = n <= MANN_WHITNEY_EXACT_MAX if exact is None else exact

    if use_exact:
        doubled = np.rint(ranks * 2).astype(int)
        centre = n1 * (n + 1)
        observed = abs(int(doubled[:n1].sum()) - centre)
        hits = 0
        combos = 0
        for chosen in itertools.combinations(doubled.tolist(), n1):
            combos += 1
            if abs(sum(chosen) - centre) >= observed:
                hits += 1
        p = hits / combos
        method = Method.EXACT
    else:
        mean = n1 * n2 / 2.0
        var = n1 * n2 / 12.0 * ((n + 1) - _tie_term(pooled) / (n * (n - 1)))
        p = _normal_p(u_a - mean, math.sqrt(max(var, 0.0)))
        method = Method.NORMAL
    return TestResult(statistic=statistic, p_value=min(1.0, p), method=method, n=n1, n2=n2)


# ========== 队列汇总 ==========

ROM_ROWS: Tuple[Tuple[str, str], ...] = (
    ("flexion", "Max Flexion (degree)"),
    ("extension", "Max Extension (degree)"),
    ("rotation_left", "Max Left Rotation (degree)"),
    ("rotation_right", "Max Right Rotation (degree)"),
    ("lateral_flexion_left", "Max Left Lateral Flexion (degree)"),
    ("lateral_flexion_right", "Max Right Lateral Flexion (degree)"),
)
COMPLETION_ROW = "Game completion time (min)"
SECTION_TITLES = {"chintuck": "Chin tuck game", "rom": "Range of motion game"}


def perfect_row_label(hold_duration: float) -> str:
    return f"# Perfect chin tucks ({hold_duration:g} sec)"


def format_mean_sd(mean: float, sd: float, decimals: int = 2, spaced: bool = True) -> str:
    sep = " ± " if spaced else "±"
    return f"{mean:.{decimals}f}{sep}{sd:.{decimals}f}"


@dataclass(frozen=True)
class MetricRow:
    section: str
    label: str
    mean: float
    sd: float
    n: int

    def to_dict(self) -> Dict[str, Any]:
        return {"section": self.section, "label": self.label, "mean": self.mean, "sd": self.sd, "n": self.n}


@dataclass
class CohortReport:
    rows: List[MetricRow] = field(default_factory=list)

    def row(self, label: str, section: Optional[str] = None) -> MetricRow:
        for r in self.rows:
            if r.label == label and (section is None or r.section == section):
                return r
        raise KeyError(label)

    def to_dict(self) -> Dict[str, Any]:
        return {"rows": [r.to_dict() for r in self.rows]}

    def render_text(self) -> str:
        if not self.rows:
            return "(no sessions)\n"
        width = max(len(r.label) for r in self.rows)
        lines: List[str] = []
        section = None
        for r in self.rows:
            if r.section != section:
                section = r.section
                if lines:
                    lines.append("")
                lines.append(f"{SECTION_TITLES.get(section, section)} (n={r.n})")
            lines.append(f"  {r.label:<{width}}  {format_mean_sd(r.mean, r.sd)}")
        return "\n".join(lines) + "\n"


def _describe(section: str, frame: pd.DataFrame) -> List[MetricRow]:
    rows = []
    for label in frame.columns:
        column = frame[label].dropna()
        if column.empty:
            continue
        sd = float(column.std(ddof=1)) if len(column) > 1 else 0.0
        rows.append(MetricRow(section, label, float(column.mean()), sd, int(len(column))))
    return rows


def cohort_summary(logs: Sequence[SessionLog]) -> CohortReport:
    """按游戏分节，逐项给出 均值 ± 样本标准差（ddof=1，单个日志记为 0.00）"""
    chintuck: List[Dict[str, float]] = []
    rom: List[Dict[str, float]] = []
    for log in logs:
        summary = log.summary
        if log.game_id == "chintuck":
            record: Dict[str, float] = {}
            levels = log.config.get("levels", [])
            for index, count in enumerate(summary.get("perfect_per_level", [])):
                hold = levels[index]["hold_duration"] if index < len(levels) else float(index)
                record[perfect_row_label(hold)] = float(count)
            record[COMPLETION_ROW] = float(summary.get("completion_min", 0.0))
            chintuck.append(record)
        elif log.game_id == "rom":
            angles = summary.get("angles", {})
            record = {label: float(angles.get(key, 0.0)) for key, label in ROM_ROWS}
            record[COMPLETION_ROW] = float(summary.get("completion_min", 0.0))
            rom.append(record)
        else:
            logger.warning(f"跳过未知游戏的日志: {log.game_id}")

    report = CohortReport()
    if chintuck:
        report.rows.extend(_describe("chintuck", pd.DataFrame(chintuck)))
    if rom:
        report.rows.extend(_describe("rom", pd.DataFrame(rom)))
    return report


# ========== SUS 阈值 ==========

@dataclass
class ThresholdReport:
    n: int
    mean: float
    sd: float
    threshold: float
    test: Optional[TestResult]
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.test is not None and self.test.significant and self.mean > self.threshold

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "mean": self.mean,
            "sd": self.sd,
            "threshold": self.threshold,
            "test": self.test.to_dict() if self.test else None,
            "passed": self.passed,
            "error": self.error,
        }

    def render_text(self) -> str:
        lines = [f"SUS: {format_mean_sd(self.mean, self.sd, decimals=1, spaced=False)} (n={self.n})"]
        if self.test is not None:
            lines.append(
                f"one-sample t vs {self.threshold:g}: t({self.test.df})={self.test.statistic:.3f}, p={self.test.p_value:.4f}"
            )
        else:
            lines.append(f"one-sample t vs {self.threshold:g}: n/a ({self.error})")
        lines.append(f"significantly above {self.threshold:g}: {'yes' if self.passed else 'no'}")
        return "\n".join(lines) + "\n"


def threshold_report(scores: Sequence[float], threshold: float = SUS_THRESHOLD) -> ThresholdReport:
    """均值 ± 标准差、对阈值的单样本 t 检验，以及 p < 0.05 的判定

    样本退化（单个分数或方差为 0）时检验为空，error 中记录原因，均值照常报告。
    """
    values = np.asarray(scores, dtype=float)
    if len(values) == 0:
        raise InvalidArgumentError("至少需要一个分数")
    sd = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    try:
        test: Optional[TestResult] = one_sample_t(values, threshold)
        error = None
    except DegenerateSampleError as e:
        test, error = None, str(e)
    return ThresholdReport(n=len(values), mean=float(values.mean()), sd=sd, threshold=threshold, test=test, error=error)


# ========== 问卷逐题 ==========

@dataclass(frozen=True)
class ItemRow:
    item: int
    mean: float
    sd: float
    test: Optional[TestResult]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "item": self.item,
            "mean": self.mean,
            "sd": self.sd,
            "test": self.test.to_dict() if self.test else None,
        }


@dataclass
class LikertReport:
    neutral: float
    rows: List[ItemRow]

    def to_dict(self) -> Dict[str, Any]:
        return {"neutral": self.neutral, "items": [r.to_dict() for r in self.rows]}

    def render_text(self) -> str:
        lines = [f"item  mean ± sd      W        p       (vs {self.neutral:g})"]
        for r in self.rows:
            if r.test is None:
                lines.append(f"q{r.item:<4} {format_mean_sd(r.mean, r.sd):<13} n/a")
            else:
                mark = " *" if r.test.significant else ""
                lines.append(
                    f"q{r.item:<4} {format_mean_sd(r.mean, r.sd):<13} {r.test.statistic:<8g} {r.test.p_value:.4f}{mark}"
                )
        return "\n".join(lines) + "\n"


def likert_summary(sets: Sequence[LikertSet], neutral: float = 3.0) -> LikertReport:
    """逐题 均值 ± 标准差，并对中立分做 Wilcoxon 符号秩检验

    Raises:
        InvalidArgumentError: 没有答卷或各答卷题数不一致
    """
    if not sets:
        raise InvalidArgumentError("至少需要一份答卷")
    width = len(sets[0].items)
    if any(len(s.items) != width for s in sets):
        raise InvalidArgumentError("各答卷题数不一致")
    matrix = np.array([s.items for s in sets], dtype=float)
    rows = []
    for index in range(width):
        column = matrix[:, index]
        sd = float(column.std(ddof=1)) if len(column) > 1 else 0.0
        try:
            test: Optional[TestResult] = wilcoxon_signed_rank(column, neutral)
        except DegenerateSampleError:
            test = None
        rows.append(ItemRow(item=index + 1, mean=float(column.mean()), sd=sd, test=test))
    return LikertReport(neutral=neutral, rows=rows)


def sus_item_report(responses: Sequence[SusResponse]) -> LikertReport:
    """SUS 十道题逐题对中立分 3 做 Wilcoxon 检验"""
    return likert_summary(responses, neutral=3.0)


@dataclass
class GroupComparison:
    labels: Tuple[str, str]
    means: Tuple[float, float]
    sds: Tuple[float, float]
    test: TestResult

    def to_dict(self) -> Dict[str, Any]:
        return {
            "groups": [
                {"label": label, "mean": mean, "sd": sd}
                for label, mean, sd in zip(self.labels, self.means, self.sds)
            ],
            "test": self.test.to_dict(),
        }

    def render_text(self) -> str:
        lines = [
            f"{label}: {format_mean_sd(mean, sd, decimals=1, spaced=False)}"
            for label, mean, sd in zip(self.labels, self.means, self.sds)
        ]
        lines.append(f"Mann-Whitney U={self.test.statistic:g}, p={self.test.p_value:.4f} ({self.test.method.value})")
        return "\n".join(lines) + "\n"


def compare_groups(a: Sequence[float], b: Sequence[float], labels: Tuple[str, str] = ("a", "b")) -> GroupComparison:
    """两组 均值 ± 标准差 与 Mann-Whitney U 检验（如有疼痛组与无疼痛组）"""
    test = mann_whitney_u(a, b)
    xa = np.asarray(a, dtype=float)
    xb = np.asarray(b, dtype=float)

    def sd(x: np.ndarray) -> float:
        return float(x.std(ddof=1)) if len(x) > 1 else 0.0

    return GroupComparison(
        labels=labels,
        means=(float(xa.mean()), float(xb.mean())),
        sds=(sd(xa), sd(xb)),
        test=test,
    )


# ========== CSV ==========

@dataclass
class QuestionnaireTable:
    items: List[Tuple[int, ...]]
    respondents: List[str]
    groups: Optional[List[str]] = None


def _item_columns(frame: pd.DataFrame) -> List[str]:
    columns = [c for c in frame.columns if isinstance(c, str) and c.lower().startswith("q") and c[1:].isdigit()]
    return sorted(columns, key=lambda c: int(c[1:]))


def _load_table(path: str, group_column: Optional[str], expected_items: Optional[int]) -> QuestionnaireTable:
    frame = pd.read_csv(path)
    columns = _item_columns(frame)
    if not columns:
        raise InvalidArgumentError(f"{path}: 未找到 q1, q2, ... 题目列")
    if expected_items is not None:
        wanted = [f"q{i}" for i in range(1, expected_items + 1)]
        missing = [c for c in wanted if c not in {col.lower() for col in columns}]
        if missing:
            raise InvalidArgumentError(f"{path}: 缺少列 {missing}")
        columns = [c for c in columns if int(c[1:]) <= expected_items]
    if group_column is not None and group_column not in frame.columns:
        raise InvalidArgumentError(f"{path}: 缺少分组列 {group_column!r}")

    items: List[Tuple[int, ...]] = []
    for row_number, row in enumerate(frame[columns].itertuples(index=False), start=2):
        values = tuple(row)
        if any(pd.isna(v) for v in values):
            raise InvalidArgumentError(f"{path} 第 {row_number} 行存在空值")
        items.append(tuple(_check_item(v, f"{path} 第 {row_number} 行") for v in values))
    if "respondent" in frame.columns:
        respondents = [str(v) for v in frame["respondent"]]
    else:
        respondents = [str(i + 1) for i in range(len(frame))]
    groups = [str(v) for v in frame[group_column]] if group_column else None
    return QuestionnaireTable(items=items, respondents=respondents, groups=groups)


def load_sus_csv(path: str, group_column: Optional[str] = None) -> Tuple[List[SusResponse], QuestionnaireTable]:
    """读取 SUS 问卷 CSV（列 q1..q10，可选 respondent 与分组列）"""
    table = _load_table(path, group_column, SUS_ITEMS)
    return [SusResponse(items) for items in table.items], table


def load_likert_csv(path: str, group_column: Optional[str] = None) -> Tuple[List[LikertSet], QuestionnaireTable]:
    """读取 Likert 问卷 CSV（列 q1..qN）"""
    table = _load_table(path, group_column, None)
    return [LikertSet(items) for items in table.items], table


def split_groups(values: Sequence[float], groups: Sequence[str]) -> Tuple[Tuple[str, str], List[float], List[float]]:
    """按分组标签拆成两组；分组数不是 2 时报错"""
    labels = sorted(set(groups))
    if len(labels) != 2:
        raise InvalidArgumentError(f"分组列必须恰好两个取值，收到 {labels}")
    a = [v for v, g in zip(values, groups) if g == labels[0]]
    b = [v for v, g in zip(values, groups) if g == labels[1]]
    return (labels[0], labels[1]), a, b
