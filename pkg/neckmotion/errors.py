"""
颈部康复引擎的异常体系

库代码只负责抛出异常；CLI、网关和代理工具在外层把异常转换成退出码、
error 消息或 status/error_message 字典。
"""

from typing import List, Optional


class NeckMotionError(Exception):
    """所有引擎异常的基类"""


class InvalidArgumentError(NeckMotionError, ValueError):
    """参数不合法（零向量、非单位四元数、空窗口等）"""


class ConfigurationError(NeckMotionError, ValueError):
    """配置校验失败，violations 中逐条列出被违反的约束"""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("配置无效: " + "; ".join(self.violations))


class ConfigParseError(ConfigurationError):
    """配置文件 JSON 解析失败"""

    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__([f"第 {line} 行第 {column} 列: {message}"])


class StreamOrderError(NeckMotionError):
    """时间戳倒退"""

    def __init__(self, message: str, index: Optional[int] = None, t: Optional[float] = None):
        self.index = index
        self.t = t
        super().__init__(message)


class EngineStateError(NeckMotionError, RuntimeError):
    """当前阶段不允许该操作"""


class DegenerateSampleError(NeckMotionError, ValueError):
    """样本退化，无法进行统计检验"""


class SchemaVersionError(NeckMotionError):
    """日志 schema_version 与当前版本不一致"""


class LogIntegrityError(NeckMotionError):
    """日志摘要与事件重新计算的结果不一致"""


class ProtocolError(NeckMotionError):
    """流式协议错误"""

    def __init__(self, message: str, code: str = "protocol"):
        self.code = code
        super().__init__(message)
