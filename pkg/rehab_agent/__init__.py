"""
Rehab Agent 包
面向康复治疗师的 ADK 助理：会话日志复盘与问卷统计
"""

__version__ = "1.0.0"

from . import agent
from .agent import coordinator, root_agent

__all__ = ["agent", "coordinator", "root_agent"]
