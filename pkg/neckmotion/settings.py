"""
进程级设置：从环境变量 / .env 读取
"""

import logging
import os
from dataclasses import dataclass

import dotenv

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s - %(message)s"


@dataclass(frozen=True)
class Settings:
    log_dir: str
    log_level: str
    listen: str
    state_interval: float
    agent_model: str


def load_settings() -> Settings:
    """读取 NECKMOTION_* 环境变量，缺省值见 QUICKSTART.md"""
    dotenv.load_dotenv()

    raw_interval = os.getenv("NECKMOTION_STATE_INTERVAL", "0.25")
    try:
        state_interval = float(raw_interval)
    except ValueError:
        logger.warning(f"NECKMOTION_STATE_INTERVAL 无法解析: {raw_interval}，使用 0.25")
        state_interval = 0.25

    return Settings(
        log_dir=os.getenv("NECKMOTION_LOG_DIR", "./session_logs"),
        log_level=os.getenv("NECKMOTION_LOG_LEVEL", "INFO").upper(),
        listen=os.getenv("NECKMOTION_LISTEN", "127.0.0.1:8765"),
        state_interval=state_interval,
        agent_model=os.getenv("NECKMOTION_AGENT_MODEL", "gemini-2.5-flash"),
    )


def configure_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT)
