"""
实时采集网关 - 换行分隔 JSON 姿态流

每个连接（TCP 或标准输入输出）持有一个 GameSession：
客户端先发 hello {game, config | config_path}，服务端回 config_ack（补全缺省值后的配置）；
之后每条 pose 消息按客户端时间戳推进引擎，产生的事件逐条以 event 消息发回（seq 严格递增），
并按流时间每 state_interval 秒插入一条 state 快照。终局或客户端 end 时写会话日志并回 end。

消息格式：{"type": ..., "body": {...}}，type 取值
hello / config_ack / pose / button / event / state / end / error。
"""

import io
import itertools
import json
import logging
import os
import socket
import socketserver
import sys
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, TextIO, Tuple

from .errors import (
    ConfigurationError,
    EngineStateError,
    InvalidArgumentError,
    NeckMotionError,
    ProtocolError,
    StreamOrderError,
)
from .events import GameEvent
from .session import GameSession
from .session_io import (
    GAMES,
    GameConfig,
    config_to_dict,
    dumps_canonical,
    load_config,
    log_filename,
    parse_config,
    sample_from_record,
    write_log,
)

logger = logging.getLogger(__name__)

MESSAGE_TYPES = ("hello", "config_ack", "pose", "button", "event", "state", "end", "error")
CLIENT_TYPES = ("hello", "pose", "button", "end")


@dataclass(frozen=True)
class GatewayOptions:
    log_dir: str = "./session_logs"
    state_interval: float = 0.25
    write_logs: bool = True


class LogSequence:
    """进程内日志序号，多个连接共享"""

    def __init__(self, start: int = 1):
        self._counter = itertools.count(start)
        self._lock = threading.Lock()

    def next(self) -> int:
        with self._lock:
            return next(self._counter)


def encode_message(kind: str, body: Dict[str, Any]) -> str:
    return dumps_canonical({"type": kind, "body": body}, indent=None) + "\n"


def decode_message(line: str) -> Tuple[str, Dict[str, Any]]:
    """解析一行客户端消息

    Raises:
        ProtocolError: JSON 格式错误、缺少 type 或未知类型
    """
    try:
        message = json.loads(line)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"JSON 格式错误: {e.msg} (第 {e.colno} 列)", code="malformed_json") from e
    if not isinstance(message, dict) or not isinstance(message.get("type"), str):
        raise ProtocolError("消息必须是带 type 字段的 JSON 对象", code="malformed_message")
    kind = message["type"]
    if kind not in CLIENT_TYPES:
        raise ProtocolError(f"未知消息类型: {kind}", code="unknown_type")
    body = message.get("body", {})
    if not isinstance(body, dict):
        raise ProtocolError("body 必须是 JSON 对象", code="malformed_message")
    return kind, body


class GatewayConnection:
    """与传输层无关的单连接协议状态机；所有公开方法互斥执行"""

    def __init__(
        self,
        send: Callable[[str], None],
        options: GatewayOptions,
        sequence: LogSequence,
        session: Optional[GameSession] = None,
    ):
        self._send = send
        self.options = options
        self._sequence = sequence
        self._lock = threading.RLock()
        self.session = session
        self.closed = False
        self.failed = False
        self.log_path: Optional[str] = None
        self._summary: Optional[Dict[str, Any]] = None
        self._event_seq = 0
        self._pose_index = 0
        self._next_state_t: Optional[float] = None
        if session is not None:
            self._ack()

    @property
    def outcome(self) -> Optional[str]:
        return self.session.outcome if self.session else None

    def handle_line(self, line: str) -> bool:
        """处理一行输入；返回 False 表示连接应关闭"""
        with self._lock:
            if self.closed:
                return False
            if not line.strip():
                return True
            try:
                kind, body = decode_message(line)
                return self._dispatch(kind, body)
            except StreamOrderError as e:
                self._fail("stream_order", str(e), index=self._pose_index, t=e.t)
            except ProtocolError as e:
                self._fail(e.code, str(e))
            except ConfigurationError as e:
                self._fail("invalid_config", str(e), violations=e.violations)
            except EngineStateError as e:
                self._fail("engine_state", str(e))
            except NeckMotionError as e:
                self._fail("invalid_message", str(e))
            except OSError as e:
                self._fail("io_error", str(e))
            return False

    def close(self, reason: str) -> None:
        """结束会话：写日志并发送 end；重复调用无副作用"""
        with self._lock:
            if self.closed:
                return
            self.closed = True
            if self.session is None:
                return
            log_path = self._finalize()
            body = {
                "reason": reason,
                "outcome": self.session.outcome,
                "summary": self._summary,
                "log": log_path,
            }
            self._safe_send(encode_message("end", body))

    # ---------- 分发 ----------

    def _dispatch(self, kind: str, body: Dict[str, Any]) -> bool:
        if kind == "hello":
            if self.session is not None:
                raise ProtocolError("会话已建立，不能重复 hello", code="unexpected_hello")
            self.session = GameSession(self._config_from_hello(body))
            self._ack()
            return True
        if self.session is None:
            raise ProtocolError(f"第一条消息必须是 hello，收到 {kind}", code="expected_hello")
        if kind == "end":
            self.close("client_end")
            return False
        if kind == "button":
            name = body.get("name")
            if not isinstance(name, str):
                raise ProtocolError("button 消息缺少 name", code="malformed_message")
            self._emit(self.session.press(name))
        else:
            sample = sample_from_record(body, self._pose_index)
            self._emit(self.session.feed(sample))
            self._pose_index += 1
            self._maybe_state(sample.t)
        if self.session.finished:
            self.close("terminal")
            return False
        return True

    def _config_from_hello(self, body: Dict[str, Any]) -> GameConfig:
        game = body.get("game")
        if game not in GAMES:
            raise ProtocolError(f"hello.game 必须是 {list(GAMES)} 之一，收到 {game!r}", code="invalid_hello")
        if "config_path" in body:
            return load_config(str(body["config_path"]), game)
        return parse_config(body.get("config", {}), game)

    def _ack(self) -> None:
        session = self.session
        body = {"game": session.game, "config": config_to_dict(session.config), "started_at": session.started_at}
        self._send(encode_message("config_ack", body))

    def _emit(self, events: List[GameEvent]) -> None:
        for event in events:
            self._send(encode_message("event", {"seq": self._event_seq, **event.to_record()}))
            self._event_seq += 1

    def _maybe_state(self, t: float) -> None:
        if self._next_state_t is not None and t < self._next_state_t:
            return
        self._next_state_t = t + self.options.state_interval
        self._send(encode_message("state", {"t": t, "state": self.session.snapshot()}))

    def _fail(self, code: str, message: str, **extra: Any) -> None:
        logger.warning(f"协议错误 [{code}]: {message}")
        self.failed = True
        body: Dict[str, Any] = {"code": code, "message": message}
        body.update({k: v for k, v in extra.items() if v is not None})
        self._safe_send(encode_message("error", body))
        self.closed = True
        if self.session is not None:
            self._finalize()

    def _finalize(self) -> Optional[str]:
        if self._summary is not None:
            return self.log_path
        log = self.session.finalize()
        self._summary = log.summary
        if not self.options.write_logs:
            return None
        name = log_filename(self.session.game, self.session.started_at, self._sequence.next())
        path = os.path.join(self.options.log_dir, name)
        write_log(log, path)
        self.log_path = path
        return path

    def _safe_send(self, text: str) -> None:
        try:
            self._send(text)
        except (OSError, ValueError) as e:
            logger.debug(f"发送失败（对端可能已断开）: {e}")


# ========== TCP 服务 ==========

class _ConnectionHandler(socketserver.StreamRequestHandler):
    server: "GatewayServer"

    def handle(self) -> None:
        def send(text: str) -> None:
            self.wfile.write(text.encode("utf-8"))
            self.wfile.flush()

        connection = GatewayConnection(send, self.server.options, self.server.sequence)
        self.server.register(connection, self.request)
        logger.info(f"新连接: {self.client_address}")
        try:
            for raw in self.rfile:
                if not connection.handle_line(raw.decode("utf-8", errors="replace")):
                    break
        except OSError as e:
            logger.debug(f"连接读取中断: {e}")
        finally:
            connection.close("eof")
            self.server.unregister(connection)
            logger.info(f"连接关闭: {self.client_address} outcome={connection.outcome}")


class GatewayServer(socketserver.ThreadingTCPServer):
    """多连接网关，每个连接一个线程、一个引擎实例"""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, endpoint: Tuple[str, int], options: GatewayOptions):
        super().__init__(endpoint, _ConnectionHandler)
        self.options = options
        self.sequence = LogSequence()
        self._active: Dict[GatewayConnection, socket.socket] = {}
        self._active_lock = threading.Lock()
        self._stopped = threading.Event()
        self._serving: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self.server_address[1]

    def register(self, connection: GatewayConnection, sock: socket.socket) -> None:
        with self._active_lock:
            self._active[connection] = sock

    def unregister(self, connection: GatewayConnection) -> None:
        with self._active_lock:
            self._active.pop(connection, None)

    def active_count(self) -> int:
        with self._active_lock:
            return len(self._active)

    def start(self) -> threading.Thread:
        """在后台线程中开始接受连接"""
        self._serving = threading.Thread(target=self.serve_forever, name="neckmotion-gateway", daemon=True)
        self._serving.start()
        return self._serving

    def shutdown(self, grace: float = 2.0) -> None:  # type: ignore[override]
        """停止接受新连接；进行中的会话写完日志后关闭。重复调用无副作用"""
        if self._stopped.is_set():
            return
        self._stopped.set()
        if self._serving is not None:
            super().shutdown()
        with self._active_lock:
            active = list(self._active.items())
        logger.info(f"网关关闭中，进行中的会话 {len(active)} 个")
        for connection, sock in active:
            connection.close("shutdown")
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        deadline = time.monotonic() + grace
        while self.active_count() and time.monotonic() < deadline:
            time.sleep(0.05)
        self.server_close()

    def wait_stopped(self, timeout: Optional[float] = None) -> bool:
        return self._stopped.wait(timeout)


def parse_endpoint(text: str) -> Tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise InvalidArgumentError(f"监听地址格式应为 HOST:PORT，收到 {text!r}")
    return host or "127.0.0.1", int(port)


def serve(endpoint: str, options: GatewayOptions) -> GatewayServer:
    """绑定并运行网关，直到 Ctrl+C 或其它线程调用 shutdown"""
    server = GatewayServer(parse_endpoint(endpoint), options)
    logger.info(f"网关监听 {server.server_address[0]}:{server.port}，日志目录 {options.log_dir}")
    server.start()
    try:
        while not server.wait_stopped(0.5):
            pass
    except KeyboardInterrupt:
        logger.info("收到中断信号")
    finally:
        server.shutdown()
    return server


# ========== 标准输入输出 ==========

def run_stdio(
    game: Optional[str] = None,
    config: Optional[GameConfig] = None,
    options: Optional[GatewayOptions] = None,
    stdin: Optional[TextIO] = None,
    stdout: Optional[TextIO] = None,
) -> int:
    """在标准输入输出上运行同一协议

    传入 config 时会话立即建立并先发送 config_ack，客户端无需 hello。

    Returns:
        int: 0 = 完成/获胜/客户端正常结束，2 = 失败（GameLost），1 = 协议错误
    """
    options = options or GatewayOptions()
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout

    def send(text: str) -> None:
        stdout.write(text)
        stdout.flush()

    session = None
    if config is not None:
        session = GameSession(config)
    elif game is not None:
        session = GameSession(parse_config({}, game))
    connection = GatewayConnection(send, options, LogSequence(), session=session)

    for line in stdin:
        if not connection.handle_line(line):
            break
    connection.close("eof")

    if connection.failed:
        return 1
    return 2 if connection.outcome == "lost" else 0


def run_lines(lines: List[str], options: Optional[GatewayOptions] = None) -> Tuple[int, List[Dict[str, Any]]]:
    """把一组消息行送入一个 stdio 会话，返回 (退出码, 服务端消息列表)"""
    out = io.StringIO()
    code = run_stdio(options=options, stdin=io.StringIO("".join(lines)), stdout=out)
    messages = [json.loads(line) for line in out.getvalue().splitlines() if line.strip()]
    return code, messages
