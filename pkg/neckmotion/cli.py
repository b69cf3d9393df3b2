"""
命令行入口：replay / serve / synth / analyze / angles

退出码：0 成功；1 用法或解析错误；2 游戏失败（仅 replay）；3 读写错误。
加 --json 时在标准输出打印机器可读的 JSON，否则打印对齐的文本表格。
"""

import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import Any, Dict, Optional, Sequence

from .analytics import (
    cohort_summary,
    compare_groups,
    likert_summary,
    load_likert_csv,
    load_sus_csv,
    split_groups,
    sus_item_report,
    sus_score,
    threshold_report,
)
from .errors import NeckMotionError
from .rom_engine import LateralMapping, RomConfig, compute_max_angles
from .session import exit_code_for, replay
from .session_io import (
    GAMES,
    dumps_canonical,
    load_config,
    log_filename,
    parse_config,
    read_calibration,
    read_log,
    read_trace,
    write_log,
)
from .settings import configure_logging, load_settings
from .stream_gateway import GatewayOptions, run_stdio, serve
from .trace_synth import UserProfile, load_profile, synth_chintuck, synth_rom

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_LOST = 2
EXIT_IO = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """用法错误时打印 usage 并以退出码 1 结束"""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _emit(args: argparse.Namespace, data: Dict[str, Any], text: str) -> None:
    if args.json:
        sys.stdout.write(dumps_canonical(data) + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _format_summary(summary: Dict[str, Any]) -> str:
    lines = []
    for key, value in summary.items():
        if isinstance(value, dict):
            lines.append(f"{key}:")
            lines.extend(f"  {k}: {v:.2f}" if isinstance(v, float) else f"  {k}: {v}" for k, v in value.items())
        elif isinstance(value, float):
            lines.append(f"{key}: {value:.2f}")
        else:
            lines.append(f"{key}: {value}")
    return "\n".join(lines)


# ========== 子命令 ==========

def cmd_replay(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.game) if args.config else parse_config({}, args.game)
    session = replay(config, read_trace(args.trace))
    log = session.finalize()
    out = args.out or os.path.join(load_settings().log_dir, log_filename(session.game, session.started_at, 1))
    write_log(log, out)
    data = {"outcome": session.outcome, "log": out, "summary": log.summary}
    _emit(args, data, f"{_format_summary(log.summary)}\nlog: {out}")
    return exit_code_for(session.outcome)


def cmd_serve(args: argparse.Namespace) -> int:
    settings = load_settings()
    options = GatewayOptions(
        log_dir=args.log_dir or settings.log_dir,
        state_interval=args.state_interval if args.state_interval is not None else settings.state_interval,
    )
    if args.stdio:
        config = None
        if args.game:
            config = load_config(args.config, args.game) if args.config else parse_config({}, args.game)
        return run_stdio(config=config, options=options)
    serve(args.listen or settings.listen, options)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    profile = load_profile(args.profile) if args.profile else UserProfile()
    if args.seed is not None:
        profile = replace(profile, seed=args.seed)
    config = load_config(args.config, args.game) if args.config else parse_config({}, args.game)
    result = synth_chintuck(profile, config) if args.game == "chintuck" else synth_rom(profile, config)
    intent_path = result.write(args.out)
    data = {"trace": args.out, "intent_path": intent_path, "samples": len(result.samples), "intent": result.intent}
    text = f"trace: {args.out} ({len(result.samples)} samples)\nintent: {intent_path}\noutcome: {result.intent['outcome']}"
    _emit(args, data, text)
    return EXIT_OK


def cmd_analyze_session(args: argparse.Namespace) -> int:
    report = cohort_summary([read_log(path) for path in args.logs])
    _emit(args, report.to_dict(), report.render_text())
    return EXIT_OK


def cmd_analyze_sus(args: argparse.Namespace) -> int:
    responses, table = load_sus_csv(args.csv, args.group_column)
    scores = [sus_score(r) for r in responses]
    report = threshold_report(scores, args.threshold)
    data: Dict[str, Any] = {"scores": scores, "threshold": report.to_dict()}
    text = report.render_text()
    if table.groups is not None:
        labels, a, b = split_groups(scores, table.groups)
        comparison = compare_groups(a, b, labels)
        data["groups"] = comparison.to_dict()
        text += "\n" + comparison.render_text()
    if args.items:
        items = sus_item_report(responses)
        data["items"] = items.to_dict()
        text += "\n" + items.render_text()
    _emit(args, data, text)
    return EXIT_OK


def cmd_analyze_likert(args: argparse.Namespace) -> int:
    sets, _ = load_likert_csv(args.csv)
    report = likert_summary(sets, args.neutral)
    _emit(args, report.to_dict(), report.render_text())
    return EXIT_OK


def cmd_angles(args: argparse.Namespace) -> int:
    calibration = read_calibration(args.calibration)
    angles = compute_max_angles(calibration, RomConfig(lateral_mapping=LateralMapping.DIAGONAL_CALIBRATION))
    data = angles.to_dict()
    width = max(len(k) for k in data)
    _emit(args, data, "\n".join(f"{k:<{width}}  {v:.2f}" for k, v in data.items()))
    return EXIT_OK


# ========== 参数解析 ==========

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print machine-readable JSON on stdout")

    parser = _Parser(prog="neckmotion", description="VR neck rehabilitation game engine tools")
    parser.add_argument("--log-level", default=None, help="logging level (default: NECKMOTION_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", metavar="{replay,serve,synth,analyze,angles}", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("replay", parents=[common], help="run a pose trace offline and write a session log")
    p.add_argument("--game", required=True, choices=GAMES, help="game to replay")
    p.add_argument("--config", help="game config JSON (default: built-in defaults)")
    p.add_argument("--trace", required=True, help="pose trace (JSON Lines)")
    p.add_argument("--out", help="session log path (default: <log dir>/<game>-<stamp>-0001.json)")
    p.set_defaults(handler=cmd_replay)

    p = sub.add_parser("serve", parents=[common], help="run the live ingestion gateway")
    p.add_argument("--listen", help="HOST:PORT to bind (default: NECKMOTION_LISTEN or 127.0.0.1:8765)")
    p.add_argument("--log-dir", help="session log directory (default: NECKMOTION_LOG_DIR)")
    p.add_argument("--state-interval", type=float, help="seconds of stream time between state messages")
    p.add_argument("--stdio", action="store_true", help="speak the protocol on stdin/stdout instead of TCP")
    p.add_argument("--game", choices=GAMES, help="with --stdio: start the session without a hello message")
    p.add_argument("--config", help="with --stdio and --game: game config JSON")
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic trace and its intent record")
    p.add_argument("--game", required=True, choices=GAMES, help="game to synthesize")
    p.add_argument("--profile", help="user profile JSON (default: compliant profile)")
    p.add_argument("--config", help="game config JSON (default: built-in defaults)")
    p.add_argument("--seed", type=int, help="RNG seed (overrides the profile seed)")
    p.add_argument("--out", required=True, help="trace output path; intent is written beside it")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("analyze", help="questionnaire statistics and cohort summaries")
    analyze = p.add_subparsers(dest="analysis", metavar="{session,sus,likert}", parser_class=_Parser)
    analyze.required = True

    a = analyze.add_parser("session", parents=[common], help="cohort summary over session logs")
    a.add_argument("logs", nargs="+", help="session log files")
    a.set_defaults(handler=cmd_analyze_session)

    a = analyze.add_parser("sus", parents=[common], help="SUS scores and one-sample t-test against a threshold")
    a.add_argument("csv", help="CSV with columns q1..q10 (optional respondent column)")
    a.add_argument("--threshold", type=float, default=68.0, help="usability threshold (default: 68)")
    a.add_argument("--group-column", help="column splitting respondents into two groups for Mann-Whitney U")
    a.add_argument("--items", action="store_true", help="also test each item against neutral 3")
    a.set_defaults(handler=cmd_analyze_sus)

    a = analyze.add_parser("likert", parents=[common], help="per-item Likert summary with Wilcoxon tests")
    a.add_argument("csv", help="CSV with columns q1..qN")
    a.add_argument("--neutral", type=float, default=3.0, help="neutral score to test against (default: 3)")
    a.set_defaults(handler=cmd_analyze_likert)

    p = sub.add_parser("angles", parents=[common], help="maximum ROM angles from a calibration file")
    p.add_argument("--calibration", required=True, help="calibration JSON or ROM session log")
    p.set_defaults(handler=cmd_angles)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    configure_logging(args.log_level or load_settings().log_level)
    try:
        return args.handler(args)
    except OSError as e:
        logger.error(f"读写失败: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except NeckMotionError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())
