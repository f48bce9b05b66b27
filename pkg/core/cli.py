#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
cli.py

命令行接口模块，负责解析命令行参数、读取并校验运行配置，
并调用实验运行器执行实验。
"""

import os
import sys
import argparse
import logging
from datetime import datetime
from typing import List, Optional

import daemon
import lockfile
from wcwidth import wcswidth

# 导入项目其他模块
from . import VERSION
from .config_parser import ConfigParser, ExperimentConfig
from .errors import EXIT_USAGE, ConfigError, LabError, exit_code_for
from .experiments import CATALOG, list_experiments
from .runner import ExperimentRunner

# 程序名称和描述
PROGRAM_NAME = "Biharmonic Lab"
DESCRIPTION = "双调和热核与 Calabi 流数值实验"


class ChineseArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        # 简化错误消息的中文替换
        message = message.replace("the following arguments are required:", "缺少以下必需参数:")
        message = message.replace("unrecognized arguments", "无法识别的参数")
        message = message.replace("invalid choice", "无效的选项")
        self.exit(EXIT_USAGE, f"错误: {message}\n")


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    解析命令行参数

    参数:
        argv: 参数列表，默认取 sys.argv

    返回:
        解析后的参数对象
    """
    parser = ChineseArgumentParser(
        prog="main.py",
        description=f"{PROGRAM_NAME} v{VERSION} - {DESCRIPTION}",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    parser.add_argument("--version", action="version",
                        version=f"{PROGRAM_NAME} v{VERSION}")
    commands = parser.add_subparsers(dest="command", parser_class=ChineseArgumentParser)
    commands.required = True

    commands.add_parser("list", help="列出全部实验及其参数")

    run = commands.add_parser("run", help="运行一个实验",
                              formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    run.add_argument("--config", default="config.toml", help="TOML 配置文件")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="覆盖配置项，可重复")
    run.add_argument("--jobs", type=int, default=None, help="最大线程数")
    run.add_argument("--detach", action="store_true", help="以守护进程模式在后台运行")
    run.add_argument("-v", "--verbose", action="store_true", help="详细输出模式")

    return parser.parse_args(argv)


def print_banner() -> None:
    """打印程序横幅，按显示宽度对齐中文字符"""
    program_text = f"{PROGRAM_NAME}  v{VERSION}"
    desc_text = DESCRIPTION

    # 框内视觉宽度，不含左右边框
    inner_width = 41
    left_padding_str = "   "
    left_padding_width = 3

    program_text_width = wcswidth(program_text)
    desc_text_width = wcswidth(desc_text)
    # wcswidth 遇到控制字符返回 -1
    if program_text_width < 0:
        program_text_width = len(program_text)
    if desc_text_width < 0:
        desc_text_width = len(desc_text)

    program_padding = " " * max(0, inner_width - left_padding_width - program_text_width)
    desc_padding = " " * max(0, inner_width - left_padding_width - desc_text_width)

    banner = f"""
    ┌─────────────────────────────────────────┐
    │                                         │
    │{left_padding_str}{program_text}{program_padding}│
    │{left_padding_str}{desc_text}{desc_padding}│
    │                                         │
    └─────────────────────────────────────────┘
    """
    print(banner)


def setup_logging(verbose: bool = False, log_path: Optional[str] = None) -> None:
    """
    设置日志记录

    参数:
        verbose: 是否启用详细日志
        log_path: 日志文件路径，None 表示只输出到控制台
    """
    # 清除现有的日志处理器
    for handler in logging.root.handlers[:]:
        logging.root.removeHandler(handler)
        handler.close()

    log_level = logging.DEBUG if verbose else logging.INFO

    if log_path is not None:
        file_handler = logging.FileHandler(filename=log_path, mode="w", encoding="utf-8")
        file_handler.setLevel(log_level)
        file_handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
        logging.root.addHandler(file_handler)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(log_level)
    console_handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))

    logging.root.setLevel(log_level)
    logging.root.addHandler(console_handler)

    logging.info(f"{PROGRAM_NAME} v{VERSION} 启动")
    logging.info(f"日志级别: {'DEBUG' if verbose else 'INFO'}")


def run_experiment_config(config: ExperimentConfig) -> int:
    """
    运行一个实验

    参数:
        config: 校验过的实验配置

    返回:
        退出代码
    """
    try:
        runner = ExperimentRunner(config)
    except LabError as e:
        logging.error(f"无法初始化实验: {e}")
        return exit_code_for(e)
    return runner.execute()


def daemon_run(config: ExperimentConfig) -> int:
    """
    以守护进程模式运行实验

    参数:
        config: 校验过的实验配置

    返回:
        退出代码
    """
    if not os.path.exists("pid"):
        os.makedirs("pid")

    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    pid_file = f"pid/lab_{timestamp}.pid"
    log_path = os.path.join(os.path.abspath(config.output_dir), "log.txt")

    print("将在后台运行实验...")
    print(f"PID文件: {pid_file}")
    print(f"日志文件: {log_path}")
    print(f"输出目录: {config.output_dir}")

    context = daemon.DaemonContext(
        working_directory=os.getcwd(),
        umask=0o002,
        pidfile=lockfile.FileLock(pid_file),
        detach_process=True
    )

    with context:
        setup_logging(verbose=True, log_path=log_path)
        logging.info(f"守护进程已启动，PID文件: {pid_file}")
        return run_experiment_config(config)


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """读取配置并把命令行选项折算成覆盖项"""
    overrides = list(args.overrides)
    if args.jobs is not None:
        overrides.append(f"jobs={args.jobs}")
    if args.verbose:
        overrides.append("verbose=true")
    return ConfigParser(args.config, overrides).load(CATALOG)


def main(argv: Optional[List[str]] = None) -> int:
    """
    主程序入口点

    参数:
        argv: 参数列表，默认取 sys.argv

    返回:
        退出代码
    """
    print_banner()
    args = parse_arguments(argv)

    if args.command == "list":
        print(list_experiments())
        return 0

    setup_logging(verbose=args.verbose)
    try:
        config = load_config(args)
    except ConfigError as e:
        logging.error(f"配置错误: {e}")
        print(f"错误: {e}")
        return EXIT_USAGE

    try:
        os.makedirs(config.output_dir, exist_ok=True)
    except OSError as e:
        print(f"错误: 无法创建输出目录 {config.output_dir}: {e}")
        return EXIT_USAGE

    logging.info(f"实验: {config.experiment}, 输出目录: {config.output_dir}, 线程数: {config.jobs}")
    if args.detach:
        return daemon_run(config)

    setup_logging(verbose=config.verbose, log_path=os.path.join(config.output_dir, "log.txt"))
    return run_experiment_config(config)


if __name__ == "__main__":
    sys.exit(main())
