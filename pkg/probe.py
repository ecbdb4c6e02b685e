"""
stochprobe 命令行入口

    python probe.py verify-scheme --seed 7 --runs 20000 --b 0.5
    python probe.py generate --gen '{"n": 5, "k_in": 1, "k_out": 1}' --seed 3 --out inst.json
"""
import argparse
import json
import os
import sys

from pydantic import ValidationError

import core.config_manager as Config
import core.log_maker as log_maker
from core.errors import ConfigError, ProbeError
from core.schemas import COMMANDS, ExperimentConfig, GeneratorSpec
from features.experiments import EXIT_ERROR, EXIT_IO, run_experiment

log = log_maker.logger("cli")

SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probe", description="随机探测 stoch-CR 方案的验证工具")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="{" + ",".join(COMMANDS) + "}")
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--instance", help="实例文件 (JSON)")
        cmd.add_argument("--gen", help="生成器规格：JSON 字符串或 JSON 文件路径")
        cmd.add_argument("--runs", type=int)
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--b", type=float)
        cmd.add_argument("--delta", type=float)
        cmd.add_argument("--samples", type=int)
        cmd.add_argument("--out", help="输出目录（generate 时可为 .json 文件）")
        cmd.add_argument("--format", dest="formats", action="append", choices=("csv", "json"))
        cmd.add_argument("--config", help="settings.json 路径，缺省为脚本目录下的 settings.json")
        cmd.add_argument("--debug", action="store_true", default=None)
        cmd.add_argument("--dump-states", dest="dump_states", help="verify-mapping 的逐步状态快照输出路径")
        cmd.add_argument("--order", help="离线剪枝顺序，逗号分隔的元素编号（e2e）")
    return parser


def parse_gen(value: str) -> GeneratorSpec:
    if os.path.exists(value):
        with open(value, "r", encoding="utf-8") as f:
            value = f.read()
    try:
        return GeneratorSpec.model_validate(json.loads(value))
    except (json.JSONDecodeError, ValidationError) as e:
        raise ConfigError(f"生成器规格无效: {e}") from e


def parse_order(value: str):
    try:
        return [int(part) for part in value.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"--order 需要逗号分隔的整数: {value}") from e


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        settings = Config.read_config(args.config)
    else:
        settings = Config.load_config(Config.check(SCRIPT_DIR))
    return ExperimentConfig.from_settings(
        args.subcommand, settings,
        instance=args.instance,
        gen=parse_gen(args.gen) if args.gen else None,
        runs=args.runs, seed=args.seed, b=args.b, delta=args.delta, samples=args.samples,
        out=args.out, formats=args.formats, debug=args.debug, dump_states=args.dump_states,
        order=parse_order(args.order) if args.order else None,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = make_config(args)
        result = run_experiment(config)
    except ProbeError as e:
        log.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR
    except OSError as e:
        log.error(f"读写失败: {e}")
        return EXIT_IO
    for path in result.paths:
        print(path)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
