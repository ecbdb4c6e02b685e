import copy
import json
import os
from . import log_maker
from .errors import ConfigError

log = log_maker.logger("config")

OUT_DIR_ENV = "STOCHPROBE_OUT"

DEFAULT_CONFIG = {
  "experiment": {
    "runs": 20000,
    "seed": 20240601,
    "b": 1.0,
    "delta": 0.01,
    "samples": 10000,
    "formats": ["csv", "json"]
  },
  "verify": {
    "confidence": 0.99,
    "max_ci": 0.05,
    "tolerance": 0.02,
    "step_slack": 0.05
  },
  "limits": {
    "exact_cap": 12,
    "dp_cap": 10
  },
  "workers": {
    "max_workers": 0,
    "chunk_size": 2000
  },
  "output": {
    "dir": "reports"
  },
  "debug": False
}


def _merge_defaults(config: dict) -> dict:
    """补齐缺失键（嵌套一层）"""
    merged = copy.deepcopy(DEFAULT_CONFIG)
    for key, value in config.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key].update(value)
        else:
            merged[key] = value
    return merged


def _apply_env(config: dict) -> dict:
    env_out = os.environ.get(OUT_DIR_ENV)
    if env_out:
        config["output"]["dir"] = env_out
    return config


def check(config_path):
    config_file = os.path.join(config_path, "settings.json")
    if not os.path.exists(config_file) and save_config(config_file, DEFAULT_CONFIG):
        log.warning("配置文件不存在，已创建默认配置文件")
    return config_file


def load_config(file_path):
    """加载配置文件"""
    try:
        if file_path and os.path.exists(file_path):
            with open(file_path, 'r', encoding='utf-8') as f:
                config = json.load(f)
            config = _merge_defaults(config)
        else:
            if file_path:
                log.warning(f"配置文件 {file_path} 不存在，将使用默认配置")
            config = copy.deepcopy(DEFAULT_CONFIG)
    except Exception as e:
        log.error(f"加载配置文件 {file_path} 失败: {e}")
        config = copy.deepcopy(DEFAULT_CONFIG)
    return _apply_env(config)


def read_config(file_path):
    """读取命令行显式给出的配置文件，不回退到默认配置"""
    if not os.path.isfile(file_path):
        raise ConfigError(f"配置文件 {file_path} 不存在")
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            config = json.load(f)
    except (OSError, ValueError) as e:
        raise ConfigError(f"配置文件 {file_path} 无法解析: {e}") from e
    if not isinstance(config, dict):
        raise ConfigError(f"配置文件 {file_path} 的顶层必须是对象")
    return _apply_env(_merge_defaults(config))


def save_config(file_path, config):
    """保存配置文件"""
    try:
        directory = os.path.dirname(file_path)
        if directory:
            os.makedirs(directory, exist_ok=True)

        merged_config = _merge_defaults(config)

        with open(file_path, 'w', encoding='utf-8') as f:
            json.dump(merged_config, f, ensure_ascii=False, indent=2)

        log.info(f"配置已成功保存到 {file_path}")
        return True
    except Exception as e:
        log.error(f"保存配置文件 {file_path} 失败: {e}")
        return False
