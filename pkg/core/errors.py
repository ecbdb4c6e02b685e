from typing import Optional


class ProbeError(Exception):
    """库内所有可预期错误的基类"""


class DomainError(ProbeError, ValueError):
    """输入超出定义域（概率不在[0,1]、元素不在地集中等）"""


class CapabilityError(ProbeError, RuntimeError):
    """超出桌面规模上限，或输入类型不支持该操作"""


class InfeasibleError(ProbeError, ValueError):
    """点不在多面体内，或线性规划不可行"""

    def __init__(self, message: str, constraint: Optional[str] = None):
        super().__init__(message)
        self.constraint = constraint


class ConsistencyError(ProbeError, ValueError):
    """边际不一致、步长不整除、对偶间隙过大"""


class ConfigError(ProbeError, ValueError):
    """配置或命令行参数错误"""


class GenerationError(ProbeError, ValueError):
    """生成规格无法满足"""


class InvariantViolation(AssertionError):
    """内部不变量被破坏，说明实现有缺陷，不应被库内代码捕获"""
