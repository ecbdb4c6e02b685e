import os

# 测试不写日志文件；必须在导入 core 之前设置
os.environ["STOCHPROBE_LOG_DIR"] = ""

import pytest

from core.matroids import TransversalMatroid, UniformMatroid
from core.model import ProbingInstance, RandomSource
from core.submodular import CutFunction, LinearFunction


@pytest.fixture
def rng():
    return RandomSource(20240601)


@pytest.fixture
def star_instance():
    """两个元素共享唯一顶点的内层横截拟阵，p ≡ 1"""
    return ProbingInstance(n=2, p=[1.0, 1.0], inner=[TransversalMatroid(2, [(0, 0), (1, 0)])],
                           objective=LinearFunction([1.0, 1.0]))


@pytest.fixture
def mixed_instance():
    """内层横截 + 外层均匀，目标为割函数（非单调）"""
    inner = TransversalMatroid(4, [(0, 0), (1, 0), (1, 1), (2, 1), (3, 2)])
    outer = UniformMatroid(4, 2)
    cut = CutFunction(4, [[0, 1, 1.0], [1, 2, 0.5], [2, 3, 1.5], [0, 3, 0.7]])
    return ProbingInstance(n=4, p=[0.8, 0.6, 0.9, 0.5], inner=[inner], outer=[outer], objective=cut)


