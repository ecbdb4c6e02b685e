import math

import numpy as np
import pytest

from core.errors import ConfigError, DomainError
from core.greedy import GreedyConfig, ProbingPolytope, measured_continuous_greedy
from core.matroids import UniformMatroid
from core.model import ProbingInstance, RandomSource
from core.submodular import LinearFunction


def test_config_errors():
    """δ > b、δ 不整除 b、未知梯度模式都被拒绝"""
    with pytest.raises(ConfigError):
        GreedyConfig(b=0.5, delta=0.6)
    with pytest.raises(ConfigError):
        GreedyConfig(b=1.0, delta=0.3)
    with pytest.raises(ConfigError):
        GreedyConfig(gradient="adam")
    with pytest.raises(ConfigError):
        GreedyConfig(b=0.0)
    assert GreedyConfig(b=0.5, delta=0.05).steps == 10


def test_linear_max_prefers_heavier():
    instance = ProbingInstance(n=2, p=[1.0, 1.0], outer=[UniformMatroid(2, 1)])
    P = ProbingPolytope(instance)
    assert np.allclose(P.linear_max([2.0, 1.0]), [1.0, 0.0])
    assert np.allclose(P.linear_max([-1.0, 0.0]), [0.0, 0.0])
    with pytest.raises(DomainError):
        P.linear_max([1.0])


def test_linear_max_tie_breaks_low_index():
    instance = ProbingInstance(n=2, p=[1.0, 1.0], outer=[UniformMatroid(2, 1)])
    assert np.allclose(ProbingPolytope(instance).linear_max([1.0, 1.0]), [1.0, 0.0])


def test_inner_rows_scale_with_p():
    """内层约束作用在 p·x 上"""
    instance = ProbingInstance(n=2, p=[0.5, 0.5], inner=[UniformMatroid(2, 1)])
    P = ProbingPolytope(instance)
    assert P.contains([1.0, 1.0])
    assert not P.contains([1.0, 1.0], scale=0.5)


def test_spread_point_inside(mixed_instance):
    P = ProbingPolytope(mixed_instance)
    point = P.spread_point()
    assert P.contains(point)
    assert np.all(point > 0)


def test_greedy_guarantee(mixed_instance):
    """G(y) ≥ b·e^{−b}·max f⁺，且 y ∈ b·P"""
    P = ProbingPolytope(mixed_instance)
    for b in (0.5, 1.0):
        config = GreedyConfig(b=b, delta=0.02)
        result = measured_continuous_greedy(mixed_instance.objective, P, config)
        assert result.steps == round(b / 0.02)
        assert P.contains(result.y, scale=b)
        assert result.value >= (b * math.exp(-b) - 0.02) * result.f_plus_value


def test_greedy_zero_objective(mixed_instance):
    P = ProbingPolytope(mixed_instance)
    result = measured_continuous_greedy(LinearFunction(np.zeros(4)), P, GreedyConfig(b=1.0, delta=0.1))
    assert result.value == 0.0
    assert np.allclose(result.y, 0.0)


def test_greedy_sampled_needs_rng(mixed_instance):
    P = ProbingPolytope(mixed_instance)
    with pytest.raises(DomainError):
        measured_continuous_greedy(mixed_instance.objective, P, GreedyConfig(gradient="sampled", delta=0.1))
    result = measured_continuous_greedy(mixed_instance.objective, P,
                                        GreedyConfig(gradient="sampled", delta=0.1, samples=500), RandomSource(5))
    assert P.contains(result.y)
    assert result.f_plus_value is None
