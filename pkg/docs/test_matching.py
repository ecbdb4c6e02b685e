import numpy as np
import pytest

from core.errors import CapabilityError, DomainError
from core.model import RandomSource
from core.oracles import all_subsets, chi_square_equal, hoeffding_ci
from features.matching import (MatchingInstance, check_degrees, gkps_round, lp_value, probe_lower_bound,
                               run_matching, run_matching_repick, solve_matching_lp)


def _square(p=0.6):
    """2×2 完全二部图"""
    return MatchingInstance(left=2, right=2, edges=[(0, 0), (0, 1), (1, 0), (1, 1)],
                            p=[p] * 4, w=[1.0, 2.0, 2.0, 1.0], patience=(2, 2, 2, 2))


def test_instance_validation():
    with pytest.raises(DomainError):
        MatchingInstance(1, 1, [(0, 0)], p=[0.0], w=[1.0], patience=(1, 1))
    with pytest.raises(DomainError):
        MatchingInstance(1, 1, [(0, 1)], p=[0.5], w=[1.0], patience=(1, 1))
    with pytest.raises(DomainError):
        MatchingInstance(1, 1, [(0, 0)], p=[0.5], w=[1.0], patience=(1, 0))


def test_neighbours():
    instance = _square()
    assert instance.graph()[3] == (1, 3)
    assert sorted(instance.neighbours(0)) == [1, 2]


def test_gkps_integral_input(rng):
    graph = [(0, 1), (0, 2)]
    assert gkps_round([1.0, 0.0], graph, rng).tolist() == [1, 0]


def test_gkps_two_half_edges(rng):
    """两条共享端点的半边：恰好保留一条，各占一半"""
    graph = [(0, 1), (0, 2)]
    runs = 2000
    first = 0
    for _ in range(runs):
        rounded = gkps_round([0.5, 0.5], graph, rng)
        assert rounded.sum() == 1
        first += rounded[0]
    assert abs(first / runs - 0.5) <= 3 * hoeffding_ci(runs)


def test_gkps_rejects_odd_cycle(rng):
    with pytest.raises(CapabilityError):
        gkps_round([0.5, 0.5, 0.5], [(0, 1), (1, 2), (0, 2)], rng)


def test_gkps_rejects_bad_input(rng):
    with pytest.raises(DomainError):
        gkps_round([0.5], [(0, 1), (0, 2)], rng)
    with pytest.raises(DomainError):
        gkps_round([1.5, 0.0], [(0, 1), (0, 2)], rng)


def test_gkps_cycle_degrees_and_marginals():
    """2×2 环：度数不超过 ⌈Σx⌉，边际等于 x"""
    instance = _square()
    graph = instance.graph()
    x = np.array([0.5, 0.3, 0.4, 0.6])
    rng = RandomSource(41)
    runs = 3000
    counts = np.zeros(4)
    for _ in range(runs):
        rounded = gkps_round(x, graph, rng, instance.nodes)
        check_degrees(x, rounded, graph, instance.nodes)
        counts += rounded
    assert np.all(np.abs(counts / runs - x) <= 3 * hoeffding_ci(runs))


def test_lp_single_edge():
    instance = MatchingInstance(1, 1, [(0, 0)], p=[0.5], w=[2.0], patience=(1, 1))
    x = solve_matching_lp(instance)
    assert x[0] == pytest.approx(1.0)
    assert lp_value(instance, x) == pytest.approx(1.0)


def test_lp_star():
    """中心耐心为 2：取权重最大的两条边"""
    instance = MatchingInstance(1, 3, [(0, 0), (0, 1), (0, 2)], p=[0.5] * 3, w=[3.0, 2.0, 1.0],
                                patience=(2, 1, 1, 1))
    x = solve_matching_lp(instance)
    assert np.allclose(x, [1.0, 1.0, 0.0], atol=1e-7)
    assert lp_value(instance, x) == pytest.approx(2.5)


def test_adjacent_edges_single_match(rng):
    """两条相邻边 p=(1,1)：恰好匹配一条，各以 1/2 的概率被探测"""
    instance = MatchingInstance(1, 2, [(0, 0), (0, 1)], p=[1.0, 1.0], w=[1.0, 1.0], patience=(2, 1, 1))
    runs = 2000
    first = 0
    for _ in range(runs):
        run = run_matching(instance, [1, 1], rng)
        assert len(run.matched) == 1
        assert len(run.probed) == 1
        assert run.weight == pytest.approx(1.0)
        first += run.probed[0] == 0
    assert abs(first / runs - 0.5) <= 3 * hoeffding_ci(runs)


def test_gkps_negative_correlation_star():
    """中心 Σx=2 的星：X̂_e=1 时其余边恰好再留一条，Σ p_f X̂_f 不超过 2 − 2·p_e·x_e"""
    instance = MatchingInstance(1, 4, [(0, v) for v in range(4)], p=[1.0] * 4, w=[1.0] * 4,
                                patience=(2, 1, 1, 1, 1))
    graph = instance.graph()
    x = np.full(4, 0.5)
    rng = RandomSource(47)
    for _ in range(500):
        rounded = gkps_round(x, graph, rng, instance.nodes)
        assert rounded.sum() == 2
        for i in np.flatnonzero(rounded == 1):
            load = sum(instance.p[j] * rounded[j] for j in instance.neighbours(i))
            assert load <= 2 - 2 * instance.p[i] * x[i] + 1e-12


def test_probe_lower_bound():
    instance = _square(p=0.5)
    x = np.full(4, 0.5)
    assert probe_lower_bound(instance, x, 0) == pytest.approx(1 / 1.5)


def test_scan_matches_repick():
    """随机排列扫描与逐步重抽的匹配分布一致"""
    instance = _square()
    rng = RandomSource(43)
    scan, repick = [], []
    for _ in range(3000):
        scan.append(run_matching(instance, [1, 1, 1, 1], rng).matched)
        repick.append(run_matching_repick(instance, [1, 1, 1, 1], rng).matched)
    assert chi_square_equal(scan, repick, all_subsets(4)) > 1e-3
