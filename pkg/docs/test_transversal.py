import numpy as np
import pytest

from core.errors import ConsistencyError, InvariantViolation
from core.matroids import TransversalMatroid, UniformMatroid
from core.model import RandomSource
from core.transversal import (SupportSet, blocking_set, blocking_sets, build_initial_state, check_state,
                              choose_critical_sets, update_state)


def _star():
    m = TransversalMatroid(2, [(0, 0), (1, 0)])
    state, mapping = build_initial_state(m, m.decompose([0.5, 0.5]), label="star")
    return m, state, mapping


def test_initial_state_properties():
    """初始单射合法，φ 是单射且交换合法"""
    _, state, mapping = _star()
    assert [sorted(B.members) for B in state.sets] == [[0], [1]]
    mapping.check_properties()
    # 两个元素共享顶点 0，φ 把 B0 的 0 映射到 B1 的 1
    assert mapping.phi(0, 1, 0) == 1
    assert mapping.phi(1, 0, 1) == 0


def test_critical_and_blocking(rng):
    _, state, mapping = _star()
    critical = choose_critical_sets(np.array([0.5, 0.5]), None, state, rng)
    assert critical.index == {0: 0, 1: 1}
    gamma = blocking_sets(state, critical)
    assert gamma == {0: frozenset({1}), 1: frozenset({0})}
    assert blocking_set(0, state, mapping, critical) == frozenset({1})


def test_critical_marginal_mismatch(rng):
    """支撑权重与 (1/b)·边际不一致时报错"""
    _, state, _ = _star()
    with pytest.raises(ConsistencyError):
        choose_critical_sets(np.array([0.5, 0.5]), None, state, rng, b=0.5)


def test_critical_inner_uses_p(rng):
    """内层拟阵按 p·x 选关键集"""
    m = UniformMatroid(2, 1)
    state, _ = build_initial_state(m, m.decompose([0.25, 0.5]))
    critical = choose_critical_sets(np.array([0.5, 1.0]), np.array([0.5, 0.5]), state, rng)
    assert set(critical.index) == {0, 1}


def test_update_blocks_and_inserts(rng):
    """被选元素占据关键顶点：冲突元素移出并被阻塞，被选元素插入"""
    _, state, mapping = _star()
    critical = choose_critical_sets(np.array([0.5, 0.5]), None, state, rng)
    gamma0 = blocking_sets(state, critical)
    update = update_state(state, mapping, 0, True, critical)
    assert update.blocked == {1}
    assert update.removed == [(1, 1)]
    assert [sorted(B.members) for B in state.sets] == [[0], [0]]
    check_state(state, mapping, critical, gamma0, available=set())


def test_update_without_add(rng):
    """add 为假时只移出冲突元素"""
    _, state, mapping = _star()
    critical = choose_critical_sets(np.array([0.5, 0.5]), None, state, rng)
    update = update_state(state, mapping, 1, False, critical)
    assert update.blocked == {0}
    assert [sorted(B.members) for B in state.sets] == [[], [1]]


def test_update_noop_for_blocked_element(rng):
    """已不在关键集中的元素不引起任何改动"""
    _, state, mapping = _star()
    critical = choose_critical_sets(np.array([0.5, 0.5]), None, state, rng)
    update_state(state, mapping, 0, True, critical)
    before = [dict(B.vertex) for B in state.sets]
    update = update_state(state, mapping, 1, True, critical)
    assert not update.blocked and not update.removed
    assert [dict(B.vertex) for B in state.sets] == before


def test_check_state_detects_bad_edge(rng):
    _, state, mapping = _star()
    critical = choose_critical_sets(np.array([0.5, 0.5]), None, state, rng)
    state.sets[0] = SupportSet(state.sets[0].beta, {0: 5})
    with pytest.raises(InvariantViolation):
        check_state(state, mapping, critical, {}, available=set())


def test_check_state_detects_gamma_change(rng):
    """可用元素的阻塞集改变即被检查出来"""
    _, state, mapping = _star()
    critical = choose_critical_sets(np.array([0.5, 0.5]), None, state, rng)
    gamma0 = blocking_sets(state, critical)
    update_state(state, mapping, 0, True, critical)
    with pytest.raises(InvariantViolation):
        check_state(state, mapping, critical, gamma0, available={0})


def test_random_updates_keep_properties():
    """随机更新序列下 单射性、交换合法性与阻塞集不变始终成立"""
    m = TransversalMatroid(4, [(0, 0), (1, 0), (1, 1), (2, 1), (3, 2), (3, 0)])
    y = np.array([0.3, 0.4, 0.3, 0.5])
    for seed in range(30):
        rng = RandomSource(seed)
        state, mapping = build_initial_state(m, m.decompose(y))
        critical = choose_critical_sets(y, None, state, rng)
        gamma0 = blocking_sets(state, critical)
        available = set(range(4))
        for _ in range(12):
            e = rng.integers(4)
            fresh = e in available
            available.discard(e)
            update = update_state(state, mapping, e, fresh and rng.random() < 0.7, critical)
            available -= update.blocked
            check_state(state, mapping, critical, gamma0, available)
