import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from core.errors import DomainError, InfeasibleError
from core.matroids import (EnumeratedMatroid, PartitionMatroid, TransversalMatroid, UniformMatroid,
                           max_bipartite_matching)


def test_bipartite_matching():
    adj = [(0,), (0, 1), (1,)]
    match = max_bipartite_matching([0, 1, 2], adj)
    assert len(match) == 2
    assert len(set(match.values())) == 2


def test_transversal_star():
    """两个元素只共享一个顶点：秩为 1"""
    m = TransversalMatroid(2, [(0, 0), (1, 0)])
    assert m.is_independent([0]) and m.is_independent([1])
    assert not m.is_independent([0, 1])
    assert m.rank([0, 1]) == 1
    assert m.bipartite().n_vertices == 1


def test_partition_free_elements():
    """不在任何块中的元素不受约束"""
    m = PartitionMatroid(4, [[0, 1]], [1])
    assert m.free == (2, 3)
    assert m.is_independent([0, 2, 3])
    assert not m.is_independent([0, 1])
    assert m.rank([0, 1, 2, 3]) == 3
    # 平行顶点表示与独立性一致
    rep = m.bipartite()
    assert rep.adj[0] == rep.adj[1] == (0,)


def test_uniform_on_subset():
    m = UniformMatroid(4, 2, [0, 1, 2])
    assert m.is_independent([0, 1, 3])
    assert not m.is_independent([0, 1, 2])
    assert m.to_block() == {"type": "uniform", "rank": 2, "subset": [0, 1, 2]}


def test_enumerated_axioms():
    """非向下封闭或不满足交换公理的族被拒绝"""
    EnumeratedMatroid(3, [[0], [1], [2], [0, 1], [0, 2], [1, 2]])
    with pytest.raises(DomainError):
        EnumeratedMatroid(3, [[0], [1], [2], [0, 1]])
    with pytest.raises(DomainError):
        EnumeratedMatroid(2, [[0, 1]])
    with pytest.raises(DomainError):
        EnumeratedMatroid(4, [[0], [1], [2], [3], [0, 1], [2, 3], [0, 1, 2]])


def test_rank_table_matches_rank():
    m = TransversalMatroid(4, [(0, 0), (1, 0), (1, 1), (2, 1), (3, 2)])
    table = m.rank_table()
    for mask in range(16):
        assert table[mask] == m.rank_mask(mask)


def test_polytope_membership():
    m = UniformMatroid(3, 1)
    assert m.in_polytope([0.3, 0.3, 0.4])
    assert not m.in_polytope([0.5, 0.5, 0.2])
    mask, lhs, rank = m.violated_constraint([0.5, 0.5, 0.2])
    assert lhs > rank


def test_decompose_star():
    """星形横截拟阵上 (½,½) 的分解唯一"""
    m = TransversalMatroid(2, [(0, 0), (1, 0)])
    d = m.decompose([0.5, 0.5])
    assert sorted((sorted(B), round(beta, 9)) for beta, B in d.terms) == [([0], 0.5), ([1], 0.5)]


def test_decompose_outside_raises():
    m = TransversalMatroid(2, [(0, 0), (1, 0)])
    with pytest.raises(InfeasibleError) as info:
        m.decompose([1.0, 1.0])
    assert info.value.constraint


def test_decompose_zero_and_integral():
    m = UniformMatroid(3, 2)
    assert m.decompose([0, 0, 0]).terms == [(1.0, frozenset())]
    assert m.decompose([1, 0, 1]).terms == [(1.0, frozenset({0, 2}))]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4))
def test_decompose_uniform_resums(values):
    """均匀拟阵的区间分解：权重为凸组合，重新求和得到原点"""
    m = UniformMatroid(4, 2)
    y = np.array(values)
    if y.sum() > 2:
        y = y * 2 / y.sum()
    d = m.decompose(y)
    d.validate(m, np.where(y > 1e-9, y, 0.0))
    assert abs(sum(d.weights) - 1.0) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4))
def test_decompose_transversal_resums(values):
    """横截拟阵的 LP 分解：每项独立且重新求和误差 ≤ 1e-9"""
    m = TransversalMatroid(4, [(0, 0), (1, 0), (1, 1), (2, 1), (3, 2)])
    y = np.array(values) * 0.5
    if not m.in_polytope(y):
        y = y * 0.5
    if not m.in_polytope(y):
        return
    d = m.decompose(y)
    for B in d.sets:
        assert m.is_independent(B)
    assert np.max(np.abs(d.resum(4) - np.where(y > 1e-9, y, 0.0))) <= 1e-9
