import numpy as np
import pytest

from core.errors import DomainError
from core.model import RandomSource
from core.oracles import hoeffding_ci
from features.kset import Column, KSetInstance, prepare_kset, run_kset, solve_kset_lp


def _column(support, outcomes):
    """outcomes: [(prob, value, size)]"""
    return Column(tuple(support), np.array([o[0] for o in outcomes], dtype=float),
                  np.array([o[1] for o in outcomes], dtype=float), [frozenset(o[2]) for o in outcomes])


def _two_coords():
    return KSetInstance(2, (1, 1), [
        _column([0], [(1.0, 1.0, [0])]),
        _column([0, 1], [(0.5, 2.0, [0, 1]), (0.5, 1.0, [1])]),
        _column([1], [(1.0, 1.0, [1])]),
    ])


def test_instance_validation():
    with pytest.raises(DomainError):
        KSetInstance(2, (1,), [])
    with pytest.raises(DomainError):
        KSetInstance(1, (1,), [_column([0], [(0.5, 1.0, [0])])])
    with pytest.raises(DomainError):
        KSetInstance(2, (1, 1), [_column([0], [(1.0, 1.0, [0, 1])])])


def test_coordinate_probs():
    instance = _two_coords()
    assert instance.k == 2
    assert np.allclose(instance.p_matrix(), [[1.0, 0.5, 0.0], [0.0, 1.0, 1.0]])
    assert instance.columns[1].union_prob([0]) == pytest.approx(0.5)
    assert instance.columns[1].union_prob([0, 1]) == pytest.approx(1.0)


def test_single_column_always_taken(rng):
    instance = KSetInstance(1, (1,), [_column([0], [(1.0, 2.0, [0])])])
    x = solve_kset_lp(instance)
    assert x[0] == pytest.approx(1.0)
    for _ in range(20):
        run = run_kset(instance, x, rng)
        assert run.taken == frozenset({0})
        assert run.value == pytest.approx(2.0)


def test_lp_identical_columns():
    """两列争同一坐标：LP 的解之和为 1"""
    column = [(1.0, 2.0, [0])]
    instance = KSetInstance(1, (1,), [_column([0], column), _column([0], column)])
    assert solve_kset_lp(instance).sum() == pytest.approx(1.0)


def test_deterministic_columns_as_probing():
    instance = KSetInstance(1, (1,), [_column([0], [(1.0, 2.0, [0])]), _column([0], [(1.0, 1.0, [0])])])
    probing = instance.as_probing_instance()
    assert probing.k_in == 1
    with pytest.raises(DomainError):
        _two_coords().as_probing_instance()


def test_capacities_and_probe_rate():
    """容量不被突破，Pr[e 被探测] ≥ x_e/(k+1)"""
    instance = _two_coords()
    x = np.array([0.5, 0.5, 0.5])
    plan = prepare_kset(instance, x)
    rng = RandomSource(17)
    runs = 3000
    counts = np.zeros(3)
    for _ in range(runs):
        run = run_kset(instance, x, rng, plan, check_invariants=True)
        assert np.all(run.usage <= np.array(instance.capacities))
        for e in run.taken:
            counts[e] += 1
    ci = hoeffding_ci(runs)
    for e in range(3):
        assert counts[e] / runs >= x[e] / (instance.k + 1) - 3 * ci
