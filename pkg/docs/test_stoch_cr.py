import math

import numpy as np
import pytest

from core.errors import DomainError, InfeasibleError
from core.greedy import ProbingPolytope
from core.model import ProbingInstance, RandomSource, sample_r_of_x
from core.oracles import all_subsets, chi_square_equal, hoeffding_ci
from core.stoch_cr import (SchemeParams, balance_constant, conditional_probe_probability, end_to_end_factor,
                           optimal_b, prepare_scheme, prune_in_order, run_scheme, run_scheme_with_pruning,
                           scaled_balance, trace_scheme, transversal_ratio)
from core.submodular import LinearFunction, TableFunction

RUNS = 3000


def test_constants():
    assert optimal_b(2) == pytest.approx(0.5)
    assert transversal_ratio(2) == pytest.approx(0.25)
    assert end_to_end_factor(0.5, 2) == pytest.approx(0.25 * math.exp(-0.5))
    assert balance_constant(1.0, 3) == pytest.approx(0.25)
    for k in (1, 2, 5):
        assert scaled_balance(1.0, k) == pytest.approx(1 / (k + 1))


def test_optimal_b_maximises_factor():
    """optimal_b 处的端到端因子不小于网格上任何一点"""
    for k in (1, 2, 4):
        best = end_to_end_factor(optimal_b(k), k)
        for b in np.linspace(0.01, 1.0, 100):
            assert best >= end_to_end_factor(float(b), k) - 1e-12


def test_empty_input(star_instance, rng):
    assert run_scheme(star_instance, [0.5, 0.5], [], SchemeParams(), rng) == frozenset()


def test_single_element_always_kept(rng):
    instance = ProbingInstance(n=1, p=[1.0])
    for _ in range(20):
        assert run_scheme(instance, [1.0], [0], SchemeParams(check_invariants=True), rng) == frozenset({0})


def test_params_reject_bad_b():
    with pytest.raises(DomainError):
        SchemeParams(b=0.0)
    with pytest.raises(DomainError):
        SchemeParams(b=1.5)


def test_infeasible_point(star_instance):
    """星形上 (1,1) 不在多面体内"""
    with pytest.raises(InfeasibleError):
        prepare_scheme(star_instance, [1.0, 1.0])


def test_star_closed_form(star_instance, rng):
    """两个元素争同一顶点：各以 1/2 的概率被保留"""
    plan = prepare_scheme(star_instance, [0.5, 0.5])
    critical = plan.draw_critical(rng)
    assert conditional_probe_probability(0, {0, 1}, plan, critical) == pytest.approx(0.5)
    assert conditional_probe_probability(0, {0}, plan, critical) == pytest.approx(1.0)
    assert conditional_probe_probability(1, {0}, plan, critical) == 0.0
    params = SchemeParams(check_invariants=True)
    hits = sum(0 in trace_scheme(star_instance, plan.x, {0, 1}, params, rng, plan, critical).S
               for _ in range(RUNS))
    assert abs(hits / RUNS - 0.5) <= 3 * hoeffding_ci(RUNS)


def test_mixed_closed_form(mixed_instance, rng):
    """固定关键集，A 取整个支撑：经验频率与闭式一致"""
    x = ProbingPolytope(mixed_instance).spread_point()
    plan = prepare_scheme(mixed_instance, x)
    critical = plan.draw_critical(rng)
    A = plan.support
    params = SchemeParams()
    counts = np.zeros(4)
    for _ in range(RUNS):
        for e in trace_scheme(mixed_instance, plan.x, A, params, rng, plan, critical).S:
            counts[e] += 1
    ci = hoeffding_ci(RUNS, 0.999)
    for e in A:
        assert abs(counts[e] / RUNS - conditional_probe_probability(e, A, plan, critical)) <= ci


def test_balance(mixed_instance):
    """Pr[e ∈ S] ≥ c·p_e·x_e，c = 1/(1+b·k)"""
    x = ProbingPolytope(mixed_instance).spread_point()
    plan = prepare_scheme(mixed_instance, x)
    c = balance_constant(1.0, plan.k)
    params = SchemeParams(check_invariants=True, record_trace=True)
    rng = RandomSource(11)
    counts = np.zeros(4)
    for _ in range(RUNS):
        for e in run_scheme(mixed_instance, plan.x, sample_r_of_x(plan.x, rng), params, rng, plan):
            counts[e] += 1
    ci = hoeffding_ci(RUNS)
    for e in plan.support:
        assert counts[e] / RUNS >= c * mixed_instance.p[e] * plan.x[e] - 3 * ci


def test_pruning_monotone_never_prunes(mixed_instance, rng):
    x = ProbingPolytope(mixed_instance).spread_point()
    plan = prepare_scheme(mixed_instance, x)
    f = LinearFunction([1.0, 2.0, 0.5, 1.0])
    for _ in range(200):
        run = run_scheme_with_pruning(mixed_instance, plan.x, f, SchemeParams(), rng, plan)
        assert run.S_virt == frozenset()
        assert run.S_prun == run.S


def _pair(order):
    """f({a})=f({b})=1，f({a,b})=0.4"""
    f = TableFunction(2, [(0, 0.0), (1, 1.0), (2, 1.0), (3, 0.4)])
    return ProbingInstance(n=2, p=[1.0, 1.0], objective=f, order=order)


def test_pruning_follows_instance_order(rng):
    """离线剪枝按实例顺序；顺序反过来，保留的元素也反过来"""
    forward, backward = _pair((0, 1)), _pair((1, 0))
    assert prune_in_order(forward, {0, 1}) == frozenset({0})
    assert prune_in_order(backward, {0, 1}) == frozenset({1})
    params = SchemeParams(check_invariants=True)
    for _ in range(20):
        a = run_scheme_with_pruning(forward, [1.0, 1.0], forward.objective, params, rng)
        b = run_scheme_with_pruning(backward, [1.0, 1.0], backward.objective, params, rng)
        assert a.S_prun | a.S_virt == frozenset({0, 1})
        assert len(a.S_prun) == 1
        assert a.S_eta == frozenset({0})
        assert b.S_eta == frozenset({1})


def test_prune_in_order_needs_objective():
    with pytest.raises(DomainError):
        prune_in_order(ProbingInstance(n=1, p=[1.0]), {0})


def test_pruning_zero_objective(mixed_instance, rng):
    """f ≡ 0 时边际为 0，不剪枝"""
    x = ProbingPolytope(mixed_instance).spread_point()
    plan = prepare_scheme(mixed_instance, x)
    f = LinearFunction(np.zeros(4))
    for _ in range(100):
        run = run_scheme_with_pruning(mixed_instance, plan.x, f, SchemeParams(check_invariants=True), rng, plan)
        assert f.value(run.S_prun) == 0.0
        assert not run.S_virt


def test_pruning_keeps_positive_marginals(mixed_instance, rng):
    x = ProbingPolytope(mixed_instance).spread_point()
    plan = prepare_scheme(mixed_instance, x)
    f = mixed_instance.objective
    for _ in range(300):
        run = run_scheme_with_pruning(mixed_instance, plan.x, f, SchemeParams(check_invariants=True), rng, plan)
        assert not run.S_prun & run.S_virt
        assert run.S_prun <= run.trace.Q


def test_pruning_unknown_base(mixed_instance, rng):
    with pytest.raises(DomainError):
        run_scheme_with_pruning(mixed_instance, [0.1] * 4, mixed_instance.objective, SchemeParams(), rng,
                                pruning_base="greedy")


@pytest.mark.parametrize("base", ["kept", "joint"])
def test_pruning_identity(mixed_instance, base):
    """S^prun + S^virt 与不剪枝输出同分布"""
    x = ProbingPolytope(mixed_instance).spread_point()
    plan = prepare_scheme(mixed_instance, x)
    params = SchemeParams()
    rng = RandomSource(23)
    pruned, plain = [], []
    for _ in range(RUNS):
        run = run_scheme_with_pruning(mixed_instance, plan.x, mixed_instance.objective, params, rng, plan, base)
        pruned.append(run.S_prun | run.S_virt)
        plain.append(trace_scheme(mixed_instance, plan.x, sample_r_of_x(plan.x, rng), params, rng, plan).S)
    assert chi_square_equal(pruned, plain, all_subsets(4)) > 1e-3
