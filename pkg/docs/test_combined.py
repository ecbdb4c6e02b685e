import numpy as np
import pytest

from core.combined import (AcceptAllScheme, CRScheme, GreedyScheme, combined_scheme, exact_balance, exact_law,
                           independent_rounding_constant, ordered_greedy_constant)
from core.errors import CapabilityError, DomainError
from core.matroids import UniformMatroid
from core.model import RandomSource, sample_r_of_x
from core.oracles import hoeffding_ci


def test_accept_all_composition(rng):
    """p ≡ 1 且两层都接受全部时输出就是 A"""
    n = 4
    run = combined_scheme(AcceptAllScheme(n), AcceptAllScheme(n), np.full(n, 0.5), np.ones(n), {0, 2, 3}, rng)
    assert run.S == frozenset({0, 2, 3})
    assert run.trace.Q == frozenset({0, 2, 3})


def test_outer_rejects_become_simulations(rng):
    """外层拒绝的元素只模拟探测"""
    outer = GreedyScheme([UniformMatroid(3, 1)])
    run = combined_scheme(outer, AcceptAllScheme(3), np.full(3, 0.5), np.ones(3), {0, 1, 2}, rng)
    assert len(run.outer_set) == 1
    assert run.S == run.outer_set
    assert run.trace.Q == run.outer_set
    assert run.inner_kept == frozenset({0, 1, 2})


def test_inner_must_be_ordered(rng):
    with pytest.raises(CapabilityError):
        combined_scheme(AcceptAllScheme(2), CRScheme(2), [0.5, 0.5], [1.0, 1.0], {0}, rng)


def test_greedy_scheme_needs_matroid():
    with pytest.raises(DomainError):
        GreedyScheme([])


def test_exact_balance_uniform():
    """U(2,1) 上 (½,½) 的随机排列贪心：c = ½ + ¼ = ¾"""
    scheme = GreedyScheme([UniformMatroid(2, 1)])
    assert exact_balance(scheme, [0.5, 0.5]) == pytest.approx(0.75)
    law = exact_law(scheme, [0.5, 0.5])
    assert law[0] == pytest.approx(0.375)


def test_constants():
    assert ordered_greedy_constant(0.5, 2) == pytest.approx(0.25)
    assert independent_rounding_constant(1.0, 1) == pytest.approx(1 - np.exp(-1))


def test_combined_balance():
    """Pr[e ∈ S] ≥ c_out·c_in·p_e·x_e"""
    n = 4
    x = np.full(n, 0.4)
    p = np.array([0.9, 0.5, 0.7, 1.0])
    outer = GreedyScheme([UniformMatroid(n, 2)])
    inner = GreedyScheme([UniformMatroid(n, 1)])
    c_out = exact_balance(outer, x)
    c_in = exact_balance(inner, p * x)
    rng = RandomSource(31)
    runs = 4000
    counts = np.zeros(n)
    for _ in range(runs):
        run = combined_scheme(outer, inner, x, p, sample_r_of_x(x, rng), rng)
        assert run.S <= run.outer_set
        assert len(run.S) <= 1
        for e in run.S:
            counts[e] += 1
    ci = hoeffding_ci(runs)
    for e in range(n):
        assert counts[e] / runs >= c_out * c_in * p[e] * x[e] - 3 * ci
