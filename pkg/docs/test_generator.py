import json

import pytest

from core.errors import GenerationError
from core.matroids import EnumeratedMatroid
from core.model import RandomSource, from_mask
from core.schemas import GeneratorSpec, parse_instance
from features.generator import generate, generate_instance, generate_kset, generate_matching


def test_same_seed_same_bytes():
    """相同种子生成逐字节相同的文件"""
    spec = GeneratorSpec(n=5)
    _, a = generate_instance(spec, RandomSource(9))
    _, b = generate_instance(spec, RandomSource(9))
    _, c = generate_instance(spec, RandomSource(10))
    assert a == b
    assert a != c


def test_text_parses_back():
    spec = GeneratorSpec(n=5, k_in=1, k_out=1, shape="partition", capacity=2, objective="cut")
    instance, text = generate_instance(spec, RandomSource(1))
    again = parse_instance(json.loads(text))
    assert again.n == instance.n
    assert again.p.tolist() == instance.p.tolist()
    assert again.objective.table.tolist() == instance.objective.table.tolist()


@pytest.mark.parametrize("objective", ["table", "linear", "coverage", "cut"])
def test_objectives(objective):
    instance, _ = generate_instance(GeneratorSpec(n=4, objective=objective), RandomSource(2))
    f = instance.objective
    assert f.value([]) == 0.0
    assert f.is_submodular()


def test_generated_transversal_satisfies_axioms():
    """生成的横截拟阵通过独立集族的公理检查"""
    spec = GeneratorSpec(n=6, k_in=2, k_out=1, degree=3, vertices=3)
    for seed in range(5):
        instance, _ = generate_instance(spec, RandomSource(seed))
        for m in instance.inner + instance.outer:
            family = [sorted(from_mask(mask)) for mask in range(1, 1 << m.n) if m.is_independent_mask(mask)]
            EnumeratedMatroid(m.n, family)


def test_generation_errors():
    with pytest.raises(GenerationError):
        generate_instance(GeneratorSpec(n=4, degree=3, vertices=2), RandomSource(0))
    with pytest.raises(GenerationError):
        generate_instance(GeneratorSpec(n=4, shape="uniform", capacity=0), RandomSource(0))
    with pytest.raises(GenerationError):
        generate_instance(GeneratorSpec(kind="kset"), RandomSource(0))
    with pytest.raises(GenerationError):
        generate_kset(GeneratorSpec(kind="kset", capacity=0), RandomSource(0))


def test_generate_kset():
    spec = GeneratorSpec(kind="kset", n=5, d=3, k=2, capacity=1)
    instance, text = generate(spec, RandomSource(4))
    assert instance.n == 5
    assert instance.k <= 2
    assert instance.capacities == (1, 1, 1)
    assert json.loads(text)["d"] == 3


def test_generate_matching():
    spec = GeneratorSpec(kind="matching", left=2, right=3, edge_prob=1.0, patience_max=2)
    instance, _ = generate_matching(spec, RandomSource(6))
    assert instance.m == 6
    assert all(1 <= t <= 2 for t in instance.patience)
    assert all(p > 0 for p in instance.p)
