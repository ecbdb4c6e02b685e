"""
随机实例生成

生成的数据先写成字典（浮点数保留 6 位小数），再经解析器读回，
因此内存中的实例与落盘文件完全一致；相同种子得到逐字节相同的文件。
"""
from __future__ import annotations

from typing import List, Tuple

from core import log_maker
from core.errors import GenerationError
from core.model import ProbingInstance, RandomSource
from core.schemas import DECIMALS, GeneratorSpec, KSetFile, MatchingFile, dumps, parse_instance
from core.submodular import CoverageFunction, CutFunction, SumFunction, TABLE_CAP

from .kset import KSetInstance, kset_from_file
from .matching import MatchingInstance, matching_from_file

log = log_maker.logger("generator")


def _r(value: float) -> float:
    return round(float(value), DECIMALS)


def _subset(rng: RandomSource, items: List[int], size: int) -> List[int]:
    return sorted(rng.permutation(items)[:size])


def _matroid_block(spec: GeneratorSpec, rng: RandomSource) -> dict:
    n = spec.n
    if spec.shape == "transversal":
        vertices = spec.vertices or max(2, n // 2)
        if spec.degree > vertices:
            raise GenerationError(f"每个元素需要 {spec.degree} 个不同顶点，但只有 {vertices} 个顶点")
        edges = []
        for e in range(n):
            for v in _subset(rng, list(range(vertices)), 1 + rng.integers(spec.degree)):
                edges.append([e, v])
        return {"type": "transversal", "edges": edges}
    if spec.capacity == 0:
        raise GenerationError("容量为 0 的拟阵秩处处为 0，无法生成有意义的实例")
    if spec.shape == "uniform":
        return {"type": "uniform", "rank": spec.capacity, "subset": list(range(n))}
    count = spec.vertices or max(1, n // 2)
    labels = [rng.integers(count) for _ in range(n)]
    blocks = [[e for e in range(n) if labels[e] == b] for b in range(count)]
    blocks = [b for b in blocks if b]
    return {"type": "partition", "blocks": blocks, "capacities": [spec.capacity] * len(blocks)}


def _objective_block(spec: GeneratorSpec, rng: RandomSource) -> dict:
    n = spec.n
    if spec.objective == "linear":
        return {"type": "linear", "weights": [_r(0.5 + 1.5 * rng.random()) for _ in range(n)]}
    items = n + 2
    sets = [_subset(rng, list(range(items)), 1 + rng.integers(3)) for _ in range(n)]
    weights = [_r(0.5 + rng.random()) for _ in range(items)]
    if spec.objective == "coverage":
        return {"type": "coverage", "sets": sets, "weights": weights}
    cut_edges = [[u, v, _r(0.2 + rng.random())] for u in range(n) for v in range(u + 1, n) if rng.random() < 0.5]
    if spec.objective == "cut":
        return {"type": "cut", "edges": cut_edges, "directed": False}
    if n > TABLE_CAP:
        raise GenerationError(f"显式取值表仅支持 n ≤ {TABLE_CAP}")
    # 覆盖 + 割：非单调的显式取值表
    f = SumFunction([CoverageFunction(sets, weights), CutFunction(n, cut_edges)])
    return {"type": "table", "table": [[m, _r(v)] for m, v in enumerate(f.table)]}


def generate_instance_data(spec: GeneratorSpec, rng: RandomSource) -> dict:
    lo, hi = spec.p_range
    data = {
        "elements": list(range(spec.n)),
        "p": [_r(lo + (hi - lo) * rng.random()) for _ in range(spec.n)],
        "inner": [_matroid_block(spec, rng) for _ in range(spec.k_in)],
        "outer": [_matroid_block(spec, rng) for _ in range(spec.k_out)],
        "objective": _objective_block(spec, rng),
    }
    return data


def generate_instance(spec: GeneratorSpec, rng: RandomSource) -> Tuple[ProbingInstance, str]:
    """返回 (实例, 文件文本)"""
    if spec.kind != "probing":
        raise GenerationError(f"generate_instance 只生成探测实例，收到 {spec.kind}")
    data = generate_instance_data(spec, rng)
    instance = parse_instance(data)
    log.debug(f"生成探测实例: n={spec.n}, k_in={spec.k_in}, k_out={spec.k_out}, 形状 {spec.shape}")
    return instance, dumps(data)


def generate_kset(spec: GeneratorSpec, rng: RandomSource) -> Tuple[KSetInstance, str]:
    if spec.capacity == 0:
        raise GenerationError("k-集合装箱的容量必须为正")
    k = min(spec.k, spec.d)
    columns = []
    for _ in range(spec.n):
        support = _subset(rng, list(range(spec.d)), 1 + rng.integers(k))
        raw = rng.uniform(spec.outcomes) + 0.05
        probs = [_r(v) for v in raw / raw.sum()]
        probs[-1] = _r(1.0 - sum(probs[:-1]))
        if probs[-1] < 0:
            raise GenerationError("结果概率舍入后出现负值")
        outcomes = []
        for prob in probs:
            size = [j for j in support if rng.random() < 0.6]
            outcomes.append({"prob": prob, "value": _r(2.0 * rng.random()), "size": size})
        columns.append({"support": support, "outcomes": outcomes})
    data = {"d": spec.d, "capacities": [spec.capacity] * spec.d, "columns": columns}
    return kset_from_file(KSetFile.model_validate(data)), dumps(data)


def generate_matching(spec: GeneratorSpec, rng: RandomSource) -> Tuple[MatchingInstance, str]:
    lo, hi = spec.p_range
    lo = max(lo, 0.05)
    if lo > hi:
        raise GenerationError("匹配实例的边概率必须为正")
    pairs = [(u, v) for u in range(spec.left) for v in range(spec.right) if rng.random() < spec.edge_prob]
    if not pairs:
        pairs = [(rng.integers(spec.left), rng.integers(spec.right))]
    edges = [{"u": u, "v": v, "p": _r(lo + (hi - lo) * rng.random()), "w": _r(0.5 + 1.5 * rng.random())}
             for u, v in pairs]
    data = {
        "left": spec.left,
        "right": spec.right,
        "patience": [1 + rng.integers(spec.patience_max) for _ in range(spec.left + spec.right)],
        "edges": edges,
    }
    return matching_from_file(MatchingFile.model_validate(data)), dumps(data)


def generate(spec: GeneratorSpec, rng: RandomSource):
    if spec.kind == "kset":
        return generate_kset(spec, rng)
    if spec.kind == "matching":
        return generate_matching(spec, rng)
    return generate_instance(spec, rng)
