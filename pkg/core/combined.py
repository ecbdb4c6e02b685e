"""
经典 CR 方案与有序 CR 方案的组合

先对 A 运行外层方案得到 O，再按内层方案的顺序扫描 A：
内层方案会拒绝的元素直接跳过；O 中的元素真实探测，O 之外的元素模拟探测。
输出与 π^out(A) ∩ π^in(act(A)) 同分布。
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Sequence

import numpy as np

from . import log_maker
from .errors import CapabilityError, DomainError
from .matroids import Matroid
from .model import ProbeTrace, RandomSource

log = log_maker.logger("combined")

EXACT_LAW_CAP = 6


class CRScheme:
    """经典 CR 方案：给定 x 与 A ⊆ supp(x)，返回独立子集"""
    ordered = False

    def __init__(self, n: int):
        self.n = int(n)

    def run(self, x, A: Iterable[int], rng: RandomSource) -> FrozenSet[int]:
        raise NotImplementedError

    def law(self, x, A: FrozenSet[int]) -> Dict[int, float]:
        """精确的 Pr[e ∈ π(A)]"""
        raise CapabilityError(f"{type(self).__name__} 不支持精确分布")


class OrderedScheme(CRScheme):
    """有序方案：先抽取与 A 无关的顺序，再逐个决定是否接受"""
    ordered = True

    def draw_order(self, rng: RandomSource) -> List[int]:
        raise NotImplementedError

    def accepts(self, kept_mask: int, e: int) -> bool:
        raise NotImplementedError

    def run(self, x, A: Iterable[int], rng: RandomSource) -> FrozenSet[int]:
        members = set(int(e) for e in A)
        kept = 0
        for e in self.draw_order(rng):
            if e in members and self.accepts(kept, e):
                kept |= 1 << e
        return frozenset(e for e in members if kept >> e & 1)

    def _orders(self) -> Iterable[Sequence[int]]:
        raise NotImplementedError

    def law(self, x, A: FrozenSet[int]) -> Dict[int, float]:
        counts = {e: 0 for e in A}
        total = 0
        for order in self._orders():
            kept = 0
            for e in order:
                if e in A and self.accepts(kept, e):
                    kept |= 1 << e
            for e in A:
                counts[e] += kept >> e & 1
            total += 1
        return {e: c / total for e, c in counts.items()}


class AcceptAllScheme(OrderedScheme):
    """自由拟阵上的平凡方案"""

    def draw_order(self, rng: RandomSource) -> List[int]:
        return list(range(self.n))

    def accepts(self, kept_mask: int, e: int) -> bool:
        return True

    def _orders(self):
        return [list(range(self.n))]


class GreedyScheme(OrderedScheme):
    """随机排列贪心：按均匀随机顺序扫描，保持所有拟阵独立"""

    def __init__(self, matroids: Sequence[Matroid]):
        matroids = list(matroids)
        if not matroids:
            raise DomainError("贪心方案至少需要一个拟阵")
        super().__init__(matroids[0].n)
        if any(m.n != self.n for m in matroids):
            raise DomainError("拟阵地集大小不一致")
        self.matroids = matroids

    def draw_order(self, rng: RandomSource) -> List[int]:
        return rng.permutation(list(range(self.n)))

    def accepts(self, kept_mask: int, e: int) -> bool:
        grown = kept_mask | (1 << e)
        return all(m.is_independent_mask(grown) for m in self.matroids)

    def law(self, x, A: FrozenSet[int]) -> Dict[int, float]:
        # 只有 A 内的相对顺序有影响
        if len(A) > EXACT_LAW_CAP:
            raise CapabilityError(f"精确分布仅支持 |A| ≤ {EXACT_LAW_CAP}")
        counts = {e: 0 for e in A}
        total = 0
        for order in itertools.permutations(sorted(A)):
            kept = 0
            for e in order:
                if self.accepts(kept, e):
                    kept |= 1 << e
            for e in A:
                counts[e] += kept >> e & 1
            total += 1
        return {e: c / total for e, c in counts.items()} if total else {}


@dataclass
class CombinedRun:
    S: FrozenSet[int]
    outer_set: FrozenSet[int]
    trace: ProbeTrace = field(default_factory=ProbeTrace)
    inner_kept: FrozenSet[int] = frozenset()


def combined_scheme(outer: CRScheme, inner: CRScheme, x, p, A: Iterable[int], rng: RandomSource) -> CombinedRun:
    if not getattr(inner, "ordered", False):
        raise CapabilityError(f"内层方案 {type(inner).__name__} 不是有序方案")
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    members = frozenset(int(e) for e in A)
    O = frozenset(outer.run(x, members, rng))
    if not O <= members:
        raise DomainError("外层方案返回了输入之外的元素")
    trace = ProbeTrace()
    kept = 0
    for e in inner.draw_order(rng):
        if e not in members or not inner.accepts(kept, e):
            continue
        active = rng.bernoulli(float(p[e]))
        if e in O:
            trace.record_probe(e, active)
        else:
            trace.record_simulation(e, active)
        if active:
            kept |= 1 << e
    inner_kept = frozenset(e for e in members if kept >> e & 1)
    log.debug(f"组合方案: |A|={len(members)}, |O|={len(O)}, 内层保留 {len(inner_kept)}")
    return CombinedRun(S=inner_kept & O, outer_set=O, trace=trace, inner_kept=inner_kept)


def exact_law(scheme: CRScheme, x, cap: int = EXACT_LAW_CAP) -> Dict[int, float]:
    """Pr[e ∈ π(R(x))]，对 R(x) 与方案内部随机性全部穷举"""
    x = np.asarray(x, dtype=float)
    support = [int(e) for e in np.flatnonzero(x > 0)]
    if len(support) > cap:
        raise CapabilityError(f"穷举仅支持支撑 ≤ {cap} 个元素")
    result = {e: 0.0 for e in support}
    for r in range(len(support) + 1):
        for A in itertools.combinations(support, r):
            chosen = frozenset(A)
            weight = math.prod(x[e] if e in chosen else 1.0 - x[e] for e in support)
            if weight == 0:
                continue
            for e, prob in scheme.law(x, chosen).items():
                result[e] += weight * prob
    return result


def exact_balance(scheme: CRScheme, x, cap: int = EXACT_LAW_CAP) -> float:
    """c = min_e Pr[e ∈ π(R(x)) | e ∈ R(x)]"""
    x = np.asarray(x, dtype=float)
    law = exact_law(scheme, x, cap)
    if not law:
        return 1.0
    return min(law[e] / x[e] for e in law)


def ordered_greedy_constant(b: float, k: int) -> float:
    return (1.0 - b) ** k


def independent_rounding_constant(b: float, k: int) -> float:
    return ((1.0 - math.exp(-b)) / b) ** k
