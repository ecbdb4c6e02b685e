"""
拟阵：独立性判定、秩、多面体成员判定与凸分解

四种形式：横截(transversal)、均匀(uniform)、划分(partition)、枚举(enumerated)。
横截拟阵要求输入中直接给出二部图表示，不做推断。
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import log_maker
from .errors import CapabilityError, ConsistencyError, DomainError, InfeasibleError
from .model import from_mask, to_mask
from .submodular import DenseLP, subset_bits

log = log_maker.logger("matroids")

WEIGHT_TOL = 1e-9
POLYTOPE_CAP = 20
DECOMPOSE_CAP = 12
AXIOM_CHECK_CAP = 8


def max_bipartite_matching(elements: Sequence[int], adj: Sequence[Sequence[int]]) -> Dict[int, int]:
    """
    增广路最大匹配（Kuhn），按元素编号、顶点编号从小到大尝试，结果确定

    返回 元素 -> 顶点 的映射
    """
    owner: Dict[int, int] = {}

    def search(e: int, seen: set) -> bool:
        for v in adj[e]:
            if v in seen:
                continue
            seen.add(v)
            if v not in owner or search(owner[v], seen):
                owner[v] = e
                return True
        return False

    for e in sorted(elements):
        search(e, set())
    return {e: v for v, e in owner.items()}


@dataclass(frozen=True)
class BipartiteRepresentation:
    adj: Tuple[Tuple[int, ...], ...]
    n_vertices: int


@dataclass
class ConvexDecomposition:
    """y = Σ β_i·1_{B_i}，Σ β_i = 1"""
    terms: List[Tuple[float, FrozenSet[int]]] = field(default_factory=list)

    @property
    def weights(self) -> List[float]:
        return [beta for beta, _ in self.terms]

    @property
    def sets(self) -> List[FrozenSet[int]]:
        return [B for _, B in self.terms]

    def resum(self, n: int) -> np.ndarray:
        y = np.zeros(n, dtype=float)
        for beta, B in self.terms:
            for e in B:
                y[e] += beta
        return y

    def validate(self, matroid: "Matroid", y, tol: float = WEIGHT_TOL):
        y = np.asarray(y, dtype=float)
        if any(beta < -tol for beta in self.weights):
            raise ConsistencyError("分解中出现负权重")
        if abs(sum(self.weights) - 1.0) > tol:
            raise ConsistencyError(f"分解权重之和为 {sum(self.weights):.12f}")
        for _, B in self.terms:
            if not matroid.is_independent(B):
                raise ConsistencyError(f"分解中的集合 {sorted(B)} 不独立")
        err = float(np.max(np.abs(self.resum(matroid.n) - y))) if matroid.n else 0.0
        if err > tol:
            raise ConsistencyError(f"分解重新求和误差 {err:.3e} 超过 {tol}")


class Matroid:
    kind = "abstract"

    def __init__(self, n: int):
        if n < 0:
            raise DomainError("地集大小不能为负")
        self.n = int(n)
        self._cache: Dict[int, bool] = {}
        self._rank_table: Optional[np.ndarray] = None

    # -- 子类实现
    def _independent(self, mask: int) -> bool:
        raise NotImplementedError

    def bipartite(self) -> BipartiteRepresentation:
        raise CapabilityError(f"{self.kind} 拟阵没有横截表示")

    def to_block(self) -> dict:
        raise NotImplementedError

    def _fast_decompose(self, y: np.ndarray) -> Optional[List[Tuple[float, FrozenSet[int]]]]:
        return None

    # -- 通用操作
    def _mask(self, S: Iterable[int]) -> int:
        members = list(S)
        for e in members:
            if not 0 <= int(e) < self.n:
                raise DomainError(f"元素 {e} 不在拟阵地集 0..{self.n - 1} 中")
        return to_mask(members)

    def is_independent_mask(self, mask: int) -> bool:
        hit = self._cache.get(mask)
        if hit is None:
            hit = bool(self._independent(mask))
            self._cache[mask] = hit
        return hit

    def is_independent(self, S: Iterable[int]) -> bool:
        return self.is_independent_mask(self._mask(S))

    def rank_mask(self, mask: int) -> int:
        if self._rank_table is not None:
            return int(self._rank_table[mask])
        current = 0
        for e in from_mask(mask):
            if self.is_independent_mask(current | (1 << e)):
                current |= 1 << e
        return bin(current).count("1")

    def rank(self, S: Iterable[int]) -> int:
        return self.rank_mask(self._mask(S))

    def rank_table(self, cap: int = POLYTOPE_CAP) -> np.ndarray:
        """所有子集的秩；按最高位递推，相当于按编号升序的贪心"""
        if self._rank_table is None:
            if self.n > cap:
                raise CapabilityError(f"秩表仅支持 n ≤ {cap}，当前 n={self.n}")
            size = 1 << self.n
            basis = [0] * size
            ranks = np.zeros(size, dtype=np.int64)
            for mask in range(1, size):
                high = mask.bit_length() - 1
                prev = basis[mask ^ (1 << high)]
                grown = prev | (1 << high)
                if self.is_independent_mask(grown):
                    basis[mask] = grown
                    ranks[mask] = ranks[mask ^ (1 << high)] + 1
                else:
                    basis[mask] = prev
                    ranks[mask] = ranks[mask ^ (1 << high)]
            ranks.setflags(write=False)
            self._rank_table = ranks
        return self._rank_table

    def independent_masks(self, cap: int = DECOMPOSE_CAP, within: Optional[int] = None) -> np.ndarray:
        if self.n > POLYTOPE_CAP:
            raise CapabilityError(f"独立集枚举仅支持 n ≤ {POLYTOPE_CAP}")
        within = (1 << self.n) - 1 if within is None else within
        if bin(within).count("1") > cap:
            raise CapabilityError(f"独立集枚举仅支持支撑 ≤ {cap} 个元素")
        subs = []
        sub = within
        while True:
            if self.is_independent_mask(sub):
                subs.append(sub)
            if sub == 0:
                break
            sub = (sub - 1) & within
        return np.array(sorted(subs), dtype=np.int64)

    def violated_constraint(self, y, tol: float = WEIGHT_TOL, cap: int = POLYTOPE_CAP) -> Optional[Tuple[int, float, int]]:
        """返回违反最严重的秩约束 (mask, Σ y, rank)，没有则返回 None"""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n,):
            raise DomainError(f"点的维度 {y.shape} 与拟阵 n={self.n} 不符")
        if np.any(y < 0):
            raise DomainError("多面体成员判定要求坐标非负")
        if self.n > cap:
            raise CapabilityError(f"多面体成员判定仅支持 n ≤ {cap}，当前 n={self.n}")
        if self.n == 0:
            return None
        sums = subset_bits(self.n) @ y
        excess = sums - self.rank_table(cap)
        worst = int(np.argmax(excess))
        if excess[worst] > tol:
            return worst, float(sums[worst]), int(self.rank_table(cap)[worst])
        return None

    def in_polytope(self, y, tol: float = WEIGHT_TOL, cap: int = POLYTOPE_CAP) -> bool:
        return self.violated_constraint(y, tol, cap) is None

    def decompose(self, y, cap: int = DECOMPOSE_CAP) -> ConvexDecomposition:
        """把多面体内的点写成独立集特征向量的凸组合"""
        y = np.asarray(y, dtype=float)
        violated = self.violated_constraint(y)
        if violated is not None:
            mask, lhs, r = violated
            constraint = f"Σ_{{e∈{sorted(from_mask(mask))}}} y_e = {lhs:.6f} > rank = {r}"
            raise InfeasibleError(f"点不在拟阵多面体内: {constraint}", constraint=constraint)
        y = np.where(y > WEIGHT_TOL, y, 0.0)
        support = [int(e) for e in np.flatnonzero(y)]

        if not support:
            terms = [(1.0, frozenset())]
        elif np.all(np.abs(y[support] - 1.0) <= WEIGHT_TOL):
            terms = [(1.0, frozenset(support))]
        else:
            terms = self._fast_decompose(y)
            if terms is None:
                terms = self._lp_decompose(y, support, cap)
        decomposition = ConvexDecomposition(_merge_terms(terms))
        decomposition.validate(self, y)
        return decomposition

    def _lp_decompose(self, y: np.ndarray, support: List[int], cap: int) -> List[Tuple[float, FrozenSet[int]]]:
        within = to_mask(support)
        family = self.independent_masks(cap, within)
        cols = ((family[None, :] >> np.array(support, dtype=np.int64)[:, None]) & 1).astype(float)
        A_eq = np.vstack([cols, np.ones((1, family.shape[0]))])
        b_eq = np.concatenate([y[support], [1.0]])
        # 对偶单纯形给出基本解，非零项不超过 |支撑|+1
        lp = DenseLP(c=np.zeros(family.shape[0]), A_eq=A_eq, b_eq=b_eq, bounds=(0, None),
                     maximize=False, method="highs-ds")
        beta = lp.solve().x
        active = np.flatnonzero(beta > 1e-12)
        refined, *_ = np.linalg.lstsq(A_eq[:, active], b_eq, rcond=None)
        if np.all(refined >= -1e-12) and np.max(np.abs(A_eq[:, active] @ refined - b_eq)) <= 1e-10:
            beta_active = np.clip(refined, 0.0, None)
        else:
            beta_active = beta[active]
        log.debug(f"LP 分解: 支撑 {len(support)} 个元素，{len(active)} 项")
        return [(float(b), from_mask(int(family[i]))) for i, b in zip(active, beta_active)]


def _merge_terms(terms: Iterable[Tuple[float, FrozenSet[int]]]) -> List[Tuple[float, FrozenSet[int]]]:
    merged: Dict[FrozenSet[int], float] = {}
    for beta, B in terms:
        if beta > 0:
            merged[frozenset(B)] = merged.get(frozenset(B), 0.0) + float(beta)
    ordered = sorted(merged.items(), key=lambda item: (sorted(item[0]), item[1]))
    return [(beta, B) for B, beta in ordered if beta > 1e-15]


def _interval_decomposition(y: np.ndarray, blocks: Sequence[Sequence[int]], free: Sequence[int]) -> List[Tuple[float, FrozenSet[int]]]:
    """
    每个块内把坐标首尾相接铺在 [0, Σy) 上，取点 t, t+1, ... 命中的元素；
    自由元素在 t < y_e 时入选。所有块共用同一个 t ∈ [0,1)。
    """
    layouts = []
    cuts = {0.0, 1.0}
    for block in blocks:
        position = 0.0
        layout = []
        for e in block:
            if y[e] <= 0:
                continue
            start, end = position, position + y[e]
            layout.append((e, start, end))
            cuts.add(start - math.floor(start))
            cuts.add(end - math.floor(end))
            position = end
        layouts.append(layout)
    for e in free:
        if y[e] > 0:
            cuts.add(float(y[e]))
    points = sorted(c for c in cuts if 0.0 <= c <= 1.0)
    terms = []
    for t0, t1 in zip(points, points[1:]):
        if t1 - t0 <= 1e-15:
            continue
        mid = 0.5 * (t0 + t1)
        chosen = set()
        for layout in layouts:
            for e, start, end in layout:
                k = math.ceil(start - mid)
                if mid + k < end:
                    chosen.add(e)
        chosen.update(e for e in free if mid < y[e])
        terms.append((t1 - t0, frozenset(chosen)))
    return terms


class TransversalMatroid(Matroid):
    kind = "transversal"

    def __init__(self, n: int, edges: Iterable[Tuple[int, int]]):
        super().__init__(n)
        adj: List[set] = [set() for _ in range(n)]
        n_vertices = 0
        for e, v in edges:
            e, v = int(e), int(v)
            if not 0 <= e < n:
                raise DomainError(f"边 ({e},{v}) 的元素不在地集中")
            if v < 0:
                raise DomainError(f"顶点编号不能为负: {v}")
            adj[e].add(v)
            n_vertices = max(n_vertices, v + 1)
        self.edges = sorted((e, v) for e in range(n) for v in adj[e])
        self._rep = BipartiteRepresentation(tuple(tuple(sorted(a)) for a in adj), n_vertices)

    def _independent(self, mask: int) -> bool:
        members = from_mask(mask)
        return len(max_bipartite_matching(members, self._rep.adj)) == len(members)

    def rank_mask(self, mask: int) -> int:
        return len(max_bipartite_matching(from_mask(mask), self._rep.adj))

    def bipartite(self) -> BipartiteRepresentation:
        return self._rep

    def to_block(self) -> dict:
        return {"type": "transversal", "edges": [list(edge) for edge in self.edges]}


class PartitionMatroid(Matroid):
    """每块至多取 capacity 个元素；不在任何块中的元素不受约束"""
    kind = "partition"

    def __init__(self, n: int, blocks: Sequence[Sequence[int]], capacities: Sequence[int]):
        super().__init__(n)
        if len(blocks) != len(capacities):
            raise DomainError("块数与容量数不一致")
        seen = set()
        for block in blocks:
            for e in block:
                if not 0 <= int(e) < n:
                    raise DomainError(f"元素 {e} 不在地集中")
                if int(e) in seen:
                    raise DomainError(f"元素 {e} 出现在多个块中")
                seen.add(int(e))
        if any(int(c) < 0 for c in capacities):
            raise DomainError("容量不能为负")
        self.blocks = [tuple(sorted(int(e) for e in block)) for block in blocks]
        self.capacities = [int(c) for c in capacities]
        self.free = tuple(e for e in range(n) if e not in seen)
        self._block_masks = [to_mask(block) for block in self.blocks]

    def _independent(self, mask: int) -> bool:
        return all(bin(mask & bm).count("1") <= c for bm, c in zip(self._block_masks, self.capacities))

    def rank_mask(self, mask: int) -> int:
        free_mask = mask & ~sum(self._block_masks)
        return bin(free_mask).count("1") + sum(min(bin(mask & bm).count("1"), c)
                                               for bm, c in zip(self._block_masks, self.capacities))

    def bipartite(self) -> BipartiteRepresentation:
        # 容量 c 的块对应 c 个平行顶点；自由元素各占一个私有顶点
        adj: List[Tuple[int, ...]] = [()] * self.n
        offset = 0
        for block, c in zip(self.blocks, self.capacities):
            for e in block:
                adj[e] = tuple(range(offset, offset + c))
            offset += c
        for e in self.free:
            adj[e] = (offset,)
            offset += 1
        return BipartiteRepresentation(tuple(adj), offset)

    def _fast_decompose(self, y: np.ndarray):
        return _interval_decomposition(y, self.blocks, self.free)

    def to_block(self) -> dict:
        return {"type": "partition", "blocks": [list(b) for b in self.blocks], "capacities": list(self.capacities)}


class UniformMatroid(PartitionMatroid):
    """子集 U 上秩为 c 的均匀拟阵；U 以外的元素自由"""
    kind = "uniform"

    def __init__(self, n: int, rank: int, subset: Optional[Sequence[int]] = None):
        subset = list(range(n)) if subset is None else sorted(set(int(e) for e in subset))
        super().__init__(n, [subset], [rank])
        self.subset = tuple(subset)
        self.rank_cap = int(rank)

    def to_block(self) -> dict:
        return {"type": "uniform", "rank": self.rank_cap, "subset": list(self.subset)}


class EnumeratedMatroid(Matroid):
    kind = "enumerated"

    def __init__(self, n: int, family: Iterable[Iterable[int]], check: bool = True):
        super().__init__(n)
        masks = {self._mask(S) for S in family}
        masks.add(0)
        self.family = frozenset(masks)
        if check and n <= AXIOM_CHECK_CAP:
            self._check_axioms()

    def _check_axioms(self):
        for mask in self.family:
            for e in from_mask(mask):
                if mask & ~(1 << e) not in self.family:
                    raise DomainError(f"独立集族不是向下封闭的: {sorted(from_mask(mask))}")
        for a in self.family:
            for b in self.family:
                if bin(a).count("1") < bin(b).count("1"):
                    if not any((a | (1 << e)) in self.family for e in from_mask(b & ~a)):
                        raise DomainError("独立集族不满足交换公理")

    def _independent(self, mask: int) -> bool:
        return mask in self.family

    def to_block(self) -> dict:
        return {"type": "enumerated", "family": sorted(sorted(from_mask(m)) for m in self.family)}
