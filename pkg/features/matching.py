"""
二部图随机匹配

LP 解经 GKPS 相关舍入得到 Ê，再按随机排列扫描 Ê 中仍安全的边：
成功的探测加入匹配，并把 Ê 中与之相邻的边标记为阻塞。
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import numpy as np

from core import log_maker
from core.errors import CapabilityError, DomainError, InvariantViolation
from core.model import RandomSource
from core.schemas import MatchingFile, read_model
from core.submodular import DenseLP

log = log_maker.logger("matching")

ROUND_TOL = 1e-12


@dataclass
class MatchingInstance:
    left: int
    right: int
    edges: List[Tuple[int, int]]
    p: np.ndarray
    w: np.ndarray
    patience: Tuple[int, ...]

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        m = len(self.edges)
        if self.p.shape != (m,) or self.w.shape != (m,):
            raise DomainError("p 与 w 的长度必须等于边数")
        if np.any(self.p <= 0) or np.any(self.p > 1):
            raise DomainError("边的概率必须位于 (0,1]")
        if np.any(self.w <= 0):
            raise DomainError("边的权重必须为正")
        if len(self.patience) != self.left + self.right or any(t < 1 for t in self.patience):
            raise DomainError("每个节点都需要 ≥1 的耐心值")
        for u, v in self.edges:
            if not (0 <= u < self.left and 0 <= v < self.right):
                raise DomainError(f"边 ({u},{v}) 的端点越界")

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def nodes(self) -> int:
        return self.left + self.right

    def endpoints(self, i: int) -> Tuple[int, int]:
        """边 i 的两个节点编号；右侧节点编号整体偏移 left"""
        u, v = self.edges[i]
        return u, self.left + v

    def graph(self) -> List[Tuple[int, int]]:
        return [self.endpoints(i) for i in range(self.m)]

    def incident(self) -> List[List[int]]:
        adj: List[List[int]] = [[] for _ in range(self.nodes)]
        for i in range(self.m):
            a, b = self.endpoints(i)
            adj[a].append(i)
            adj[b].append(i)
        return adj

    def neighbours(self, i: int) -> List[int]:
        """δ(e)：与边 i 共享端点的其他边"""
        a, b = self.endpoints(i)
        return [j for j in range(self.m) if j != i and set(self.endpoints(j)) & {a, b}]


def matching_from_file(data: MatchingFile) -> MatchingInstance:
    return MatchingInstance(
        left=data.left, right=data.right,
        edges=[(e.u, e.v) for e in data.edges],
        p=[e.p for e in data.edges], w=[e.w for e in data.edges],
        patience=tuple(data.patience),
    )


def load_matching(path: str) -> MatchingInstance:
    instance = matching_from_file(read_model(path, MatchingFile))
    log.info(f"已加载匹配实例 {path}: {instance.left}×{instance.right}, {instance.m} 条边")
    return instance


def matching_to_dict(instance: MatchingInstance) -> dict:
    return {
        "left": instance.left,
        "right": instance.right,
        "patience": list(instance.patience),
        "edges": [{"u": u, "v": v, "p": round(float(p), 6), "w": round(float(w), 6)}
                  for (u, v), p, w in zip(instance.edges, instance.p, instance.w)],
    }


def solve_matching_lp(instance: MatchingInstance) -> np.ndarray:
    """
    max Σ w_e p_e x_e
    s.t. Σ_{e∈δ(v)} p_e x_e ≤ 1,  Σ_{e∈δ(v)} x_e ≤ t_v,  0 ≤ x ≤ 1
    """
    if instance.m == 0:
        return np.zeros(0)
    rows, rhs = [], []
    for v, edges in enumerate(instance.incident()):
        if not edges:
            continue
        prob_row = np.zeros(instance.m)
        prob_row[edges] = instance.p[edges]
        count_row = np.zeros(instance.m)
        count_row[edges] = 1.0
        rows += [prob_row, count_row]
        rhs += [1.0, float(instance.patience[v])]
    lp = DenseLP(c=instance.w * instance.p, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=(0.0, 1.0))
    return np.clip(lp.solve().x, 0.0, 1.0)


def lp_value(instance: MatchingInstance, x) -> float:
    return float(np.sum(instance.w * instance.p * np.asarray(x, dtype=float)))


# ---------------------------------------------------------------- GKPS

def _two_colour(nodes: int, graph: Sequence[Tuple[int, int]]):
    colour = [-1] * nodes
    adj: List[List[int]] = [[] for _ in range(nodes)]
    for a, b in graph:
        adj[a].append(b)
        adj[b].append(a)
    for s in range(nodes):
        if colour[s] != -1:
            continue
        colour[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if colour[w] == -1:
                    colour[w] = 1 - colour[u]
                    queue.append(w)
                elif colour[w] == colour[u]:
                    raise CapabilityError("图不是二部图，无法进行 GKPS 舍入")


def _find_walk(fractional: Set[int], graph: Sequence[Tuple[int, int]], nodes: int) -> List[int]:
    """在分数边上找一个环或极大路径，返回按顺序排列的边"""
    incident: List[List[int]] = [[] for _ in range(nodes)]
    for i in sorted(fractional):
        a, b = graph[i]
        incident[a].append(i)
        incident[b].append(i)
    start = next((v for v in range(nodes) if len(incident[v]) == 1), None)
    if start is None:
        start = next(v for v in range(nodes) if incident[v])
    position = {start: 0}
    walk: List[int] = []
    node, last = start, None
    while True:
        nxt = next((i for i in incident[node] if i != last and i not in walk), None)
        if nxt is None:
            return walk
        a, b = graph[nxt]
        other = b if a == node else a
        walk.append(nxt)
        if other in position:
            return walk[position[other]:]
        position[other] = len(walk)
        node, last = other, nxt


def gkps_round(x, graph: Sequence[Tuple[int, int]], rng: RandomSource, nodes: Optional[int] = None) -> np.ndarray:
    """
    二部图上的相关舍入：沿分数边构成的环或极大路径交替 ±，
    保持 Pr[X̂_e=1] = x_e，度数不超过 ⌈Σ x⌉，同一节点处的边负相关
    """
    x = np.array(x, dtype=float)
    graph = [(int(a), int(b)) for a, b in graph]
    if x.shape != (len(graph),):
        raise DomainError("x 的长度必须等于边数")
    if np.any(x < -ROUND_TOL) or np.any(x > 1 + ROUND_TOL):
        raise DomainError("x 的坐标必须位于 [0,1]")
    nodes = nodes if nodes is not None else (max((max(a, b) for a, b in graph), default=-1) + 1)
    _two_colour(nodes, graph)
    x = np.clip(x, 0.0, 1.0)
    fractional = {i for i in range(len(graph)) if ROUND_TOL < x[i] < 1 - ROUND_TOL}
    fixed = [i for i in range(len(graph)) if i not in fractional]
    x[fixed] = np.round(x[fixed])
    while fractional:
        walk = _find_walk(fractional, graph, nodes)
        plus, minus = walk[0::2], walk[1::2]
        alpha = min([1 - x[i] for i in plus] + [x[i] for i in minus])
        beta = min([x[i] for i in plus] + [1 - x[i] for i in minus])
        if rng.random() < beta / (alpha + beta):
            x[plus] += alpha
            x[minus] -= alpha
        else:
            x[plus] -= beta
            x[minus] += beta
        for i in walk:
            if x[i] <= ROUND_TOL or x[i] >= 1 - ROUND_TOL:
                x[i] = round(x[i])
                fractional.discard(i)
    return x.astype(int)


def check_degrees(x, rounded, graph: Sequence[Tuple[int, int]], nodes: int):
    x = np.asarray(x, dtype=float)
    for v in range(nodes):
        edges = [i for i, (a, b) in enumerate(graph) if v in (a, b)]
        if rounded[edges].sum() > np.ceil(x[edges].sum() - 1e-9):
            raise InvariantViolation(f"节点 {v} 的舍入度数超过 ⌈Σx⌉")


# ---------------------------------------------------------------- 选择

@dataclass
class MatchingRun:
    E_hat: FrozenSet[int]
    matched: FrozenSet[int]
    probed: List[int] = field(default_factory=list)
    weight: float = 0.0


def _finish(instance: MatchingInstance, E_hat: FrozenSet[int], matched: List[int], probed: List[int]) -> MatchingRun:
    used: Set[int] = set()
    for i in matched:
        a, b = instance.endpoints(i)
        if a in used or b in used:
            raise InvariantViolation(f"边 {i} 与已匹配的边相邻，输出不是匹配")
        used |= {a, b}
    counts: Dict[int, int] = {}
    for i in probed:
        for v in instance.endpoints(i):
            counts[v] = counts.get(v, 0) + 1
    for v, c in counts.items():
        if c > instance.patience[v]:
            raise InvariantViolation(f"节点 {v} 的探测次数 {c} 超过耐心 {instance.patience[v]}")
    weight = float(sum(instance.w[i] for i in matched))
    return MatchingRun(E_hat, frozenset(matched), probed, weight)


def run_matching(instance: MatchingInstance, X_hat, rng: RandomSource) -> MatchingRun:
    """按均匀随机排列扫描 Ê，只探测仍安全的边"""
    X_hat = np.asarray(X_hat)
    E_hat = frozenset(int(i) for i in np.flatnonzero(X_hat == 1))
    blocked: Set[int] = set()
    matched, probed = [], []
    for i in rng.permutation(sorted(E_hat)):
        if i in blocked:
            continue
        probed.append(i)
        if rng.bernoulli(float(instance.p[i])):
            matched.append(i)
            blocked |= set(instance.neighbours(i)) & E_hat
    return _finish(instance, E_hat, matched, probed)


def run_matching_repick(instance: MatchingInstance, X_hat, rng: RandomSource) -> MatchingRun:
    """每步在当前安全的边中均匀抽取一条探测"""
    X_hat = np.asarray(X_hat)
    E_hat = frozenset(int(i) for i in np.flatnonzero(X_hat == 1))
    safe = set(E_hat)
    matched, probed = [], []
    while safe:
        ordered = sorted(safe)
        i = ordered[rng.integers(len(ordered))]
        safe.discard(i)
        probed.append(i)
        if rng.bernoulli(float(instance.p[i])):
            matched.append(i)
            safe -= set(instance.neighbours(i))
    return _finish(instance, E_hat, matched, probed)


def probe_lower_bound(instance: MatchingInstance, x, i: int) -> float:
    """Pr[e 被探测 | X̂_e=1] ≥ 1/(1 + Σ_{f∈δ(e)} p_f x_f)"""
    x = np.asarray(x, dtype=float)
    return 1.0 / (1.0 + float(sum(instance.p[j] * x[j] for j in instance.neighbours(i))))
