"""
横截拟阵的支撑集维护：单射、横截映射 φ、关键集、阻塞集与逐步更新

φ[B,A](b) = a 当且仅当 v^A(a) = v^B(b)，因此 φ 完全由各支撑集的单射决定；
阻塞集 Γ(e) 就是与 e 共享关键顶点的其他元素。
更新规则保证仍可用元素在其关键集中的顶点不变，从而 Γ 在可用期间不变。
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple

import numpy as np

from . import log_maker
from .errors import ConsistencyError, InvariantViolation
from .matroids import ConvexDecomposition, Matroid, max_bipartite_matching
from .model import RandomSource, to_mask

log = log_maker.logger("transversal")

MARGINAL_TOL = 1e-9


class SupportSet:
    """一个支撑集 B_i 及其单射 v^{B_i}"""

    __slots__ = ("beta", "vertex", "owner")

    def __init__(self, beta: float, injection: Mapping[int, int]):
        self.beta = float(beta)
        self.vertex: Dict[int, int] = dict(injection)
        self.owner: Dict[int, int] = {v: e for e, v in self.vertex.items()}
        if len(self.owner) != len(self.vertex):
            raise InvariantViolation("支撑集的单射不是单射")

    @property
    def members(self) -> FrozenSet[int]:
        return frozenset(self.vertex)

    def remove(self, e: int):
        v = self.vertex.pop(e)
        del self.owner[v]

    def insert(self, e: int, v: int):
        if v in self.owner:
            raise InvariantViolation(f"顶点 {v} 已被 {self.owner[v]} 占用")
        self.vertex[e] = v
        self.owner[v] = e

    def copy(self) -> "SupportSet":
        return SupportSet(self.beta, self.vertex)


class SupportState:
    """某一拟阵的支撑 {(β_i, B_i^t)}；β 初始化后不再变化"""

    def __init__(self, matroid: Matroid, sets: List[SupportSet], label: str = ""):
        self.matroid = matroid
        self.adj = matroid.bipartite().adj
        self.sets = sets
        self.label = label
        self.t = 0

    @property
    def weights(self) -> List[float]:
        return [B.beta for B in self.sets]

    def vertex_of(self, i: int, e: int) -> Optional[int]:
        return self.sets[i].vertex.get(e)

    def element_at(self, i: int, v: Optional[int]) -> Optional[int]:
        if v is None:
            return None
        return self.sets[i].owner.get(v)

    def containing(self, e: int) -> List[int]:
        return [i for i, B in enumerate(self.sets) if e in B.vertex]

    def copy(self) -> "SupportState":
        clone = copy.copy(self)
        clone.sets = [B.copy() for B in self.sets]
        return clone

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "t": self.t,
            "sets": [{"beta": round(B.beta, 12), "injection": {str(e): v for e, v in sorted(B.vertex.items())}}
                     for B in self.sets],
        }


class TransversalMapping:
    """φ[B,A]: B -> A ∪ {⊥}，由共享匹配顶点导出"""

    def __init__(self, state: SupportState):
        self.state = state

    def phi(self, b_index: int, a_index: int, b: int) -> Optional[int]:
        return self.state.element_at(a_index, self.state.vertex_of(b_index, b))

    def check_properties(self):
        """φ 的单射性与交换合法性"""
        state = self.state
        matroid = state.matroid
        for bi, B in enumerate(state.sets):
            for ai, A in enumerate(state.sets):
                images: Dict[int, int] = {}
                a_mask = to_mask(A.vertex)
                for b in B.vertex:
                    a = self.phi(bi, ai, b)
                    if a is not None:
                        if a in images:
                            raise InvariantViolation(
                                f"[{state.label}] φ 不是单射: {images[a]} 与 {b} 都映射到 {a} (B{bi}->B{ai})")
                        images[a] = b
                    if b in A.vertex:
                        continue
                    target = a_mask | (1 << b) if a is None else (a_mask & ~(1 << a)) | (1 << b)
                    if not matroid.is_independent_mask(target):
                        raise InvariantViolation(
                            f"[{state.label}] 交换不合法: B{bi} 的 {b} 交换进 B{ai} 后不独立")


@dataclass
class CriticalAssignment:
    """元素 -> 关键集下标；整个过程中固定"""
    index: Dict[int, int] = field(default_factory=dict)
    vertex: Dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"index": {str(e): i for e, i in sorted(self.index.items())},
                "vertex": {str(e): v for e, v in sorted(self.vertex.items())}}


@dataclass
class Update:
    state: SupportState
    mapping: TransversalMapping
    removed: List[Tuple[int, int]] = field(default_factory=list)
    blocked: Set[int] = field(default_factory=set)


def build_initial_state(matroid: Matroid, decomposition: ConvexDecomposition, rng: Optional[RandomSource] = None,
                        label: str = "") -> Tuple[SupportState, TransversalMapping]:
    """每个支撑集各取一个单射：按编号最小优先的增广路匹配，结果与随机源无关"""
    adj = matroid.bipartite().adj
    sets = []
    for beta, B in decomposition.terms:
        injection = max_bipartite_matching(B, adj)
        if len(injection) != len(B):
            raise ConsistencyError(f"支撑集 {sorted(B)} 在二部图中无法完全匹配")
        sets.append(SupportSet(beta, injection))
    state = SupportState(matroid, sets, label)
    log.debug(f"[{label}] 初始支撑: {len(sets)} 个集合")
    return state, TransversalMapping(state)


def choose_critical_sets(x, p, state: SupportState, rng: RandomSource, b: float = 1.0) -> CriticalAssignment:
    """
    每个 p_e x_e > 0 的元素以 b·β_i/(p_e x_e) 的概率选 B_i 作为关键集

    外层拟阵传入 p=None，此时边际为 x_e
    """
    x = np.asarray(x, dtype=float)
    marginal = x if p is None else np.asarray(p, dtype=float) * x
    critical = CriticalAssignment()
    for e in range(state.matroid.n):
        if marginal[e] <= MARGINAL_TOL:
            continue
        holders = state.containing(e)
        mass = sum(state.sets[i].beta for i in holders)
        if abs(mass - marginal[e] / b) > MARGINAL_TOL:
            raise ConsistencyError(
                f"[{state.label}] 元素 {e} 的支撑权重 {mass:.12f} 与 (1/b)·边际 {marginal[e] / b:.12f} 不一致")
        probs = np.array([state.sets[i].beta for i in holders]) * b / marginal[e]
        probs = probs / probs.sum()
        chosen = holders[rng.choice(len(holders), probs)] if len(holders) > 1 else holders[0]
        critical.index[e] = chosen
        critical.vertex[e] = state.vertex_of(chosen, e)
    return critical


def blocking_sets(state: SupportState, critical: CriticalAssignment) -> Dict[int, FrozenSet[int]]:
    """对每个仍在关键集中的元素 e 给出 Γ(e)：关键顶点相同的其他元素"""
    by_vertex: Dict[int, List[int]] = {}
    for e, i in critical.index.items():
        v = state.vertex_of(i, e)
        if v is not None:
            by_vertex.setdefault(v, []).append(e)
    gamma = {}
    for group in by_vertex.values():
        for e in group:
            gamma[e] = frozenset(f for f in group if f != e)
    return gamma


def blocking_set(e: int, state: SupportState, mapping: TransversalMapping, critical: CriticalAssignment) -> FrozenSet[int]:
    """Γ(e) = {f ≠ e : φ[B_{c(f)}, B_{c(e)}](f) = e}"""
    ce = critical.index.get(e)
    if ce is None or state.vertex_of(ce, e) is None:
        return frozenset()
    return frozenset(f for f, cf in critical.index.items()
                     if f != e and state.vertex_of(cf, f) is not None and mapping.phi(cf, ce, f) == e)


def update_state(state: SupportState, mapping: TransversalMapping, chosen: int, add: bool,
                 critical: CriticalAssignment) -> Update:
    """
    按 chosen 的关键顶点 v 更新每个支撑集：
      占用 v 的其他元素 b1 被移出（若这是 b1 的关键集，b1 变为不可用）；
      add 为真且 chosen 不在集合中时，把 chosen 以顶点 v 插入。
    集合按下标顺序处理。chosen 已不在自己的关键集时（它已被阻塞）不做任何改动。
    """
    update = Update(state, mapping)
    ci = critical.index.get(chosen)
    v = None if ci is None else state.vertex_of(ci, chosen)
    if v is None:
        return update
    for i, B in enumerate(state.sets):
        b1 = B.owner.get(v)
        if b1 is not None and b1 != chosen:
            B.remove(b1)
            update.removed.append((i, b1))
            if critical.index.get(b1) == i:
                update.blocked.add(b1)
        if add and chosen not in B.vertex:
            B.insert(chosen, v)
    state.t += 1
    return update


def check_state(state: SupportState, mapping: TransversalMapping, critical: CriticalAssignment,
                gamma0: Mapping[int, FrozenSet[int]], available: Iterable[int]):
    """逐步不变量：集合独立、单射合法、φ 的单射性与交换合法性、可用元素阻塞集不变"""
    for i, B in enumerate(state.sets):
        for e, v in B.vertex.items():
            if v not in state.adj[e]:
                raise InvariantViolation(f"[{state.label}] B{i} 使用了不存在的边 ({e},{v})")
        if not state.matroid.is_independent_mask(to_mask(B.vertex)):
            raise InvariantViolation(f"[{state.label}] B{i} = {sorted(B.vertex)} 不独立")
    mapping.check_properties()
    current = blocking_sets(state, critical)
    for e in available:
        if e in gamma0 and current.get(e, frozenset()) != gamma0[e]:
            raise InvariantViolation(
                f"[{state.label}] 阻塞集改变: 可用元素 {e} 的阻塞集由 {sorted(gamma0[e])} 变为 {sorted(current.get(e, ()))}")
