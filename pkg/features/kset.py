"""
随机 k-集合装箱

每个坐标 j 的约束是 {e : j ∈ C_e} 上秩为 b_j 的均匀拟阵；对每个 j 分解 p^j·x，
与 stoch-CR 方案共用横截映射的维护代码。探测没有成功/失败之分：
选中的可用列总是被探测并放入结果，随后对每个 S_e(j)=1 的坐标执行阻塞更新（模拟时同样更新）。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from core import log_maker
from core.errors import DomainError, InvariantViolation
from core.matroids import UniformMatroid
from core.model import ProbingInstance, RandomSource, sample_r_of_x
from core.schemas import KSetFile, read_model
from core.submodular import DenseLP
from core.transversal import (CriticalAssignment, SupportState, TransversalMapping, blocking_sets,
                              build_initial_state, check_state, choose_critical_sets, update_state)

log = log_maker.logger("kset")

SUPPORT_TOL = 1e-12


@dataclass
class Column:
    support: Tuple[int, ...]
    probs: np.ndarray
    values: np.ndarray
    sizes: List[FrozenSet[int]]

    @property
    def expected_value(self) -> float:
        return float(self.probs @ self.values)

    def coordinate_prob(self, j: int) -> float:
        """p^j = E[S(j)]"""
        return float(sum(p for p, size in zip(self.probs, self.sizes) if j in size))

    def union_prob(self, coords: Iterable[int]) -> float:
        """Pr[存在 j ∈ coords 使 S(j)=1]"""
        coords = set(coords)
        return float(sum(p for p, size in zip(self.probs, self.sizes) if size & coords))

    @property
    def deterministic(self) -> bool:
        return all(size == frozenset(self.support) for p, size in zip(self.probs, self.sizes) if p > 0)


@dataclass
class KSetInstance:
    d: int
    capacities: Tuple[int, ...]
    columns: List[Column]

    def __post_init__(self):
        if len(self.capacities) != self.d:
            raise DomainError("容量个数必须等于维数 d")
        for e, column in enumerate(self.columns):
            if abs(float(column.probs.sum()) - 1.0) > 1e-6:
                raise DomainError(f"列 {e} 的结果概率之和不为 1")
            for size in column.sizes:
                if not size <= set(column.support):
                    raise DomainError(f"列 {e} 的尺寸超出其支撑")

    @property
    def n(self) -> int:
        return len(self.columns)

    @property
    def k(self) -> int:
        return max((len(c.support) for c in self.columns), default=0)

    def p_matrix(self) -> np.ndarray:
        """(d, n)：第 j 行为 p^j"""
        return np.array([[c.coordinate_prob(j) for c in self.columns] for j in range(self.d)]).reshape(self.d, self.n)

    def expected_values(self) -> np.ndarray:
        return np.array([c.expected_value for c in self.columns])

    def matroid(self, j: int) -> UniformMatroid:
        return UniformMatroid(self.n, self.capacities[j], [e for e, c in enumerate(self.columns) if j in c.support])

    def as_probing_instance(self) -> ProbingInstance:
        """所有列的尺寸都确定且等于支撑时，等价于内层均匀拟阵、p≡1 的探测实例"""
        if not all(c.deterministic for c in self.columns):
            raise DomainError("只有确定尺寸的列才能转换为探测实例")
        return ProbingInstance(n=self.n, p=np.ones(self.n), inner=[self.matroid(j) for j in range(self.d)])


def kset_from_file(data: KSetFile) -> KSetInstance:
    columns = []
    for column in data.columns:
        probs = np.array([o.prob for o in column.outcomes], dtype=float)
        columns.append(Column(
            support=tuple(sorted(set(column.support))),
            probs=probs / probs.sum(),
            values=np.array([o.value for o in column.outcomes], dtype=float),
            sizes=[frozenset(o.size) for o in column.outcomes],
        ))
    return KSetInstance(data.d, tuple(data.capacities), columns)


def load_kset(path: str) -> KSetInstance:
    instance = kset_from_file(read_model(path, KSetFile))
    log.info(f"已加载 k-集合实例 {path}: n={instance.n}, d={instance.d}, k={instance.k}")
    return instance


def kset_to_dict(instance: KSetInstance) -> dict:
    return {
        "d": instance.d,
        "capacities": list(instance.capacities),
        "columns": [{
            "support": list(c.support),
            "outcomes": [{"prob": round(float(p), 6), "value": round(float(v), 6), "size": sorted(size)}
                         for p, v, size in zip(c.probs, c.values, c.sizes)],
        } for c in instance.columns],
    }


def solve_kset_lp(instance: KSetInstance) -> np.ndarray:
    """max Σ E[v_e]·x_e  s.t.  Σ_e p_e^j·x_e ≤ b_j,  0 ≤ x ≤ 1"""
    if instance.n == 0:
        return np.zeros(0)
    lp = DenseLP(c=instance.expected_values(), A_ub=instance.p_matrix(), b_ub=np.array(instance.capacities, float),
                 bounds=(0.0, 1.0))
    return np.clip(lp.solve().x, 0.0, 1.0)


@dataclass
class KSetPlan:
    instance: KSetInstance
    x: np.ndarray
    states: List[SupportState]

    def draw_critical(self, rng: RandomSource) -> List[CriticalAssignment]:
        P = self.instance.p_matrix()
        return [choose_critical_sets(self.x, P[j], state, rng) for j, state in enumerate(self.states)]


def prepare_kset(instance: KSetInstance, x) -> KSetPlan:
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.n,):
        raise DomainError(f"点的维度 {x.shape} 与列数 {instance.n} 不符")
    x = np.clip(np.where(x > SUPPORT_TOL, x, 0.0), 0.0, 1.0)
    P = instance.p_matrix()
    states = []
    for j in range(instance.d):
        matroid = instance.matroid(j)
        state, _ = build_initial_state(matroid, matroid.decompose(P[j] * x), label=f"coord{j}")
        states.append(state)
    return KSetPlan(instance, x, states)


@dataclass
class KSetRun:
    A: FrozenSet[int]
    taken: FrozenSet[int]
    value: float
    usage: np.ndarray
    order: List[int] = field(default_factory=list)
    picks: int = 0


def run_kset(instance: KSetInstance, x, rng: RandomSource, plan: Optional[KSetPlan] = None,
             A: Optional[Iterable[int]] = None, critical: Optional[Sequence[CriticalAssignment]] = None,
             check_invariants: bool = False) -> KSetRun:
    plan = plan or prepare_kset(instance, x)
    if A is None:
        A = sample_r_of_x(plan.x, rng)
    members = sorted(e for e in set(int(e) for e in A) if plan.x[e] > SUPPORT_TOL)
    critical = list(critical) if critical is not None else plan.draw_critical(rng)
    states = [state.copy() for state in plan.states]
    mappings = [TransversalMapping(state) for state in states]
    gamma0 = [blocking_sets(state, c) for state, c in zip(states, critical)]

    available: Set[int] = set(members)
    taken: List[int] = []
    value = 0.0
    usage = np.zeros(instance.d, dtype=int)
    picks = 0
    while available:
        e = members[rng.integers(len(members))]
        picks += 1
        column = instance.columns[e]
        outcome = rng.choice(len(column.probs), column.probs) if len(column.probs) > 1 else 0
        size = column.sizes[outcome]
        fresh = e in available
        if fresh:
            available.discard(e)
            taken.append(e)
            value += float(column.values[outcome])
            for j in size:
                usage[j] += 1
        blocked: Set[int] = set()
        for j in sorted(size):
            update = update_state(states[j], mappings[j], e, fresh, critical[j])
            blocked |= update.blocked
        available -= blocked
        if check_invariants:
            for j in range(instance.d):
                check_state(states[j], mappings[j], critical[j], gamma0[j], available)

    if np.any(usage > np.array(instance.capacities)):
        raise InvariantViolation(f"容量被突破: 使用量 {usage.tolist()}，容量 {list(instance.capacities)}")
    return KSetRun(frozenset(members), frozenset(taken), value, usage, taken, picks)


def kset_probe_probability(e: int, A: Iterable[int], plan: KSetPlan, critical: Sequence[CriticalAssignment]) -> float:
    """Pr[e 被探测 | C] = X_e / (1 + Σ_f X_f·Pr[∨_{j: f∈Γ_j(e)} S_f(j)=1])"""
    A = frozenset(int(f) for f in A)
    if e not in A or plan.x[e] <= SUPPORT_TOL:
        return 0.0
    coords: Dict[int, Set[int]] = {}
    for j, (state, assignment) in enumerate(zip(plan.states, critical)):
        for f in blocking_sets(state, assignment).get(e, frozenset()):
            coords.setdefault(f, set()).add(j)
    load = sum(plan.instance.columns[f].union_prob(js) for f, js in coords.items() if f in A)
    return 1.0 / (1.0 + load)
