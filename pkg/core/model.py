"""
随机探测问题的基础模型

元素是 0..n-1 的稠密整数；实例的自然顺序即离线剪枝 η_f 的顺序（可被 order 覆盖）。
激活结果只在探测或模拟时惰性抽取，不预先生成“世界”。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, InvariantViolation

if TYPE_CHECKING:
    from .matroids import Matroid
    from .submodular import SubmodularFunction


class RandomSource:
    """可拆分的计数器型随机源：相同 (seed, stream) 得到相同序列"""

    def __init__(self, seed: int, stream: Sequence[int] | int = ()):
        if isinstance(stream, int):
            stream = (stream,)
        self.seed = int(seed)
        self.stream: Tuple[int, ...] = tuple(int(s) for s in stream)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        self.gen = np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> "RandomSource":
        """派生独立子流"""
        return RandomSource(self.seed, self.stream + (int(index),))

    def random(self) -> float:
        return float(self.gen.random())

    def uniform(self, size) -> np.ndarray:
        return self.gen.random(size)

    def bernoulli(self, p: float) -> bool:
        return self.gen.random() < p

    def integers(self, high: int) -> int:
        return int(self.gen.integers(high))

    def choice(self, n: int, probs: Sequence[float]) -> int:
        return int(self.gen.choice(n, p=probs))

    def permutation(self, items: Sequence[int]) -> List[int]:
        return [int(i) for i in self.gen.permutation(np.asarray(items, dtype=np.int64))] if len(items) else []

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, stream={self.stream})"


class Outcome(str, Enum):
    ACTIVE = "active"
    INACTIVE = "inactive"
    SIM_ACTIVE = "simulated-active"
    SIM_INACTIVE = "simulated-inactive"

    @property
    def simulated(self) -> bool:
        return self in (Outcome.SIM_ACTIVE, Outcome.SIM_INACTIVE)

    @property
    def success(self) -> bool:
        return self in (Outcome.ACTIVE, Outcome.SIM_ACTIVE)


@dataclass
class ProbeTrace:
    """探测记录；模拟条目永不计入 Q，每个元素最多被真实探测一次"""
    probed: List[Tuple[int, Outcome]] = field(default_factory=list)

    def record_probe(self, e: int, active: bool):
        if any(f == e and not o.simulated for f, o in self.probed):
            raise InvariantViolation(f"元素 {e} 被重复真实探测")
        self.probed.append((e, Outcome.ACTIVE if active else Outcome.INACTIVE))

    def record_simulation(self, e: int, active: bool):
        self.probed.append((e, Outcome.SIM_ACTIVE if active else Outcome.SIM_INACTIVE))

    @property
    def Q(self) -> FrozenSet[int]:
        return frozenset(e for e, o in self.probed if not o.simulated)

    @property
    def S(self) -> FrozenSet[int]:
        return frozenset(e for e, o in self.probed if o is Outcome.ACTIVE)

    @property
    def probe_order(self) -> List[int]:
        return [e for e, o in self.probed if not o.simulated]

    def replay(self, instance: "ProbingInstance"):
        """逐前缀复核：Q^t 在外层拟阵独立，S^t 在内层拟阵独立"""
        q_mask = 0
        s_mask = 0
        for e, outcome in self.probed:
            if outcome.simulated:
                continue
            q_mask |= 1 << e
            for j, m in enumerate(instance.outer):
                if not m.is_independent_mask(q_mask):
                    raise InvariantViolation(f"探测集前缀在外层拟阵 {j} 中不独立: {sorted(_bits(q_mask))}")
            if outcome is Outcome.ACTIVE:
                s_mask |= 1 << e
                for j, m in enumerate(instance.inner):
                    if not m.is_independent_mask(s_mask):
                        raise InvariantViolation(f"解集前缀在内层拟阵 {j} 中不独立: {sorted(_bits(s_mask))}")


def _bits(mask: int) -> List[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def to_mask(elements: Iterable[int]) -> int:
    mask = 0
    for e in elements:
        mask |= 1 << int(e)
    return mask


def from_mask(mask: int) -> FrozenSet[int]:
    return frozenset(_bits(mask))


@dataclass(frozen=True)
class ProbingInstance:
    n: int
    p: np.ndarray
    inner: Tuple["Matroid", ...] = ()
    outer: Tuple["Matroid", ...] = ()
    objective: Optional["SubmodularFunction"] = None
    order: Tuple[int, ...] = ()

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (self.n,):
            raise DomainError(f"p 的长度 {p.shape} 与元素数 {self.n} 不符")
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise DomainError("激活概率必须位于 [0,1]")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "inner", tuple(self.inner))
        object.__setattr__(self, "outer", tuple(self.outer))
        for m in self.inner + self.outer:
            if m.n != self.n:
                raise DomainError(f"拟阵地集大小 {m.n} 与实例 {self.n} 不一致")
        if self.objective is not None and self.objective.n != self.n:
            raise DomainError("目标函数地集与实例不一致")
        order = tuple(self.order) if self.order else tuple(range(self.n))
        if sorted(order) != list(range(self.n)):
            raise DomainError("order 必须是 0..n-1 的排列")
        object.__setattr__(self, "order", order)

    @property
    def elements(self) -> range:
        return range(self.n)

    @property
    def k_in(self) -> int:
        return len(self.inner)

    @property
    def k_out(self) -> int:
        return len(self.outer)

    def with_objective(self, objective: "SubmodularFunction") -> "ProbingInstance":
        return ProbingInstance(self.n, self.p, self.inner, self.outer, objective, self.order)

    def feasible_probe(self, q_mask: int, s_mask: int, e: int) -> bool:
        """探测 e 是否合法：Q+e 外层独立且 S+e 内层独立"""
        bit = 1 << e
        return all(m.is_independent_mask(q_mask | bit) for m in self.outer) and \
            all(m.is_independent_mask(s_mask | bit) for m in self.inner)


def _check_point(x, n: Optional[int] = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or (n is not None and x.shape[0] != n):
        raise DomainError(f"点的维度不正确: {x.shape}")
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise DomainError("坐标必须位于 [0,1]")
    return x


def sample_r_of_x(x, rng: RandomSource) -> FrozenSet[int]:
    """R(x)：每个元素独立以概率 x_e 入选"""
    x = _check_point(x)
    draws = rng.uniform(x.shape[0])
    return frozenset(int(e) for e in np.flatnonzero(draws < x))


def sample_active(subset: Iterable[int], p, rng: RandomSource) -> FrozenSet[int]:
    """act(S)：S 中每个元素独立以概率 p_e 保留"""
    p = _check_point(p)
    members = sorted(int(e) for e in subset)
    for e in members:
        if e < 0 or e >= p.shape[0]:
            raise DomainError(f"元素 {e} 不在地集中")
    if not members:
        return frozenset()
    draws = rng.uniform(len(members))
    return frozenset(e for e, u in zip(members, draws) if u < p[e])


def simulate_probe(e: int, p, rng: RandomSource) -> bool:
    """模拟探测：以 p_e 抛硬币，不把 e 记为已探测"""
    if e < 0 or e >= len(p):
        raise DomainError(f"元素 {e} 不在地集中")
    return rng.bernoulli(float(p[e]))
