"""
子模目标函数、多重线性扩展 F、f⁺ 扩展以及剪枝函数 η_f

所有函数以位掩码表示子集：元素 e 对应第 e 位。
桌面规模下直接构造 2^n 的取值表（numpy 向量化）。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from . import log_maker
from .errors import CapabilityError, ConsistencyError, DomainError, InfeasibleError
from .model import RandomSource, from_mask, to_mask

log = log_maker.logger("submodular")

TABLE_CAP = 20
EXACT_CAP = 20
FPLUS_CAP = 12
SUBMODULAR_CHECK_CAP = 8
TOL = 1e-9
MARGINAL_TOL = 1e-12
# 文件中的取值保留 6 位小数
ROUNDING_TOL = 1e-5


@lru_cache(maxsize=32)
def subset_bits(n: int) -> np.ndarray:
    """(2^n, n) 的布尔矩阵，第 mask 行是 mask 的指示向量"""
    masks = np.arange(1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)
    bits.setflags(write=False)
    return bits


def _mask_of(n: int, S: Iterable[int]) -> int:
    members = list(S)
    for e in members:
        if not 0 <= int(e) < n:
            raise DomainError(f"元素 {e} 不在地集 0..{n - 1} 中")
    return to_mask(members)


# ---------------------------------------------------------------- 线性规划

@dataclass
class LPResult:
    value: float
    x: np.ndarray
    gap: float
    status: int
    message: str = ""


@dataclass
class DenseLP:
    """稠密线性规划，统一走 scipy 的 HiGHS 求解器"""
    c: np.ndarray
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    bounds: object = (0, None)
    maximize: bool = True
    method: str = "highs"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        for name in ("A_ub", "b_ub", "A_eq", "b_eq"):
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value, dtype=float)
                if not np.all(np.isfinite(value)):
                    raise DomainError(f"线性规划的 {name} 含有非有限值")
                setattr(self, name, value)
        if not np.all(np.isfinite(self.c)):
            raise DomainError("线性规划的目标向量含有非有限值")

    def _bound_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        n = self.c.shape[0]
        if isinstance(self.bounds, tuple) and len(self.bounds) == 2 and not isinstance(self.bounds[0], (tuple, list)):
            pairs = [self.bounds] * n
        else:
            pairs = list(self.bounds)
        lb = np.array([-np.inf if lo is None else lo for lo, _ in pairs], dtype=float)
        ub = np.array([np.inf if hi is None else hi for _, hi in pairs], dtype=float)
        return lb, ub

    def solve(self) -> LPResult:
        sign = -1.0 if self.maximize else 1.0
        res = linprog(sign * self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                      bounds=self.bounds, method=self.method)
        if res.status == 2:
            raise InfeasibleError(f"线性规划不可行: {res.message}")
        if res.status == 3:
            raise ConsistencyError(f"线性规划无界: {res.message}")
        if res.status != 0:
            raise ConsistencyError(f"线性规划求解失败: {res.message}")

        # 强对偶：最优值等于右端项与边际（影子价格）的内积
        dual = 0.0
        if self.b_ub is not None and res.ineqlin is not None:
            dual += float(np.dot(self.b_ub, res.ineqlin.marginals))
        if self.b_eq is not None and res.eqlin is not None:
            dual += float(np.dot(self.b_eq, res.eqlin.marginals))
        lb, ub = self._bound_arrays()
        if res.lower is not None:
            finite = np.isfinite(lb)
            dual += float(np.dot(lb[finite], np.asarray(res.lower.marginals)[finite]))
        if res.upper is not None:
            finite = np.isfinite(ub)
            dual += float(np.dot(ub[finite], np.asarray(res.upper.marginals)[finite]))
        gap = abs(float(res.fun) - dual)
        return LPResult(value=sign * float(res.fun), x=np.asarray(res.x, dtype=float), gap=gap,
                        status=int(res.status), message=str(res.message))


# ---------------------------------------------------------------- 目标函数

class SubmodularFunction:
    """非负子模函数 f: 2^E -> R≥0，f(∅)=0"""
    kind = "abstract"

    def __init__(self, n: int):
        if n < 0:
            raise DomainError("元素数不能为负")
        self.n = int(n)
        self._table: Optional[np.ndarray] = None

    def _value_mask(self, mask: int) -> float:
        raise NotImplementedError

    def _build_table(self) -> np.ndarray:
        return np.array([self._value_mask(m) for m in range(1 << self.n)], dtype=float)

    @property
    def table(self) -> np.ndarray:
        if self._table is None:
            if self.n > TABLE_CAP:
                raise CapabilityError(f"n={self.n} 超过取值表上限 {TABLE_CAP}")
            table = np.asarray(self._build_table(), dtype=float)
            table.setflags(write=False)
            self._table = table
        return self._table

    def value_mask(self, mask: int) -> float:
        if self._table is not None:
            return float(self._table[mask])
        return float(self._value_mask(mask))

    def value(self, S: Iterable[int]) -> float:
        return self.value_mask(_mask_of(self.n, S))

    def values(self, masks: np.ndarray) -> np.ndarray:
        if self.n <= TABLE_CAP:
            return self.table[masks]
        return np.array([self._value_mask(int(m)) for m in masks], dtype=float)

    def marginal(self, mask: int, e: int) -> float:
        return self.value_mask(mask | (1 << e)) - self.value_mask(mask)

    def is_submodular(self, tol: float = TOL) -> bool:
        """穷举检查 f(S+i)+f(S+j) ≥ f(S+i+j)+f(S)"""
        if self.n > SUBMODULAR_CHECK_CAP:
            raise CapabilityError(f"子模性穷举检查仅支持 n ≤ {SUBMODULAR_CHECK_CAP}")
        t = self.table
        masks = np.arange(1 << self.n)
        for i in range(self.n):
            for j in range(i + 1, self.n):
                bi, bj = 1 << i, 1 << j
                base = masks[(masks & (bi | bj)) == 0]
                lhs = t[base | bi] + t[base | bj]
                rhs = t[base | bi | bj] + t[base]
                if np.any(lhs < rhs - tol):
                    return False
        return True

    def is_monotone(self, tol: float = TOL) -> bool:
        t = self.table
        masks = np.arange(1 << self.n)
        for e in range(self.n):
            base = masks[(masks >> e) & 1 == 0]
            if np.any(t[base | (1 << e)] < t[base] - tol):
                return False
        return True

    def to_block(self) -> dict:
        raise NotImplementedError


class TableFunction(SubmodularFunction):
    """显式取值表"""
    kind = "table"

    def __init__(self, n: int, entries: Dict[int, float] | Sequence[Tuple[int, float]], check: bool = True):
        super().__init__(n)
        if n > TABLE_CAP:
            raise CapabilityError(f"显式取值表仅支持 n ≤ {TABLE_CAP}")
        items = dict(entries.items()) if isinstance(entries, dict) else {int(m): float(v) for m, v in entries}
        table = np.zeros(1 << n, dtype=float)
        seen = np.zeros(1 << n, dtype=bool)
        for mask, value in items.items():
            if not 0 <= int(mask) < (1 << n):
                raise DomainError(f"掩码 {mask} 超出 n={n} 的范围")
            table[int(mask)] = float(value)
            seen[int(mask)] = True
        seen[0] = True
        if not seen.all():
            missing = int(np.flatnonzero(~seen)[0])
            raise DomainError(f"取值表缺少掩码 {missing}")
        if abs(table[0]) > TOL:
            raise DomainError("要求 f(∅)=0")
        if np.any(table < -TOL):
            raise DomainError("目标函数必须非负")
        table.setflags(write=False)
        self._table = table
        if check and n <= SUBMODULAR_CHECK_CAP and not self.is_submodular(tol=ROUNDING_TOL):
            raise DomainError("取值表不满足子模性")

    def _value_mask(self, mask: int) -> float:
        return float(self._table[mask])

    def to_block(self) -> dict:
        return {"type": "table", "table": [[m, round(float(v), 6)] for m, v in enumerate(self._table)]}


class LinearFunction(SubmodularFunction):
    kind = "linear"

    def __init__(self, weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        super().__init__(w.shape[0])
        if np.any(w < 0):
            raise DomainError("线性权重必须非负")
        self.weights = w

    def _value_mask(self, mask: int) -> float:
        return float(sum(self.weights[e] for e in from_mask(mask)))

    def _build_table(self) -> np.ndarray:
        return subset_bits(self.n) @ self.weights

    def to_block(self) -> dict:
        return {"type": "linear", "weights": [round(float(w), 6) for w in self.weights]}


class CoverageFunction(SubmodularFunction):
    """加权覆盖：f(S) = 被 S 覆盖的物品权重之和"""
    kind = "coverage"

    def __init__(self, sets: Sequence[Sequence[int]], weights: Sequence[float]):
        super().__init__(len(sets))
        self.item_weights = np.asarray(weights, dtype=float)
        if np.any(self.item_weights < 0):
            raise DomainError("物品权重必须非负")
        m = self.item_weights.shape[0]
        cover = np.zeros((self.n, m), dtype=bool)
        for e, items in enumerate(sets):
            for item in items:
                if not 0 <= int(item) < m:
                    raise DomainError(f"物品 {item} 超出范围")
                cover[e, int(item)] = True
        self.cover = cover

    def _value_mask(self, mask: int) -> float:
        members = list(from_mask(mask))
        if not members:
            return 0.0
        covered = self.cover[members].any(axis=0)
        return float(covered @ self.item_weights)

    def _build_table(self) -> np.ndarray:
        covered = (subset_bits(self.n).astype(np.int64) @ self.cover.astype(np.int64)) > 0
        return covered @ self.item_weights

    def to_block(self) -> dict:
        return {"type": "coverage",
                "sets": [[int(i) for i in np.flatnonzero(row)] for row in self.cover],
                "weights": [round(float(w), 6) for w in self.item_weights]}


class CutFunction(SubmodularFunction):
    """（有向/无向）割函数，非单调"""
    kind = "cut"

    def __init__(self, n: int, edges: Sequence[Sequence[float]], directed: bool = False):
        super().__init__(n)
        self.directed = bool(directed)
        parsed = []
        for edge in edges:
            u, v = int(edge[0]), int(edge[1])
            w = float(edge[2]) if len(edge) > 2 else 1.0
            if not (0 <= u < n and 0 <= v < n):
                raise DomainError(f"边 ({u},{v}) 的端点不在地集中")
            if w < 0:
                raise DomainError("割函数的边权必须非负")
            parsed.append((u, v, w))
        self.edges = parsed

    def _value_mask(self, mask: int) -> float:
        total = 0.0
        for u, v, w in self.edges:
            iu, iv = (mask >> u) & 1, (mask >> v) & 1
            if (self.directed and iu and not iv) or (not self.directed and iu != iv):
                total += w
        return total

    def _build_table(self) -> np.ndarray:
        bits = subset_bits(self.n)
        table = np.zeros(1 << self.n, dtype=float)
        for u, v, w in self.edges:
            hit = (bits[:, u] & ~bits[:, v]) if self.directed else (bits[:, u] != bits[:, v])
            table += w * hit
        return table

    def to_block(self) -> dict:
        return {"type": "cut", "directed": self.directed,
                "edges": [[u, v, round(w, 6)] for u, v, w in self.edges]}


class SumFunction(SubmodularFunction):
    """若干子模函数之和（仍是子模的）"""
    kind = "sum"

    def __init__(self, parts: Sequence[SubmodularFunction]):
        if not parts:
            raise DomainError("至少需要一个分量")
        super().__init__(parts[0].n)
        if any(part.n != self.n for part in parts):
            raise DomainError("各分量的地集必须一致")
        self.parts = list(parts)

    def _value_mask(self, mask: int) -> float:
        return sum(part.value_mask(mask) for part in self.parts)

    def _build_table(self) -> np.ndarray:
        return sum(part.table for part in self.parts)

    def to_block(self) -> dict:
        return {"type": "table", "table": [[m, round(float(v), 6)] for m, v in enumerate(self.table)]}


# ---------------------------------------------------------------- 扩展

@dataclass
class Estimate:
    value: float
    stderr: float = 0.0
    samples: int = 0


def _subset_probabilities(y: np.ndarray) -> np.ndarray:
    n = y.shape[0]
    probs = np.ones(1 << n, dtype=float)
    masks = np.arange(1 << n, dtype=np.int64)
    for i in range(n):
        probs *= np.where((masks >> i) & 1, y[i], 1.0 - y[i])
    return probs


def _check_y(f: SubmodularFunction, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (f.n,):
        raise DomainError(f"点的维度 {y.shape} 与 n={f.n} 不符")
    if np.any(y < -TOL) or np.any(y > 1 + TOL):
        raise DomainError("点的坐标必须位于 [0,1]")
    return np.clip(y, 0.0, 1.0)


def multilinear_F(f: SubmodularFunction, y, mode: str = "exact", samples: int = 10000,
                  rng: Optional[RandomSource] = None, cap: int = EXACT_CAP) -> Estimate:
    """F(y) = Σ_A f(A) ∏_{e∈A} y_e ∏_{e∉A} (1−y_e)"""
    y = _check_y(f, y)
    if mode == "exact":
        if f.n > cap:
            raise CapabilityError(f"精确 F 仅支持 n ≤ {cap}，当前 n={f.n}")
        return Estimate(float(_subset_probabilities(y) @ f.table))
    if mode != "sampled":
        raise DomainError(f"未知的计算模式: {mode}")
    if rng is None:
        raise DomainError("采样模式需要随机源")
    if samples < 2:
        raise DomainError("采样数至少为 2")
    draws = rng.uniform((samples, f.n)) < y
    masks = draws.astype(np.int64) @ (np.int64(1) << np.arange(f.n, dtype=np.int64))
    values = f.values(masks)
    return Estimate(float(values.mean()), float(values.std(ddof=1) / np.sqrt(samples)), samples)


@dataclass
class FPlus:
    value: float
    alpha: Dict[int, float] = field(default_factory=dict)
    gap: float = 0.0


def f_plus(f: SubmodularFunction, y, cap: int = FPLUS_CAP, gap_tol: float = 1e-7) -> FPlus:
    """
    f⁺(y) = max Σ_A α_A f(A)
            s.t. Σ_A α_A ≤ 1,  Σ_{A∋j} α_A ≤ y_j,  α ≥ 0
    """
    y = _check_y(f, y)
    if f.n > cap:
        raise CapabilityError(f"f⁺ 仅支持 n ≤ {cap}，当前 n={f.n}")
    bits = subset_bits(f.n)
    A_ub = np.vstack([np.ones((1, 1 << f.n)), bits.T.astype(float)])
    b_ub = np.concatenate([[1.0], y])
    result = DenseLP(c=f.table, A_ub=A_ub, b_ub=b_ub, bounds=(0, None)).solve()
    if result.gap > gap_tol:
        raise ConsistencyError(f"f⁺ 线性规划对偶间隙 {result.gap:.3e} 超过 {gap_tol}")
    alpha = {int(m): float(a) for m, a in enumerate(result.x) if a > 1e-12}
    return FPlus(result.value, alpha, result.gap)


def prune_eta(f: SubmodularFunction, S: Iterable[int], order: Optional[Sequence[int]] = None) -> frozenset:
    """按顺序扫描，边际 ≥ 0 才保留"""
    members = set(int(e) for e in S)
    _mask_of(f.n, members)
    order = list(range(f.n)) if order is None else [int(e) for e in order]
    if not members.issubset(order):
        raise DomainError("剪枝顺序必须覆盖集合中的全部元素")
    kept = 0
    for e in order:
        if e in members and f.marginal(kept, e) >= -MARGINAL_TOL:
            kept |= 1 << e
    return from_mask(kept)
