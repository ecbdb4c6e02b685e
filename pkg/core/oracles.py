"""
小规模真值与统计工具

brute_force_opt 以 (已探测掩码, 激活掩码) 为状态做逆向归纳，
得到最优自适应策略的期望值以及该策略的探测边际 x_OPT。
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import chi2_contingency

from . import log_maker
from .errors import CapabilityError, DomainError
from .model import ProbingInstance, from_mask
from .submodular import f_plus

log = log_maker.logger("oracles")

DP_CAP = 10
EXACT_TOL = 1e-7
TIE_TOL = 1e-12


@dataclass
class PolicyValue:
    value: float
    policy: Dict[Tuple[int, int], Optional[int]] = field(default_factory=dict)
    x_opt: Optional[np.ndarray] = None
    states: int = 0


def _require_objective(instance: ProbingInstance):
    if instance.objective is None:
        raise DomainError("实例缺少目标函数")
    return instance.objective


def brute_force_opt(instance: ProbingInstance, cap: int = DP_CAP) -> PolicyValue:
    """V(Q,S) = max(f(S), max_e p_e·V(Q+e,S+e) + (1−p_e)·V(Q+e,S))，平局选择停止"""
    if instance.n > cap:
        raise CapabilityError(f"自适应最优仅支持 n ≤ {cap}，当前 n={instance.n}")
    f = _require_objective(instance)
    p = instance.p
    n = instance.n
    policy: Dict[Tuple[int, int], Optional[int]] = {}

    @lru_cache(maxsize=None)
    def value(q: int, s: int) -> float:
        best = f.value_mask(s)
        action = None
        for e in range(n):
            if q >> e & 1 or not instance.feasible_probe(q, s, e):
                continue
            bit = 1 << e
            cont = p[e] * value(q | bit, s | bit) + (1.0 - p[e]) * value(q | bit, s)
            if cont > best + TIE_TOL:
                best, action = cont, e
        policy[(q, s)] = action
        return best

    opt = value(0, 0)

    # 前向传播得到 x_OPT[e] = Pr[策略探测 e]
    x_opt = np.zeros(n)
    layer: Dict[Tuple[int, int], float] = {(0, 0): 1.0}
    while layer:
        nxt: Dict[Tuple[int, int], float] = {}
        for (q, s), mass in layer.items():
            e = policy.get((q, s))
            if e is None:
                continue
            x_opt[e] += mass
            bit = 1 << e
            for child, w in (((q | bit, s | bit), p[e]), ((q | bit, s), 1.0 - p[e])):
                if w > 0:
                    nxt[child] = nxt.get(child, 0.0) + mass * w
        layer = nxt
    value.cache_clear()
    log.debug(f"自适应最优: n={n}, 值 {opt:.6f}, 状态数 {len(policy)}")
    return PolicyValue(float(opt), policy, x_opt, len(policy))


def evaluate_order(instance: ProbingInstance, order: Sequence[int]) -> float:
    """按固定顺序探测，跳过不可行元素，返回 E[f(S)]"""
    f = _require_objective(instance)
    order = [int(e) for e in order]
    if len(set(order)) != len(order) or any(not 0 <= e < instance.n for e in order):
        raise DomainError("探测顺序中有重复或越界元素")
    p = instance.p

    @lru_cache(maxsize=None)
    def value(i: int, q: int, s: int) -> float:
        if i == len(order):
            return f.value_mask(s)
        e = order[i]
        if not instance.feasible_probe(q, s, e):
            return value(i + 1, q, s)
        bit = 1 << e
        return p[e] * value(i + 1, q | bit, s | bit) + (1.0 - p[e]) * value(i + 1, q | bit, s)

    return float(value(0, 0, 0))


@dataclass
class RelaxationReport:
    opt: float
    f_plus_at_opt: float
    f_plus_max: Optional[float]
    x_opt: np.ndarray
    x_opt_in_polytope: Optional[bool]
    passed: bool
    dump: Optional[dict] = None


def verify_relaxation_bound(instance: ProbingInstance, polytope=None, cap: int = DP_CAP) -> RelaxationReport:
    """E[f(OPT)] ≤ f⁺(x_OPT·p) ≤ max_{x∈P} f⁺(x·p)"""
    f = _require_objective(instance)
    opt = brute_force_opt(instance, cap)
    at_opt = f_plus(f, opt.x_opt * instance.p).value
    best = None
    inside = None
    if polytope is not None:
        best, _ = polytope.max_f_plus(f)
        inside = polytope.contains(opt.x_opt)
    passed = at_opt >= opt.value - EXACT_TOL and (best is None or best >= opt.value - EXACT_TOL)
    report = RelaxationReport(opt.value, at_opt, best, opt.x_opt, inside, passed)
    if not passed:
        from .schemas import instance_to_dict
        report.dump = instance_to_dict(instance)
        log.error(f"松弛上界不成立: OPT={opt.value:.9f}, f⁺(x_OPT·p)={at_opt:.9f}, max f⁺={best}")
    return report


def hoeffding_ci(samples: int, level: float = 0.99) -> float:
    """sqrt(ln(2/(1−level)) / (2n))"""
    if samples < 1:
        raise DomainError("样本数至少为 1")
    if not 0 < level < 1:
        raise DomainError(f"置信水平必须位于 (0,1)，当前为 {level}")
    return math.sqrt(math.log(2.0 / (1.0 - level)) / (2.0 * samples))


def chi_square_equal(a: Iterable[Hashable], b: Iterable[Hashable], support: Sequence[Hashable]) -> float:
    """两样本卡方齐性检验的 p 值；两边都为零的类别不参与"""
    support = list(support)
    if not support:
        raise DomainError("支撑不能为空")
    index = {item: i for i, item in enumerate(support)}
    table = np.zeros((2, len(support)))
    for row, samples in enumerate((a, b)):
        for item, count in Counter(samples).items():
            if item not in index:
                raise DomainError(f"样本 {item} 不在支撑中")
            table[row, index[item]] += count
    if table[0].sum() == 0 or table[1].sum() == 0:
        raise DomainError("两组样本都必须非空")
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 1.0
    return float(chi2_contingency(table, correction=False).pvalue)


def martingale_mean(traces: Iterable, e: int, load: float) -> Tuple[float, int]:
    """(1 + Σ)·P_e^τ 的经验均值；期望为 X_e"""
    values = [load * float(trace.probed_at_stop(e)) for trace in traces]
    if not values:
        raise DomainError("没有可用的过程记录")
    return float(np.mean(values)), len(values)


def subsets_law(outputs: Iterable[Iterable[int]]) -> Dict[frozenset, int]:
    """把输出集合的样本整理为频数表"""
    return dict(Counter(frozenset(S) for S in outputs))


def all_subsets(n: int) -> List[frozenset]:
    return [from_mask(m) for m in range(1 << n)]
