"""
横截拟阵交上的 stoch-CR 方案、即时剪枝以及相关常数

一次运行：
  预处理  对每个内层拟阵分解 (1/b)·p·x，对每个外层拟阵分解 (1/b)·x，取单射与关键集；
  主循环  从 A 中均匀抽取元素（包括已不可用的元素），可用则真实探测，否则模拟；
          内层拟阵在（真实或模拟的）成功时阻塞，只有真实成功才插入支撑集；
          外层拟阵每次抽取都阻塞，只有对可用元素的探测才插入支撑集。
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from . import log_maker
from .errors import DomainError, InfeasibleError, InvariantViolation
from .model import ProbeTrace, ProbingInstance, RandomSource, sample_r_of_x, to_mask
from .submodular import SubmodularFunction, prune_eta
from .transversal import (CriticalAssignment, SupportState, TransversalMapping, blocking_sets,
                          build_initial_state, check_state, choose_critical_sets, update_state)

log = log_maker.logger("stoch_cr")

SUPPORT_TOL = 1e-12
INNER = "inner"
OUTER = "outer"


# ---------------------------------------------------------------- 常数

def balance_constant(b: float, k: int) -> float:
    """c = 1/(1+b·k)，k = k_in + k_out"""
    return 1.0 / (1.0 + b * k)


def scaled_balance(b: float, k: int) -> float:
    """b·c；在 (0,1] 上随 b 递增，b=1 时取到 1/(k+1)"""
    return b / (1.0 + b * k)


def optimal_b(k: int) -> float:
    """使 b·e^{−b}/(1+bk) 最大的 b，即 1 − b − k·b² = 0 的正根"""
    return 2.0 / (math.sqrt(1.0 + 4.0 * k) + 1.0)


def transversal_ratio(k: int) -> float:
    return 1.0 / (k + math.sqrt(k + 0.25) + 0.5)


def end_to_end_factor(b: float, k: int) -> float:
    """c(b)·b·e^{−b}：测度贪心与 stoch-CR 方案组合后的近似比"""
    return balance_constant(b, k) * b * math.exp(-b)


# ---------------------------------------------------------------- 参数与预处理

@dataclass
class SchemeParams:
    b: float = 1.0
    check_invariants: bool = False
    record_trace: bool = False
    dump_states: bool = False

    def __post_init__(self):
        if not 0 < self.b <= 1:
            raise DomainError(f"缩放系数 b 必须位于 (0,1]，当前为 {self.b}")


@dataclass
class MatroidSlot:
    side: str
    index: int
    state: SupportState
    mapping: TransversalMapping
    critical: Optional[CriticalAssignment] = None
    gamma0: Dict[int, FrozenSet[int]] = field(default_factory=dict)

    @property
    def label(self) -> str:
        return f"{self.side}{self.index}"


@dataclass
class SchemePlan:
    """与运行无关的预处理结果：分解与初始单射"""
    instance: ProbingInstance
    x: np.ndarray
    b: float
    initial: List[MatroidSlot]

    @property
    def support(self) -> FrozenSet[int]:
        return frozenset(int(e) for e in np.flatnonzero(self.x > SUPPORT_TOL))

    @property
    def k(self) -> int:
        return self.instance.k_in + self.instance.k_out

    def draw_critical(self, rng: RandomSource) -> List[CriticalAssignment]:
        p = self.instance.p
        return [choose_critical_sets(self.x, p if slot.side == INNER else None, slot.state, rng, self.b)
                for slot in self.initial]

    def fresh(self, critical: Sequence[CriticalAssignment]) -> List[MatroidSlot]:
        slots = []
        for slot, assignment in zip(self.initial, critical):
            state = slot.state.copy()
            mapping = TransversalMapping(state)
            slots.append(MatroidSlot(slot.side, slot.index, state, mapping, assignment,
                                     blocking_sets(state, assignment)))
        return slots


def prepare_scheme(instance: ProbingInstance, x, b: float = 1.0) -> SchemePlan:
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.n,):
        raise DomainError(f"点的维度 {x.shape} 与 n={instance.n} 不符")
    if np.any(x < 0) or np.any(x > 1 + SUPPORT_TOL):
        raise DomainError("输入点的坐标必须位于 [0,1]")
    x = np.clip(np.where(x > SUPPORT_TOL, x, 0.0), 0.0, 1.0)
    slots = []
    for side, matroids in ((INNER, instance.inner), (OUTER, instance.outer)):
        for j, m in enumerate(matroids):
            y = (instance.p * x if side == INNER else x) / b
            try:
                decomposition = m.decompose(y)
            except InfeasibleError as e:
                raise InfeasibleError(f"x 不在 b·P 内（{side} 拟阵 {j}）: {e}", constraint=e.constraint) from e
            state, mapping = build_initial_state(m, decomposition, label=f"{side}{j}")
            slots.append(MatroidSlot(side, j, state, mapping))
    log.debug(f"方案预处理完成: k_in={instance.k_in}, k_out={instance.k_out}, b={b}")
    return SchemePlan(instance, x, b, slots)


# ---------------------------------------------------------------- 过程记录

@dataclass
class ProcessTrace:
    """可观测的分析量：每步可用性 Y、探测指示 P、停止步 τ"""
    elements: Tuple[int, ...]
    available: List[FrozenSet[int]] = field(default_factory=list)
    probed: List[FrozenSet[int]] = field(default_factory=list)
    tau: Dict[int, int] = field(default_factory=dict)

    def record(self, available: Set[int], probed: Set[int]):
        step = len(self.available)
        for e in self.elements:
            if e not in available and e not in self.tau:
                self.tau[e] = step
        self.available.append(frozenset(available))
        self.probed.append(frozenset(probed))

    def probed_at_stop(self, e: int) -> bool:
        """P_e^τ"""
        t = self.tau.get(e)
        if t is None:
            return False
        return e in self.probed[t]

    def check(self):
        for prev, cur in zip(self.available, self.available[1:]):
            if not cur <= prev:
                raise InvariantViolation("可用集合在过程中增长")
        for prev, cur in zip(self.probed, self.probed[1:]):
            if not prev <= cur:
                raise InvariantViolation("探测指示在过程中减少")
        for e, t in self.tau.items():
            if e in self.available[t] or (t > 0 and e not in self.available[t - 1]):
                raise InvariantViolation(f"τ_{e} 不是首个不可用的步")


@dataclass
class SchemeRun:
    A: FrozenSet[int]
    S: FrozenSet[int]
    trace: ProbeTrace
    critical: List[CriticalAssignment]
    gamma0: Dict[str, Dict[int, FrozenSet[int]]]
    picks: int = 0
    S_prun: FrozenSet[int] = frozenset()
    S_virt: FrozenSet[int] = frozenset()
    S_eta: FrozenSet[int] = frozenset()
    revealed: Dict[int, bool] = field(default_factory=dict)
    blocking_events: List[Tuple[int, int, FrozenSet[int]]] = field(default_factory=list)
    process: Optional[ProcessTrace] = None
    states: List[dict] = field(default_factory=list)

    @property
    def active_input(self) -> FrozenSet[int]:
        """act(A)：真实探测用实际结果，未探测元素用审计硬币"""
        return frozenset(e for e, a in self.revealed.items() if a)


# ---------------------------------------------------------------- 主循环

def _snapshot(step: int, pick: Optional[int], outcome: Optional[str], available: Set[int],
              slots: List[MatroidSlot]) -> dict:
    return {
        "step": step,
        "pick": pick,
        "outcome": outcome,
        "available": sorted(available),
        "matroids": [dict(slot.state.to_dict(), gamma={str(e): sorted(g) for e, g in
                                                       sorted(blocking_sets(slot.state, slot.critical).items())})
                     for slot in slots],
    }


def _execute(plan: SchemePlan, A: Iterable[int], params: SchemeParams, rng: RandomSource,
             critical: Optional[Sequence[CriticalAssignment]] = None,
             prune_with: Optional[SubmodularFunction] = None, pruning_base: str = "kept") -> SchemeRun:
    instance = plan.instance
    p = instance.p
    members = sorted(set(int(e) for e in A))
    for e in members:
        if not 0 <= e < instance.n:
            raise DomainError(f"元素 {e} 不在地集中")
    picks_from = [e for e in members if e in plan.support]

    if critical is None:
        critical = plan.draw_critical(rng)
    slots = plan.fresh(critical)
    gamma0 = {slot.label: slot.gamma0 for slot in slots}

    available: Set[int] = set(picks_from)
    trace = ProbeTrace()
    chosen: Set[int] = set()
    kept: List[int] = []
    virtual: List[int] = []
    run = SchemeRun(frozenset(members), frozenset(), trace, list(critical), gamma0)
    if params.record_trace:
        run.process = ProcessTrace(tuple(picks_from))
        run.process.record(available, set())
    if params.dump_states:
        run.states.append(_snapshot(0, None, None, available, slots))

    probed: Set[int] = set()
    since_probe = len(available)
    while available:
        e = picks_from[rng.integers(len(picks_from))]
        run.picks += 1
        fresh = e in available
        active = rng.bernoulli(float(p[e]))
        if fresh:
            available.discard(e)
            probed.add(e)
            if params.check_invariants and len(available) >= since_probe:
                raise InvariantViolation("两次真实探测之间可用元素没有减少")
            since_probe = len(available)
            pruned = False
            if prune_with is not None:
                base = to_mask(kept) if pruning_base == "kept" else to_mask(kept + virtual)
                pruned = prune_with.marginal(base, e) < 0
            if pruned:
                trace.record_simulation(e, active)
                if active:
                    virtual.append(e)
            else:
                trace.record_probe(e, active)
                if active:
                    chosen.add(e)
                    kept.append(e)
            outcome = ("pruned-" if pruned else "") + ("active" if active else "inactive")
        else:
            trace.record_simulation(e, active)
            outcome = "simulated-" + ("active" if active else "inactive")

        blocked: Set[int] = set()
        for slot in slots:
            if slot.side == INNER and not active:
                continue
            add = fresh and (active or slot.side == OUTER)
            update = update_state(slot.state, slot.mapping, e, add, slot.critical)
            blocked |= update.blocked
        newly = blocked & available
        if newly:
            available -= newly
            run.blocking_events.append((run.picks, e, frozenset(newly)))
            log.debug(f"第 {run.picks} 次抽取 {e} 阻塞了 {sorted(newly)}")

        if params.check_invariants:
            for slot in slots:
                check_state(slot.state, slot.mapping, slot.critical, slot.gamma0, available)
            if prune_with is not None and pruning_base == "kept":
                order = [f for f, o in trace.probed if f in set(kept) | set(virtual)]
                if prune_eta(prune_with, kept + virtual, order) != frozenset(kept):
                    raise InvariantViolation("S^prun ≠ η_f(S^prun + S^virt)")
        if run.process is not None:
            run.process.record(available, probed)
        if params.dump_states:
            run.states.append(_snapshot(run.picks, e, outcome, available, slots))

    for e in members:
        if e not in probed:
            run.revealed[e] = rng.bernoulli(float(p[e]))
    for e, outcome in trace.probed:
        if e not in run.revealed:
            run.revealed[e] = outcome.success

    run.S = frozenset(chosen)
    run.S_prun = frozenset(kept)
    run.S_virt = frozenset(virtual)
    _check_output(instance, run)
    if run.process is not None and params.check_invariants:
        run.process.check()
    return run


def _check_output(instance: ProbingInstance, run: SchemeRun):
    trace = run.trace
    trace.replay(instance)
    if not run.S <= run.A:
        raise InvariantViolation(f"输出 {sorted(run.S)} 不在输入集合内")
    if not run.S <= trace.Q:
        raise InvariantViolation("输出中含有未真实探测的元素")
    for j, m in enumerate(instance.inner):
        if not m.is_independent_mask(to_mask(run.S)):
            raise InvariantViolation(f"输出在内层拟阵 {j} 中不独立: {sorted(run.S)}")


def trace_scheme(instance: ProbingInstance, x, A: Iterable[int], params: SchemeParams, rng: RandomSource,
                 plan: Optional[SchemePlan] = None,
                 critical: Optional[Sequence[CriticalAssignment]] = None) -> SchemeRun:
    plan = plan or prepare_scheme(instance, x, params.b)
    return _execute(plan, A, params, rng, critical)


def run_scheme(instance: ProbingInstance, x, A: Iterable[int], params: SchemeParams, rng: RandomSource,
               plan: Optional[SchemePlan] = None) -> FrozenSet[int]:
    return trace_scheme(instance, x, A, params, rng, plan).S


def run_scheme_with_pruning(instance: ProbingInstance, x, f: SubmodularFunction, params: SchemeParams,
                            rng: RandomSource, plan: Optional[SchemePlan] = None,
                            pruning_base: str = "kept") -> SchemeRun:
    """
    A = R(x) 在内部抽取；真实探测前若边际为负则改为模拟

    pruning_base="kept" 以 S^prun 计算边际，此时按探测顺序 S^prun = η_f(S^prun+S^virt) 逐步成立；
    "joint" 以 S^prun+S^virt 计算边际。两种方式下 S^prun+S^virt 的分布都与 run_scheme 的输出相同。

    边运行边剪枝只能按探测顺序决定；run.S_eta 另给出按实例顺序 instance.order 的离线剪枝
    η_f(S^prun+S^virt)，即先运行方案、事后剪枝时得到的集合。
    """
    if pruning_base not in ("kept", "joint"):
        raise DomainError(f"未知的剪枝基准: {pruning_base}")
    if f.n != instance.n:
        raise DomainError("目标函数与实例的地集不一致")
    plan = plan or prepare_scheme(instance, x, params.b)
    A = sample_r_of_x(plan.x, rng)
    run = _execute(plan, A, params, rng, prune_with=f, pruning_base=pruning_base)
    order = [e for e, _ in run.trace.probed]
    if prune_eta(f, run.S_prun, [e for e in order if e in run.S_prun]) != run.S_prun:
        raise InvariantViolation("S^prun 不是剪枝的不动点")
    run.S_eta = prune_in_order(instance, run.S_prun | run.S_virt, f)
    return run


def prune_in_order(instance: ProbingInstance, S: Iterable[int],
                   f: Optional[SubmodularFunction] = None) -> frozenset:
    """按实例的元素顺序剪枝"""
    f = f if f is not None else instance.objective
    if f is None:
        raise DomainError("实例没有目标函数")
    return prune_eta(f, S, instance.order)


# ---------------------------------------------------------------- 闭式

def conditional_probe_probability(e: int, A: Iterable[int], plan: SchemePlan,
                                  critical: Sequence[CriticalAssignment], include_activation: bool = True) -> float:
    """
    给定关键集 C 与输入 A：
      Pr[e 被探测 | C] = X_e / (1 + Σ_{Γin∖Γout} p_f X_f + Σ_{Γout} X_f)
    include_activation 为真时再乘以 p_e，得到 Pr[e ∈ 输出 | C]
    """
    A = frozenset(int(f) for f in A) & plan.support
    if e not in A:
        return 0.0
    p = plan.instance.p
    gamma_in: Set[int] = set()
    gamma_out: Set[int] = set()
    for slot, assignment in zip(plan.initial, critical):
        gamma = blocking_sets(slot.state, assignment).get(e, frozenset())
        (gamma_in if slot.side == INNER else gamma_out).update(gamma)
    load = sum(float(p[f]) for f in (gamma_in - gamma_out) & A) + len(gamma_out & A)
    head = float(p[e]) if include_activation else 1.0
    return head / (1.0 + load)


def blocking_load(e: int, A: Iterable[int], plan: SchemePlan, critical: Sequence[CriticalAssignment]) -> float:
    """1 + Σ_{Γin∖Γout} p_f X_f + Σ_{Γout} X_f，与探测指示相乘后期望为 X_e"""
    prob = conditional_probe_probability(e, A, plan, critical, include_activation=False)
    return 1.0 / prob if prob > 0 else 0.0
