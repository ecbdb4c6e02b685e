"""
测度连续贪心（measured continuous greedy）

在 P(I^in, I^out) 上最大化 G(x) = F(p·x)：
每一步取 I(t) = argmax_{x∈P} Σ x_e·(G(y∨1_e) − G(y))，再令
y_e ← y_e + δ·I_e·(1 − y_e)。运行 b/δ 步后 y ∈ b·P。
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import log_maker
from .errors import CapabilityError, ConfigError, DomainError, InvariantViolation
from .model import ProbingInstance, RandomSource
from .submodular import DenseLP, SubmodularFunction, multilinear_F, subset_bits

log = log_maker.logger("greedy")

POLYTOPE_ROWS_CAP = 12
STEP_CHECK_CAP = 8
STEP_TOL = 1e-12
ROW_TOL = 1e-9


@dataclass
class GreedyConfig:
    b: float = 1.0
    delta: float = 0.01
    gradient: str = "exact"
    samples: int = 2000
    step_slack: float = 0.05
    check_steps: bool = True
    exact_cap: int = 12

    def __post_init__(self):
        if not 0 < self.b <= 1:
            raise ConfigError(f"停止时间 b 必须位于 (0,1]，当前为 {self.b}")
        if not 0 < self.delta <= self.b:
            raise ConfigError(f"步长 δ 必须位于 (0,b]，当前为 {self.delta}")
        if self.gradient not in ("exact", "sampled"):
            raise ConfigError(f"未知的梯度模式: {self.gradient}")
        if self.samples < 2:
            raise ConfigError("采样数至少为 2")
        if abs(self.steps * self.delta - self.b) > STEP_TOL:
            raise ConfigError(f"δ={self.delta} 不能整除 b={self.b}")

    @property
    def steps(self) -> int:
        return int(round(self.b / self.delta))


class ProbingPolytope:
    """
    P(I^in, I^out)：内层秩约束作用在 p·x 上，外层秩约束作用在 x 上，外加 0 ≤ x ≤ 1

    被盒约束蕴含的秩约束直接丢弃。
    """

    def __init__(self, instance: ProbingInstance, cap: int = POLYTOPE_ROWS_CAP):
        n = instance.n
        if n > cap:
            raise CapabilityError(f"多面体约束枚举仅支持 n ≤ {cap}，当前 n={n}")
        self.instance = instance
        self.n = n
        p = instance.p
        bits = subset_bits(n).astype(float)
        rows, rhs, labels = [], [], []
        for side, matroids in (("inner", instance.inner), ("outer", instance.outer)):
            for j, m in enumerate(matroids):
                ranks = m.rank_table().astype(float)
                coeff = bits * p if side == "inner" else bits
                loads = coeff.sum(axis=1)
                for mask in np.flatnonzero(loads > ranks + ROW_TOL):
                    rows.append(coeff[mask])
                    rhs.append(ranks[mask])
                    labels.append((side, j, int(mask)))
        self.A_ub = np.array(rows, dtype=float).reshape(len(rows), n)
        self.b_ub = np.array(rhs, dtype=float)
        self.labels = labels
        log.debug(f"多面体: n={n}, 有效约束 {len(rows)} 条")

    def contains(self, y, scale: float = 1.0, tol: float = ROW_TOL) -> bool:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n,):
            raise DomainError(f"点的维度 {y.shape} 与 n={self.n} 不符")
        if np.any(y < -tol) or np.any(y > scale + tol):
            return False
        if not len(self.b_ub):
            return True
        return bool(np.all(self.A_ub @ y <= scale * self.b_ub + tol))

    def violated_rows(self, y, scale: float = 1.0, tol: float = ROW_TOL) -> list:
        y = np.asarray(y, dtype=float)
        if not len(self.b_ub):
            return []
        excess = self.A_ub @ y - scale * self.b_ub
        return [self.labels[i] for i in np.flatnonzero(excess > tol)]

    def _lp(self, c, upper) -> DenseLP:
        return DenseLP(c=c, A_ub=self.A_ub if len(self.b_ub) else None,
                       b_ub=self.b_ub if len(self.b_ub) else None,
                       bounds=[(0.0, float(u)) for u in upper], method="highs-ds")

    def linear_max(self, weights) -> np.ndarray:
        """线性函数在 P 上的最大顶点；非正权重的坐标置零，平局偏向编号小的元素"""
        w = np.asarray(weights, dtype=float)
        if w.shape != (self.n,):
            raise DomainError(f"权重维度 {w.shape} 与 n={self.n} 不符")
        positive = w > 0
        if not np.any(positive):
            return np.zeros(self.n)
        scale = float(np.max(np.abs(w[positive])))
        tie_break = scale * 1e-9 * (self.n - np.arange(self.n)) / self.n
        c = np.where(positive, w + tie_break, 0.0)
        x = self._lp(c, positive.astype(float)).solve().x
        return np.clip(np.where(x > 1e-12, x, 0.0), 0.0, 1.0)

    def spread_point(self) -> np.ndarray:
        """各坐标最大化点的平均：P 中支撑尽量大的点"""
        if not self.n:
            return np.zeros(0)
        points = []
        for e in range(self.n):
            c = np.zeros(self.n)
            c[e] = 1.0
            points.append(self._lp(c, np.ones(self.n)).solve().x)
        point = np.clip(np.mean(points, axis=0), 0.0, 1.0)
        return np.where(point > 1e-12, point, 0.0)

    def max_f_plus(self, f: SubmodularFunction, cap: int = 12):
        """
        max_{x∈P} f⁺(p·x)，联合变量 (x, α)：
          Σ_A α_A ≤ 1,  Σ_{A∋j} α_A ≤ p_j x_j,  x ∈ P
        返回 (值, x⁺)
        """
        if f.n != self.n:
            raise DomainError("目标函数与多面体的地集不一致")
        if self.n > cap:
            raise CapabilityError(f"f⁺ 联合线性规划仅支持 n ≤ {cap}")
        n = self.n
        size = 1 << n
        bits_t = subset_bits(n).T.astype(float)
        m = len(self.b_ub)
        top = np.hstack([np.zeros((1, n)), np.ones((1, size))])
        cover = np.hstack([-np.diag(self.instance.p), bits_t])
        blocks = [top, cover]
        rhs = [np.ones(1), np.zeros(n)]
        if m:
            blocks.append(np.hstack([self.A_ub, np.zeros((m, size))]))
            rhs.append(self.b_ub)
        c = np.concatenate([np.zeros(n), f.table])
        bounds = [(0.0, 1.0)] * n + [(0.0, None)] * size
        result = DenseLP(c=c, A_ub=np.vstack(blocks), b_ub=np.concatenate(rhs), bounds=bounds).solve()
        x_plus = np.clip(result.x[:n], 0.0, 1.0)
        return result.value, x_plus


def linear_max_over_P(weights, P: ProbingPolytope) -> np.ndarray:
    return P.linear_max(weights)


@dataclass
class GreedyResult:
    y: np.ndarray
    value: float
    steps: int
    history: List[float] = field(default_factory=list)
    f_plus_value: Optional[float] = None
    x_plus: Optional[np.ndarray] = None
    step_violations: List[int] = field(default_factory=list)


def _objective(f: SubmodularFunction, q: np.ndarray, config: GreedyConfig, rng: Optional[RandomSource]) -> float:
    if config.gradient == "exact":
        return multilinear_F(f, q, "exact", cap=config.exact_cap).value
    return multilinear_F(f, q, "sampled", config.samples, rng).value


def _gradient(f: SubmodularFunction, y: np.ndarray, p: np.ndarray, config: GreedyConfig,
              rng: Optional[RandomSource]) -> np.ndarray:
    """d_e = G(y∨1_e) − G(y) = F(q 的第 e 维换成 p_e) − F(q)，q = p·y"""
    n = f.n
    q = p * y
    if config.gradient == "exact":
        base = multilinear_F(f, q, "exact", cap=config.exact_cap).value
        grad = np.empty(n)
        for e in range(n):
            raised = q.copy()
            raised[e] = p[e]
            grad[e] = multilinear_F(f, raised, "exact", cap=config.exact_cap).value - base
        return grad
    # 共同随机数：所有坐标共用同一批均匀数
    u = rng.uniform((config.samples, n))
    weights = np.int64(1) << np.arange(n, dtype=np.int64)
    base_draw = u < q
    base_masks = base_draw.astype(np.int64) @ weights
    base_vals = f.values(base_masks)
    grad = np.empty(n)
    for e in range(n):
        masks = np.where(u[:, e] < p[e], base_masks | weights[e], base_masks & ~weights[e])
        grad[e] = float(np.mean(f.values(masks) - base_vals))
    return grad


def measured_continuous_greedy(f: SubmodularFunction, P: ProbingPolytope, config: GreedyConfig,
                               rng: Optional[RandomSource] = None) -> GreedyResult:
    if f.n != P.n:
        raise DomainError("目标函数与多面体的地集不一致")
    if config.gradient == "sampled" and rng is None:
        raise DomainError("采样梯度需要随机源")
    n = P.n
    p = np.asarray(P.instance.p, dtype=float)
    delta = config.delta
    steps = config.steps

    per_step = config.check_steps and config.gradient == "exact" and n <= STEP_CHECK_CAP
    f_plus_value, x_plus = (P.max_f_plus(f) if per_step else (None, None))

    y = np.zeros(n)
    current = _objective(f, p * y, config, rng)
    history = [current]
    violations: List[int] = []
    for i in range(steps):
        grad = _gradient(f, y, p, config, rng)
        direction = P.linear_max(grad)
        y_next = y + delta * direction * (1.0 - y)
        if np.any(y_next < y - STEP_TOL):
            raise InvariantViolation(f"第 {i} 步 y 出现下降")
        y = y_next
        t = (i + 1) * delta
        bound = 1.0 - (1.0 - delta) ** round(t / delta)
        if np.any(y > bound + STEP_TOL):
            raise InvariantViolation(f"第 {i} 步 y 超过 1−(1−δ)^(t/δ) = {bound:.6f}")
        value = _objective(f, p * y, config, rng)
        if per_step:
            target = delta * (math.exp(-i * delta) * f_plus_value - current) - config.step_slack * delta * f_plus_value
            if value - current < target - STEP_TOL:
                violations.append(i)
                log.warning(f"第 {i} 步增益 {value - current:.3e} 低于下界 {target:.3e}")
        current = value
        history.append(current)

    if not P.contains(y, scale=config.b):
        raise InvariantViolation(f"贪心输出不在 b·P 内: {P.violated_rows(y, scale=config.b)[:3]}")
    log.debug(f"测度贪心完成: {steps} 步, G(y)={current:.6f}")
    return GreedyResult(y=y, value=current, steps=steps, history=history,
                        f_plus_value=f_plus_value, x_plus=x_plus, step_violations=violations)
