"""
实验编排：每个子命令对应一条流水线，产出报告行并写出 CSV / JSON

报告行的判定方式：
  lower   estimate ≥ bound − 3·ci
  upper   estimate ≤ bound + 3·ci
  equal   |estimate − bound| ≤ ci
  exact   确定性比较，estimate ≥ bound − 1e-7
Monte Carlo 行在 ci > max_ci·spread 时判为 inconclusive（spread 为被估计量的取值范围）。
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set

import numpy as np

from core import log_maker
from core.combined import (AcceptAllScheme, GreedyScheme, combined_scheme, exact_balance,
                           independent_rounding_constant, ordered_greedy_constant)
from core.errors import InvariantViolation
from core.greedy import GreedyConfig, ProbingPolytope, measured_continuous_greedy
from core.model import ProbingInstance, RandomSource, sample_r_of_x
from core.oracles import EXACT_TOL, all_subsets, brute_force_opt, chi_square_equal, hoeffding_ci, verify_relaxation_bound
from core.schemas import ExperimentConfig, GeneratorSpec, dumps, load_instance
from core.stoch_cr import (INNER, SchemeParams, balance_constant, blocking_load, conditional_probe_probability,
                           end_to_end_factor, prepare_scheme, run_scheme_with_pruning, trace_scheme)
from core.submodular import multilinear_F
from core.threads import ChunkState, ReplicationManager
from core.transversal import blocking_sets

from .generator import generate, generate_instance
from .kset import KSetInstance, load_kset, prepare_kset, run_kset, solve_kset_lp
from .matching import MatchingInstance, check_degrees, gkps_round, load_matching, lp_value, probe_lower_bound, run_matching, solve_matching_lp

log = log_maker.logger("experiments")

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_INCONCLUSIVE = 3
EXIT_ERROR = 4
EXIT_IO = 5

# 随机流编号：(seed, 流号, ...)
STREAM_GENERATE = 0
STREAM_CRITICAL = 1
STREAM_RUNS = 2
STREAM_AUX = 3

RELAXATION_INSTANCES = 50
PRUNING_IDENTITY_CAP = 6
P_VALUE_FLOOR = 0.01
MATCHING_SLACK = 0.01
DECIMALS = 9

FIELDS = ("check", "tag", "estimate", "bound", "ci", "verdict", "kind", "count", "spread")


@dataclass
class ReportRow:
    check: str
    tag: str
    estimate: float
    bound: float
    ci: float
    verdict: str
    kind: str
    count: int
    spread: float = 1.0

    def to_dict(self) -> dict:
        data = asdict(self)
        for key in ("estimate", "bound", "ci", "spread"):
            data[key] = round(float(data[key]), DECIMALS)
        return data


def judge(kind: str, estimate: float, bound: float, ci: float, max_ci: float, spread: float = 1.0) -> str:
    if kind == "exact":
        return PASS if estimate >= bound - EXACT_TOL else FAIL
    if ci > max_ci * spread:
        return INCONCLUSIVE
    if kind == "lower":
        ok = estimate >= bound - 3 * ci
    elif kind == "upper":
        ok = estimate <= bound + 3 * ci
    elif kind == "equal":
        ok = abs(estimate - bound) <= ci
    else:
        raise ValueError(f"unknown verdict kind: {kind}")
    return PASS if ok else FAIL


class Report:
    """一次实验的报告；写盘只在主线程进行"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.rows: List[ReportRow] = []
        self.details: Dict[str, object] = {}

    def add(self, check: str, tag: str, estimate: float, bound: float, kind: str,
            ci: float = 0.0, count: int = 1, spread: float = 1.0) -> ReportRow:
        verdict = judge(kind, estimate, bound, ci, self.config.max_ci, spread)
        row = ReportRow(check, tag, float(estimate), float(bound), float(ci), verdict, kind, int(count), float(spread))
        self.rows.append(row)
        if verdict == FAIL:
            log.warning(f"未通过: {check} [{tag}] 估计 {estimate:.6f}，界 {bound:.6f}，ci {ci:.4f}")
        elif verdict == INCONCLUSIVE:
            log.warning(f"无法判定: {check} [{tag}] ci={ci:.4f} 过宽（{count} 个样本）")
        return row

    def fail(self, check: str, tag: str):
        self.rows.append(ReportRow(check, tag, 0.0, 1.0, 0.0, FAIL, "exact", 0))
        log.warning(f"未通过: {check} [{tag}]")

    @property
    def status(self) -> int:
        verdicts = {row.verdict for row in self.rows}
        if FAIL in verdicts:
            return EXIT_FAIL
        if INCONCLUSIVE in verdicts:
            return EXIT_INCONCLUSIVE
        return EXIT_PASS

    def to_dict(self) -> dict:
        return {
            "config": self.config.model_dump(mode="json", exclude={"out", "debug", "dump_states"}),
            "rows": [row.to_dict() for row in self.rows],
            "details": self.details,
            "status": self.status,
        }

    def to_csv(self, path: str):
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=FIELDS, lineterminator="\n")
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row.to_dict())

    def write(self) -> List[str]:
        """写入 <out>/<子命令>/seed-<seed>/run-NNN/，已有目录从不覆盖"""
        run_dir = next_run_dir(self.config.out, self.config.subcommand, self.config.seed)
        paths = []
        if "csv" in self.config.formats:
            paths.append(os.path.join(run_dir, "report.csv"))
            self.to_csv(paths[-1])
        if "json" in self.config.formats:
            paths.append(os.path.join(run_dir, "report.json"))
            with open(paths[-1], "w", encoding="utf-8") as f:
                f.write(dumps(self.to_dict()))
        log.info(f"报告已写入 {run_dir}")
        return paths


def next_run_dir(out: str, subcommand: str, seed: Optional[int]) -> str:
    base = os.path.join(out, subcommand, f"seed-{seed}")
    os.makedirs(base, exist_ok=True)
    index = 0
    while os.path.exists(os.path.join(base, f"run-{index:03d}")):
        index += 1
    path = os.path.join(base, f"run-{index:03d}")
    os.makedirs(path)
    return path


@dataclass
class ExperimentResult:
    report: Report
    paths: List[str] = field(default_factory=list)

    @property
    def status(self) -> int:
        return self.report.status


# ---------------------------------------------------------------- 公共工具

def _ci(count: int, config: ExperimentConfig) -> float:
    if count < 1:
        return 1.0
    return min(1.0, hoeffding_ci(count, config.confidence))


def _merge(parts: Sequence[dict]) -> dict:
    """按批次顺序累加各批次的计数"""
    total: dict = {}
    for part in parts:
        for key, value in part.items():
            total[key] = value if key not in total else total[key] + value
    return total


def _progress(manager: ReplicationManager):
    def listener(chunk_id: str, old_state: str, new_state: str):
        if new_state not in (ChunkState.COMPLETED, ChunkState.ERROR):
            return
        info = manager.get_chunk_info(chunk_id)
        done = len(manager.get_chunks_by_state(ChunkState.COMPLETED))
        log.debug(f"{info.name}#{info.index} {new_state}: {done}/{manager.get_total_count()} 个批次完成，"
                  f"{manager.get_active_count()} 个运行中")
    return listener


def _replicate(config: ExperimentConfig, name: str, task: Callable[[RandomSource, int, int], dict],
               stream: int = STREAM_RUNS, runs: Optional[int] = None) -> dict:
    manager = ReplicationManager(config.max_workers, config.chunk_size)
    manager.state_listeners.append(_progress(manager))
    return _merge(manager.map(name, runs or config.runs, config.seed, task, stream=(stream,)))


def _generator_spec(config: ExperimentConfig, kind: str) -> GeneratorSpec:
    spec = config.gen or GeneratorSpec()
    return spec.model_copy(update={"kind": kind})


def _probing_instance(config: ExperimentConfig, index: int = 0) -> ProbingInstance:
    if config.instance:
        instance = load_instance(config.instance)
    else:
        rng = RandomSource(config.seed, (STREAM_GENERATE, index))
        instance, _ = generate_instance(_generator_spec(config, "probing"), rng)
    if config.order:
        instance = ProbingInstance(instance.n, instance.p, instance.inner, instance.outer,
                                   instance.objective, tuple(config.order))
    return instance


def _kset_instance(config: ExperimentConfig) -> KSetInstance:
    if config.instance:
        return load_kset(config.instance)
    instance, _ = generate(_generator_spec(config, "kset"), RandomSource(config.seed, (STREAM_GENERATE, 0)))
    return instance


def _matching_instance(config: ExperimentConfig) -> MatchingInstance:
    if config.instance:
        return load_matching(config.instance)
    instance, _ = generate(_generator_spec(config, "matching"), RandomSource(config.seed, (STREAM_GENERATE, 0)))
    return instance


def scheme_point(instance: ProbingInstance, b: float) -> np.ndarray:
    """b 倍的分散点：P 中支撑尽量大的点再缩放"""
    return b * ProbingPolytope(instance).spread_point()


def _vector(values) -> list:
    return [round(float(v), DECIMALS) for v in values]


# ---------------------------------------------------------------- verify-scheme

def verify_scheme(config: ExperimentConfig, report: Report):
    instance = _probing_instance(config)
    x = scheme_point(instance, config.b)
    plan = prepare_scheme(instance, x, config.b)
    support = sorted(plan.support)
    n = instance.n
    c = balance_constant(config.b, plan.k)
    report.details.update(x=_vector(plan.x), balance_constant=c, k_in=instance.k_in, k_out=instance.k_out)
    log.info(f"verify-scheme: n={n}, k={plan.k}, b={config.b}, c={c:.4f}, |supp|={len(support)}")

    fixed_critical = plan.draw_critical(RandomSource(config.seed, (STREAM_CRITICAL,)))
    A_full = frozenset(support)
    aux = RandomSource(config.seed, (STREAM_AUX,))
    nested = {e: frozenset({e} | {f for f in support if f != e and aux.random() < 0.5}) for e in support}
    params = SchemeParams(b=config.b)
    traced = SchemeParams(b=config.b, record_trace=True)

    def task(rng: RandomSource, count: int, index: int) -> dict:
        kept = np.zeros(n)
        active = np.zeros(n)
        probed = np.zeros(n)
        stopped = np.zeros(n)
        full = np.zeros(n)
        partial = np.zeros(n)
        loads = np.zeros((len(plan.initial), n))
        for _ in range(count):
            run = trace_scheme(instance, plan.x, sample_r_of_x(plan.x, rng), params, rng, plan)
            for e in run.active_input:
                active[e] += 1
                kept[e] += e in run.S

            run = trace_scheme(instance, plan.x, A_full, traced, rng, plan, critical=fixed_critical)
            Q = run.trace.Q
            for e in support:
                probed[e] += e in Q
                stopped[e] += run.process.probed_at_stop(e)

            S_full = trace_scheme(instance, plan.x, A_full, params, rng, plan).S
            for e in support:
                full[e] += e in S_full
                partial[e] += e in trace_scheme(instance, plan.x, nested[e], params, rng, plan).S

            critical = plan.draw_critical(rng)
            for i, slot in enumerate(plan.initial):
                w = instance.p * plan.x if slot.side == INNER else plan.x
                gamma = blocking_sets(slot.state, critical[i])
                for e in support:
                    loads[i, e] += sum(w[f] for f in gamma.get(e, ()))
        return {"kept": kept, "active": active, "probed": probed, "stopped": stopped,
                "full": full, "partial": partial, "loads": loads}

    counts = _replicate(config, "verify-scheme", task)
    runs = config.runs
    for e in support:
        m = int(counts["active"][e])
        estimate = counts["kept"][e] / m if m else 0.0
        report.add(f"balance e={e}", "balance-guarantee", estimate, c, "lower", _ci(m, config), m)

    for e in support:
        closed = conditional_probe_probability(e, A_full, plan, fixed_critical, include_activation=False)
        report.add(f"closed-form e={e}", "conditional-probe-law", counts["probed"][e] / runs, closed, "equal",
                   _ci(runs, config), runs)
        load = blocking_load(e, A_full, plan, fixed_critical)
        report.add(f"stopped-martingale e={e}", "optional-stopping", load * counts["stopped"][e] / runs, 1.0,
                   "equal", load * _ci(runs, config), runs, spread=load)

    for e in support:
        diff = (counts["partial"][e] - counts["full"][e]) / runs
        report.add(f"monotonicity e={e}", "nested-inputs", diff, 0.0, "lower", 2 * _ci(runs, config), runs)

    for i, slot in enumerate(plan.initial):
        w = instance.p * plan.x if slot.side == INNER else plan.x
        for e in support:
            spread = float(sum(w[f] for f in support if f != e)) or 1.0
            report.add(f"blocking {slot.label} e={e}", "blocking-expectation", counts["loads"][i, e] / runs,
                       config.b, "upper", spread * _ci(runs, config), runs, spread=spread)


# ---------------------------------------------------------------- verify-mapping

def verify_mapping(config: ExperimentConfig, report: Report):
    instance = _probing_instance(config)
    plan = prepare_scheme(instance, scheme_point(instance, config.b), config.b)
    params = SchemeParams(b=config.b, check_invariants=True, record_trace=True)
    log.info(f"verify-mapping: n={instance.n}, {config.runs} 次带断言的运行")

    def task(rng: RandomSource, count: int, index: int) -> dict:
        violations = 0
        for _ in range(count):
            try:
                trace_scheme(instance, plan.x, sample_r_of_x(plan.x, rng), params, rng, plan)
            except InvariantViolation as e:
                violations += 1
                log.warning(f"批次 {index}: {e}")
        return {"violations": violations}

    violations = _replicate(config, "verify-mapping", task)["violations"]
    report.add("mapping properties", "exchange-properties", 1.0 - violations / config.runs, 1.0, "exact",
               count=config.runs)
    report.details["violations"] = int(violations)

    if config.dump_states:
        rng = RandomSource(config.seed, (STREAM_AUX,))
        run = trace_scheme(instance, plan.x, sample_r_of_x(plan.x, rng),
                           SchemeParams(b=config.b, check_invariants=True, dump_states=True), rng, plan)
        with open(config.dump_states, "w", encoding="utf-8") as f:
            f.write(dumps({"A": sorted(run.A), "critical": [c.to_dict() for c in run.critical],
                           "states": run.states}))
        log.info(f"状态快照已写入 {config.dump_states}（{len(run.states)} 步）")


# ---------------------------------------------------------------- greedy / e2e

def _greedy(config: ExperimentConfig, instance: ProbingInstance):
    P = ProbingPolytope(instance)
    gradient = "exact" if instance.n <= config.exact_cap else "sampled"
    greedy_config = GreedyConfig(b=config.b, delta=config.delta, gradient=gradient, samples=config.samples,
                                 step_slack=config.step_slack, exact_cap=config.exact_cap)
    result = measured_continuous_greedy(instance.objective, P, greedy_config,
                                        RandomSource(config.seed, (STREAM_AUX,)))
    return P, result


def greedy(config: ExperimentConfig, report: Report):
    instance = _probing_instance(config)
    P, result = _greedy(config, instance)
    best = result.f_plus_value if result.f_plus_value is not None else P.max_f_plus(instance.objective)[0]
    factor = greedy_factor(config)
    log.info(f"greedy: G(y)={result.value:.6f}, max f⁺={best:.6f}")
    report.add("greedy value", "measured-greedy", result.value, factor * best, "exact")
    report.add("greedy membership", "scaled-polytope", float(P.contains(result.y, config.b)), 1.0, "exact")
    if result.f_plus_value is not None:
        report.add("greedy per-step gain", "per-step-bound", 1.0 - len(result.step_violations) / result.steps,
                   1.0, "exact", count=result.steps)
    report.details.update(y=_vector(result.y), F=round(result.value, DECIMALS), f_plus_max=round(best, DECIMALS),
                          steps=result.steps)


def e2e(config: ExperimentConfig, report: Report):
    instance = _probing_instance(config)
    f = instance.objective
    _, result = _greedy(config, instance)
    opt = brute_force_opt(instance, config.dp_cap)
    plan = prepare_scheme(instance, result.y, config.b)
    params = SchemeParams(b=config.b)
    top = float(np.max(f.table)) or 1.0
    log.info(f"e2e: OPT={opt.value:.6f}, G(y)={result.value:.6f}")

    def task(rng: RandomSource, count: int, index: int) -> dict:
        total = 0.0
        offline = 0.0
        worse = 0
        for _ in range(count):
            run = run_scheme_with_pruning(instance, plan.x, f, params, rng, plan)
            total += f.value(run.S_prun)
            pruned = f.value(run.S_eta)
            offline += pruned
            worse += pruned < f.value(run.S_prun | run.S_virt) - EXACT_TOL
        return {"value": total, "offline": offline, "worse": worse}

    counts = _replicate(config, "e2e", task)
    mean = counts["value"] / config.runs
    offline = counts["offline"] / config.runs
    c = balance_constant(config.b, plan.k)
    ci = top * _ci(config.runs, config)
    target = c * greedy_factor(config) * opt.value
    report.add("e2e value", "end-to-end", mean, target, "lower", ci, config.runs, spread=top)
    if opt.value > 0:
        report.add("e2e ratio", "end-to-end-factor", mean / opt.value,
                   end_to_end_factor(config.b, plan.k) - c * config.tolerance, "lower",
                   ci / opt.value, config.runs, spread=top / opt.value)
    F_px = multilinear_F(f, instance.p * plan.x).value
    report.add("e2e scheme input", "multilinear-bound", mean, c * F_px, "lower", ci, config.runs, spread=top)
    report.add("e2e offline pruning", "offline-pruning", offline, c * F_px, "lower", ci, config.runs, spread=top)
    report.add("e2e pruning gain", "pruning-monotone", 1.0 - counts["worse"] / config.runs, 1.0, "exact",
               count=config.runs)
    report.details.update(opt=round(opt.value, DECIMALS), mean=round(mean, DECIMALS),
                          offline=round(offline, DECIMALS), order=list(instance.order),
                          y=_vector(result.y), factor=round(end_to_end_factor(config.b, plan.k), DECIMALS))

    if instance.n <= PRUNING_IDENTITY_CAP:
        _pruning_identity(config, report, instance, plan)


def greedy_factor(config: ExperimentConfig) -> float:
    return config.b * math.exp(-config.b) - config.tolerance


def _pruning_identity(config: ExperimentConfig, report: Report, instance: ProbingInstance, plan):
    """S^prun + S^virt 与不剪枝方案输出同分布"""
    params = SchemeParams(b=config.b)

    def task(rng: RandomSource, count: int, index: int) -> dict:
        pruned, plain = [], []
        for _ in range(count):
            run = run_scheme_with_pruning(instance, plan.x, instance.objective, params, rng, plan)
            pruned.append(run.S_prun | run.S_virt)
            plain.append(trace_scheme(instance, plan.x, sample_r_of_x(plan.x, rng), params, rng, plan).S)
        return {"pruned": pruned, "plain": plain}

    samples = _replicate(config, "pruning-identity", task, stream=STREAM_AUX)
    p_value = chi_square_equal(samples["pruned"], samples["plain"], all_subsets(instance.n))
    report.add("pruning identity", "pruning-on-the-fly", p_value, P_VALUE_FLOOR, "exact", count=config.runs)


# ---------------------------------------------------------------- kset / matching

def kset(config: ExperimentConfig, report: Report):
    instance = _kset_instance(config)
    x = solve_kset_lp(instance)
    plan = prepare_kset(instance, x)
    k = instance.k
    log.info(f"kset: n={instance.n}, d={instance.d}, k={k}")

    def task(rng: RandomSource, count: int, index: int) -> dict:
        probed = np.zeros(instance.n)
        value = 0.0
        violations = 0
        for _ in range(count):
            try:
                run = run_kset(instance, plan.x, rng, plan)
            except InvariantViolation as e:
                violations += 1
                log.warning(f"批次 {index}: {e}")
                continue
            for e in run.taken:
                probed[e] += 1
            value += run.value
        return {"probed": probed, "value": value, "violations": violations}

    counts = _replicate(config, "kset", task)
    runs = config.runs
    for e in range(instance.n):
        if plan.x[e] <= 0:
            continue
        report.add(f"kset probe e={e}", "kset-probe", counts["probed"][e] / runs, plan.x[e] / (k + 1), "lower",
                   _ci(runs, config), runs)
    report.add("kset capacities", "capacity", 1.0 - counts["violations"] / runs, 1.0, "exact", count=runs)
    top = float(sum(max(0.0, float(np.max(c.values))) for c in instance.columns)) or 1.0
    lp = float(instance.expected_values() @ plan.x)
    report.add("kset value", "kset-approximation", counts["value"] / runs, lp / (k + 1), "lower",
               top * _ci(runs, config), runs, spread=top)
    report.details.update(x=_vector(plan.x), lp_value=round(lp, DECIMALS), k=k)


def matching(config: ExperimentConfig, report: Report):
    instance = _matching_instance(config)
    x = solve_matching_lp(instance)
    graph = instance.graph()
    neighbours = [instance.neighbours(i) for i in range(instance.m)]
    log.info(f"matching: {instance.left}×{instance.right}, {instance.m} 条边")

    def task(rng: RandomSource, count: int, index: int) -> dict:
        rounded = np.zeros(instance.m)
        probed = np.zeros(instance.m)
        load = np.zeros(instance.m)
        weight = 0.0
        for _ in range(count):
            X_hat = gkps_round(x, graph, rng, instance.nodes)
            check_degrees(x, X_hat, graph, instance.nodes)
            run = run_matching(instance, X_hat, rng)
            done: Set[int] = set(run.probed)
            for i in np.flatnonzero(X_hat == 1):
                rounded[i] += 1
                probed[i] += i in done
                load[i] += sum(instance.p[j] * X_hat[j] for j in neighbours[i])
            weight += run.weight
        return {"rounded": rounded, "probed": probed, "load": load, "weight": weight}

    counts = _replicate(config, "matching", task)
    runs = config.runs
    for i in range(instance.m):
        report.add(f"gkps marginal e={i}", "gkps-marginal", counts["rounded"][i] / runs, x[i], "equal",
                   _ci(runs, config), runs)
        m = int(counts["rounded"][i])
        if not m:
            continue
        estimate = counts["probed"][i] / m
        report.add(f"matching probe e={i}", "matching-probe", estimate, 1.0 / 3.0, "lower", _ci(m, config), m)
        report.add(f"matching probe bound e={i}", "matching-closed-form", estimate,
                   probe_lower_bound(instance, x, i), "lower", _ci(m, config), m)
        spread = float(sum(instance.p[j] for j in neighbours[i])) or 1.0
        report.add(f"gkps negative correlation e={i}", "gkps-negative-correlation", counts["load"][i] / m,
                   2.0 - 2.0 * instance.p[i] * x[i], "upper", spread * _ci(m, config), m, spread=spread)
    top = float(instance.w.sum()) or 1.0
    value = lp_value(instance, x)
    report.add("matching weight", "matching-approximation", counts["weight"] / runs,
               (1.0 / 3.0 - MATCHING_SLACK) * value, "lower", top * _ci(runs, config), runs, spread=top)
    report.details.update(x=_vector(x), lp_value=round(value, DECIMALS))


# ---------------------------------------------------------------- relaxation / combined

def relaxation(config: ExperimentConfig, report: Report):
    count = 1 if config.instance else min(config.runs, RELAXATION_INSTANCES)
    log.info(f"relaxation: {count} 个实例")
    dumps_failed = []
    for index in range(count):
        instance = _probing_instance(config, index)
        result = verify_relaxation_bound(instance, ProbingPolytope(instance), config.dp_cap)
        tag = f"instance {index}"
        report.add(f"relaxation f⁺(x_OPT·p) {tag}", "relaxation-bound", result.f_plus_at_opt, result.opt, "exact")
        report.add(f"relaxation max f⁺ {tag}", "relaxation-bound", result.f_plus_max, result.opt, "exact")
        report.add(f"relaxation x_OPT∈P {tag}", "relaxation-feasible", float(bool(result.x_opt_in_polytope)), 1.0,
                   "exact")
        if result.dump is not None:
            dumps_failed.append(result.dump)
    if dumps_failed:
        report.details["failed_instances"] = dumps_failed


def combined(config: ExperimentConfig, report: Report):
    instance = _probing_instance(config)
    n = instance.n
    x = scheme_point(instance, config.b)
    p = instance.p
    outer = GreedyScheme(instance.outer) if instance.outer else AcceptAllScheme(n)
    inner = GreedyScheme(instance.inner) if instance.inner else AcceptAllScheme(n)
    c_out = exact_balance(outer, x)
    c_in = exact_balance(inner, p * x)
    support = [int(e) for e in np.flatnonzero((x > 0) & (p > 0))]
    log.info(f"combined: c_out={c_out:.4f}, c_in={c_in:.4f}")

    def task(rng: RandomSource, count: int, index: int) -> dict:
        kept = np.zeros(n)
        active = np.zeros(n)
        for _ in range(count):
            A = sample_r_of_x(x, rng)
            run = combined_scheme(outer, inner, x, p, A, rng)
            revealed = {e: o.success for e, o in run.trace.probed}
            for e in sorted(A):
                if e not in revealed:
                    revealed[e] = rng.bernoulli(float(p[e]))
                if revealed[e]:
                    active[e] += 1
                    kept[e] += e in run.S
        return {"kept": kept, "active": active}

    counts = _replicate(config, "combined", task)
    for e in support:
        m = int(counts["active"][e])
        estimate = counts["kept"][e] / m if m else 0.0
        report.add(f"combined balance e={e}", "combining", estimate, c_out * c_in, "lower", _ci(m, config), m)
    report.details.update(
        x=_vector(x), c_out=round(c_out, DECIMALS), c_in=round(c_in, DECIMALS),
        ordered_greedy=[round(ordered_greedy_constant(config.b, k), DECIMALS) for k in (instance.k_out, instance.k_in)],
        independent_rounding=[round(independent_rounding_constant(config.b, k), DECIMALS)
                              for k in (instance.k_out, instance.k_in)],
    )


# ---------------------------------------------------------------- generate

def generate_file(config: ExperimentConfig, report: Report):
    spec = config.gen or GeneratorSpec()
    seed = config.seed if config.seed is not None else 0
    _, text = generate(spec, RandomSource(seed, (STREAM_GENERATE, 0)))
    if config.out.endswith(".json"):
        path = config.out
    else:
        os.makedirs(config.out, exist_ok=True)
        path = os.path.join(config.out, f"{spec.kind}-{seed}.json")
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    log.info(f"实例已写入 {path}")
    report.details["path"] = path


PIPELINES: Dict[str, Callable[[ExperimentConfig, Report], None]] = {
    "verify-scheme": verify_scheme,
    "verify-mapping": verify_mapping,
    "greedy": greedy,
    "e2e": e2e,
    "kset": kset,
    "matching": matching,
    "relaxation": relaxation,
    "combined": combined,
    "generate": generate_file,
}


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """执行子命令对应的流水线；内部不变式被破坏时记为未通过的报告行"""
    if config.debug:
        log.enable_debug()
    report = Report(config)
    log.info(f"开始 {config.subcommand}: seed={config.seed}, runs={config.runs}, b={config.b}")
    try:
        PIPELINES[config.subcommand](config, report)
    except InvariantViolation as e:
        log.error(f"{config.subcommand} 中不变式被破坏: {e}")
        report.fail("invariant", str(e))
    result = ExperimentResult(report)
    if write and config.subcommand != "generate":
        result.paths = report.write()
    passed = sum(row.verdict == PASS for row in report.rows)
    log.info(f"{config.subcommand} 完成: {passed}/{len(report.rows)} 行通过，退出码 {result.status}")
    return result
