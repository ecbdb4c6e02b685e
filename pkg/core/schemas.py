"""
实例文件、生成器规格与实验配置的数据模型（pydantic）

拟阵与目标函数块都以 "type" 字段区分。
"""
from __future__ import annotations

import json
from typing import Annotated, List, Literal, Optional, Tuple, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import log_maker
from .errors import ConfigError, DomainError
from .matroids import EnumeratedMatroid, Matroid, PartitionMatroid, TransversalMatroid, UniformMatroid
from .model import ProbingInstance
from .submodular import CoverageFunction, CutFunction, LinearFunction, SubmodularFunction, TableFunction

log = log_maker.logger("schemas")

DECIMALS = 6
VERIFY_COMMANDS = ("verify-scheme", "verify-mapping", "greedy", "e2e", "kset", "matching", "relaxation", "combined")
COMMANDS = VERIFY_COMMANDS + ("generate",)

Model = TypeVar("Model", bound=BaseModel)


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---------------------------------------------------------------- 拟阵块

class TransversalBlock(Strict):
    type: Literal["transversal"]
    edges: List[Tuple[int, int]]

    def build(self, n: int) -> Matroid:
        return TransversalMatroid(n, self.edges)


class PartitionBlock(Strict):
    type: Literal["partition"]
    blocks: List[List[int]]
    capacities: List[int]

    def build(self, n: int) -> Matroid:
        return PartitionMatroid(n, self.blocks, self.capacities)


class UniformBlock(Strict):
    type: Literal["uniform"]
    rank: int = Field(ge=0)
    subset: Optional[List[int]] = None

    def build(self, n: int) -> Matroid:
        return UniformMatroid(n, self.rank, self.subset)


class EnumeratedBlock(Strict):
    type: Literal["enumerated"]
    family: List[List[int]]

    def build(self, n: int) -> Matroid:
        return EnumeratedMatroid(n, self.family)


MatroidBlock = Annotated[Union[TransversalBlock, PartitionBlock, UniformBlock, EnumeratedBlock],
                         Field(discriminator="type")]


# ---------------------------------------------------------------- 目标函数块

class TableBlock(Strict):
    type: Literal["table"]
    table: List[Tuple[int, float]]

    def build(self, n: int) -> SubmodularFunction:
        return TableFunction(n, self.table)


class LinearBlock(Strict):
    type: Literal["linear"]
    weights: List[float]

    def build(self, n: int) -> SubmodularFunction:
        if len(self.weights) != n:
            raise DomainError(f"线性权重个数 {len(self.weights)} 与 n={n} 不符")
        return LinearFunction(self.weights)


class CoverageBlock(Strict):
    type: Literal["coverage"]
    sets: List[List[int]]
    weights: List[float]

    def build(self, n: int) -> SubmodularFunction:
        if len(self.sets) != n:
            raise DomainError(f"覆盖集合个数 {len(self.sets)} 与 n={n} 不符")
        return CoverageFunction(self.sets, self.weights)


class CutBlock(Strict):
    type: Literal["cut"]
    edges: List[List[float]]
    directed: bool = False

    def build(self, n: int) -> SubmodularFunction:
        return CutFunction(n, self.edges, self.directed)


ObjectiveBlock = Annotated[Union[TableBlock, LinearBlock, CoverageBlock, CutBlock], Field(discriminator="type")]


# ---------------------------------------------------------------- 文件

class InstanceFile(Strict):
    elements: List[int]
    p: List[float]
    inner: List[MatroidBlock] = []
    outer: List[MatroidBlock] = []
    objective: Optional[ObjectiveBlock] = None

    @model_validator(mode="after")
    def _check_shape(self):
        n = len(self.elements)
        if sorted(self.elements) != list(range(n)):
            raise ValueError("elements 必须是 0..n-1 的一个排列")
        if len(self.p) != n:
            raise ValueError(f"p 的长度 {len(self.p)} 与元素数 {n} 不符")
        if any(not 0.0 <= v <= 1.0 for v in self.p):
            raise ValueError("激活概率必须位于 [0,1]")
        return self

    def to_instance(self) -> ProbingInstance:
        n = len(self.elements)
        objective = self.objective.build(n) if self.objective is not None else None
        return ProbingInstance(n=n, p=self.p, inner=[m.build(n) for m in self.inner],
                               outer=[m.build(n) for m in self.outer], objective=objective,
                               order=tuple(self.elements))


class KSetOutcome(Strict):
    prob: float = Field(ge=0.0, le=1.0)
    value: float
    size: List[int] = []


class KSetColumn(Strict):
    support: List[int]
    outcomes: List[KSetOutcome]

    @model_validator(mode="after")
    def _check_outcomes(self):
        total = sum(o.prob for o in self.outcomes)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"结果概率之和为 {total}，应为 1")
        allowed = set(self.support)
        for o in self.outcomes:
            if not set(o.size) <= allowed:
                raise ValueError(f"结果的尺寸 {o.size} 超出列支撑 {self.support}")
        return self


class KSetFile(Strict):
    d: int = Field(ge=1)
    capacities: List[int]
    columns: List[KSetColumn]

    @model_validator(mode="after")
    def _check_dims(self):
        if len(self.capacities) != self.d:
            raise ValueError("容量个数必须等于维数 d")
        if any(c < 1 for c in self.capacities):
            raise ValueError("容量必须为正整数")
        for column in self.columns:
            if any(not 0 <= j < self.d for j in column.support):
                raise ValueError(f"列支撑 {column.support} 越界")
        return self


class MatchingEdge(Strict):
    u: int = Field(ge=0)
    v: int = Field(ge=0)
    p: float = Field(gt=0.0, le=1.0)
    w: float = Field(gt=0.0)


class MatchingFile(Strict):
    left: int = Field(ge=1)
    right: int = Field(ge=1)
    patience: List[int]
    edges: List[MatchingEdge]

    @model_validator(mode="after")
    def _check_graph(self):
        if len(self.patience) != self.left + self.right:
            raise ValueError("patience 的长度必须为 left+right")
        if any(t < 1 for t in self.patience):
            raise ValueError("耐心值至少为 1")
        for edge in self.edges:
            if edge.u >= self.left or edge.v >= self.right:
                raise ValueError(f"边 ({edge.u},{edge.v}) 的端点越界")
        return self


class GeneratorSpec(Strict):
    kind: Literal["probing", "kset", "matching"] = "probing"
    n: int = Field(default=6, ge=1, le=20)
    k_in: int = Field(default=1, ge=0)
    k_out: int = Field(default=1, ge=0)
    shape: Literal["transversal", "partition", "uniform"] = "transversal"
    objective: Literal["table", "linear", "coverage", "cut"] = "table"
    p_range: Tuple[float, float] = (0.3, 1.0)
    vertices: Optional[int] = Field(default=None, ge=1)
    degree: int = Field(default=2, ge=1)
    d: int = Field(default=4, ge=1)
    k: int = Field(default=2, ge=1)
    capacity: int = Field(default=1, ge=0)
    outcomes: int = Field(default=3, ge=1)
    left: int = Field(default=3, ge=1)
    right: int = Field(default=3, ge=1)
    edge_prob: float = Field(default=0.6, gt=0.0, le=1.0)
    patience_max: int = Field(default=2, ge=1)

    @field_validator("p_range")
    @classmethod
    def _check_range(cls, value):
        lo, hi = value
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("p_range 必须满足 0 ≤ lo ≤ hi ≤ 1")
        return value


class ExperimentConfig(Strict):
    subcommand: Literal[COMMANDS]
    instance: Optional[str] = None
    gen: Optional[GeneratorSpec] = None
    runs: int = Field(default=20000, ge=1)
    seed: Optional[int] = None
    b: float = Field(default=1.0, gt=0.0, le=1.0)
    delta: float = Field(default=0.01, gt=0.0)
    samples: int = Field(default=10000, ge=2)
    out: str = "reports"
    formats: List[Literal["csv", "json"]] = ["csv", "json"]
    confidence: float = Field(default=0.99, gt=0.0, lt=1.0)
    max_ci: float = Field(default=0.05, gt=0.0)
    tolerance: float = Field(default=0.02, ge=0.0)
    step_slack: float = Field(default=0.05, ge=0.0)
    exact_cap: int = Field(default=12, ge=1)
    dp_cap: int = Field(default=10, ge=1)
    max_workers: int = Field(default=0, ge=0)
    chunk_size: int = Field(default=2000, ge=1)
    debug: bool = False
    dump_states: Optional[str] = None
    order: Optional[List[int]] = None

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.delta > self.b:
            raise ValueError(f"步长 δ={self.delta} 不能大于 b={self.b}")
        if self.subcommand in VERIFY_COMMANDS and self.seed is None:
            raise ValueError(f"{self.subcommand} 需要随机种子")
        return self

    @classmethod
    def from_settings(cls, subcommand: str, settings: dict, **overrides) -> "ExperimentConfig":
        """settings.json 的取值在前，命令行覆盖在后"""
        experiment = settings.get("experiment", {})
        verify = settings.get("verify", {})
        limits = settings.get("limits", {})
        workers = settings.get("workers", {})
        values = {
            "subcommand": subcommand,
            "runs": experiment.get("runs"),
            "seed": experiment.get("seed"),
            "b": experiment.get("b"),
            "delta": experiment.get("delta"),
            "samples": experiment.get("samples"),
            "formats": experiment.get("formats"),
            "confidence": verify.get("confidence"),
            "max_ci": verify.get("max_ci"),
            "tolerance": verify.get("tolerance"),
            "step_slack": verify.get("step_slack"),
            "exact_cap": limits.get("exact_cap"),
            "dp_cap": limits.get("dp_cap"),
            "max_workers": workers.get("max_workers"),
            "chunk_size": workers.get("chunk_size"),
            "out": settings.get("output", {}).get("dir"),
            "debug": settings.get("debug"),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        values = {k: v for k, v in values.items() if v is not None}
        try:
            return cls.model_validate(values)
        except ValidationError as e:
            raise ConfigError(f"实验配置无效: {_first_error(e)}") from e


def _first_error(error: ValidationError) -> str:
    first = error.errors()[0]
    where = ".".join(str(part) for part in first.get("loc", ()))
    return f"{where}: {first.get('msg')}" if where else str(first.get("msg"))


# ---------------------------------------------------------------- 读写

def read_model(path: str, model: Type[Model]) -> Model:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        return model.model_validate_json(text)
    except ValidationError as e:
        raise DomainError(f"文件 {path} 不符合 {model.__name__} 格式: {_first_error(e)}") from e


def load_instance(path: str) -> ProbingInstance:
    instance = read_model(path, InstanceFile).to_instance()
    log.info(f"已加载实例 {path}: n={instance.n}, k_in={instance.k_in}, k_out={instance.k_out}")
    return instance


def parse_instance(data: dict) -> ProbingInstance:
    try:
        return InstanceFile.model_validate(data).to_instance()
    except ValidationError as e:
        raise DomainError(f"实例格式错误: {_first_error(e)}") from e


def _round(values) -> list:
    return [round(float(v), DECIMALS) for v in values]


def instance_to_dict(instance: ProbingInstance) -> dict:
    data = {
        "elements": list(instance.order),
        "p": _round(instance.p),
        "inner": [m.to_block() for m in instance.inner],
        "outer": [m.to_block() for m in instance.outer],
    }
    if instance.objective is not None:
        data["objective"] = instance.objective.to_block()
    return data


def dumps(data: dict) -> str:
    """确定性的 JSON 文本：键排序，结尾换行"""
    return json.dumps(data, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def dump_instance(instance: ProbingInstance, path: str):
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(instance_to_dict(instance)))
