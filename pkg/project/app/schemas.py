from __future__ import annotations

import math
import re
from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# Simulation parameters
class SimParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: float = Field(0.8, ge=0, le=1, description="Direct-link generation probability per edge per unit time")
    q: float = Field(0.8, ge=0, le=1, description="Swap success probability")
    t_co: int = Field(2, ge=1, description="Coherence time in unit times")


class SimulationOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    slow_control: bool = Field(False, description="Limit DODAG joins to one hop per round")
    via_root_strict: bool = Field(False, description="Single-tree routes must pass through the root")
    audit: bool = Field(False, description="Run the structural auditors after every step")
    trace_control: bool = Field(False, description="Log every control message at DEBUG")


# Root strategies
RootKind = Literal[
    "explicit",
    "grid-center",
    "grid-quadrants",
    "min-eccentricity",
    "density-clusters",
    "max-degree",
    "bridge-endpoint",
]

_COUNTED_KINDS = {"min-eccentricity", "density-clusters", "max-degree"}


class RootStrategy(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: RootKind
    nodes: Optional[List[int]] = None
    k: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_arguments(self) -> "RootStrategy":
        if self.kind == "explicit":
            if not self.nodes:
                raise ValueError("explicit root list must be non-empty")
            if any(n < 0 for n in self.nodes):
                raise ValueError("root ids must be non-negative")
        elif self.kind in _COUNTED_KINDS and self.k is None:
            raise ValueError(f"{self.kind} needs a root count k")
        return self

    @classmethod
    def parse(cls, text: str) -> "RootStrategy":
        kind, _, arg = text.strip().partition(":")
        kind = kind.strip()
        if kind == "explicit":
            return cls(kind=kind, nodes=[int(x) for x in arg.split(",") if x.strip()])
        if kind in _COUNTED_KINDS:
            return cls(kind=kind, k=int(arg) if arg else 1)
        return cls(kind=kind)

    def __str__(self) -> str:
        if self.kind == "explicit":
            return "explicit:" + ",".join(str(n) for n in self.nodes or [])
        if self.kind in _COUNTED_KINDS:
            return f"{self.kind}:{self.k}"
        return self.kind


# Schemes
class SchemeKind(str, Enum):
    MULTI_TREE = "multi-tree"
    SINGLE_TREE = "single-tree"
    SYNCHRONOUS = "synchronous"

    @property
    def is_asynchronous(self) -> bool:
        return self is not SchemeKind.SYNCHRONOUS


class Scheme(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: SchemeKind
    roots: List[int] = []

    @model_validator(mode="after")
    def _check_roots(self) -> "Scheme":
        if self.kind is SchemeKind.MULTI_TREE and len(self.roots) < 2:
            raise ValueError("multi-tree needs at least 2 roots")
        if self.kind is SchemeKind.SINGLE_TREE and len(self.roots) != 1:
            raise ValueError("single-tree needs exactly 1 root")
        if len(set(self.roots)) != len(self.roots):
            raise ValueError("roots must be distinct")
        return self


# Workload
class WorkloadSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    distances: List[int] = Field(..., min_length=1)
    attempts_per_point: int = Field(1000, ge=1)
    warmup_steps: int = Field(5, ge=0)

    @field_validator("distances")
    @classmethod
    def _positive(cls, value: List[int]) -> List[int]:
        if any(d < 1 for d in value):
            raise ValueError("distances must be >= 1")
        return value


# Topology description
TopologyKind = Literal["grid", "er", "barbell", "path", "file"]

BARBELL_DEFAULT_P = 0.08


class TopologySpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: TopologyKind
    rows: Optional[int] = Field(None, ge=1)
    cols: Optional[int] = Field(None, ge=1)
    n: Optional[int] = Field(None, ge=1)
    p_edge: Optional[float] = Field(None, ge=0, le=1)
    path: Optional[Path] = None

    @model_validator(mode="after")
    def _check_shape(self) -> "TopologySpec":
        if self.kind == "grid" and (self.rows is None or self.cols is None):
            raise ValueError("grid needs rows and cols")
        if self.kind in ("er", "path") and self.n is None:
            raise ValueError(f"{self.kind} needs a node count")
        if self.kind == "er" and self.p_edge is None:
            raise ValueError("er needs an edge probability")
        if self.kind == "barbell" and (self.n is None or self.n < 2):
            raise ValueError("barbell needs a cluster size >= 2")
        if self.kind == "file" and self.path is None:
            raise ValueError("file topology needs a path")
        return self

    @classmethod
    def parse(cls, text: str) -> "TopologySpec":
        kind, _, rest = text.strip().partition(":")
        if kind == "grid":
            match = re.fullmatch(r"(\d+)[xX](\d+)", rest.strip())
            if not match:
                raise ValueError(f"grid shape must look like 10x10, got {rest!r}")
            return cls(kind="grid", rows=int(match.group(1)), cols=int(match.group(2)))
        if kind == "er":
            n, _, p = rest.partition(":")
            return cls(kind="er", n=int(n), p_edge=float(p))
        if kind == "barbell":
            n, _, p = rest.partition(":")
            return cls(kind="barbell", n=int(n), p_edge=float(p) if p else BARBELL_DEFAULT_P)
        if kind == "path":
            return cls(kind="path", n=int(rest))
        if kind == "file":
            return cls(kind="file", path=Path(rest))
        return cls(kind=kind)  # type: ignore[arg-type]

    def __str__(self) -> str:
        if self.kind == "grid":
            return f"grid:{self.rows}x{self.cols}"
        if self.kind == "er":
            return f"er:{self.n}:{self.p_edge:g}"
        if self.kind == "barbell":
            return f"barbell:{self.n}:{self.p_edge:g}"
        if self.kind == "path":
            return f"path:{self.n}"
        return f"file:{self.path}"


# Output rows
class RateRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    scheme: SchemeKind
    topology: str
    distance: int = Field(..., ge=1)
    attempts: int = Field(..., gt=0)
    successes: int = Field(..., ge=0)
    seed: int

    @model_validator(mode="after")
    def _check_counts(self) -> "RateRecord":
        if self.successes > self.attempts:
            raise ValueError("successes cannot exceed attempts")
        return self

    @property
    def rate(self) -> float:
        return self.successes / self.attempts

    @property
    def std_error(self) -> float:
        return math.sqrt(self.rate * (1 - self.rate) / self.attempts)


# Experiment configuration
class ExperimentConfig(BaseModel):
    topology: TopologySpec
    schemes: List[SchemeKind] = Field(..., min_length=1)
    p: float = Field(0.8, ge=0, le=1)
    q: float = Field(0.8, ge=0, le=1)
    t_co: int = Field(2, ge=1)
    roots: Dict[SchemeKind, RootStrategy] = {}
    distances: List[int] = Field(default_factory=lambda: list(range(1, 11)), min_length=1)
    attempts_per_point: int = Field(1000, ge=1)
    warmup_steps: int = Field(5, ge=0)
    seed: int = 0
    output: Path = Path("results.csv")
    slow_control: bool = False
    via_root_strict: bool = False

    @field_validator("distances")
    @classmethod
    def _positive(cls, value: List[int]) -> List[int]:
        if any(d < 1 for d in value):
            raise ValueError("distances must be >= 1")
        return value

    @field_validator("schemes")
    @classmethod
    def _unique(cls, value: List[SchemeKind]) -> List[SchemeKind]:
        if len(set(value)) != len(value):
            raise ValueError("schemes must not repeat")
        return value

    @model_validator(mode="after")
    def _fill_roots(self) -> "ExperimentConfig":
        roots = dict(self.roots)
        for kind in self.schemes:
            if kind.is_asynchronous and kind not in roots:
                roots[kind] = default_root_strategy(self.topology, kind)
        self.roots = roots
        return self

    def params(self) -> SimParams:
        return SimParams(p=self.p, q=self.q, t_co=self.t_co)

    def workload(self) -> WorkloadSpec:
        return WorkloadSpec(
            distances=self.distances,
            attempts_per_point=self.attempts_per_point,
            warmup_steps=self.warmup_steps,
        )

    def options(self, trace_control: bool = False, audit: bool = False) -> SimulationOptions:
        return SimulationOptions(
            slow_control=self.slow_control,
            via_root_strict=self.via_root_strict,
            trace_control=trace_control,
            audit=audit,
        )


def default_root_strategy(topology: TopologySpec, kind: SchemeKind) -> RootStrategy:
    if topology.kind == "grid":
        return RootStrategy(kind="grid-quadrants" if kind is SchemeKind.MULTI_TREE else "grid-center")
    if kind is SchemeKind.MULTI_TREE:
        return RootStrategy(kind="density-clusters", k=4)
    if topology.kind == "barbell":
        return RootStrategy(kind="bridge-endpoint")
    return RootStrategy(kind="min-eccentricity", k=1)
