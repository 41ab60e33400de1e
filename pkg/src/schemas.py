from fractions import Fraction
from pathlib import Path
from typing import Annotated, Any, List, Literal, Optional

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    ValidationInfo,
    WithJsonSchema,
    model_validator,
)

from src.core.topology import Topology, TopologyKind, build_custom, build_topology, load_topology
from src.errors import ConsensusLabError
from src.services.strategies import Communication, Mode, StrategySpace


def _parse_rational(value: Any) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError("probabilities are rationals, not booleans")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as err:
            raise ValueError(f"{value!r} is not a rational like '3/4'") from err
    raise ValueError("give probabilities as 'p/q' strings so they stay exact")


Rational = Annotated[
    Fraction,
    BeforeValidator(_parse_rational),
    PlainSerializer(lambda f: f"{f.numerator}/{f.denominator}", return_type=str),
    WithJsonSchema({"type": "string", "examples": ["1/2"]}),
]


class TopologyModel(BaseModel):
    kind: TopologyKind
    n: Optional[int] = Field(default=None, ge=2)
    edges: Optional[List[List[int]]] = None
    path: Optional[str] = None

    @model_validator(mode="after")
    def resolve(self, info: ValidationInfo):
        if self.path is not None:
            if self.kind is not TopologyKind.custom or self.edges is not None:
                raise ValueError("a topology file replaces the edges of a custom topology")
            path = Path(self.path)
            if not path.is_absolute():
                path = Path((info.context or {}).get("base_dir", ".")) / path
            try:
                loaded = load_topology(path)
            except ConsensusLabError as err:
                raise ValueError(str(err)) from err
            if self.n is not None and self.n != loaded.n:
                raise ValueError(f"n={self.n} contradicts the {loaded.n} agents of {self.path}")
            self.n = loaded.n
            self.edges = [list(edge) for edge in sorted(loaded.edges)]
        if self.n is None:
            raise ValueError("the topology needs n")
        if self.kind is TopologyKind.custom and self.edges is None:
            raise ValueError("custom topologies list their edges or name a topology file")
        return self

    def build(self) -> Topology:
        if self.kind is TopologyKind.custom:
            return build_custom(self.n, self.edges)
        return build_topology(self.kind, self.n)


class StrategySpaceModel(BaseModel):
    families: List[Mode] = [Mode.misreport, Mode.split_view, Mode.withhold]
    communication: Communication = Communication.telepathic
    rounds: int = Field(default=2, ge=1)

    def build(self) -> StrategySpace:
        return StrategySpace(tuple(self.families), self.communication, self.rounds)


class OutputPaths(BaseModel):
    traces: str = "traces.jsonl"
    summary: str = "summary.json"
    outcomes: str = "outcomes.csv"
    report: str = "report.json"
    witnesses: str = "witnesses"


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, extra="forbid")

    name: str = "experiment"
    protocol: str
    topology: TopologyModel
    r: int = Field(default=2, ge=2)
    distribution: Optional[List[Rational]] = None
    randomized: bool = True
    coalition: List[int] = []
    strategy_space: StrategySpaceModel = StrategySpaceModel()
    prefer: List[int] = [1]
    sweep_sizes: List[int] = []
    split_leader: Optional[List[int]] = Field(default=None, min_length=2, max_length=2)
    check: Optional[Literal["encoding", "ris-resilience", "silences", "transform"]] = None
    rewrite: bool = False
    sharing: Literal["none", "coalition"] = "coalition"
    cap: Optional[int] = Field(default=None, gt=0)
    expect: Optional[Literal["legal", "erroneous", "equilibrium", "deviation", "pass", "fail"]] = None
    outputs: OutputPaths = OutputPaths()

    @model_validator(mode="after")
    def consistent(self):
        if self.distribution is not None:
            if len(self.distribution) != self.r:
                raise ValueError(f"distribution has {len(self.distribution)} entries for r={self.r}")
            if any(p < 0 for p in self.distribution):
                raise ValueError("distribution entries must be non-negative")
            if sum(self.distribution, Fraction(0)) != 1:
                raise ValueError("distribution must sum to exactly 1")
        n = self.topology.n
        members = set(self.coalition)
        if len(members) != len(self.coalition) or any(not 0 <= k < n for k in members):
            raise ValueError(f"coalition {self.coalition} must list distinct agents of 0..{n - 1}")
        if members and len(members) >= n:
            raise ValueError("the coalition must leave at least one honest agent")
        if any(not 0 <= v < self.r for v in self.prefer):
            raise ValueError(f"preferred values must lie in 0..{self.r - 1}")
        return self


class RunSummary(BaseModel):
    name: str
    protocol: str
    topology: dict
    runs: int
    sampled: bool
    legal: int
    erroneous: int
    reasons: dict[str, int]
    decision_distribution: dict[str, str]
    expect: Optional[str] = None
    met: bool


class EquilibriumResponse(BaseModel):
    name: str
    protocol: str
    reports: List[dict]
    verdict: str
    split_leader: Optional[dict] = None
    sweep: List[dict] = []
    expect: Optional[str] = None
    met: bool


class VerifyResponse(BaseModel):
    name: str
    check: str
    report: dict
    expect: Optional[str] = None
    met: bool
