"""Scenario files: YAML on disk, pydantic models in memory."""

import logging
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, Field, ValidationError as PydanticValidationError
from pydantic import field_validator, model_validator

from hyperstab.errors import IoError, SchemaError
from hyperstab.solver.grid import ComponentProfile, InitialData
from hyperstab.system_model import BoundaryCoupling, HyperbolicSystem, SpeedProfile

logger = logging.getLogger(__name__)


class SpeedSpec(BaseModel):
    """lambda(x, y) = sum_d coefficients[d] x^d + sum_j state_coupling[j] y_j."""

    coefficients: list[float] = Field(min_length=1, max_length=4)
    state_coupling: list[float] | None = None


class CouplingSpec(BaseModel):
    matrix: list[list[float]]
    # quadratic[i][j][l] multiplies v_j v_l in row i.
    quadratic: list[list[list[float]]] | None = None


class ComponentSpec(BaseModel):
    sine: list[float] = Field(default_factory=list)
    poly: list[float] = Field(default_factory=list)
    samples: list[float] | None = None

    @model_validator(mode="after")
    def _one_kind(self):
        if self.samples is not None and (self.sine or self.poly):
            raise ValueError("use either samples or sine/poly terms")
        return self


class NumericsSpec(BaseModel):
    nx: int = Field(default=201, ge=3)
    cfl: float = Field(default=0.9, gt=0.0, le=1.0)
    solver: Literal["upwind", "characteristic", "exact"] = "upwind"
    cadence: int = Field(default=1, ge=1)


class LyapunovSpec(BaseModel):
    q: list[float] = Field(default_factory=lambda: [2.0])
    Lambda: list[float] = Field(default_factory=lambda: [1.0])
    gamma: float | Literal["auto"] = "auto"
    kappa: float = Field(default=2.0, ge=1.0)
    slack: float = Field(default=0.2, ge=0.0, lt=1.0)
    tol_disc: float | None = None  # None: derived from the solver and grid

    @field_validator("q", "Lambda")
    @classmethod
    def _at_least_one(cls, values: list[float]) -> list[float]:
        if not values or any(v < 1 for v in values):
            raise ValueError("entries must be >= 1")
        return values

    @field_validator("gamma")
    @classmethod
    def _gamma(cls, value):
        if value != "auto" and value < 1:
            raise ValueError("gamma must be >= 1 or 'auto'")
        return value


class Scenario(BaseModel):
    name: str = "scenario"
    k: int
    m: int
    speeds: list[SpeedSpec]
    coupling: CouplingSpec
    y_max: float = Field(default=0.0, ge=0.0)
    initial: list[ComponentSpec] | None = None  # None: zero data
    feedback: Literal["linear", "nonlinear"] = "linear"
    numerics: NumericsSpec = Field(default_factory=NumericsSpec)
    lyapunov: LyapunovSpec = Field(default_factory=LyapunovSpec)
    horizon: float | None = None
    delta: float = Field(default=0.2, gt=0.0)
    epsilon: float | None = None  # smallness bound on |w0|_C1
    tol_compat: float = Field(default=1e-8, ge=0.0)
    sampling: Literal["frozen", "local_cauchy"] = "local_cauchy"
    snapshots: list[float] = Field(default_factory=list)
    output_dir: str = "runs"
    seed: int = 0

    @field_validator("k", "m")
    @classmethod
    def _positive(cls, value: int, info) -> int:
        if value < 1:
            raise ValueError(f"{info.field_name} >= 1")
        return value

    @model_validator(mode="after")
    def _shapes(self):
        n = self.k + self.m
        if len(self.speeds) != n:
            raise ValueError(f"expected {n} speed profiles, got {len(self.speeds)}")
        for i, speed in enumerate(self.speeds):
            if speed.state_coupling is not None and len(speed.state_coupling) != n:
                raise ValueError(f"speeds[{i}].state_coupling needs {n} entries")
        matrix = self.coupling.matrix
        if len(matrix) != self.k or any(len(row) != self.m for row in matrix):
            raise ValueError(f"coupling matrix must be {self.k}x{self.m}")
        quadratic = self.coupling.quadratic
        if quadratic is not None and np.shape(quadratic) != (self.k, self.m, self.m):
            raise ValueError(f"quadratic coupling must be {self.k}x{self.m}x{self.m}")
        if self.initial is not None and len(self.initial) != n:
            raise ValueError(f"initial data needs {n} components, got {len(self.initial)}")
        if self.horizon is not None and self.horizon <= 0:
            raise ValueError("horizon must be positive")
        return self

    @property
    def n(self) -> int:
        return self.k + self.m

    @property
    def is_nonlinear(self) -> bool:
        return self.feedback == "nonlinear"

    def build_system(self) -> HyperbolicSystem:
        speeds = tuple(
            SpeedProfile(
                base=tuple(s.coefficients),
                state_coupling=None if s.state_coupling is None else tuple(s.state_coupling),
            )
            for s in self.speeds
        )
        quadratic = self.coupling.quadratic
        coupling = BoundaryCoupling(
            matrix=np.array(self.coupling.matrix, dtype=float),
            quadratic=None if quadratic is None else np.array(quadratic, dtype=float),
        )
        return HyperbolicSystem(k=self.k, m=self.m, speeds=speeds, coupling=coupling, y_max=self.y_max)

    def build_initial(self) -> InitialData:
        if self.initial is None:
            return InitialData.zeros(self.n)
        return InitialData(
            components=tuple(
                ComponentProfile(
                    sine=tuple(c.sine),
                    poly=tuple(c.poly),
                    samples=None if c.samples is None else np.array(c.samples, dtype=float),
                )
                for c in self.initial
            )
        )

    def resolve_horizon(self, t_opt: float) -> float:
        if self.horizon is not None:
            return self.horizon
        return t_opt + 0.5 + (self.delta if self.is_nonlinear else 0.0)


def _line_of(node, loc) -> int | None:
    """1-based source line of the YAML node at a pydantic error location."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            match = [v for k, v in node.value if k.value == key]
            if not match:
                break
            node = match[0]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int):
            if key >= len(node.value):
                break
            node = node.value[key]
        else:
            break
        line = node.start_mark.line + 1
    return line


def _schema_errors(error: PydanticValidationError, root) -> list[str]:
    messages = []
    for e in error.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        line = _line_of(root, e["loc"])
        where = f" (line {line})" if line is not None else ""
        messages.append(f"{path}: {e['msg']}{where}")
    return messages


def load_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" (line {mark.line + 1})" if mark is not None else ""
        raise SchemaError([f"{source}: not valid YAML{where}: {e}"]) from e
    if not isinstance(data, dict):
        raise SchemaError([f"{source}: expected a mapping at the top level"])
    try:
        return Scenario.model_validate(data)
    except PydanticValidationError as e:
        raise SchemaError(_schema_errors(e, root)) from e


def parse_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise IoError(f"cannot read scenario {path}: {e}") from e
    scenario = load_scenario(text, source=str(path))
    logger.debug(f"parsed scenario {scenario.name!r} from {path}")
    return scenario


def serialize_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.model_dump(mode="json"), sort_keys=False)
